import numpy as np
import pytest

from src.controller.clock import BudgetClock, FakeClock
from src.controller.controller import (
    ROUND_COMPLETED_HOOK, STOP_BUDGET_EXHAUSTED, STOP_MAX_ROUNDS, STOP_NOTHING_TO_TRAIN, STOP_PREDICTED_OVERRUN,
    WORKER_STOPPED_HOOK, ControllerConfig, MetaTrainingController, RoundCompleted, batch_producer,
    run_meta_training,
)
from src.controller.learners import EncoderLearner, IdentityLearner, MetaLearner, WorkerState
from src.core.errors import ArgumentError
from src.core.hook_manager import HookManager
from src.data.episodes import sample_episodes
from src.decoders.episodic import evaluate_provider
from src.encoder.params import init_encoder_params
from src.encoder.providers import IdentityProvider
from src.encoder.training import TrainHyper, TrainingDiverged

VALID = ["episode"]


class SleepyLearner(MetaLearner):
    """Each epoch sleeps on the clock for the next injected duration"""

    kind = "sleepy"

    def __init__(self, clock, durations, accuracies=(0.5,), fail_on_epoch=None):
        self.clock = clock
        self.durations = list(durations)
        self.accuracies = list(accuracies)
        self.fail_on_epoch = fail_on_epoch
        self.epochs = 0

    async def train_epoch(self, batches):
        if self.fail_on_epoch == self.epochs + 1:
            raise RuntimeError("device lost")
        await self.clock.sleep(self.durations[self.epochs % len(self.durations)])
        self.epochs += 1
        return True

    async def validate(self, episodes):
        return self.accuracies[(self.epochs - 1) % len(self.accuracies)]

    def snapshot(self):
        return self.epochs

    def provider(self, snapshot):
        return IdentityProvider()


def _no_batches(way, shot):
    raise AssertionError("sleepy learners never ask for batches")


async def _run(learners, budget, **config):
    controller = MetaTrainingController(learners, VALID, _no_batches, budget, ControllerConfig(**config))
    return controller, await controller.run()


class TestWorkerState:
    def test_keeps_earliest_best(self):
        state = WorkerState(worker_id=0)
        assert state.record_validation(0.4, "a")
        assert state.record_validation(0.6, "b")
        assert not state.record_validation(0.6, "c")
        assert state.best_valid_accuracy == 0.6
        assert state.best_checkpoint == "b"

    def test_stop_reason_is_sticky(self):
        state = WorkerState(worker_id=0)
        state.request_stop("first")
        state.request_stop("second")
        assert state.stop_reason == "first"
        assert state.stop_requested.is_set()


class TestControllerConfig:
    @pytest.mark.parametrize("kwargs", [{"reserve": -1}, {"max_rounds": 0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ArgumentError):
            ControllerConfig(**kwargs)

    def test_needs_workers(self):
        with pytest.raises(ArgumentError):
            MetaTrainingController([], VALID, _no_batches, BudgetClock(1.0, FakeClock()))


class TestBudget:
    @pytest.mark.asyncio
    async def test_four_workers_one_second_rounds(self):
        clock = FakeClock()
        budget = BudgetClock(6.0, clock)
        _, results = await _run([SleepyLearner(clock, [1.0]) for _ in range(4)], budget, reserve=1.0)
        assert budget.elapsed() <= 6.0 + 1.0
        for result in results:
            assert result.rounds_completed == 4
            assert result.stop_reason == STOP_PREDICTED_OVERRUN

    @pytest.mark.asyncio
    async def test_budget_shorter_than_one_round(self):
        clock = FakeClock()
        budget = BudgetClock(0.5, clock)
        _, results = await _run([SleepyLearner(clock, [1.0]) for _ in range(3)], budget)
        for result in results:
            assert result.rounds_completed == 1
            assert result.validated
            assert result.stop_reason in (STOP_PREDICTED_OVERRUN, STOP_BUDGET_EXHAUSTED)

    @pytest.mark.asyncio
    async def test_randomized_overrun_bounded_by_one_round(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            clock = FakeClock()
            total = float(rng.uniform(1.0, 20.0))
            budget = BudgetClock(total, clock)
            durations = [rng.uniform(0.1, 3.0, size=int(rng.integers(1, 5))).tolist()
                         for _ in range(int(rng.integers(1, 5)))]
            learners = [SleepyLearner(clock, d) for d in durations]
            _, results = await _run(learners, budget, reserve=float(rng.uniform(0.0, 2.0)))
            longest = max(max(d) for d in durations)
            assert budget.elapsed() <= total + longest
            assert all(r.rounds_completed >= 1 for r in results)
            assert all(learner.epochs == r.rounds_completed for learner, r in zip(learners, results))

    @pytest.mark.asyncio
    async def test_decisions_are_reproducible(self):
        async def decisions():
            clock = FakeClock()
            budget = BudgetClock(10.0, clock)
            controller, _ = await _run([SleepyLearner(clock, [1.0, 0.5]), SleepyLearner(clock, [2.0])],
                                       budget, reserve=1.0)
            return sorted((r.worker_id, r.round_index, r.duration, r.remaining, r.stop_reason)
                          for r in controller.rounds)

        first = await decisions()
        assert first == await decisions()
        assert [d[4] for d in first if d[0] == 1] == [None, None, None, STOP_PREDICTED_OVERRUN]


class TestResults:
    @pytest.mark.asyncio
    async def test_best_checkpoint_is_max(self):
        clock = FakeClock()
        learner = SleepyLearner(clock, [1.0], accuracies=[0.3, 0.7, 0.5, 0.7])
        _, (result,) = await _run([learner], BudgetClock(1000.0, clock), max_rounds=4)
        assert result.valid_history == [0.3, 0.7, 0.5, 0.7]
        assert result.best_valid_accuracy == max(result.valid_history)
        assert result.checkpoint == 2
        assert result.stop_reason == STOP_MAX_ROUNDS

    @pytest.mark.asyncio
    async def test_failing_worker_is_isolated(self):
        clock = FakeClock()
        learners = [SleepyLearner(clock, [1.0], accuracies=[0.4, 0.6], fail_on_epoch=2),
                    SleepyLearner(clock, [1.0])]
        _, (failed, healthy) = await _run(learners, BudgetClock(1000.0, clock), max_rounds=3)
        assert failed.error == "device lost"
        assert failed.stop_reason.startswith("failed")
        assert failed.best_valid_accuracy == 0.4
        assert failed.checkpoint == 1
        assert healthy.rounds_completed == 3
        assert healthy.error is None

    @pytest.mark.asyncio
    async def test_failure_before_first_validation_returns_initial_state(self):
        clock = FakeClock()
        learner = SleepyLearner(clock, [1.0], fail_on_epoch=1)
        _, (result,) = await _run([learner], BudgetClock(10.0, clock))
        assert not result.validated
        assert result.best_valid_accuracy == 0.0
        assert result.checkpoint == 0

    @pytest.mark.asyncio
    async def test_identity_learner_validates_once(self, blob_dataset, blob_split, rng):
        episodes = sample_episodes(blob_dataset, blob_split.meta_valid, 5, 3, 1, 3, rng)
        controller = MetaTrainingController([IdentityLearner()], episodes, _no_batches,
                                            BudgetClock(10.0, FakeClock()))
        (result,) = await controller.run()
        assert result.rounds_completed == 1
        assert result.stop_reason == STOP_NOTHING_TO_TRAIN
        assert result.checkpoint is None
        assert not controller.buffers


class TestHooks:
    @pytest.mark.asyncio
    async def test_round_and_stop_hooks(self):
        clock = FakeClock()
        hooks = HookManager()
        rounds, stopped = [], []

        async def on_round(worker_id, message):
            rounds.append((worker_id, message.round_index))

        async def on_stop(worker_id, reason):
            stopped.append((worker_id, reason))

        hooks.register_hook(ROUND_COMPLETED_HOOK, on_round)
        hooks.register_hook(WORKER_STOPPED_HOOK, on_stop)
        controller = MetaTrainingController([SleepyLearner(clock, [1.0]), SleepyLearner(clock, [2.0])], VALID,
                                            _no_batches, BudgetClock(100.0, clock),
                                            ControllerConfig(max_rounds=2), hooks)
        await controller.run()
        assert sorted(rounds) == [(0, 1), (0, 2), (1, 1), (1, 2)]
        assert sorted(stopped) == [(0, STOP_MAX_ROUNDS), (1, STOP_MAX_ROUNDS)]
        assert all(isinstance(r, RoundCompleted) for r in controller.rounds)
        assert controller.rounds[-1].stop_reason == STOP_MAX_ROUNDS


class TestRunMetaTraining:
    @pytest.mark.asyncio
    async def test_real_learners_under_fake_clock(self, blob_dataset, blob_split, rng):
        valid = sample_episodes(blob_dataset, blob_split.meta_valid, 10, 3, 1, 3, rng)
        hyper = TrainHyper(learning_rate=0.1, alpha=0.0, batches_per_epoch=2, way=3, shot=2)
        encoder = EncoderLearner(init_encoder_params(2, [8], 4, 3, rng), blob_dataset, blob_split, hyper)
        results = await run_meta_training([encoder, IdentityLearner()], blob_dataset, blob_split,
                                          BudgetClock(100.0, FakeClock()), valid, seed=3,
                                          config=ControllerConfig(max_rounds=2))

        trained, identity = results
        assert trained.kind == "mlp"
        assert trained.rounds_completed == 2
        assert trained.stop_reason == STOP_MAX_ROUNDS
        assert trained.best_valid_accuracy == max(trained.valid_history)
        assert evaluate_provider(trained.provider, valid).mean == pytest.approx(trained.best_valid_accuracy)
        assert identity.rounds_completed == 1
        assert identity.best_valid_accuracy >= 0.9

    @pytest.mark.asyncio
    async def test_divergence_ends_round_with_last_finite_params(self, blob_dataset, blob_split, rng, mocker):
        valid = sample_episodes(blob_dataset, blob_split.meta_valid, 4, 3, 1, 3, rng)
        hyper = TrainHyper(learning_rate=0.1, alpha=0.0, epochs_per_round=3, batches_per_epoch=2, way=3, shot=2)
        params = init_encoder_params(2, [8], 4, 3, rng)
        partial = params.with_tensors([t + 0.5 for t in params.tensors()])
        epochs = []

        def diverge(current, batches, hyper):
            epochs.append(len(batches))
            raise TrainingDiverged("loss is not finite", partial)

        mocker.patch("src.controller.learners.train_on_batches", side_effect=diverge)
        learner = EncoderLearner(params, blob_dataset, blob_split, hyper)
        (result,) = await run_meta_training([learner], blob_dataset, blob_split, BudgetClock(100.0, FakeClock()),
                                            valid, seed=3, config=ControllerConfig(max_rounds=1))

        assert epochs == [2]
        assert learner.params is partial
        assert result.rounds_completed == 1
        assert result.error is None
        assert result.stop_reason == STOP_MAX_ROUNDS
        for got, want in zip(result.checkpoint.tensors(), partial.tensors()):
            np.testing.assert_array_equal(got, want)

    def test_producer_streams_are_per_shape(self, blob_dataset, blob_split):
        first = batch_producer(blob_dataset, blob_split, seed=1)
        second = batch_producer(blob_dataset, blob_split, seed=1)
        second(2, 2)
        a = first(3, 1)
        b = second(3, 1)
        assert [i.item_id for i in a.items] == [i.item_id for i in b.items]
        assert set(a.class_ids.tolist()) <= set(blob_split.meta_train)
