import asyncio
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

from logger import logger
from src.controller.buffers import POLL_INTERVAL, BatchBuffer, BufferSpec, DispatchResult, dispatch_batches
from src.controller.clock import BudgetClock
from src.controller.estimator import EpochCostEstimator, estimate_round_cost, should_continue
from src.controller.learners import LearnerResult, MetaLearner, WorkerState
from src.core.errors import ArgumentError
from src.core.hook_manager import HookManager
from src.core.rng import derive_rng, dispatch_tag
from src.data.dataset import LabeledDataset
from src.data.episodes import Batch, Episode, sample_batch
from src.data.splits import ClassSplit

ROUND_COMPLETED_HOOK = "es.controller.round_completed"
WORKER_STOPPED_HOOK = "es.controller.worker_stopped"

STOP_NOTHING_TO_TRAIN = "nothing to train"
STOP_MAX_ROUNDS = "max rounds reached"
STOP_PREDICTED_OVERRUN = "predicted overrun"
STOP_BUDGET_EXHAUSTED = "budget exhausted"
STOP_NO_BATCHES = "batch supply ended"


@dataclass(frozen=True)
class ControllerConfig:
    reserve: float = 0.0
    buffer_capacity: int = 4
    max_rounds: Optional[int] = None
    poll_interval: float = POLL_INTERVAL
    ewma_decay: float = 0.3
    safety_factor: float = 1.2

    def __post_init__(self):
        if self.reserve < 0:
            raise ArgumentError(f"reserve must be >= 0, got {self.reserve}")
        if self.max_rounds is not None and self.max_rounds < 1:
            raise ArgumentError(f"max_rounds must be >= 1, got {self.max_rounds}")


@dataclass(frozen=True)
class RoundCompleted:
    worker_id: int
    round_index: int
    duration: float
    valid_accuracy: float
    best_valid_accuracy: float
    remaining: float
    predicted_cost: float
    stop_reason: Optional[str] = None

    @property
    def continued(self) -> bool:
        return self.stop_reason is None


@dataclass(frozen=True)
class WorkerStopped:
    worker_id: int
    reason: Optional[str]


Message = Union[RoundCompleted, WorkerStopped]


def batch_producer(dataset: LabeledDataset, split: ClassSplit, seed: int) -> Callable[[int, int], Batch]:
    """Meta-train batch sampler with one seeded stream per batch shape"""
    streams = {}

    def produce(way: int, shot: int) -> Batch:
        if (way, shot) not in streams:
            streams[(way, shot)] = derive_rng(seed, dispatch_tag(way, shot))
        return sample_batch(dataset, split.meta_train, way, shot, streams[(way, shot)])

    return produce


class MetaTrainingController:
    """Supervises W workers, one dispatcher and the budget inside one event loop"""

    def __init__(self, learners: Sequence[MetaLearner], valid_episodes: Sequence[Episode],
                 producer: Callable[[int, int], Batch], budget: BudgetClock,
                 config: ControllerConfig = ControllerConfig(), hook_manager: Optional[HookManager] = None):
        if not learners:
            raise ArgumentError("Need at least one worker")
        if not valid_episodes:
            raise ArgumentError("Need at least one validation episode")
        self.learners = list(learners)
        self.valid_episodes = list(valid_episodes)
        self.producer = producer
        self.budget = budget
        self.config = config
        self.hook_manager = hook_manager or HookManager()
        self.messages: asyncio.Queue = asyncio.Queue()
        self.states = [WorkerState(worker_id=i, best_checkpoint=learner.snapshot(),
                                   estimator=EpochCostEstimator(ewma_decay=config.ewma_decay,
                                                                safety_factor=config.safety_factor))
                       for i, learner in enumerate(self.learners)]
        self.buffers: dict[int, BatchBuffer] = {}
        self.rounds: list[RoundCompleted] = []
        self.dispatch_result: Optional[DispatchResult] = None

    def _make_buffers(self):
        for i, learner in enumerate(self.learners):
            if learner.trainable and learner.batches_per_epoch > 0:
                spec = BufferSpec(self.config.buffer_capacity, learner.batch_way, learner.batch_shot)
                self.buffers[i] = BatchBuffer(i, spec, learner.preprocess, self.states[i].stop_requested)

    async def run(self) -> list[LearnerResult]:
        self._make_buffers()
        dispatch_stop = asyncio.Event()
        dispatcher = None
        if self.buffers:
            dispatcher = asyncio.create_task(dispatch_batches(
                self.producer, list(self.buffers.values()), dispatch_stop, self.config.poll_interval))

        workers = [asyncio.create_task(self._run_worker(i)) for i in range(len(self.learners))]
        try:
            await self._supervise(workers)
        finally:
            dispatch_stop.set()
            if dispatcher is not None:
                self.dispatch_result = await dispatcher
                if self.dispatch_result.error is not None:
                    logger.warning(f"Dispatch ended early: {self.dispatch_result.error}")
            await asyncio.gather(*workers, return_exceptions=True)

        logger.info(f"Meta-training finished after {self.budget.elapsed():.2f}s: "
                    + ", ".join(f"worker {s.worker_id} best {s.best_valid_accuracy:.4f} "
                                f"in {s.rounds_completed} rounds" for s in self.states))
        return [self._result(i) for i in range(len(self.learners))]

    def _result(self, worker_id: int) -> LearnerResult:
        state = self.states[worker_id]
        learner = self.learners[worker_id]
        return LearnerResult(
            worker_id=worker_id,
            kind=learner.kind,
            checkpoint=state.best_checkpoint,
            best_valid_accuracy=state.best_valid_accuracy,
            rounds_completed=state.rounds_completed,
            valid_history=list(state.valid_history),
            provider=learner.provider(state.best_checkpoint),
            stop_reason=state.stop_reason,
            error=state.error,
        )

    async def _supervise(self, workers: Sequence[asyncio.Task]):
        """Never blocks on a worker: polls the message queue with a timeout"""
        while True:
            try:
                message = await asyncio.wait_for(self.messages.get(), timeout=self.config.poll_interval)
                await self._handle(message)
            except asyncio.TimeoutError:
                pass

            if self.budget.exhausted():
                for state in self.states:
                    if not state.stop_requested.is_set():
                        logger.info(f"[worker {state.worker_id}] stopping: {STOP_BUDGET_EXHAUSTED}")
                        state.request_stop(STOP_BUDGET_EXHAUSTED)

            if all(w.done() for w in workers) and self.messages.empty():
                return

    async def _handle(self, message: Message):
        if isinstance(message, RoundCompleted):
            self.rounds.append(message)
            await self.hook_manager.execute_hook(ROUND_COMPLETED_HOOK, message.worker_id, message)
        elif isinstance(message, WorkerStopped):
            await self.hook_manager.execute_hook(WORKER_STOPPED_HOOK, message.worker_id, message.reason)

    async def _run_worker(self, worker_id: int):
        learner = self.learners[worker_id]
        state = self.states[worker_id]
        clock = self.budget.clock
        try:
            while not state.stop_requested.is_set():
                started = clock.now()
                if learner.trainable:
                    if not await self._train_round(worker_id):
                        break
                accuracy = await learner.validate(self.valid_episodes)
                self._complete_round(worker_id, accuracy, clock.now() - started)
        except Exception as e:
            logger.error(f"[worker {worker_id}] failed: {e}", exc_info=True)
            state.error = str(e)
            state.request_stop(f"failed: {e}")
        finally:
            self.messages.put_nowait(WorkerStopped(worker_id, state.stop_reason))

    async def _train_round(self, worker_id: int) -> bool:
        """False if the round was cut short by a stop request or an empty batch supply.

        A learner that cannot finish an epoch ends the round early; the round
        is still validated.
        """
        learner = self.learners[worker_id]
        state = self.states[worker_id]
        buffer = self.buffers.get(worker_id)
        for epoch in range(learner.epochs_per_round):
            if state.stop_requested.is_set():
                logger.debug(f"[worker {worker_id}] stop observed before epoch {epoch}")
                return False
            batches = []
            for _ in range(learner.batches_per_epoch):
                batch = await buffer.get(self.config.poll_interval)
                if batch is None:
                    state.request_stop(STOP_NO_BATCHES)
                    return False
                batches.append(batch)
            if not await learner.train_epoch(batches):
                logger.info(f"[worker {worker_id}] round ended after epoch {epoch}")
                break
        return True

    def _complete_round(self, worker_id: int, accuracy: float, duration: float):
        """Bookkeeping and the continue/stop decision; runs without yielding to the loop"""
        learner = self.learners[worker_id]
        state = self.states[worker_id]
        state.rounds_completed += 1
        state.record_validation(accuracy, learner.snapshot() if state.improves(accuracy) else None)
        state.estimator = estimate_round_cost(state.estimator, duration)

        reason = None
        if not learner.trainable:
            reason = STOP_NOTHING_TO_TRAIN
        elif self.config.max_rounds is not None and state.rounds_completed >= self.config.max_rounds:
            reason = STOP_MAX_ROUNDS
        elif not should_continue(self.budget, state.estimator, self.config.reserve):
            reason = STOP_PREDICTED_OVERRUN
        if reason is not None:
            state.request_stop(reason)

        message = RoundCompleted(
            worker_id=worker_id,
            round_index=state.rounds_completed,
            duration=duration,
            valid_accuracy=accuracy,
            best_valid_accuracy=state.best_valid_accuracy,
            remaining=self.budget.remaining(),
            predicted_cost=state.estimator.predicted_cost,
            stop_reason=reason,
        )
        logger.info(f"[worker {worker_id}] round {message.round_index} took {duration:.3f}s, "
                    f"valid acc {accuracy:.4f} (best {state.best_valid_accuracy:.4f}), "
                    f"remaining {message.remaining:.3f}s, " + ("continue" if reason is None else f"stop: {reason}"))
        self.messages.put_nowait(message)


async def run_meta_training(learners: Sequence[MetaLearner], dataset: LabeledDataset, split: ClassSplit,
                            budget: BudgetClock, valid_episodes: Sequence[Episode], seed: int = 0,
                            config: ControllerConfig = ControllerConfig(),
                            hook_manager: Optional[HookManager] = None) -> list[LearnerResult]:
    """Train every learner under `budget` and return each worker's best checkpoint"""
    controller = MetaTrainingController(learners, valid_episodes, batch_producer(dataset, split, seed),
                                        budget, config, hook_manager)
    return await controller.run()
