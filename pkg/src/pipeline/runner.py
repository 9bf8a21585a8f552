import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from logger import attach_run_log, detach_run_log, logger
from src.controller.clock import BudgetClock, Clock, RealClock
from src.controller.controller import ROUND_COMPLETED_HOOK, RoundCompleted, run_meta_training
from src.controller.learners import EncoderLearner, IdentityLearner, LearnerResult, MetaLearner
from src.core import rng as streams
from src.core.errors import ConfigError, FormatError, SplitError
from src.core.hook_manager import HookManager
from src.data.dataset import LabeledDataset, PayloadKind
from src.data.episodes import Episode, sample_episodes
from src.data.loaders import load_dataset
from src.data.splits import ClassSplit, split_classes, split_for_ensemble
from src.decoders.accuracy import episode_accuracy
from src.decoders.episodic import DecoderKind, decode_episode
from src.decoders.mct import MctConfig
from src.encoder.checkpoint import load_params, save_params
from src.encoder.params import init_encoder_params
from src.encoder.providers import EmbeddingProvider, IdentityProvider, MlpProvider
from src.ensemble.checkpoint import load_ensemble, save_ensemble
from src.ensemble.features import EnsembleFeatures, build_features
from src.ensemble.selection import EnsembleSelection, LinearHyper, select_best, train_candidates
from src.pipeline.config import RunConfig, config_from_dict
from src.pipeline.report import RunReport, WorkerSummary

CONFIG_FILE = "config.json"
SPLIT_FILE = "split.json"
TRAIN_FILE = "train.json"
REPORT_FILE = "report.json"
LOG_FILE = "log.txt"
ENSEMBLE_FILE = "ensemble.ens1"
WORKER_CHECKPOINT = "best.enc1"

ENSEMBLE_SELECTED_HOOK = "es.pipeline.ensemble_selected"


def worker_dir(run_dir: Path, worker_id: int) -> Path:
    return run_dir / f"worker_{worker_id}"


def write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf8")
    return path


def read_json(path: Path) -> dict:
    if not path.is_file():
        raise FormatError(f"{path}: not found")
    try:
        return json.loads(path.read_text(encoding="utf8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from e


def audit_episodes(dataset: LabeledDataset, episodes: Iterable[Episode], allowed_classes: Iterable[int]):
    """Raise SplitError if any episode item belongs to a class outside `allowed_classes`"""
    allowed = set(allowed_classes)
    for index, episode in enumerate(episodes):
        for item_id in sorted(episode.item_ids()):
            class_id = dataset.item(item_id).class_id
            if class_id not in allowed:
                raise SplitError(f"Episode {index} uses item {item_id} of class {class_id} "
                                 f"outside the evaluated classes")


def ensemble_features(providers: Sequence[EmbeddingProvider], episode: Episode, cfg: MctConfig) -> EnsembleFeatures:
    """MCT distributions of every learner on one episode, concatenated per query"""
    return build_features([decode_episode(p, episode, DecoderKind.MCT, cfg) for p in providers])


@dataclass
class TrainOutcome:
    results: list[LearnerResult]
    selection: Optional[EnsembleSelection]
    degraded: bool
    timings: dict[str, float] = field(default_factory=dict)


class EpisodeSmith:
    """Runs the pipeline for one run directory: meta-train, ensemble selection and meta-test evaluation"""

    def __init__(self, config: RunConfig, run_dir: Union[str, Path], clock: Optional[Clock] = None,
                 hook_manager: Optional[HookManager] = None):
        self.config = config
        self.run_dir = Path(run_dir)
        self.clock = clock or RealClock()
        self.hook_manager = hook_manager or HookManager()
        self.rounds: list[RoundCompleted] = []
        self.hook_manager.register_hook(ROUND_COMPLETED_HOOK, self._on_round_completed)

    @classmethod
    def from_run_dir(cls, run_dir: Union[str, Path], clock: Optional[Clock] = None, **overrides) -> "EpisodeSmith":
        """Rebuild a runner from the config echo stored in `run_dir`, applying CLI overrides"""
        run_dir = Path(run_dir)
        config = config_from_dict(read_json(run_dir / CONFIG_FILE)).with_overrides(**overrides)
        return cls(config, run_dir, clock)

    async def _hook(self, event_name, *args, **kwargs):
        await self.hook_manager.execute_hook(event_name, *args, **kwargs)

    async def _on_round_completed(self, worker_id: int, message: RoundCompleted):
        self.rounds.append(message)

    def load_dataset(self) -> LabeledDataset:
        if not self.config.dataset.path:
            raise ConfigError("dataset.path: no dataset configured")
        return load_dataset(self.config.dataset.path, self.config.dataset.kind)

    def resolve_split(self, dataset: LabeledDataset) -> ClassSplit:
        """Reuse run_dir/split.json when present, otherwise split with the 'split' stream and persist it"""
        path = self.run_dir / SPLIT_FILE
        if path.is_file():
            return ClassSplit.from_dict(read_json(path))
        seed = streams.derive_seed(self.config.seed, streams.SPLIT)
        split = split_classes(dataset, self.config.split.ratios, seed)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        write_json(path, {**split.to_dict(), "seed": self.config.seed, "ratios": list(self.config.split.ratios)})
        logger.info(f"Split {dataset.num_classes} classes into {split.sizes}")
        return split

    def build_learners(self, dataset: LabeledDataset, split: ClassSplit) -> list[MetaLearner]:
        decoder = DecoderKind(self.config.validation.decoder)
        mct = self.config.decoder.mct()
        learners = []
        for i, spec in enumerate(self.config.workers):
            if spec.provider == "identity":
                if dataset.payload_kind != PayloadKind.EMBEDDING:
                    raise ConfigError(f"workers[{i}].provider: identity needs an embedding dataset")
                learners.append(IdentityLearner(decoder, mct))
                continue
            if spec.way > len(split.meta_train):
                raise ConfigError(f"workers[{i}].way: {spec.way} exceeds the {len(split.meta_train)} meta-train classes")
            params = init_encoder_params(dataset.input_dim, spec.hidden_dims, spec.embedding_dim,
                                         len(split.meta_train), streams.derive_rng(self.config.seed, streams.init_tag(i)))
            learners.append(EncoderLearner(params, dataset, split, spec.train_hyper(), decoder, mct))
        return learners

    def validation_episodes(self, dataset: LabeledDataset, split: ClassSplit) -> list[Episode]:
        """Sampled once from the 'valid' stream and shared by every worker and round"""
        v = self.config.validation
        return sample_episodes(dataset, split.meta_valid, v.episodes, v.way, v.shot, v.query,
                               streams.derive_rng(self.config.seed, streams.VALID))

    def ensemble_episodes(self, dataset: LabeledDataset, split: ClassSplit) -> tuple[list[Episode], list[Episode]]:
        e = self.config.ensemble
        way, shot = self.config.evaluation.way, self.config.evaluation.shot
        train_ids, test_ids = split_for_ensemble(dataset, split.meta_valid, e.fraction,
                                                 streams.derive_rng(self.config.seed, streams.ENSEMBLE_SPLIT))
        train_episodes = sample_episodes(dataset.subset(train_ids), split.meta_valid, e.train_episodes, way, shot,
                                         e.query, streams.derive_rng(self.config.seed, streams.ENSEMBLE_TRAIN))
        test_episodes = sample_episodes(dataset.subset(test_ids), split.meta_valid, e.test_episodes, way, shot,
                                        e.query, streams.derive_rng(self.config.seed, streams.ENSEMBLE_TEST))
        return train_episodes, test_episodes

    def fit_ensemble(self, dataset: LabeledDataset, split: ClassSplit,
                     providers: Sequence[EmbeddingProvider]) -> EnsembleSelection:
        e = self.config.ensemble
        mct = self.config.decoder.mct()
        train_episodes, test_episodes = self.ensemble_episodes(dataset, split)
        train = [(ensemble_features(providers, ep, mct), ep.query_labels) for ep in train_episodes]
        test = [(ensemble_features(providers, ep, mct), ep.query_labels) for ep in test_episodes]
        candidates = train_candidates(train, LinearHyper(e.iterations, e.learning_rate, e.l2))
        return select_best(candidates, test)

    def _worker_summaries(self, results: Sequence[LearnerResult]) -> list[WorkerSummary]:
        return [WorkerSummary(id=r.worker_id, kind=r.kind, best_valid_acc=r.best_valid_accuracy,
                              rounds=r.rounds_completed, stop_reason=r.stop_reason) for r in results]

    def _degraded_report(self, results: Sequence[LearnerResult], timings: dict) -> RunReport:
        return RunReport(mean_accuracy=None, ci95=None, episodes=[], workers=self._worker_summaries(results),
                         ensemble_variant=None, timings=timings, config=self.config.to_dict(),
                         seed=self.config.seed, degraded=True)

    async def train(self) -> TrainOutcome:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        log_handler = attach_run_log(self.run_dir / LOG_FILE)
        try:
            return await self._train()
        finally:
            detach_run_log(log_handler)

    async def _train(self) -> TrainOutcome:
        write_json(self.run_dir / CONFIG_FILE, self.config.to_dict())
        dataset = self.load_dataset()
        split = self.resolve_split(dataset)
        learners = self.build_learners(dataset, split)
        valid_episodes = self.validation_episodes(dataset, split)

        budget = BudgetClock(self.config.budget_seconds, self.clock)
        logger.info(f"Meta-training {len(learners)} worker(s) for up to {self.config.budget_seconds:.0f}s "
                    f"(reserve {self.config.reserve_seconds:.0f}s)")
        started = self.clock.now()
        results = await run_meta_training(learners, dataset, split, budget, valid_episodes, self.config.seed,
                                          self.config.controller_config(), self.hook_manager)
        timings = {"train_s": self.clock.now() - started}

        for result in results:
            directory = worker_dir(self.run_dir, result.worker_id)
            directory.mkdir(parents=True, exist_ok=True)
            if result.checkpoint is not None:
                save_params(result.checkpoint, directory / WORKER_CHECKPOINT)

        degraded = not any(r.validated for r in results) or budget.exhausted()
        selection = None
        if degraded:
            logger.warning("Budget exhausted before the ensemble phase; writing a degraded report")
            timings["ensemble_s"] = 0.0
            self._degraded_report(results, timings).save(self.run_dir / REPORT_FILE)
        else:
            started = self.clock.now()
            selection = self.fit_ensemble(dataset, split, [r.provider for r in results])
            timings["ensemble_s"] = self.clock.now() - started
            save_ensemble(selection.best, self.run_dir / ENSEMBLE_FILE)
            await self._hook(ENSEMBLE_SELECTED_HOOK, selection)

        write_json(self.run_dir / TRAIN_FILE, {
            "workers": [dataclasses.asdict(w) for w in self._worker_summaries(results)],
            "ensemble_variant": selection.best.variant.value if selection else None,
            "ensemble_accuracies": selection.accuracies if selection else {},
            "timings": timings,
            "degraded": degraded,
            "rounds": [dataclasses.asdict(r) for r in self.rounds],
        })
        return TrainOutcome(results, selection, degraded, timings)

    def load_providers(self) -> list[EmbeddingProvider]:
        providers = []
        for i, spec in enumerate(self.config.workers):
            if spec.provider == "identity":
                providers.append(IdentityProvider())
            else:
                providers.append(MlpProvider(load_params(worker_dir(self.run_dir, i) / WORKER_CHECKPOINT)))
        return providers

    def evaluate(self) -> RunReport:
        """Score the saved learners and ensemble on meta-test episodes and write report.json"""
        summary = read_json(self.run_dir / TRAIN_FILE)
        dataset = self.load_dataset()
        split = ClassSplit.from_dict(read_json(self.run_dir / SPLIT_FILE))
        providers = self.load_providers()
        ensemble = load_ensemble(self.run_dir / ENSEMBLE_FILE)
        ev = self.config.evaluation
        if ensemble.num_learners != len(providers):
            raise FormatError(f"Ensemble expects {ensemble.num_learners} learners, run has {len(providers)}")
        if ensemble.way != ev.way:
            raise ConfigError(f"evaluation.way: ensemble was trained for {ensemble.way}-way episodes, not {ev.way}")

        started = self.clock.now()
        mct = self.config.decoder.mct()
        episodes = sample_episodes(dataset, split.meta_test, ev.episodes, ev.way, ev.shot, ev.query,
                                   streams.derive_rng(self.config.evaluation_seed, streams.EVAL))
        audit_episodes(dataset, episodes, split.meta_test)

        per_episode = []
        protonet_scores = np.zeros((len(episodes), len(providers)))
        mct_scores = np.zeros((len(episodes), len(providers)))
        for e, episode in enumerate(episodes):
            labels = episode.query_labels
            distributions = []
            for w, provider in enumerate(providers):
                mct_dist = decode_episode(provider, episode, DecoderKind.MCT, mct)
                protonet_dist = decode_episode(provider, episode, DecoderKind.PROTONET, mct)
                mct_scores[e, w] = episode_accuracy(mct_dist, labels)
                protonet_scores[e, w] = episode_accuracy(protonet_dist, labels)
                distributions.append(mct_dist)
            per_episode.append(episode_accuracy(ensemble.predict(build_features(distributions)), labels))
            logger.debug(f"Episode {e}: ensemble accuracy {per_episode[-1]:.4f}")

        workers = [WorkerSummary(**w) for w in summary["workers"]]
        for w, worker in enumerate(workers):
            worker.protonet_test_acc = float(protonet_scores[:, w].mean())
            worker.mct_test_acc = float(mct_scores[:, w].mean())

        timings = {**summary["timings"], "eval_s": self.clock.now() - started}
        report = RunReport.from_episodes(
            per_episode,
            workers=workers,
            ensemble_variant=summary["ensemble_variant"],
            timings=timings,
            config=self.config.to_dict(),
            seed=self.config.seed,
            degraded=bool(summary["degraded"]),
            ensemble_accuracies=summary["ensemble_accuracies"],
        )
        report.save(self.run_dir / REPORT_FILE)
        logger.info(f"Meta-test accuracy {report.mean_accuracy:.4f} +/- {report.ci95:.4f} over {len(per_episode)} episodes")
        return report
