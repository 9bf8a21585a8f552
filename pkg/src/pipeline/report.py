import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from rich.console import Console
from rich.table import Table

from src.core.errors import FormatError

CI_Z = 1.96


def confidence_interval(per_episode: Sequence[float]) -> float:
    """95% half-width: 1.96 * population std / sqrt(E)"""
    if not per_episode:
        raise FormatError("No per-episode accuracies")
    return float(CI_Z * np.std(np.asarray(per_episode, dtype=np.float64)) / math.sqrt(len(per_episode)))


@dataclass
class WorkerSummary:
    id: int
    kind: str
    best_valid_acc: float
    rounds: int = 0
    stop_reason: Optional[str] = None
    protonet_test_acc: Optional[float] = None
    mct_test_acc: Optional[float] = None


@dataclass
class RunReport:
    mean_accuracy: Optional[float]
    ci95: Optional[float]
    episodes: list[float]
    workers: list[WorkerSummary]
    ensemble_variant: Optional[str]
    timings: dict[str, float]
    config: dict
    seed: int
    degraded: bool = False
    ensemble_accuracies: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_episodes(cls, per_episode: Sequence[float], **kwargs) -> "RunReport":
        per_episode = [float(a) for a in per_episode]
        return cls(mean_accuracy=float(np.mean(per_episode)), ci95=confidence_interval(per_episode),
                   episodes=per_episode, **kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n", encoding="utf8")
        return path

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        try:
            workers = [WorkerSummary(**w) for w in data.get("workers", [])]
            return cls(**{**data, "workers": workers})
        except TypeError as e:
            raise FormatError(f"Malformed report: {e}") from e

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunReport":
        path = Path(path)
        if not path.is_file():
            raise FormatError(f"{path}: report not found")
        try:
            return cls.from_dict(json.loads(path.read_text(encoding="utf8")))
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: invalid JSON ({e})") from e


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4f}"


def render_report(report: RunReport, console: Optional[Console] = None):
    """Print mean, CI, per-worker accuracies, the chosen ensemble and phase timings"""
    if not report.episodes:
        raise FormatError("Report holds no per-episode accuracies")
    console = console or Console()
    mean = float(np.mean(report.episodes))
    ci = confidence_interval(report.episodes)

    console.print(f"mean accuracy: {mean:.4f}", highlight=False)
    console.print(f"95% CI: +/- {ci:.4f} over {len(report.episodes)} episodes", highlight=False)
    console.print(f"ensemble: {report.ensemble_variant or '-'}", highlight=False)
    if report.degraded:
        console.print("[yellow]run is degraded[/yellow]")

    workers = Table(title="Workers")
    for column in ("worker", "kind", "rounds", "best valid", "protonet test", "mct test", "stop"):
        workers.add_column(column)
    for w in report.workers:
        workers.add_row(str(w.id), w.kind, str(w.rounds), _fmt(w.best_valid_acc), _fmt(w.protonet_test_acc),
                        _fmt(w.mct_test_acc), w.stop_reason or "-")
    console.print(workers)

    if report.ensemble_accuracies:
        candidates = Table(title="Ensemble candidates")
        candidates.add_column("variant")
        candidates.add_column("valid accuracy")
        for variant, accuracy in report.ensemble_accuracies.items():
            candidates.add_row(variant, _fmt(accuracy))
        console.print(candidates)

    timings = Table(title="Timings")
    timings.add_column("phase")
    timings.add_column("seconds")
    for phase, seconds in report.timings.items():
        timings.add_row(phase, f"{seconds:.2f}")
    console.print(timings)
