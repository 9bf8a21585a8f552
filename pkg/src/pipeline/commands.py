import argparse
import asyncio
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from rich.console import Console

from logger import logger
from src.controller.clock import Clock
from src.core import rng as streams
from src.core.errors import ConfigError, EpisodeSmithError
from src.data.episodes import sample_episode
from src.data.loaders import load_dataset
from src.data.splits import ClassSplit, DEFAULT_RATIOS, parse_ratios, split_classes
from src.pipeline.config import RunConfig, load_config
from src.pipeline.report import RunReport, render_report
from src.pipeline.runner import REPORT_FILE, EpisodeSmith, write_json

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGRADED = 3

SPLIT_PARTS = {"train": "meta_train", "valid": "meta_valid", "test": "meta_test"}


def _add_dataset_args(parser: argparse.ArgumentParser):
    parser.add_argument("--dataset", help="Dataset path: PGM directory with labels.csv, or EMB1 file")
    parser.add_argument("--kind", choices=("image", "embedding"), help="Dataset kind")


def _add_episode_args(parser: argparse.ArgumentParser):
    parser.add_argument("--episodes", type=int, help="Number of episodes E")
    parser.add_argument("--way", type=int, help="Classes per episode K")
    parser.add_argument("--shot", type=int, help="Support items per class N")
    parser.add_argument("--query", type=int, help="Query items per class Q")
    parser.add_argument("--seed", type=int, help="Master seed")


def _add_decoder_args(parser: argparse.ArgumentParser):
    parser.add_argument("--distance", choices=("squared", "euclidean"), help="Decoder distance")
    parser.add_argument("--mct-steps", type=int, help="Soft k-means refinement steps T")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="episodesmith", description="Few-shot episode toolkit")
    subparsers = parser.add_subparsers(dest="command", required=True)

    split = subparsers.add_parser("split", help="Partition classes into meta-train/valid/test")
    _add_dataset_args(split)
    split.add_argument("--ratios", default=":".join(map(str, DEFAULT_RATIOS)), help="a:b:c class ratios")
    split.add_argument("--seed", type=int, default=0, help="Master seed")
    split.add_argument("--out", default="split.json", help="Output JSON path")

    train = subparsers.add_parser("train", help="Meta-train the workers and select the ensemble")
    train.add_argument("--config", required=True, help="YAML or JSON run configuration")
    train.add_argument("--out", required=True, help="Run directory")
    train.add_argument("--budget-seconds", type=float, help="Wall-clock budget")
    _add_dataset_args(train)
    train.add_argument("--seed", type=int, help="Master seed")
    _add_decoder_args(train)

    evaluate = subparsers.add_parser("eval", help="Evaluate a run directory on meta-test episodes")
    evaluate.add_argument("--out", required=True, help="Run directory")
    _add_episode_args(evaluate)
    _add_decoder_args(evaluate)

    report = subparsers.add_parser("report", help="Print a run directory's report")
    report.add_argument("--out", required=True, help="Run directory")

    sample = subparsers.add_parser("sample-episodes", help="Dump one episode's item ids as JSON")
    _add_dataset_args(sample)
    sample.add_argument("--config", help="YAML or JSON run configuration supplying the dataset")
    sample.add_argument("--split", help="split.json restricting the class pool")
    sample.add_argument("--classes", choices=tuple(SPLIT_PARTS), default="test", help="Split part to sample from")
    _add_episode_args(sample)

    return parser


def _distance(value: Optional[str]) -> Optional[str]:
    return None if value is None else ("squared_euclidean" if value == "squared" else value)


def cmd_split(args: argparse.Namespace) -> int:
    if not args.dataset:
        raise ConfigError("--dataset is required")
    ratios = parse_ratios(args.ratios)
    dataset = load_dataset(args.dataset, args.kind or "embedding")
    split = split_classes(dataset, ratios, streams.derive_seed(args.seed, streams.SPLIT))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_json(out, {**split.to_dict(), "seed": args.seed, "ratios": list(ratios)})
    logger.info(f"Wrote split {split.sizes} to {out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace, clock: Optional[Clock] = None) -> int:
    config = load_config(args.config).with_overrides(**{
        "budget_seconds": args.budget_seconds,
        "seed": args.seed,
        "dataset.path": args.dataset,
        "dataset.kind": args.kind,
        "decoder.distance": _distance(args.distance),
        "decoder.mct_steps": args.mct_steps,
    })
    outcome = asyncio.run(EpisodeSmith(config, args.out, clock).train())
    if outcome.degraded:
        print("training degraded: budget exhausted before the ensemble phase", file=sys.stderr)
        return EXIT_DEGRADED
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, clock: Optional[Clock] = None) -> int:
    runner = EpisodeSmith.from_run_dir(args.out, clock, **{
        "evaluation.episodes": args.episodes,
        "evaluation.way": args.way,
        "evaluation.shot": args.shot,
        "evaluation.query": args.query,
        "evaluation.seed": args.seed,
        "decoder.distance": _distance(args.distance),
        "decoder.mct_steps": args.mct_steps,
    })
    report = runner.evaluate()
    return EXIT_DEGRADED if report.degraded else EXIT_OK


def cmd_report(args: argparse.Namespace, console: Optional[Console] = None) -> int:
    render_report(RunReport.load(Path(args.out) / REPORT_FILE), console)
    return EXIT_OK


def cmd_sample_episodes(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    dataset = load_dataset(args.dataset or config.dataset.path, args.kind or config.dataset.kind)
    classes = dataset.class_ids
    if args.split:
        split = ClassSplit.from_dict(json.loads(Path(args.split).read_text(encoding="utf8")))
        classes = sorted(getattr(split, SPLIT_PARTS[args.classes]))

    ev = config.evaluation
    seed = config.seed if args.seed is None else args.seed
    episode = sample_episode(dataset, classes, args.way or ev.way, args.shot or ev.shot, args.query or ev.query,
                             streams.derive_rng(seed, streams.EVAL))
    print(json.dumps({
        "class_ids": list(episode.class_ids),
        "support": [i.item_id for i in episode.support],
        "query": [i.item_id for i in episode.query],
    }))
    return EXIT_OK


COMMANDS = {
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
    "sample-episodes": cmd_sample_episodes,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (EpisodeSmithError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
