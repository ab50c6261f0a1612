"""
Command-line front end: gen, prepare, train, detect, eval, inspect.

Flags mirror configuration fields in kebab-case and override, in order,
built-in defaults, REPLAY_GROUNDING_* environment variables and the
--config file.

Exit codes: 0 success, 1 usage/configuration/storage error, 2 data error.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from src.core.exceptions import ReplayGroundingException
from src.dataset.features import read_header
from src.pipeline.runner import ReplayGroundingPipeline
from src.utils.config import RunConfig
from src.utils.logger import get_logger, log_exception, setup_logging


logger = get_logger(__name__)

# (flag, dotted config key, type, nargs, help)
Flag = Tuple[str, str, Callable[[str], Any], Optional[str], str]

SYNTH_FLAGS: List[Flag] = [
    ("--games", "synth.n_games", int, None, "number of games"),
    ("--actions-per-half", "synth.actions_per_half", int, None, "replayed actions per half"),
    ("--distractors-per-half", "synth.distractors_per_half", int, None, "actions without a replay per half"),
    ("--dim", "synth.dim", int, None, "feature dimension per stream"),
    ("--duration", "synth.duration_s", float, None, "half duration in seconds"),
    ("--noise", "synth.noise_sigma", float, None, "replay copy noise sigma"),
    ("--fps", "synth.fps", float, None, "feature frames per second"),
    ("--signature-len", "synth.signature_len_s", float, None, "action signature length in seconds"),
    ("--synth-streams", "synth.streams", str, "+", "stream names to generate"),
]

WINDOW_FLAGS: List[Flag] = [
    ("--window-len", "window.window_len_s", float, None, "sliding window length in seconds"),
    ("--stride", "window.stride_s", float, None, "sliding window stride in seconds"),
    ("--resize-len", "window.resize_len", int, None, "frames per resized window"),
    ("--train-context", "window.train_context_s", float, None, "seconds of context before a replay (train)"),
    ("--test-context", "window.test_context_s", float, None, "seconds of context before a replay (test)"),
    ("--streams", "streams", str, "+", "streams to fuse, in order (default: all)"),
]

AUGMENT_FLAGS: List[Flag] = [
    ("--ratio", "augment.ratio", float, None, "synthetic positives per real sample"),
    ("--augment-seed", "augment.seed", int, None, "augmentation seed (default: --seed)"),
]

TRAIN_FLAGS: List[Flag] = [
    ("--epochs", "training.epochs", int, None, "training epochs"),
    ("--lr", "training.lr", float, None, "learning rate"),
    ("--hidden", "training.hidden", int, None, "hidden units"),
    ("--batch-size", "training.batch_size", int, None, "mini-batch size"),
]

DETECT_FLAGS: List[Flag] = [
    ("--scorer", "scorer", str, None, "similarity or actionness"),
    ("--topk", "anchors.K", int, None, "proposals kept per window"),
    ("--durations", "anchors.durations_f", int, "+", "anchor durations in resized frames"),
    ("--anchor-stride", "anchors.start_stride_f", int, None, "anchor start stride in frames"),
    ("--refine-radius", "anchors.refine_radius_f", int, None, "boundary refinement radius in frames"),
    ("--nms-method", "post.nms_method", str, None, "gaussian, linear or hard"),
    ("--sigma", "post.sigma", float, None, "gaussian Soft-NMS sigma"),
    ("--iou-threshold", "post.iou_threshold", float, None, "linear/hard Soft-NMS threshold"),
    ("--score-floor", "post.score_floor", float, None, "drop proposals scoring below this"),
    ("--top-m", "post.top_m", int, None, "spots kept per replay"),
    ("--prior-weight", "post.prior_weight", float, None, "offset prior blend weight in [0, 1]"),
]

EVAL_FLAGS: List[Flag] = [
    ("--tight-deltas", "metrics.tight_deltas_s", float, "+", "tight tolerance grid in seconds"),
    ("--loose-deltas", "metrics.loose_deltas_s", float, "+", "loose tolerance grid in seconds"),
    ("--tiou-thresholds", "metrics.tiou_thresholds", float, "+", "tIoU grid for AR"),
]


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that exits with code 1 on usage errors."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _dest(key: str) -> str:
    return "cfg__" + key.replace(".", "__")


def _add_flags(parser: argparse.ArgumentParser, flags: Sequence[Flag]) -> None:
    for flag, key, type_, nargs, help_text in flags:
        parser.add_argument(flag, dest=_dest(key), type=type_, nargs=nargs, default=None, help=help_text)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="YAML or JSON config file")
    parser.add_argument("--seed", type=int, help="seed for every random stream of the command")
    parser.add_argument("--log-level", dest=_dest("logging.level"), help="DEBUG, INFO, WARNING, ERROR")
    parser.add_argument("--json-logs", dest=_dest("logging.json_format"), action="store_const", const=True)
    parser.add_argument("--log-dir", dest=_dest("logging.log_dir"), type=Path, help="write log files here")


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with all subcommands."""
    parser = CliParser(prog="replay-grounding", description="Replay grounding as temporal segment detection")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic dataset")
    gen.add_argument("--out", type=Path, required=True, help="dataset directory")
    _add_flags(gen, SYNTH_FLAGS)

    prepare = sub.add_parser("prepare", help="build and persist training samples")
    prepare.add_argument("--manifest", type=Path, required=True)
    prepare.add_argument("--out", type=Path, required=True)
    _add_flags(prepare, WINDOW_FLAGS + AUGMENT_FLAGS)

    train = sub.add_parser("train", help="train the actionness head")
    train.add_argument("--samples", type=Path, required=True, help="directory holding index.jsonl")
    train.add_argument("--out", type=Path, required=True)
    train.add_argument("--manifest", type=Path, help="also fit the offset prior from this manifest")
    _add_flags(train, TRAIN_FLAGS)

    detect = sub.add_parser("detect", help="write ranked predictions")
    detect.add_argument("--manifest", type=Path, required=True)
    detect.add_argument("--out", type=Path, required=True)
    detect.add_argument("--model", type=Path, help="actionness model JSON")
    detect.add_argument("--prior", type=Path, help="offset prior JSON")
    _add_flags(detect, WINDOW_FLAGS + DETECT_FLAGS)

    evaluate = sub.add_parser("eval", help="score predictions")
    evaluate.add_argument("--manifest", type=Path, required=True)
    evaluate.add_argument("--predictions", type=Path, required=True)
    evaluate.add_argument("--out", type=Path, required=True)
    _add_flags(evaluate, EVAL_FLAGS)

    inspect = sub.add_parser("inspect", help="print RGF1 headers")
    inspect.add_argument("paths", type=Path, nargs="+")

    for command in (gen, prepare, train, detect, evaluate, inspect):
        _add_common(command)
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Nested config overrides from the flags given on the command line."""
    overrides: Dict[str, Any] = {}
    if args.seed is not None:
        overrides = {"seed": args.seed, "synth": {"seed": args.seed}, "augment": {"seed": args.seed}}
    for dest, value in sorted(vars(args).items()):
        if not dest.startswith("cfg__") or value is None:
            continue
        node = overrides
        *parents, leaf = dest[len("cfg__"):].split("__")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = str(value) if isinstance(value, Path) else value
    return overrides


def _cmd_gen(pipeline: ReplayGroundingPipeline, args: argparse.Namespace) -> None:
    result = pipeline.gen(args.out)
    print(f"manifest: {result.outputs['manifest']}")
    print(f"games: {result.counts['games']}")
    print(f"replays: {result.counts['replays']}")


def _cmd_prepare(pipeline: ReplayGroundingPipeline, args: argparse.Namespace) -> None:
    result = pipeline.prepare(args.manifest, args.out)
    print(f"index: {result.outputs['index']}")
    print(f"samples: {result.counts['samples']} (real {result.counts['real']}, synthetic {result.counts['synthetic']})")


def _cmd_train(pipeline: ReplayGroundingPipeline, args: argparse.Namespace) -> None:
    result = pipeline.train(args.samples, args.out, args.manifest)
    print(f"model: {result.outputs['model']}")
    if "prior" in result.outputs:
        print(f"prior: {result.outputs['prior']}")
    print(f"final_loss: {result.counts['final_loss']:.6f}")


def _cmd_detect(pipeline: ReplayGroundingPipeline, args: argparse.Namespace) -> None:
    result = pipeline.detect(args.manifest, args.out, args.model, args.prior)
    print(f"predictions: {result.outputs['predictions']}")
    print(f"replays: {result.counts['replays']}, spots: {result.counts['spots']}")


def _cmd_eval(pipeline: ReplayGroundingPipeline, args: argparse.Namespace) -> None:
    report = pipeline.evaluate(args.manifest, args.predictions, args.out)
    print(report.render_table())


def _cmd_inspect(pipeline: ReplayGroundingPipeline, args: argparse.Namespace) -> None:
    for path in args.paths:
        header = read_header(path)
        print(
            f"{path}: version={header.version} T={header.n_frames} D={header.dim} "
            f"fps={header.fps:g} duration_s={header.n_frames / header.fps:g}"
        )


COMMANDS = {
    "gen": _cmd_gen,
    "prepare": _cmd_prepare,
    "train": _cmd_train,
    "detect": _cmd_detect,
    "eval": _cmd_eval,
    "inspect": _cmd_inspect,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point.

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])

    Returns:
        Process exit code
    """
    args = build_parser().parse_args(argv)

    try:
        config = RunConfig.load(args.config, collect_overrides(args))
        setup_logging(
            level=config.logging.level,
            json_format=config.logging.json_format,
            log_dir=config.logging.log_dir,
            max_file_size_mb=config.logging.max_file_size_mb,
            backup_count=config.logging.backup_count,
        )
        print(config.to_json().decode())
        COMMANDS[args.command](ReplayGroundingPipeline(config), args)
    except ReplayGroundingException as e:
        log_exception(logger, e, {"command": args.command})
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
