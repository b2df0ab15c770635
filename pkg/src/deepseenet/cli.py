"""Command line: ``deepseenet {synth,train,grade,eval,interpret,report}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import pipeline
from .config import STRATEGIES, load_config, resolved_paths
from .errors import ConfigError, DataError, InvariantError

log = logging.getLogger("deepseenet")

EXIT_CONFIG, EXIT_DATA, EXIT_INVARIANT = 2, 3, 4


def _u64(text: str) -> int:
    try:
        value = int(text, 10)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _common(suppress: bool) -> argparse.ArgumentParser:
    # accepted both before and after the subcommand
    d = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", default=d, help="JSON run configuration")
    p.add_argument("--seed", type=_u64, metavar="U64", default=d, help="overrides config seed")
    p.add_argument("--out", metavar="DIR", default=d, help="overrides config out")
    p.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                   default=d, help="override a config key, e.g. train.lr=0.001 (repeatable)")
    p.add_argument("-q", "--quiet", action="store_true", default=d, help="less logging")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepseenet", parents=[_common(True)],
                                     description="Patient-level AMD severity grading.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = _common(True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort")
    p.add_argument("--n-patients", type=int)
    p.add_argument("--n-test", type=int)

    p = sub.add_parser("train", parents=[common], help="train the three heads")
    p.add_argument("--manifest")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--compare-strategies", action="store_true", default=None,
                   help="train all three strategies and write the comparison table")

    p = sub.add_parser("grade", parents=[common], help="score one patient from two images")
    p.add_argument("--left", required=True, help="left-eye image (PPM)")
    p.add_argument("--right", required=True, help="right-eye image (PPM)")
    p.add_argument("--model", help="checkpoint directory (default: config paths.checkpoints)")

    p = sub.add_parser("eval", parents=[common], help="evaluate on the test patients")
    p.add_argument("--predictions", help="evaluate this predictions CSV instead of the model")
    p.add_argument("--model", help="checkpoint directory")

    p = sub.add_parser("interpret", parents=[common], help="saliency maps and t-SNE")
    p.add_argument("--images", nargs="*", help="PATIENT:eye keys or image paths")
    p.add_argument("--tsne-split", choices=("test", "all"))
    p.add_argument("--model", help="checkpoint directory")

    sub.add_parser("report", parents=[common], help="write report.md")
    return parser


def _flags(args) -> dict:
    get = lambda name: getattr(args, name, None)  # noqa: E731
    return {
        "seed": get("seed"),
        "out": get("out"),
        "synth.n_patients": get("n_patients"),
        "synth.n_test": get("n_test"),
        "paths.manifest": get("manifest"),
        "paths.checkpoints": get("model"),
        "model.strategy": get("strategy"),
        "train.compare_strategies": get("compare_strategies"),
        "interpret.tsne_split": get("tsne_split"),
    }


def _emit(obj: dict):
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_synth(cfg, args):
    summary = pipeline.run_synth(cfg, log.info)
    paths = resolved_paths(cfg)
    _emit({"manifest": str(paths["manifest"]), "test_ids": str(paths["test_ids"]),
           "n_images": summary["n_images"], "intended_scores": summary["intended_scores"]})


def cmd_train(cfg, args):
    summary = pipeline.run_train(cfg, log.info)
    out = {"checkpoints": str(resolved_paths(cfg)["checkpoints"]),
           "epochs": {h: len(v) for h, v in summary["heads"].items()}}
    if "comparison" in summary:
        out["comparison"] = str(resolved_paths(cfg)["out"] / "strategies.md")
    _emit(out)


def cmd_grade(cfg, args):
    model = pipeline.load_model(resolved_paths(cfg)["checkpoints"])
    result = pipeline.grade_pair(model, args.left, args.right)
    pipeline.write_json(resolved_paths(cfg)["out"] / "grade.json", result)
    _emit({"schema_version": 1, **result})


def cmd_eval(cfg, args):
    metrics = pipeline.run_eval(cfg, args.predictions, log.info)
    p = metrics["patient"]
    _emit({"accuracy": p["accuracy"]["value"], "kappa": p["kappa"]["value"],
           "agreement": p["agreement"],
           "metrics": str(pipeline.eval_dir(cfg) / "metrics.json")})


def cmd_interpret(cfg, args):
    summary = pipeline.run_interpret(cfg, args.images, log.info)
    _emit({"saliency_maps": len(summary["saliency"]), "tsne_heads": sorted(summary["tsne"]),
           "dir": str(resolved_paths(cfg)["out"] / "interpret")})


def cmd_report(cfg, args):
    _emit({"report": str(pipeline.run_report(cfg))})


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "grade": cmd_grade, "eval": cmd_eval,
            "interpret": cmd_interpret, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        cfg = load_config(getattr(args, "config", None), getattr(args, "overrides", None) or (),
                          _flags(args))
        COMMANDS[args.command](cfg, args)
        # the resolved config is the single artifact that reproduces this run
        pipeline.write_json(resolved_paths(cfg)["out"] / f"{args.command}.config.json", cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (DataError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
