"""``teanet`` command line: analysis, equivalence checks, self-tests, toy
training, evaluation and dataset generation.

Exit codes: 0 success, 1 invalid input, 2 a property or check failed.
Every command prints a JSON report (its ``config`` echoes the resolved flags
and seed) and validates it against the schema shipped in ``teanet/schemas``.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import analyzer, data
from .checkpoint import load_checkpoint, save_checkpoint
from .core import ops
from .core.autograd import Tensor
from .errors import FormatError
from .net import PRESETS, NetworkSpec, preset
from .selfcheck import run_selfcheck
from .shift import shift_init_kernel
from .train import VARIANTS, TrainConfig, evaluate, train_toy

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for failed checks here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def load_schema(name: str) -> dict:
    return json.loads(resources.files("teanet").joinpath("schemas", f"{name}.schema.json").read_text())


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("TEA_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"TEA_SEED must be an integer, got {env!r}") from None


def _emit(report: dict, schema: str, output: Optional[str]) -> None:
    jsonschema.validate(report, load_schema(schema))
    text = json.dumps(report, indent=2, sort_keys=True)
    if output:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        Path(output).write_text(text + "\n")
    print(text)


def _spec_from_args(args) -> NetworkSpec:
    if args.spec_file:
        try:
            spec = NetworkSpec.from_dict(json.loads(Path(args.spec_file).read_text()))
        except (json.JSONDecodeError, TypeError) as exc:
            raise UsageError(f"cannot parse spec file {args.spec_file}: {exc}") from None
    else:
        spec = preset(args.preset)
    if args.reduction is not None:
        spec = NetworkSpec.from_dict({**spec.to_dict(), "reduction": args.reduction})
    return spec


# ---------------------------------------------------------------- commands

def cmd_analyze(args) -> int:
    spec = _spec_from_args(args)
    report = analyzer.analysis_report(spec, frames=args.frames, size=args.size, timestamp=_timestamp())
    report["command"] = "analyze"
    report["config"] = {"preset": None if args.spec_file else args.preset, "spec_file": args.spec_file,
                        "frames": report["input"]["T"], "size": report["input"]["H"],
                        "reduction": spec.reduction,
                        "stage_reductions": [s.reduction for s in spec.stages]}
    _emit(report, "analyze", args.output)
    return EXIT_OK


def cmd_equivalence(args) -> int:
    seed = resolve_seed(args.seed)
    if args.channels is not None and (args.channels < 8 or args.channels % 8):
        raise UsageError(f"--channels must be a positive multiple of 8 (C/8 bands), got {args.channels}")
    if args.frames is not None and args.frames < 1:
        raise UsageError("--frames must be >= 1")
    if args.shapes < 1:
        raise UsageError("--shapes must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    shapes = []
    for _ in range(args.shapes):
        c = args.channels if args.channels is not None else int(rng.choice([8, 16, 64]))
        t = args.frames if args.frames is not None else int(rng.integers(1, 9))
        n, h, w = (int(v) for v in rng.integers(1, 4, size=3))
        x = Tensor(rng.standard_normal((n, t, c, h, w)).astype(np.float32))
        diff = np.abs(ops.temporal_shift(x).data - ops.temporal_conv1d_cw(x, shift_init_kernel(c)).data)
        worst = max(worst, float(diff.max()))
        shapes.append([n, t, c, h, w])
    report = {"command": "equivalence",
              "config": {"seed": seed, "channels": args.channels, "frames": args.frames, "shapes": args.shapes},
              "passed": worst == 0.0, "max_abs_diff": worst, "shapes": shapes, "timestamp": _timestamp()}
    print(f"max abs diff {worst!r} over {args.shapes} shapes", file=sys.stderr)
    _emit(report, "equivalence", args.output)
    return EXIT_OK if worst == 0.0 else EXIT_FAILED


def cmd_selfcheck(args) -> int:
    report = run_selfcheck(inject_fault=args.inject_fault)
    report["command"] = "selfcheck"
    report["config"] = {"inject_fault": bool(args.inject_fault)}
    report["timestamp"] = _timestamp()
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['detail']}", file=sys.stderr)
    _emit(report, "selfcheck", args.output)
    return EXIT_OK if report["passed"] else EXIT_FAILED


def _synthetic_spec(args, seed_attr: str = "data_seed") -> data.SyntheticSpec:
    spec = data.SyntheticSpec()
    if getattr(args, "data_spec", None):
        try:
            spec = data.SyntheticSpec(**json.loads(Path(args.data_spec).read_text()))
        except (json.JSONDecodeError, TypeError) as exc:
            raise UsageError(f"cannot parse data spec {args.data_spec}: {exc}") from None
    seed = getattr(args, seed_attr, None)
    if seed is not None:
        spec = replace(spec, seed=seed)
    spec.validate()
    return spec


def _load_split(directory: Path, split: str) -> list:
    return data.read_manifest(directory / split / "manifest.json")


def cmd_train_toy(args) -> int:
    seed = resolve_seed(args.seed)
    cfg = TrainConfig(variant=args.variant, seed=seed, epochs=args.epochs, batch_size=args.batch_size,
                      learning_rate=args.lr, frames=args.frames, n_train=args.n_train, n_val=args.n_val,
                      data=_synthetic_spec(args))
    cfg.validate()
    pair = None
    if args.data_dir:
        pair = (_load_split(Path(args.data_dir), "train"), _load_split(Path(args.data_dir), "val"))

    def log(rec):
        print(f"epoch {rec['epoch']:3d} loss {rec['train_loss']:.4f} train {rec['train_accuracy']:.3f} "
              f"val {rec['val_accuracy']:.3f}", file=sys.stderr)

    net, metrics = train_toy(cfg, data=pair, log=log)
    out_dir = Path(args.out_dir or f"runs/{args.variant}-seed{seed}")
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = save_checkpoint(out_dir / "checkpoint.teaw", net,
                           meta={"variant": args.variant, "seed": seed, "val_accuracy": metrics["val_accuracy"]})
    config = cfg.to_dict()
    config["data_dir"] = args.data_dir
    report = {"command": "train-toy", "config": config, **metrics, "checkpoint": str(ckpt),
              "timestamp": _timestamp()}
    _emit(report, "train", args.output or str(out_dir / "metrics.json"))
    return EXIT_OK


def cmd_eval(args) -> int:
    net, meta = load_checkpoint(args.checkpoint)
    clips = data.read_manifest(args.manifest)
    frames = args.frames or net.spec.frames
    res = evaluate(net, clips, frames)
    report = {"command": "eval", "config": {"checkpoint": args.checkpoint, "manifest": args.manifest,
                                            "frames": frames, "seed": meta.get("seed")},
              "accuracy": res["accuracy"], "loss": res["loss"], "clips": len(clips), "spec": net.spec.name,
              "timestamp": _timestamp()}
    _emit(report, "eval", args.output)
    return EXIT_OK


def cmd_gen_data(args) -> int:
    spec = _synthetic_spec(args, seed_attr="seed_value")
    train, val = data.make_splits(spec, args.n_train, args.n_val)
    out = Path(args.out_dir)
    manifest_schema = load_schema("manifest")
    splits = {}
    for name, clips in (("train", train), ("val", val)):
        m = data.write_dataset(clips, out / name)
        jsonschema.validate(json.loads(m.read_text()), manifest_schema)
        splits[name] = {"manifest": str(m), "clips": len(clips)}
    (out / "synthetic_spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    report = {"command": "gen-data", "config": {**spec.to_dict(), "n_train": args.n_train, "n_val": args.n_val,
                                               "out_dir": str(out)},
              "splits": splits, "timestamp": _timestamp()}
    _emit(report, "gen_data", args.output)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="teanet", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="FLOPs, parameters and temporal receptive field of a spec")
    src = a.add_mutually_exclusive_group()
    src.add_argument("spec_file", nargs="?", help="NetworkSpec JSON file")
    src.add_argument("--preset", choices=PRESETS, default="toy")
    a.add_argument("--frames", type=int, help="override T")
    a.add_argument("--size", type=int, help="override H = W")
    a.add_argument("--reduction", type=int, help="override the motion-excitation ratio r")
    a.add_argument("--output", "-o", help="also write the report here")
    a.set_defaults(func=cmd_analyze)

    e = sub.add_parser("equivalence", help="temporal shift vs shift-initialized conv, bit for bit")
    e.add_argument("--channels", type=int, help="fixed C (multiple of 8); random in {8,16,64} if unset")
    e.add_argument("--frames", type=int, help="fixed T; random in 1..8 if unset")
    e.add_argument("--shapes", type=int, default=100, help="number of random shapes (default 100)")
    e.add_argument("--seed", type=int, help="defaults to $TEA_SEED, then 0")
    e.add_argument("--output", "-o")
    e.set_defaults(func=cmd_equivalence)

    s = sub.add_parser("selfcheck", help="run the property suite")
    s.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    s.add_argument("--output", "-o")
    s.set_defaults(func=cmd_selfcheck)

    t = sub.add_parser("train-toy", help="train a toy network on synthetic motion clips")
    t.add_argument("--variant", choices=sorted(VARIANTS), default="tea")
    t.add_argument("--seed", type=int, help="defaults to $TEA_SEED, then 0")
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--lr", type=float, default=0.02)
    t.add_argument("--frames", type=int, default=8)
    t.add_argument("--n-train", type=int, default=500)
    t.add_argument("--n-val", type=int, default=200)
    t.add_argument("--data-dir", help="directory written by gen-data (otherwise generated in memory)")
    t.add_argument("--data-spec", help="SyntheticSpec JSON for in-memory generation")
    t.add_argument("--data-seed", type=int, help="dataset seed (default 0)")
    t.add_argument("--out-dir", help="where to write metrics.json and checkpoint.teaw")
    t.add_argument("--output", "-o", help="metrics path (default <out-dir>/metrics.json)")
    t.set_defaults(func=cmd_train_toy)

    v = sub.add_parser("eval", help="score a checkpoint on a manifest with centre-frame sampling")
    v.add_argument("checkpoint")
    v.add_argument("manifest")
    v.add_argument("--frames", type=int, help="override T (default: the checkpoint spec's)")
    v.add_argument("--output", "-o")
    v.set_defaults(func=cmd_eval)

    g = sub.add_parser("gen-data", help="write train/val clip files and manifests")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--data-spec", help="SyntheticSpec JSON")
    g.add_argument("--seed", dest="seed_value", type=int, help="dataset seed (default 0)")
    g.add_argument("--n-train", type=int, default=500)
    g.add_argument("--n-val", type=int, default=200)
    g.add_argument("--output", "-o")
    g.set_defaults(func=cmd_gen_data)
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "gen-data" and args.seed_value is None and os.environ.get("TEA_SEED"):
        args.seed_value = resolve_seed(None)
    try:
        return args.func(args)
    except jsonschema.ValidationError as exc:
        print(f"teanet {args.command}: report does not match its schema: {exc.message}", file=sys.stderr)
        return EXIT_FAILED
    except (UsageError, ValueError, KeyError, FileNotFoundError, FormatError) as exc:
        print(f"teanet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
