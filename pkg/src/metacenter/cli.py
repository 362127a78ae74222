"""Command-line pipeline: simulate, preprocess, train, eval, compare,
gradcheck.

Stages communicate through files. Every command writes a manifest next to
its primary output recording the resolved configuration, seeds and SHA-256
digests of inputs and outputs, which is enough to reproduce the artifact
bit for bit.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__
from .errors import ConfigurationError, DataError, MetacenterError
from .hydrostatics import HullSpec, default_hull, load_hull, make_box_hull
from .models import KINDS, Regressor, gradient_check_kind
from .preprocess import FilterConfig, gaussian_smooth, variance_filter
from .seaway import RawDataset, SeawaySpec, generate_dataset
from .training import TrainConfig, compare, evaluate, train, split_dataset

GRADCHECK_TOLERANCE = 1e-4


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(primary_output: Path, command: str, options: dict,
                    inputs: list[Path], outputs: list[Path], started: float) -> None:
    if primary_output.is_dir():
        manifest_path = primary_output / "manifest.json"
    else:
        manifest_path = primary_output.with_name(primary_output.name + ".manifest.json")
    doc = {
        "tool": "metacenter",
        "version": __version__,
        "command": command,
        "options": options,
        "inputs": {str(p): _sha256(p) for p in inputs if p.exists()},
        "outputs": {str(p): _sha256(p) for p in outputs if p.exists()},
        "wall_time_s": time.perf_counter() - started,
    }
    manifest_path.write_text(json.dumps(doc, indent=1) + "\n")


def _parse_box(text: str) -> tuple[float, float, float]:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ConfigurationError(f"--box expects LENGTHxBEAMxDEPTH, got {text!r}")
    try:
        length, beam, depth = (float(p) for p in parts)
    except ValueError as exc:
        raise ConfigurationError(f"--box expects three numbers: {exc}") from exc
    return length, beam, depth


def _resolve_hull(args: argparse.Namespace, parser: argparse.ArgumentParser) -> HullSpec:
    if getattr(args, "hull", None):
        return load_hull(args.hull)
    if getattr(args, "box", None):
        if getattr(args, "mass", None) is None:
            parser.error("--box requires --mass")
        length, beam, depth = _parse_box(args.box)
        return make_box_hull(length, beam, depth, args.mass, args.density)
    return default_hull()


def _options_dict(args: argparse.Namespace) -> dict:
    skip = {"func", "parser"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        iterations=args.iterations,
        seed=args.seed,
        test_fraction=args.test_fraction,
        eval_every=args.eval_every,
    )


def _add_hull_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--hull", metavar="FILE", help="hull JSON file")
    sub.add_argument("--box", metavar="LxBxD", help="box hull dimensions in meters")
    sub.add_argument("--mass", type=float, help="hull mass in kilograms")
    sub.add_argument("--density", type=float, default=1025.0,
                     help="water density in kg/m^3 (default 1025)")


def _add_train_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--iterations", type=int, default=5000)
    sub.add_argument("--batch-size", type=int, default=128)
    sub.add_argument("--learning-rate", type=float, default=1e-2)
    sub.add_argument("--test-fraction", type=float, default=0.2)
    sub.add_argument("--eval-every", type=int, default=10)


def cmd_simulate(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    hull = _resolve_hull(args, args.parser)
    spec = SeawaySpec(
        duration=args.duration, rate=args.rate, components=args.components,
        roll_amplitude=args.roll_amplitude, pitch_amplitude=args.pitch_amplitude,
        yaw_amplitude=args.yaw_amplitude, freq_min=args.freq_min,
        freq_max=args.freq_max, noise_std=args.noise_std, seed=args.seed,
    )
    dataset = generate_dataset(hull, spec, args.trials)
    out = Path(args.output)
    dataset.save_csv(out)
    inputs = [Path(args.hull)] if args.hull else []
    _write_manifest(out, "simulate", _options_dict(args), inputs, [out], started)
    print(f"wrote {len(dataset)} samples over {args.trials} trials to {out}")
    return 0


def cmd_preprocess(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    hull = _resolve_hull(args, args.parser)
    dataset = RawDataset.load_csv(args.input, hull=hull)
    cfg = FilterConfig(
        gaussian_sigma=args.gaussian_sigma,
        gaussian_radius=args.gaussian_radius,
        variance_window=args.variance_window,
        variance_k=args.variance_k,
    )
    mode = "drop" if args.drop_outliers else "replace"
    skipped: list[int] = []
    if args.order == "smooth-first":
        dataset, skipped = gaussian_smooth(dataset, cfg)
        dataset = variance_filter(dataset, cfg, mode)
        flagged = int(dataset.flagged.sum()) if dataset.flagged is not None else 0
    else:
        dataset = variance_filter(dataset, cfg, mode)
        flagged = int(dataset.flagged.sum()) if dataset.flagged is not None else 0
        dataset, skipped = gaussian_smooth(dataset, cfg)

    out = Path(args.output)
    dataset.save_csv(out)
    _write_manifest(out, "preprocess", _options_dict(args),
                    [Path(args.input)], [out], started)
    print(f"wrote {len(dataset)} samples to {out}; {flagged} samples flagged"
          + (f"; skipped short trials: {skipped}" if skipped else ""))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    hull = _resolve_hull(args, args.parser)
    dataset = RawDataset.load_csv(args.input, hull=hull)
    config = _train_config(args)
    train_ds, test_ds = split_dataset(dataset, config.test_fraction, config.seed)
    result = train(args.kind, train_ds, test_ds, config)

    out = Path(args.output)
    result.regressor.save(out)
    outputs = [out]
    if args.curve:
        curve_path = Path(args.curve)
        result.curve.save_csv(curve_path)
        outputs.append(curve_path)
    _write_manifest(out, "train", _options_dict(args), [Path(args.input)],
                    outputs, started)
    print(f"{args.kind}: final train MSE {result.curve.train_mse[-1]:.4f} cm^2, "
          f"test MSE {result.curve.test_mse[-1]:.4f} cm^2 -> {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    hull = _resolve_hull(args, args.parser)
    regressor = Regressor.load(args.ckpt)
    dataset = RawDataset.load_csv(args.input, hull=hull)
    mode = args.mode.replace("-", "_")
    report = evaluate(regressor, dataset, mode)

    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    profile_path = outdir / "per_step_mse.csv"
    report.save_profile_csv(profile_path)
    summary_path = outdir / "eval.json"
    summary_path.write_text(json.dumps({
        "checkpoint": str(args.ckpt),
        "mode": mode,
        "overall_mse_cm2": report.overall_mse,
        "per_trial_mse_cm2": report.per_trial_mse,
    }, indent=1) + "\n")
    _write_manifest(outdir, "eval", _options_dict(args),
                    [Path(args.ckpt), Path(args.input)],
                    [profile_path, summary_path], started)
    print(f"overall MSE {report.overall_mse:.4f} cm^2 over "
          f"{len(report.per_trial_mse)} trials -> {outdir}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    hull = _resolve_hull(args, args.parser)
    dataset = RawDataset.load_csv(args.input, hull=hull)
    config = _train_config(args)
    report = compare(dataset, config)
    outdir = Path(args.output)
    written = report.save_artifacts(outdir, svg=args.svg)
    _write_manifest(outdir, "compare", _options_dict(args),
                    [Path(args.input)], written, started)
    print(report.to_text())
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    kinds = KINDS if args.all or args.kind is None else (args.kind,)
    worst_overall = 0.0
    for kind in kinds:
        worst = gradient_check_kind(kind, seed=args.seed,
                                    n_samples=args.samples, h=args.h)
        status = "ok" if worst < GRADCHECK_TOLERANCE else "FAIL"
        print(f"{kind:<8} max relative error {worst:.3e}  [{status}]")
        worst_overall = max(worst_overall, worst)
    return 0 if worst_overall < GRADCHECK_TOLERANCE else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metacenter",
        description="Learn a vessel's dynamic metacenter from Euler angles.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", metavar="FILE",
                        help="JSON file of option defaults (flag names with "
                             "dashes or underscores)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a labeled seaway dataset")
    _add_hull_flags(p)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--duration", type=float, default=600.0)
    p.add_argument("--rate", type=float, default=10.0)
    p.add_argument("--components", type=int, default=4)
    p.add_argument("--roll-amplitude", type=float, default=0.26)
    p.add_argument("--pitch-amplitude", type=float, default=0.17)
    p.add_argument("--yaw-amplitude", type=float, default=0.09)
    p.add_argument("--freq-min", type=float, default=0.05)
    p.add_argument("--freq-max", type=float, default=0.8)
    p.add_argument("--noise-std", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("preprocess", help="smooth and de-spike a dataset")
    _add_hull_flags(p)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--gaussian-sigma", type=float, default=2.0)
    p.add_argument("--gaussian-radius", type=int, default=None)
    p.add_argument("--variance-window", type=int, default=11)
    p.add_argument("--variance-k", type=float, default=3.0)
    p.add_argument("--order", choices=("smooth-first", "filter-first"),
                   default="smooth-first")
    p.add_argument("--drop-outliers", action="store_true",
                   help="drop flagged samples instead of replacing them")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train one architecture")
    _add_hull_flags(p)
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True, help="checkpoint path")
    p.add_argument("--curve", help="also write the loss curve CSV here")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    _add_hull_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--mode", choices=("closed-loop", "teacher-forced"),
                   default="closed-loop")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="train and compare all four architectures")
    _add_hull_flags(p)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True, help="report directory")
    p.add_argument("--svg", action="store_true", help="also render loss-curve SVGs")
    _add_train_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="verify gradients by finite differences")
    p.add_argument("--all", action="store_true", help="check every architecture")
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=16)
    p.add_argument("--h", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            path = Path(argv[i + 1])
        elif token.startswith("--config="):
            path = Path(token.split("=", 1)[1])
    if path is None:
        return
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        overrides = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(overrides, dict):
        raise ConfigurationError("config file must contain a JSON object")
    defaults = {k.replace("-", "_"): v for k, v in overrides.items()}
    parser.set_defaults(**defaults)
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            sp.set_defaults(**defaults)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        args.parser = parser
        return args.func(args)
    except (ConfigurationError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MetacenterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
