"""Training protocol and the four-way architecture comparison.

Whole trials are assigned to train/test splits so the time-sequence model
never sees leaked temporal context. Inputs and targets are z-scored with
train-set statistics only; every reported loss is converted back to
centimeters squared. The time-sequence network trains under teacher forcing
and is evaluated closed loop, which is its deployment condition.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, TrainingError
from .models import (
    KINDS,
    Regressor,
    build,
    feedback_init,
    init_centers_from_data,
)
from .nncore import Adam, mse_loss
from .seaway import RawDataset


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 1e-2
    iterations: int = 5000
    seed: int = 0
    test_fraction: float = 0.2
    eval_every: int = 10

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be at least 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigurationError("test_fraction must lie in (0, 1)")
        if self.iterations < 1:
            raise ConfigurationError("iterations must be at least 1")
        if self.eval_every < 1:
            raise ConfigurationError("eval_every must be at least 1")

    def as_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "iterations": self.iterations,
            "seed": self.seed,
            "test_fraction": self.test_fraction,
            "eval_every": self.eval_every,
        }


@dataclass
class LossCurve:
    """Recorded (iteration, train MSE, test MSE) triples, cm^2."""

    iterations: list[int] = field(default_factory=list)
    train_mse: list[float] = field(default_factory=list)
    test_mse: list[float] = field(default_factory=list)

    def append(self, iteration: int, train: float, test: float) -> None:
        if self.iterations and iteration <= self.iterations[-1]:
            raise TrainingError("loss curve iterations must increase")
        self.iterations.append(iteration)
        self.train_mse.append(train)
        self.test_mse.append(test)

    def moving_average_train(self, at_iteration: int, window: int = 200) -> float:
        """Mean train MSE over recorded points in (at_iteration - window,
        at_iteration]."""
        lo = at_iteration - window
        values = [m for i, m in zip(self.iterations, self.train_mse)
                  if lo < i <= at_iteration]
        if not values:
            raise TrainingError(f"no recorded losses in ({lo}, {at_iteration}]")
        return float(np.mean(values))

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("iteration,train_mse,test_mse\n")
            for i, tr, te in zip(self.iterations, self.train_mse, self.test_mse):
                fh.write(f"{i},{tr:.17g},{te:.17g}\n")

    @classmethod
    def load_csv(cls, path: str | Path) -> "LossCurve":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(iterations=[int(v) for v in data[:, 0]],
                   train_mse=list(data[:, 1]), test_mse=list(data[:, 2]))


@dataclass(frozen=True)
class Stats:
    """Train-split standardization statistics."""

    input_mean: np.ndarray
    input_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray


def split_dataset(dataset: RawDataset, test_fraction: float, seed: int):
    """Assign whole trials to train/test; at least one trial on each side."""
    trials = dataset.trial_ids()
    if len(trials) < 2:
        raise ConfigurationError(
            "dataset has a single trial; generate more trials so whole "
            "trials can be held out for testing")
    n_test = max(1, int(math.floor(len(trials) * test_fraction)))
    order = np.random.default_rng(seed).permutation(len(trials))
    test_ids = set(trials[order[:n_test]].tolist())
    test_mask = np.isin(dataset.trial, list(test_ids))
    return dataset.subset(~test_mask), dataset.subset(test_mask)


def _safe_std(values: np.ndarray, what: str) -> np.ndarray:
    std = values.std(axis=0)
    if np.any(std == 0.0):
        warnings.warn(f"zero-variance {what} channel; clamping its std to 1")
        std = np.where(std == 0.0, 1.0, std)
    return std


def compute_stats(train: RawDataset) -> Stats:
    if len(train) == 0:
        raise ConfigurationError("cannot standardize an empty train split")
    return Stats(
        input_mean=train.attitudes.mean(axis=0),
        input_std=_safe_std(train.attitudes, "attitude"),
        target_mean=train.positions.mean(axis=0),
        target_std=_safe_std(train.positions, "target"),
    )


def standardize(train: RawDataset, test: RawDataset):
    """Z-score both splits with train statistics; returns arrays plus stats."""
    stats = compute_stats(train)
    def tx(ds):
        return ((ds.attitudes - stats.input_mean) / stats.input_std,
                (ds.positions - stats.target_mean) / stats.target_std)
    return tx(train), tx(test), stats


def _trial_arrays(dataset: RawDataset):
    ids = dataset.trial_ids()
    atts = [dataset.attitudes[dataset.trial == tid] for tid in ids]
    ts = [dataset.t[dataset.trial == tid] for tid in ids]
    pos = [dataset.positions[dataset.trial == tid] for tid in ids]
    return ids, atts, ts, pos


def _sequence_design(dataset: RawDataset, stats: Stats, fb_cm: np.ndarray):
    """Teacher-forced design matrix: [attitude_z, previous-target_z]."""
    xs, ys = [], []
    for tid in dataset.trial_ids():
        idx = dataset.trial_indices(tid)
        att_z = (dataset.attitudes[idx] - stats.input_mean) / stats.input_std
        tgt = dataset.positions[idx]
        prev = np.vstack([fb_cm, tgt[:-1]])
        prev_z = (prev - stats.target_mean) / stats.target_std
        xs.append(np.hstack([att_z, prev_z]))
        ys.append((tgt - stats.target_mean) / stats.target_std)
    return np.vstack(xs), np.vstack(ys)


def _mse_cm2(pred_cm: np.ndarray, target_cm: np.ndarray) -> float:
    diff = pred_cm - target_cm
    return float((diff * diff).mean())


@dataclass(eq=False)
class TrainResult:
    regressor: Regressor
    curve: LossCurve
    wall_time_s: float


def train(kind: str, train_ds: RawDataset, test_ds: RawDataset,
          config: TrainConfig) -> TrainResult:
    """Run the full protocol for one architecture.

    Uniform-with-replacement batches, one Adam step per iteration, losses
    recorded every ``eval_every`` iterations in cm^2. The ts-grnn test loss
    is measured closed loop over each test trial.
    """
    t_start = time.perf_counter()
    stats = compute_stats(train_ds)
    rng = np.random.default_rng(config.seed)
    network = build(kind, config.seed)

    fb_cm = None
    if kind == "ts-grnn":
        if train_ds.hull is None:
            raise ConfigurationError(
                "ts-grnn needs the generating hull for its feedback "
                "initialization; attach one to the dataset")
        fb_cm = feedback_init(train_ds.hull)
        x_train, y_train = _sequence_design(train_ds, stats, fb_cm)
        _, test_atts, test_ts, test_pos = _trial_arrays(test_ds)
    else:
        x_train = (train_ds.attitudes - stats.input_mean) / stats.input_std
        y_train = (train_ds.positions - stats.target_mean) / stats.target_std
        x_test = (test_ds.attitudes - stats.input_mean) / stats.input_std

    init_centers_from_data(network, x_train, rng)
    optimizer = Adam(network.params(), learning_rate=config.learning_rate)

    regressor = Regressor(
        kind=kind, network=network,
        input_mean=stats.input_mean, input_std=stats.input_std,
        target_mean=stats.target_mean, target_std=stats.target_std,
        feedback_init_cm=fb_cm, seed=config.seed,
        train_config=config.as_dict(),
    )

    def train_mse_cm2() -> float:
        pred = network.infer(x_train) * stats.target_std + stats.target_mean
        target = y_train * stats.target_std + stats.target_mean
        return _mse_cm2(pred, target)

    def test_mse_cm2() -> float:
        if kind == "ts-grnn":
            preds = regressor.predict_sequences(test_atts, test_ts, "closed_loop")
            return _mse_cm2(np.vstack(preds), np.vstack(test_pos))
        pred = network.infer(x_test) * stats.target_std + stats.target_mean
        return _mse_cm2(pred, test_ds.positions)

    curve = LossCurve()
    n = len(x_train)
    for iteration in range(1, config.iterations + 1):
        idx = rng.integers(0, n, config.batch_size)
        pred = network.forward(x_train[idx])
        loss, grad = mse_loss(pred, y_train[idx])
        if not math.isfinite(loss):
            norms = ", ".join(f"{float(np.abs(p).max()):.3e}" for p in network.params())
            raise TrainingError(
                f"non-finite loss at iteration {iteration} "
                f"(max |param| per tensor: {norms})")
        network.zero_grads()
        network.backward(grad)
        optimizer.step(network.grads())
        if iteration % config.eval_every == 0 or iteration == config.iterations:
            curve.append(iteration, train_mse_cm2(), test_mse_cm2())

    return TrainResult(regressor=regressor, curve=curve,
                       wall_time_s=time.perf_counter() - t_start)


@dataclass(eq=False)
class ArchReport:
    kind: str
    parameters: int
    final_train_mse: float
    final_test_mse: float
    test_rmse_cm: float
    wall_time_s: float


@dataclass(eq=False)
class ComparisonReport:
    """Final metrics, curves and checkpoints for all four architectures."""

    config: TrainConfig
    entries: dict[str, ArchReport]
    curves: dict[str, LossCurve]
    regressors: dict[str, Regressor]

    def gap_ratio(self, kind: str) -> float:
        entry = self.entries[kind]
        return entry.final_test_mse / entry.final_train_mse

    def to_json_text(self) -> str:
        # wall time deliberately stays out: the JSON document is the
        # deterministic record, timings live in the text table and manifest
        doc = {
            "config": self.config.as_dict(),
            "networks": {
                kind: {
                    "parameters": e.parameters,
                    "final_train_mse_cm2": e.final_train_mse,
                    "final_test_mse_cm2": e.final_test_mse,
                    "test_rmse_cm": e.test_rmse_cm,
                    "gap_ratio": self.gap_ratio(kind),
                }
                for kind, e in self.entries.items()
            },
        }
        return json.dumps(doc, indent=1) + "\n"

    def to_text(self) -> str:
        header = (f"{'network':<10} {'params':>7} {'train MSE':>14} "
                  f"{'test MSE':>14} {'test RMSE':>11} {'gap':>7} {'time':>8}")
        lines = [header, "-" * len(header)]
        for kind, e in self.entries.items():
            lines.append(
                f"{kind:<10} {e.parameters:>7d} {e.final_train_mse:>14.4f} "
                f"{e.final_test_mse:>14.4f} {e.test_rmse_cm:>11.4f} "
                f"{self.gap_ratio(kind):>7.2f} {e.wall_time_s:>7.1f}s")
        lines.append("")
        lines.append("MSE in cm^2, RMSE in cm; ts-grnn test loss is closed-loop.")
        return "\n".join(lines) + "\n"

    def save_artifacts(self, outdir: str | Path, svg: bool = False) -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        written = []
        report_json = outdir / "report.json"
        report_json.write_text(self.to_json_text())
        written.append(report_json)
        report_txt = outdir / "report.txt"
        report_txt.write_text(self.to_text())
        written.append(report_txt)
        for kind in self.entries:
            tag = kind.replace("-", "_")
            curve_path = outdir / f"loss_{tag}.csv"
            self.curves[kind].save_csv(curve_path)
            written.append(curve_path)
            ckpt_path = outdir / f"ckpt_{tag}.json"
            self.regressors[kind].save(ckpt_path)
            written.append(ckpt_path)
            if svg:
                svg_path = outdir / f"loss_{tag}.svg"
                render_loss_curve_svg(self.curves[kind], svg_path,
                                      f"{kind} training loss")
                written.append(svg_path)
        return written


def compare(dataset: RawDataset, config: TrainConfig) -> ComparisonReport:
    """Train all four architectures on one split and assemble the report."""
    train_ds, test_ds = split_dataset(dataset, config.test_fraction, config.seed)
    entries: dict[str, ArchReport] = {}
    curves: dict[str, LossCurve] = {}
    regressors: dict[str, Regressor] = {}
    for kind in KINDS:
        result = train(kind, train_ds, test_ds, config)
        final_train = result.curve.train_mse[-1]
        final_test = result.curve.test_mse[-1]
        entries[kind] = ArchReport(
            kind=kind,
            parameters=result.regressor.network.num_params(),
            final_train_mse=final_train,
            final_test_mse=final_test,
            test_rmse_cm=math.sqrt(final_test),
            wall_time_s=result.wall_time_s,
        )
        curves[kind] = result.curve
        regressors[kind] = result.regressor
    return ComparisonReport(config=config, entries=entries,
                            curves=curves, regressors=regressors)


@dataclass(eq=False)
class EvalReport:
    overall_mse: float
    per_trial_mse: dict[int, float]
    per_step_mse: np.ndarray

    def save_profile_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("step,mse\n")
            for i, v in enumerate(self.per_step_mse):
                fh.write(f"{i},{v:.17g}\n")


def evaluate(regressor: Regressor, dataset: RawDataset,
             mode: str = "closed_loop") -> EvalReport:
    """Per-trial and per-step errors; sequences run in the requested mode."""
    ids, atts, ts, pos = _trial_arrays(dataset)
    if regressor.kind == "ts-grnn":
        preds = regressor.predict_sequences(atts, ts, mode, pos)
    else:
        preds = [regressor.predict(a) for a in atts]

    per_trial = {int(tid): _mse_cm2(p, y) for tid, p, y in zip(ids, preds, pos)}
    overall = _mse_cm2(np.vstack(preds), np.vstack(pos))

    horizon = max(len(p) for p in preds)
    sums = np.zeros(horizon)
    counts = np.zeros(horizon)
    for p, y in zip(preds, pos):
        se = ((p - y) ** 2).mean(axis=1)
        sums[: len(se)] += se
        counts[: len(se)] += 1.0
    return EvalReport(overall_mse=overall, per_trial_mse=per_trial,
                      per_step_mse=sums / counts)


def render_loss_curve_svg(curve: LossCurve, path: str | Path, title: str) -> None:
    """Minimal polyline plot of train/test MSE against iteration."""
    width, height = 640, 420
    ml, mr, mt, mb = 70, 20, 40, 50
    xs = np.asarray(curve.iterations, dtype=float)
    series = {"train": np.asarray(curve.train_mse), "test": np.asarray(curve.test_mse)}
    positive = np.concatenate([v[v > 0] for v in series.values()])
    floor = positive.min() if len(positive) else 1.0
    logs = {k: np.log10(np.maximum(v, floor)) for k, v in series.items()}
    y_min = min(v.min() for v in logs.values())
    y_max = max(v.max() for v in logs.values())
    if y_max == y_min:
        y_max = y_min + 1.0

    def sx(x):
        return ml + (x - xs[0]) / max(xs[-1] - xs[0], 1.0) * (width - ml - mr)

    def sy(v):
        return height - mb - (v - y_min) / (y_max - y_min) * (height - mt - mb)

    colors = {"train": "#1f77b4", "test": "#d62728"}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
        f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>',
        f'<text x="{(ml + width - mr) / 2:.0f}" y="{height - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">iteration</text>',
        f'<text x="18" y="{(mt + height - mb) / 2:.0f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {(mt + height - mb) / 2:.0f})">MSE (cm^2, log10)</text>',
        f'<text x="{ml - 6}" y="{height - mb + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{y_min:.1f}</text>',
        f'<text x="{ml - 6}" y="{mt + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{y_max:.1f}</text>',
        f'<text x="{ml}" y="{height - mb + 16}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">{int(xs[0])}</text>',
        f'<text x="{width - mr}" y="{height - mb + 16}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">{int(xs[-1])}</text>',
    ]
    for name, values in logs.items():
        pts = " ".join(f"{sx(x):.2f},{sy(v):.2f}" for x, v in zip(xs, values))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{colors[name]}" stroke-width="1.5"/>')
    parts.append(f'<text x="{width - mr - 4}" y="{mt + 14}" text-anchor="end" '
                 f'font-family="sans-serif" font-size="12" fill="{colors["train"]}">train</text>')
    parts.append(f'<text x="{width - mr - 4}" y="{mt + 30}" text-anchor="end" '
                 f'font-family="sans-serif" font-size="12" fill="{colors["test"]}">test</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
