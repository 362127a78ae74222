"""The four network architectures and their shared prediction wrapper.

Architecture tags: ``fc`` (3-20relu-20relu-3), ``rbf`` (3-20rbf-3 linear),
``grnn`` (3-20rbf-normalized sum-3) and ``ts-grnn`` (grnn on the 6-vector
[attitude, previous metacenter]). The time-sequence variant feeds back its
own previous prediction in closed loop, or the previous ground truth under
teacher forcing; the first step uses the hull's level-attitude metacenter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, NumericalError
from .hydrostatics import AttitudeSample, HullSpec, compute_metacenter
from .nncore import DenseLayer, Network, NormalizedSumLayer, RbfLayer, gradient_check, init_normal

KINDS = ("fc", "rbf", "grnn", "ts-grnn")

HIDDEN = 20

_INPUT_DIM = {"fc": 3, "rbf": 3, "grnn": 3, "ts-grnn": 6}


def input_dim(kind: str) -> int:
    if kind not in KINDS:
        raise ConfigurationError(f"unknown architecture {kind!r}; expected one of {KINDS}")
    return _INPUT_DIM[kind]


def build(kind: str, seed: int) -> Network:
    """Construct a freshly initialized network of the given kind.

    Weights use zero-mean normal draws scaled by 1/sqrt(fan_in); biases are
    zero. RBF centers start as normal draws too and are normally replaced by
    sampled training inputs before training (see init_centers_from_data).
    """
    n_in = input_dim(kind)
    rng = np.random.default_rng(seed)
    if kind == "fc":
        return Network([
            DenseLayer(init_normal((HIDDEN, n_in), rng, 1.0 / math.sqrt(n_in)),
                       np.zeros(HIDDEN), "relu"),
            DenseLayer(init_normal((HIDDEN, HIDDEN), rng, 1.0 / math.sqrt(HIDDEN)),
                       np.zeros(HIDDEN), "relu"),
            DenseLayer(init_normal((3, HIDDEN), rng, 1.0 / math.sqrt(HIDDEN)),
                       np.zeros(3), "identity"),
        ])
    rbf = RbfLayer(init_normal((HIDDEN, n_in), rng, 1.0 / math.sqrt(n_in)),
                   np.zeros(HIDDEN))
    if kind == "rbf":
        return Network([
            rbf,
            DenseLayer(init_normal((3, HIDDEN), rng, 1.0 / math.sqrt(HIDDEN)),
                       np.zeros(3), "identity"),
        ])
    # grnn and ts-grnn: pure convex combination, no output bias
    return Network([
        rbf,
        NormalizedSumLayer(init_normal((3, HIDDEN), rng, 1.0 / math.sqrt(HIDDEN))),
    ])


def init_centers_from_data(network: Network, inputs: np.ndarray,
                           rng: np.random.Generator) -> None:
    """Place RBF centers on k distinct training inputs; set every spread to
    the mean pairwise distance between the sampled centers."""
    layer = network.layers[0]
    if not isinstance(layer, RbfLayer):
        return
    k = layer.c.shape[0]
    if len(inputs) < k:
        raise DataError(f"need at least {k} samples to place {k} centers")
    idx = rng.choice(len(inputs), size=k, replace=False)
    centers = inputs[idx].astype(float)
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    mean_dist = dist[np.triu_indices(k, 1)].mean()
    sigma = max(mean_dist, 1e-6)
    layer.c[...] = centers
    layer.rho[...] = math.log(sigma)


def feedback_init(hull: HullSpec) -> np.ndarray:
    """Level-attitude oracle metacenter, centimeters: the step-0 feedback."""
    state = compute_metacenter(hull, AttitudeSample(0.0, 0.0, 0.0))
    return state.metacenter_position.as_array()


@dataclass(eq=False)
class Regressor:
    """Trained network plus the standardization needed to use it.

    Inputs are z-scored with the attitude statistics; the feedback channel
    of ts-grnn and all predictions use the target statistics, so outputs
    come back in centimeters.
    """

    kind: str
    network: Network
    input_mean: np.ndarray
    input_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray
    feedback_init_cm: np.ndarray | None = None
    seed: int = 0
    train_config: dict = field(default_factory=dict)

    def predict(self, attitudes: np.ndarray) -> np.ndarray:
        """Batch prediction in centimeters (fc, rbf and grnn only)."""
        if self.kind == "ts-grnn":
            raise ConfigurationError("ts-grnn predictions require predict_sequence")
        z = (np.asarray(attitudes, dtype=float) - self.input_mean) / self.input_std
        out = self.network.infer(z)
        return out * self.target_std + self.target_mean

    def predict_sequence(self, attitudes: np.ndarray, t: np.ndarray,
                         mode: str = "closed_loop",
                         targets_cm: np.ndarray | None = None) -> np.ndarray:
        """Step through one time-ordered trial, feeding back the previous
        metacenter (own prediction or ground truth)."""
        preds = self.predict_sequences([attitudes], [t], mode,
                                       None if targets_cm is None else [targets_cm])
        return preds[0]

    def predict_sequences(self, attitude_trials: list[np.ndarray],
                          t_trials: list[np.ndarray], mode: str = "closed_loop",
                          target_trials: list[np.ndarray] | None = None) -> list[np.ndarray]:
        """Closed-loop or teacher-forced prediction for several trials at
        once; equal-length trials advance in lockstep so the per-step cost
        is shared."""
        if self.kind != "ts-grnn":
            raise ConfigurationError("predict_sequence applies to ts-grnn only")
        if mode not in ("closed_loop", "teacher_forced"):
            raise ConfigurationError(f"unknown sequence mode {mode!r}")
        if mode == "teacher_forced" and target_trials is None:
            raise DataError("teacher_forced mode requires ground-truth targets")
        for ts in t_trials:
            if len(ts) > 1 and not np.all(np.diff(ts) > 0.0):
                raise DataError("trial timestamps must be strictly increasing")
        if self.feedback_init_cm is None:
            raise ConfigurationError("checkpoint lacks the feedback initialization")

        lengths = {len(a) for a in attitude_trials}
        if len(lengths) > 1:
            # mixed lengths: run each trial on its own
            return [self.predict_sequences([a], [ts], mode,
                                           None if target_trials is None else [target_trials[i]])[0]
                    for i, (a, ts) in enumerate(zip(attitude_trials, t_trials))]

        horizon = lengths.pop()
        n_trials = len(attitude_trials)
        att_z = (np.stack([np.asarray(a, dtype=float) for a in attitude_trials])
                 - self.input_mean) / self.input_std        # (n_trials, T, 3)
        targets = None if target_trials is None else np.stack(target_trials)
        out_cm = np.empty((n_trials, horizon, 3))

        # the per-step loop runs hot during training evaluation; read the
        # grnn parameters once and evaluate the stack inline
        rbf, head = self.network.layers
        centers = rbf.c
        inv_sigma2 = np.exp(-2.0 * rbf.rho)
        c_sq = (centers * centers).sum(axis=1)
        w_t = head.w.T
        rows = np.empty((n_trials, 6))
        rows_z = rows[:, 3:]

        prev_cm = np.tile(self.feedback_init_cm, (n_trials, 1))
        closed = mode == "closed_loop"
        for step in range(horizon):
            rows[:, :3] = att_z[:, step]
            np.divide(prev_cm - self.target_mean, self.target_std, out=rows_z)
            d2 = (rows * rows).sum(axis=1)[:, None] - 2.0 * (rows @ centers.T) + c_sq
            phi = np.exp(-np.maximum(d2, 0.0) * inv_sigma2)
            total = phi.sum(axis=1)
            if np.any(total < 1e-300):
                raise NumericalError(
                    "all radial activations underflowed during sequence prediction")
            step_cm = (phi / total[:, None]) @ w_t * self.target_std + self.target_mean
            out_cm[:, step] = step_cm
            prev_cm = step_cm if closed else targets[:, step]
        return [out_cm[i] for i in range(n_trials)]

    def save(self, path: str | Path) -> None:
        doc = {
            "architecture": self.kind,
            "layer_shapes": [list(p.shape) for p in self.network.params()],
            "parameters": [p.reshape(-1).tolist() for p in self.network.params()],
            "input_mean": self.input_mean.tolist(),
            "input_std": self.input_std.tolist(),
            "target_mean": self.target_mean.tolist(),
            "target_std": self.target_std.tolist(),
            "feedback_init_cm": None if self.feedback_init_cm is None
                                else self.feedback_init_cm.tolist(),
            "train_config": self.train_config,
            "seed": self.seed,
        }
        Path(path).write_text(json.dumps(doc, indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Regressor":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"checkpoint not found: {path}")
        try:
            doc = json.loads(path.read_text())
            kind = doc["architecture"]
            network = build(kind, int(doc["seed"]))
            params = network.params()
            if len(params) != len(doc["parameters"]):
                raise DataError("checkpoint parameter count mismatch")
            for p, shape, flat in zip(params, doc["layer_shapes"], doc["parameters"]):
                if list(p.shape) != shape:
                    raise DataError(f"checkpoint shape mismatch: {shape} vs {list(p.shape)}")
                p[...] = np.asarray(flat, dtype=float).reshape(p.shape)
            fb = doc.get("feedback_init_cm")
            return cls(
                kind=kind,
                network=network,
                input_mean=np.asarray(doc["input_mean"], dtype=float),
                input_std=np.asarray(doc["input_std"], dtype=float),
                target_mean=np.asarray(doc["target_mean"], dtype=float),
                target_std=np.asarray(doc["target_std"], dtype=float),
                feedback_init_cm=None if fb is None else np.asarray(fb, dtype=float),
                seed=int(doc["seed"]),
                train_config=doc.get("train_config") or {},
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise DataError(f"malformed checkpoint {path}: {exc}") from exc


def _kink_free_inputs(network: Network, rng: np.random.Generator, n: int,
                      n_in: int, margin: float = 1e-3) -> np.ndarray:
    """Random inputs resampled until no ReLU preactivation sits within
    ``margin`` of its kink, so finite differences stay one-sided."""
    x = rng.normal(size=(n, n_in))
    for _ in range(100):
        network.forward(x)
        bad = np.zeros(n, dtype=bool)
        for layer in network.layers:
            if isinstance(layer, DenseLayer) and layer.activation == "relu":
                bad |= (np.abs(layer._pre) < margin).any(axis=1)
        if not bad.any():
            return x
        x = x.copy()
        x[bad] = rng.normal(size=(int(bad.sum()), n_in))
    raise NumericalError("could not find kink-free inputs for the gradient check")


def gradient_check_kind(kind: str, seed: int = 0, n_samples: int = 16,
                        h: float = 1e-5) -> float:
    """Finite-difference check of one architecture on random data."""
    network = build(kind, seed)
    rng = np.random.default_rng(seed)
    x = _kink_free_inputs(network, rng, n_samples, input_dim(kind))
    y = rng.normal(size=(n_samples, 3))
    return gradient_check(network, x, y, h=h)
