"""Synthetic seaway: wave-driven attitude series labeled by the hydrostatics
oracle.

Each Euler channel is a seeded sum of sinusoids plus sensor-like Gaussian
noise; the metacenter labels are exact oracle outputs for the (possibly
noisy) attitudes. Identical seeds give bit-identical datasets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError
from .hydrostatics import HullSpec, metacenter_batch

CSV_HEADER = "trial,t,roll,pitch,yaw,mx,my,mz"

_ANGLE_LIMIT = math.nextafter(math.pi / 2.0, 0.0)


@dataclass(frozen=True)
class SeawaySpec:
    """Configuration of one generated trial."""

    duration: float = 600.0
    rate: float = 10.0
    components: int = 4
    roll_amplitude: float = 0.26
    pitch_amplitude: float = 0.17
    yaw_amplitude: float = 0.09
    freq_min: float = 0.05
    freq_max: float = 0.8
    noise_std: float = 0.01
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rate <= 0.0:
            raise ConfigurationError("sampling rate must be positive")
        if self.duration * self.rate < 2.0:
            raise ConfigurationError("duration x rate must be at least 2 samples")
        if self.components < 1:
            raise ConfigurationError("need at least one sinusoid component")
        if min(self.roll_amplitude, self.pitch_amplitude, self.yaw_amplitude) < 0.0:
            raise ConfigurationError("amplitudes must be non-negative")
        if not 0.0 < self.freq_min <= self.freq_max:
            raise ConfigurationError("need 0 < freq_min <= freq_max")
        if max(self.roll_amplitude, self.pitch_amplitude) >= math.pi / 2.0:
            raise ConfigurationError("amplitudes must keep attitudes below pi/2")


@dataclass(eq=False)
class RawDataset:
    """Columnar (attitude, metacenter) samples, grouped by trial.

    trial     : (N,) int trial id per sample
    t         : (N,) seconds
    attitudes : (N, 3) roll, pitch, yaw in radians
    positions : (N, 3) metacenter in centimeters
    hull      : generating hull, kept so labels can be recomputed
    flagged   : optional (N,) 0/1 outlier marks from preprocessing
    """

    trial: np.ndarray
    t: np.ndarray
    attitudes: np.ndarray
    positions: np.ndarray
    hull: HullSpec | None = None
    flagged: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.trial = np.asarray(self.trial, dtype=np.int64)
        self.t = np.asarray(self.t, dtype=float)
        self.attitudes = np.asarray(self.attitudes, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        n = len(self.trial)
        if not (len(self.t) == len(self.attitudes) == len(self.positions) == n):
            raise DataError("dataset columns have mismatched lengths")
        for tid in np.unique(self.trial):
            ts = self.t[self.trial == tid]
            if len(ts) > 1 and not np.all(np.diff(ts) > 0.0):
                raise DataError(f"timestamps not strictly increasing in trial {tid}")

    def __len__(self) -> int:
        return len(self.trial)

    def trial_ids(self) -> np.ndarray:
        """Trial ids in order of first appearance."""
        _, first = np.unique(self.trial, return_index=True)
        return self.trial[np.sort(first)]

    def trial_indices(self, tid: int) -> np.ndarray:
        return np.flatnonzero(self.trial == tid)

    def subset(self, mask_or_indices) -> "RawDataset":
        idx = np.asarray(mask_or_indices)
        return RawDataset(
            trial=self.trial[idx],
            t=self.t[idx],
            attitudes=self.attitudes[idx],
            positions=self.positions[idx],
            hull=self.hull,
            flagged=None if self.flagged is None else self.flagged[idx],
        )

    def save_csv(self, path: str | Path) -> None:
        """Write the dataset with 17 significant digits per float field."""
        with open(path, "w") as fh:
            header = CSV_HEADER + (",flagged" if self.flagged is not None else "")
            fh.write(header + "\n")
            for i in range(len(self)):
                row = [str(int(self.trial[i])), f"{self.t[i]:.17g}"]
                row += [f"{v:.17g}" for v in self.attitudes[i]]
                row += [f"{v:.17g}" for v in self.positions[i]]
                if self.flagged is not None:
                    row.append(str(int(self.flagged[i])))
                fh.write(",".join(row) + "\n")

    @classmethod
    def load_csv(cls, path: str | Path, hull: HullSpec | None = None) -> "RawDataset":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"dataset file not found: {path}")
        with open(path) as fh:
            header = fh.readline().strip()
        base_cols = CSV_HEADER.split(",")
        cols = header.split(",")
        if cols[: len(base_cols)] != base_cols:
            raise DataError(f"unexpected dataset header in {path}: {header!r}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != len(cols):
            raise DataError(f"column count mismatch in {path}")
        flagged = data[:, 8].astype(np.int64) if "flagged" in cols else None
        return cls(
            trial=data[:, 0].astype(np.int64),
            t=data[:, 1],
            attitudes=data[:, 2:5],
            positions=data[:, 5:8],
            hull=hull,
            flagged=flagged,
        )


def _channel(rng: np.random.Generator, spec: SeawaySpec, amplitude: float,
             t: np.ndarray) -> np.ndarray:
    """One Euler channel: a sum of seeded sinusoids plus noise.

    The channel's total swing is drawn uniformly within the configured
    amplitude range and shared across components, so different trials see
    genuinely different sea states while the bound holds by construction.
    """
    total = rng.uniform(0.0, amplitude)
    weights = rng.uniform(0.0, 1.0, spec.components)
    amps = total * weights / weights.sum()
    freqs = rng.uniform(spec.freq_min, spec.freq_max, spec.components)
    phases = rng.uniform(0.0, 2.0 * math.pi, spec.components)
    signal = np.zeros_like(t)
    for a, f, p in zip(amps, freqs, phases):
        signal += a * np.sin(2.0 * math.pi * f * t + p)
    if spec.noise_std > 0.0:
        signal += rng.normal(0.0, spec.noise_std, len(t))
    return signal


def generate_trajectory(hull: HullSpec, spec: SeawaySpec, trial_id: int = 0) -> RawDataset:
    """One labeled trial; the per-trial stream is seeded with seed XOR trial id."""
    rng = np.random.default_rng(spec.seed ^ trial_id)
    n = int(math.floor(spec.duration * spec.rate))
    t = np.arange(n) / spec.rate

    roll = _channel(rng, spec, spec.roll_amplitude, t)
    pitch = _channel(rng, spec, spec.pitch_amplitude, t)
    yaw = _channel(rng, spec, spec.yaw_amplitude, t)
    # noise can nudge a sample past the capsize bound in principle; clamp
    roll = np.clip(roll, -_ANGLE_LIMIT, _ANGLE_LIMIT)
    pitch = np.clip(pitch, -_ANGLE_LIMIT, _ANGLE_LIMIT)

    positions = metacenter_batch(hull, roll, pitch, yaw)
    return RawDataset(
        trial=np.full(n, trial_id, dtype=np.int64),
        t=t,
        attitudes=np.stack([roll, pitch, yaw], axis=1),
        positions=positions,
        hull=hull,
    )


def generate_dataset(hull: HullSpec, spec: SeawaySpec, trials: int) -> RawDataset:
    """Concatenate ``trials`` independent trajectories with derived seeds."""
    if trials < 1:
        raise ConfigurationError("need at least one trial")
    parts = [generate_trajectory(hull, spec, trial_id) for trial_id in range(trials)]
    return RawDataset(
        trial=np.concatenate([p.trial for p in parts]),
        t=np.concatenate([p.t for p in parts]),
        attitudes=np.concatenate([p.attitudes for p in parts]),
        positions=np.concatenate([p.positions for p in parts]),
        hull=hull,
    )


def relabel(dataset: RawDataset, indices: np.ndarray | None = None) -> RawDataset:
    """Recompute oracle labels for all samples (or just ``indices``)."""
    if dataset.hull is None:
        raise ConfigurationError("dataset has no hull attached; pass one when loading")
    positions = dataset.positions.copy()
    if indices is None:
        positions = metacenter_batch(dataset.hull, dataset.attitudes[:, 0],
                                     dataset.attitudes[:, 1], dataset.attitudes[:, 2])
    elif len(indices):
        positions[indices] = metacenter_batch(
            dataset.hull, dataset.attitudes[indices, 0],
            dataset.attitudes[indices, 1], dataset.attitudes[indices, 2])
    return replace(dataset, positions=positions)
