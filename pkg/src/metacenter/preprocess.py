"""Cleanup of raw Euler-angle series: Gaussian temporal smoothing followed by
a sliding-window variance filter for outliers.

Both stages operate per trial and per channel. Smoothing recomputes every
oracle label (the attitudes changed everywhere); the variance filter only
recomputes labels of the samples it replaced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError
from .seaway import RawDataset, relabel


@dataclass(frozen=True)
class FilterConfig:
    gaussian_sigma: float = 2.0          # samples
    gaussian_radius: int | None = None   # defaults to ceil(3 * sigma)
    variance_window: int = 11            # odd sample count
    variance_k: float = 3.0              # outlier threshold multiplier

    def __post_init__(self) -> None:
        if self.gaussian_sigma <= 0.0:
            raise ConfigurationError("gaussian_sigma must be positive")
        if self.gaussian_radius is not None and self.gaussian_radius < 1:
            raise ConfigurationError("gaussian_radius must be at least 1")
        if self.variance_window < 3 or self.variance_window % 2 == 0:
            raise ConfigurationError("variance_window must be odd and >= 3")
        if self.variance_k <= 0.0:
            raise ConfigurationError("variance_k must be positive")

    @property
    def radius(self) -> int:
        if self.gaussian_radius is not None:
            return self.gaussian_radius
        return int(math.ceil(3.0 * self.gaussian_sigma))


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """Discrete Gaussian taps on [-radius, radius], normalized to sum 1."""
    j = np.arange(-radius, radius + 1, dtype=float)
    w = np.exp(-j * j / (2.0 * sigma * sigma))
    return w / w.sum()


def gaussian_smooth(dataset: RawDataset, config: FilterConfig) -> tuple[RawDataset, list[int]]:
    """Convolve each Euler channel with a normalized Gaussian, per trial.

    Trial boundaries use reflect padding. Trials shorter than the kernel are
    passed through untouched and reported in the returned skip list. Labels
    are recomputed from the oracle on the smoothed attitudes.
    """
    kernel = gaussian_kernel(config.gaussian_sigma, config.radius)
    radius = config.radius
    attitudes = dataset.attitudes.copy()
    skipped: list[int] = []
    for tid in dataset.trial_ids():
        idx = dataset.trial_indices(tid)
        if len(idx) < 2 * radius + 1:
            skipped.append(int(tid))
            continue
        for ch in range(3):
            padded = np.pad(attitudes[idx, ch], radius, mode="reflect")
            attitudes[idx, ch] = np.convolve(padded, kernel, mode="valid")
    smoothed = replace(dataset, attitudes=attitudes, flagged=None)
    return relabel(smoothed), skipped


def _window_stats_excluding_self(values: np.ndarray, half: int):
    """Mean, population std and median of the centered window around each
    interior sample, excluding the sample itself.

    Returned arrays cover positions ``half .. len(values) - half - 1``; the
    first and last ``half`` samples have no complete centered window (a
    one-sided window systematically inflates the apparent deviation of a
    smooth signal's endpoints, so those samples get no verdict at all).
    """
    width = 2 * half + 1
    offset = values.mean()
    shifted = values - offset               # limits cancellation in the moments
    windows = np.lib.stride_tricks.sliding_window_view(shifted, width)
    center = windows[:, half]
    m = width - 1
    s1 = windows.sum(axis=1) - center
    s2 = (windows * windows).sum(axis=1) - center * center
    means = s1 / m
    var = np.maximum(s2 / m - means * means, 0.0)
    others = np.delete(windows, half, axis=1)
    return means + offset, np.sqrt(var), np.median(others, axis=1) + offset


def variance_filter(dataset: RawDataset, config: FilterConfig,
                    mode: str = "replace") -> RawDataset:
    """Flag samples deviating from their window by more than k standard
    deviations and replace them with the window median (or drop them).

    Detection runs on the original values of all three channels at once;
    replacement happens afterwards, so earlier replacements never influence
    later windows. Statistics exclude the center sample, and a deviating
    center over a zero-variance window counts as an outlier. The first and
    last half-window of each trial carry no complete centered window and
    pass through unexamined.
    """
    if mode not in ("replace", "drop"):
        raise ConfigurationError(f"unknown variance filter mode: {mode!r}")
    half = config.variance_window // 2
    attitudes = dataset.attitudes.copy()
    flags = np.zeros(len(dataset), dtype=np.int64)
    for tid in dataset.trial_ids():
        idx = dataset.trial_indices(tid)
        if len(idx) < config.variance_window:
            raise ConfigurationError(
                f"trial {tid} has {len(idx)} samples, fewer than the "
                f"variance window {config.variance_window}")
        interior = idx[half:len(idx) - half]
        for ch in range(3):
            values = dataset.attitudes[idx, ch]
            means, stds, medians = _window_stats_excluding_self(values, half)
            dev = np.abs(values[half:len(idx) - half] - means)
            outlier = np.where(stds > 0.0, dev > config.variance_k * stds, dev > 0.0)
            flags[interior[outlier]] = 1
            attitudes[interior[outlier], ch] = medians[outlier]

    replaced_idx = np.flatnonzero(flags)
    filtered = replace(dataset, attitudes=attitudes, flagged=flags)
    if len(replaced_idx):
        filtered = relabel(filtered, replaced_idx)
    if mode == "drop":
        keep = np.flatnonzero(flags == 0)
        filtered = filtered.subset(keep)
    return filtered
