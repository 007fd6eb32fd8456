"""Magnitude statistics: binned distributions, power-law fits and distances.

``P(M)`` is the fraction of cataloged events with magnitude greater than or
equal to M, computed from exact event counts; bins exist for plotting and for
the per-bin rate ``R``.  The decay exponent B of log10 P against M is fitted
by ordinary least squares over the linear mid-range, and converted to a
b-value via b = 1.5 B.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import fileio
from .events import EventCatalog
from .integrator import TrajectorySample

__all__ = [
    "MagnitudeDistribution",
    "GrFit",
    "build_distribution",
    "fit_gr_slope",
    "rate_distribution",
    "center_of_mass_series",
    "distribution_distance",
    "write_cumulative_csv",
    "write_rate_csv",
    "write_fit_json",
]

DEFAULT_BIN_WIDTH = 0.2
DEFAULT_FIT_WINDOW = (-3.7, 1.7)
LOG_BASES = ("ten", "natural")


@dataclass
class MagnitudeDistribution:
    """Binned magnitudes plus the raw (sorted) values they came from.

    Bins are half-open intervals [origin + k*dM, origin + (k+1)*dM); the
    origin is the magnitude of the lowest populated bin, snapped to the
    global dM lattice.
    """

    bin_origin: float
    bin_width: float
    counts: np.ndarray
    total: int
    log_base: str
    magnitudes: np.ndarray

    @property
    def bin_centers(self) -> np.ndarray:
        k = np.arange(self.counts.shape[0])
        return self.bin_origin + (k + 0.5) * self.bin_width

    @property
    def bin_edges(self) -> np.ndarray:
        k = np.arange(self.counts.shape[0] + 1)
        return self.bin_origin + k * self.bin_width

    def cumulative_ratio(self, mag):
        """Fraction of events with magnitude >= mag (exact, not from bins)."""
        mag = np.asarray(mag, dtype=float)
        below = np.searchsorted(self.magnitudes, mag, side="left")
        ratio = (self.total - below) / self.total
        return float(ratio) if ratio.ndim == 0 else ratio

    def rates(self) -> np.ndarray:
        """Per-bin event fraction count/total."""
        return self.counts / self.total


def build_distribution(
    catalog: EventCatalog,
    bin_width: float = DEFAULT_BIN_WIDTH,
    log_base: str = "ten",
) -> MagnitudeDistribution:
    if log_base not in LOG_BASES:
        raise ValueError(f"log_base must be one of {LOG_BASES}, got {log_base!r}")
    if catalog.total_events == 0:
        raise ValueError("cannot build a magnitude distribution from an empty catalog")
    if not bin_width > 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    mags = np.sort(catalog.magnitudes(log_base))
    origin = np.floor(mags[0] / bin_width) * bin_width
    idx = np.floor((mags - origin) / bin_width).astype(int)
    idx = np.clip(idx, 0, None)
    counts = np.bincount(idx)
    return MagnitudeDistribution(
        bin_origin=float(origin),
        bin_width=float(bin_width),
        counts=counts.astype(np.int64),
        total=int(mags.shape[0]),
        log_base=log_base,
        magnitudes=mags,
    )


def _fit_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Ordinary least squares; returns (slope, intercept, residual rms)."""
    slope, intercept = np.polyfit(x, y, 1)
    residuals = y - (slope * x + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(residuals**2)))


@dataclass(frozen=True)
class GrFit:
    """Least-squares fit of log10 P(M) = intercept - B * M over a window."""

    slope_B: float
    intercept: float
    fit_window: tuple[float, float]
    residual_rms: float
    b_value: float
    n_bins: int


def fit_gr_slope(
    dist: MagnitudeDistribution,
    window: tuple[float, float] = DEFAULT_FIT_WINDOW,
) -> GrFit:
    """Fit the cumulative-distribution decay exponent over bin centers.

    Only populated bins whose centers lie inside the window enter the fit;
    the b-value is exactly 1.5 times the fitted exponent.
    """
    lo, hi = window
    centers = dist.bin_centers
    usable = (dist.counts > 0) & (centers >= lo) & (centers <= hi)
    if np.count_nonzero(usable) < 2:
        raise ValueError(
            f"need at least 2 populated bins inside the fit window [{lo}, {hi}]"
        )
    x = centers[usable]
    y = np.log10(dist.cumulative_ratio(x))
    slope, intercept, rms = _fit_line(x, y)
    b_exponent = -slope
    return GrFit(
        slope_B=b_exponent,
        intercept=intercept,
        fit_window=(float(lo), float(hi)),
        residual_rms=rms,
        b_value=1.5 * b_exponent,
        n_bins=int(x.shape[0]),
    )


def rate_distribution(dist: MagnitudeDistribution) -> tuple[np.ndarray, np.ndarray]:
    """(bin center, rate) pairs for populated bins of a natural-log distribution."""
    if dist.log_base != "natural":
        raise ValueError("rate_distribution expects a natural-log distribution")
    populated = dist.counts > 0
    return dist.bin_centers[populated], dist.counts[populated] / dist.total


def center_of_mass_series(
    samples: Iterable[TrajectorySample],
) -> tuple[np.ndarray, np.ndarray]:
    """Mean block displacement per sample; returns (times, means)."""
    times = []
    means = []
    for sample in samples:
        times.append(sample.time)
        means.append(float(np.mean(sample.positions)))
    if not times:
        raise ValueError("center_of_mass_series needs at least one sample")
    return np.asarray(times), np.asarray(means)


def _lattice_indices(dist: MagnitudeDistribution) -> np.ndarray:
    """Global bin indices (origin-independent) of the populated bins."""
    j0 = int(round(dist.bin_origin / dist.bin_width))
    return j0 + np.flatnonzero(dist.counts > 0)


def _norm_of_difference(diff: np.ndarray, norm: str) -> float:
    if norm == "euclidean":
        return float(np.sqrt(np.sum(diff**2)))
    if norm == "max":
        return float(np.max(np.abs(diff)))
    raise ValueError(f"norm must be 'euclidean' or 'max', got {norm!r}")


def distribution_distance(
    f_a: MagnitudeDistribution,
    f_b: MagnitudeDistribution,
    norm: str = "euclidean",
) -> float:
    """Distance between two log-rate curves on their common magnitude bins.

    Bins are aligned by absolute magnitude, supports intersected, and the
    lowest common bin dropped (it is dominated by discreteness); the result
    is the chosen norm of the difference of per-bin log rates.
    """
    if f_a.log_base != f_b.log_base:
        raise ValueError("distributions must share a log base")
    if f_a.bin_width != f_b.bin_width:
        raise ValueError("distributions must share a bin width")
    ja = _lattice_indices(f_a)
    jb = _lattice_indices(f_b)
    common = np.intersect1d(ja, jb)
    if common.shape[0] == 0:
        raise ValueError("distributions have no common populated magnitude bins")
    common = common[1:]
    if common.shape[0] == 0:
        raise ValueError(
            "distributions share only the lowest bin, which is excluded from distances"
        )
    log = np.log if f_a.log_base == "natural" else np.log10
    ra = f_a.counts[common - int(round(f_a.bin_origin / f_a.bin_width))] / f_a.total
    rb = f_b.counts[common - int(round(f_b.bin_origin / f_b.bin_width))] / f_b.total
    return _norm_of_difference(log(ra) - log(rb), norm)


# ---------------------------------------------------------------------------
# Emitters
# ---------------------------------------------------------------------------

def write_cumulative_csv(path, dist: MagnitudeDistribution, info: dict) -> None:
    """(M, log10 P(M)) pairs at populated bin centers."""
    populated = dist.counts > 0
    centers = dist.bin_centers[populated]
    values = np.log10(dist.cumulative_ratio(centers))
    rows = [(fileio.fmt(m), fileio.fmt(p)) for m, p in zip(centers, values)]
    fileio.write_csv(path, ("magnitude", "log10_cumulative_ratio"), rows, info)


def write_rate_csv(path, dist: MagnitudeDistribution, info: dict) -> None:
    """(M1, ln R(M1)) pairs at populated bin centers."""
    centers, rates = rate_distribution(dist)
    rows = [(fileio.fmt(m), fileio.fmt(np.log(r))) for m, r in zip(centers, rates)]
    fileio.write_csv(path, ("magnitude_ln", "ln_rate"), rows, info)


def write_fit_json(path, fit: GrFit, info: dict) -> None:
    import json

    payload = {
        "slope_B": fit.slope_B,
        "b_value": fit.b_value,
        "intercept": fit.intercept,
        "fit_window": list(fit.fit_window),
        "residual_rms": fit.residual_rms,
        "n_bins": fit.n_bins,
        "meta": {k: str(v) for k, v in info.items()},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
