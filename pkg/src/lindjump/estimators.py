"""Empirical statistics of recorded event logs.

Histograms are normalized by (number of intervals x bin width) including the
intervals that fall outside the binning range, so the density integrates to
one minus the reported out-of-range fraction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .analytics import (
    DensityCurve,
    JointDensitySurface,
    LambdaSurface,
    channel_generators,
    exp_stack,
    post_photon_state,
)
from .errors import CoverageError, GridMismatchError, InsufficientEventsError
from .supermath import trace_row
from .trajectory import EventLog

LOW_STATISTICS = 100
DEFAULT_WINDOW = 50.0


@dataclass(frozen=True)
class HistogramSpec:
    """Binning of waiting times; ``channels`` is "photon", "all" or a list of labels."""

    bin_width: float = 0.05
    range: tuple = (0.0, 20.0)
    channels: object = "photon"

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError("bin width must be > 0")
        lo, hi = self.range
        if not hi > lo:
            raise ValueError("histogram range is empty")

    @property
    def edges(self) -> np.ndarray:
        lo, hi = self.range
        n = int(round((hi - lo) / self.bin_width))
        return lo + self.bin_width * np.arange(n + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])


def intervals(log: EventLog, channels="photon") -> np.ndarray:
    """Waiting times between consecutive selected events."""
    return np.diff(log.select(channels))


def waiting_histogram(log: EventLog, hspec: HistogramSpec = HistogramSpec()) -> DensityCurve:
    """Density of consecutive inter-event intervals."""
    tau = intervals(log, hspec.channels)
    if tau.size < 1:
        raise InsufficientEventsError("need at least two selected events for a waiting-time histogram")
    edges = hspec.edges
    counts, _ = np.histogram(tau, bins=edges)
    inside = counts.sum()
    dens = counts / (tau.size * hspec.bin_width)
    return DensityCurve(hspec.centers, dens, kind="estimated", residual=1.0 - inside / tau.size, counts=counts,
                        bin_width=hspec.bin_width, out_of_range=1.0 - inside / tau.size, n_samples=int(tau.size),
                        meta={"object": "w1", "low_statistics": bool(tau.size < LOW_STATISTICS)})


def interval_pairs(log: EventLog, channels="photon", overlapping: bool = True) -> np.ndarray:
    """Consecutive interval pairs (tau_i, tau_{i+1}), shape (n, 2)."""
    tau = intervals(log, channels)
    if overlapping:
        return np.column_stack([tau[:-1], tau[1:]])
    m = tau.size // 2
    return np.column_stack([tau[0:2 * m:2], tau[1:2 * m:2]])


def joint_histogram(log: EventLog, hspec: HistogramSpec = HistogramSpec(), overlapping: bool = True
                    ) -> JointDensitySurface:
    """Density of consecutive interval pairs; axis 0 is the earlier interval."""
    pairs = interval_pairs(log, hspec.channels, overlapping)
    if pairs.shape[0] < 1:
        raise InsufficientEventsError("need at least three selected events for a joint histogram")
    edges = hspec.edges
    counts, _, _ = np.histogram2d(pairs[:, 0], pairs[:, 1], bins=[edges, edges])
    counts = counts.astype(np.int64)
    n = pairs.shape[0]
    inside = counts.sum()
    c = hspec.centers
    return JointDensitySurface(c, c, counts / (n * hspec.bin_width ** 2), kind="estimated", counts=counts,
                               bin_width=hspec.bin_width, out_of_range=1.0 - inside / n, n_samples=int(n),
                               meta={"object": "w2", "overlapping": overlapping,
                                     "low_statistics": bool(n < LOW_STATISTICS)})


def lambda_estimate(joint: JointDensitySurface, marginal: DensityCurve, min_count: int = 100) -> LambdaSurface:
    """Empirical renewal departure with Poisson error bars.

    Bins whose joint count is below ``min_count`` are masked.  The standard
    error treats the joint and marginal bin counts as independent Poisson
    variables; their correlation is neglected.
    """
    if joint.counts is None or marginal.counts is None:
        raise GridMismatchError("lambda_estimate needs estimated (counted) inputs")
    if joint.bin_width != marginal.bin_width or joint.tau1.shape != marginal.grid.shape \
            or not np.allclose(joint.tau1, marginal.grid) or not np.allclose(joint.tau2, marginal.grid):
        raise GridMismatchError("joint and marginal histograms use different binning")
    cj = joint.counts.astype(float)
    cm = marginal.counts.astype(float)
    outer = np.outer(cm, cm)
    mask = (cj < min_count) | (outer == 0)
    lam = np.full(cj.shape, np.nan)
    err = np.full(cj.shape, np.nan)
    ok = ~mask
    norm = marginal.n_samples ** 2 / joint.n_samples
    ratio = cj[ok] * norm / outer[ok]
    lam[ok] = ratio - 1.0
    with np.errstate(divide="ignore"):
        rel = 1.0 / cj + 1.0 / cm[:, None] + 1.0 / cm[None, :]
    err[ok] = ratio * np.sqrt(rel[ok])
    return LambdaSurface(joint.tau1, joint.tau2, lam, mask, err, meta={"min_count": min_count})


@dataclass
class IntensityTrace:
    times: np.ndarray
    values: np.ndarray
    window: float


def intensity_trace(log: EventLog, window: float = DEFAULT_WINDOW, step: float | None = None,
                    channels="photon") -> IntensityTrace:
    """Windowed photon rate I(t) = [n(t + dt) - n(t)] / dt on a uniform grid of ``step``."""
    if not window > 0:
        raise ValueError("window must be > 0")
    step = window / 10 if step is None else step
    t = log.select(channels)
    start = float(log.meta.get("start_time", 0.0))
    end = log.total_time
    if t.size > 1 and window < np.min(np.diff(t)):
        warnings.warn("window shorter than the smallest inter-event spacing", RuntimeWarning, stacklevel=2)
    if end - start < window:
        return IntensityTrace(np.array([start]), np.zeros(1), window)
    grid = start + step * np.arange(int(np.floor((end - start - window) / step)) + 1)
    n = np.searchsorted(t, grid + window, side="right") - np.searchsorted(t, grid, side="right")
    return IntensityTrace(grid, n / window, window)


def intensity_modes(trace: IntensityTrace, prominence: float = 0.1) -> np.ndarray:
    """Locations of the modes of the value distribution of an intensity trace.

    Modes are the local maxima of a Gaussian kernel density estimate whose
    height exceeds ``prominence`` times the global maximum.  The bandwidth is
    at least the count lattice spacing 1/window, so the discreteness of
    windowed counts does not show up as spurious modes.
    """
    vals = trace.values
    if np.ptp(vals) == 0:
        return np.array([vals[0]])
    kde = scipy.stats.gaussian_kde(vals)
    floor = 1.0 / trace.window / np.std(vals)
    if kde.factor < floor:
        kde.set_bandwidth(floor)
    x = np.linspace(vals.min(), vals.max(), 2001)
    y = kde(x)
    peaks = np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])) + 1
    peaks = peaks[y[peaks] >= prominence * y.max()]
    return x[peaks]


def counting_distribution(logs, t: float, channels="photon") -> tuple[np.ndarray, np.ndarray]:
    """Empirical P_n(t) over independent logs: returns (n, P_n)."""
    logs = list(logs)
    if not logs:
        raise InsufficientEventsError("no logs given")
    counts = []
    for log in logs:
        start = float(log.meta.get("start_time", 0.0))
        if log.total_time - start < t:
            raise CoverageError(f"log covers {log.total_time - start:.6g} < t={t}")
        times = log.select(channels)
        counts.append(int(np.count_nonzero(times <= start + t)) - int(np.count_nonzero(times <= start)))
    counts = np.asarray(counts)
    P = np.bincount(counts) / counts.size
    return np.arange(P.size), P


def mean_jump_weights(log: EventLog) -> np.ndarray:
    """Time average of the post-photon configurational weights along a log."""
    mask = log.is_photon
    if not mask.any():
        raise InsufficientEventsError("log has no photon events")
    return log.weights[mask].mean(axis=0)


def channel_frequencies(log: EventLog, origin: int | None = None) -> dict:
    """Relative frequency of each channel label, optionally only for events leaving configuration ``origin``.

    The configuration before event i is read off the one-hot weights of event
    i - 1, so ``origin`` requires a log with definite configurations.
    """
    chans = log.channels
    if origin is not None:
        before = np.argmax(log.weights[:-1], axis=1)
        chans = chans[1:][before == origin]
    total = chans.size
    return {lab: (np.count_nonzero(chans == k) / total if total else float("nan"), int(np.count_nonzero(chans == k)))
            for k, lab in enumerate(log.labels)} | {"_n": total}


# --- comparison helpers ------------------------------------------------------


def stationary_cdf(spec, tau_max: float, *, channels="photon", points: int = 20001):
    """Analytic waiting-time CDF tabulated on [0, tau_max] and linearly interpolated."""
    gens = channel_generators(spec, channels)
    v = post_photon_state(gens).flat
    grid = np.linspace(0.0, tau_max, points)
    surv = np.einsum("j,tjk,k->t", trace_row(gens.spec.r_max), exp_stack(gens.D, grid), v).real
    cdf = 1.0 - surv

    def F(x):
        return np.interp(x, grid, cdf, right=1.0)

    return F


def ks_distance(samples, cdf) -> float:
    """One-sample Kolmogorov-Smirnov distance against a callable CDF."""
    return float(scipy.stats.kstest(np.asarray(samples), cdf).statistic)


def ks_two_sample(a, b) -> float:
    return float(scipy.stats.ks_2samp(np.asarray(a), np.asarray(b)).statistic)


def ks_against_stationary(log: EventLog, spec, channels="photon") -> float:
    tau = intervals(log, channels)
    if tau.size < 1:
        raise InsufficientEventsError("need at least two selected events")
    return ks_distance(tau, stationary_cdf(spec, float(tau.max()) * 1.0001 + 1e-9, channels=channels))
