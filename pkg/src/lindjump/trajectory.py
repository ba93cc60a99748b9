"""Quantum-jump unraveling of the vectorial master equation.

Between events the conditional state follows the normalized no-jump
propagator exp(D t); at an event the channel mu is drawn with probability
F_mu / sum F and the state jumps to J_mu v / F_mu.  Two samplers are provided:

* ``coarse`` -- invert the survival probability P0(tau) = r for each waiting
  time (bracket by doubling, then bisection), the default;
* ``fine``   -- fixed step dt, an event fires with probability dt * sum F.

Random numbers come from ``numpy.random.Generator(PCG64)`` seeded with
``SeedSequence(seed, spawn_key=(index,))``, so trajectory ``index`` of an
ensemble with master seed ``seed`` is reproducible on its own.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels as K
from .errors import (
    DarkStateError,
    InvalidChannelError,
    NoEventError,
    NumericalCorruptionError,
    StepSizeError,
    UnderflowError,
)
from .model import GeneratorSet, ModelSpec, Scheme, build_generators
from .supermath import (
    VectorState,
    _as_flat,
    block_traces,
    devectorize,
    stationary_null_state,
    trace_functional,
    trace_row,
)

ALGORITHMS = ("coarse", "fine")
TAU_CAP = 1e4
DEFAULT_TRACE_DT = 0.05
DEFAULT_FINE_DT = 1e-3
DEFAULT_BURN_IN = 100
RATE_TOL = 1e-12


def make_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Independent stream ``index`` derived from ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


@dataclass
class EventLog:
    """Recorded events of one trajectory.

    ``channels`` holds integer codes into ``labels``; ``weights[i]`` are the
    post-jump configurational populations after event ``i``.
    """

    times: np.ndarray
    channels: np.ndarray
    weights: np.ndarray
    labels: tuple
    photon_labels: frozenset
    meta: dict = field(default_factory=dict)

    @property
    def n_events(self) -> int:
        return int(self.times.size)

    @property
    def channel_labels(self) -> list[str]:
        return [self.labels[c] for c in self.channels]

    @property
    def is_photon(self) -> np.ndarray:
        mask = np.array([lab in self.photon_labels for lab in self.labels], dtype=bool)
        return mask[self.channels] if self.channels.size else np.zeros(0, dtype=bool)

    def select(self, labels=None) -> np.ndarray:
        """Event times restricted to ``labels`` ("photon", "all", or an iterable of labels)."""
        if labels is None or labels == "photon":
            return self.times[self.is_photon]
        if labels == "all":
            return self.times
        wanted = np.array([lab in set(labels) for lab in self.labels], dtype=bool)
        return self.times[wanted[self.channels]] if self.channels.size else self.times[:0]

    @property
    def total_time(self) -> float:
        return float(self.meta.get("total_time", self.times[-1] if self.times.size else 0.0))


@dataclass
class Traces:
    """Conditional observables sampled on a uniform grid."""

    grid: np.ndarray
    upper: np.ndarray
    populations: np.ndarray


# --- single-step operations -------------------------------------------------


def _rate(J, v) -> float:
    value = trace_functional(J @ _as_flat(v))
    if value < -RATE_TOL:
        raise NumericalCorruptionError(f"negative event rate {value:.3e}")
    return max(value, 0.0)


def event_rate(gens: GeneratorSet, label: str, v) -> float:
    """F_mu[v] = Tr_S[(1| J_mu v)], clipped at zero within 1e-12."""
    try:
        J = gens.channels[label]
    except KeyError:
        raise InvalidChannelError(f"unknown channel {label!r}") from None
    return _rate(J, v)


def channel_rates(gens: GeneratorSet, v) -> np.ndarray:
    return np.array([_rate(J, v) for J in gens.channels.values()])


def conditional_step(gens: GeneratorSet, v, tau: float) -> VectorState:
    """Normalized no-event evolution exp(D tau) v / Tr[...]."""
    flat = _as_flat(v)
    u = gens.D_propagator.apply(tau, flat)
    norm = trace_functional(u)
    if norm <= 1e-300:
        raise UnderflowError(f"conditional norm underflow at tau={tau}; use a shorter step")
    return devectorize(u / norm, gens.spec.r_max)


def survival_probability(gens: GeneratorSet, v, tau: float) -> float:
    """Probability of no event within ``tau`` of the (normalized) state ``v``."""
    p = trace_functional(gens.D_propagator.apply(tau, _as_flat(v)))
    if p > 1 + 1e-9 or p < -1e-12:
        raise NumericalCorruptionError(f"survival probability {p!r} outside [0, 1]")
    return min(max(p, 0.0), 1.0)


def survival_curve(gens: GeneratorSet, v, taus) -> np.ndarray:
    t = trace_row(gens.spec.r_max)
    return gens.D_propagator.functional_many(t, taus, _as_flat(v)).real


def invert_survival(p0, r: float, tau_cap: float = TAU_CAP) -> tuple[float, float]:
    """Solve ``p0(tau) = r`` by doubling from 0.1 then bisection."""
    lo, hi = 0.0, K.BRACKET_START
    p_hi = p0(hi)
    while p_hi >= r:
        lo, hi = hi, 2.0 * hi
        if hi >= tau_cap:
            hi = tau_cap
            p_hi = p0(hi)
            break
        p_hi = p0(hi)
    if p_hi > r:
        raise DarkStateError(
            f"no event before tau_cap={tau_cap:g}: survival {p_hi:.6g} > r={r:.6g}", residual_survival=p_hi
        )
    tau = 0.5 * (lo + hi)
    p = p0(tau)
    while hi - lo > K.BISECT_TAU_TOL:
        tau = 0.5 * (lo + hi)
        p = p0(tau)
        if abs(p - r) < K.BISECT_P_TOL:
            break
        if p > r:
            lo = tau
        else:
            hi = tau
        tau = 0.5 * (lo + hi)
    return tau, p


def sample_waiting_time(gens: GeneratorSet, v_post, rng, tau_cap: float = TAU_CAP) -> tuple[float, float]:
    """Draw the time to the next event from the post-event state ``v_post``.

    Returns ``(tau, P0(tau))``.
    """
    r = 1.0 - rng.random()
    prop = gens.D_propagator
    flat = _as_flat(v_post)
    if prop.spectral:
        coef = (trace_row(gens.spec.r_max) @ prop.eigvecs) * (prop.eigvecs_inv @ flat)
        lam = prop.eigvals

        def p0(tau):
            return float((coef * np.exp(lam * tau)).sum().real)
    else:
        def p0(tau):
            return trace_functional(prop.apply(tau, flat))
    return invert_survival(p0, r, tau_cap)


def select_channel(gens: GeneratorSet, v, rng) -> str:
    """Draw a channel label with probability F_mu / sum F."""
    rates = channel_rates(gens, v)
    total = rates.sum()
    if total <= 0:
        raise NoEventError("all channel rates vanish")
    u = rng.random() * total
    acc = 0.0
    labels = gens.labels
    chosen = None
    for label, rate in zip(labels, rates):
        if rate > 0:
            chosen = label
            acc += rate
            if u < acc:
                break
    return chosen


def transition_probabilities(gens: GeneratorSet, v) -> dict:
    rates = channel_rates(gens, v)
    total = rates.sum()
    if total <= 0:
        raise NoEventError("all channel rates vanish")
    return dict(zip(gens.labels, rates / total))


def apply_jump(gens: GeneratorSet, label: str, v) -> tuple[VectorState, np.ndarray]:
    """Post-measurement state J_mu v / F_mu and its block populations."""
    try:
        J = gens.channels[label]
    except KeyError:
        raise InvalidChannelError(f"unknown channel {label!r}") from None
    u = J @ _as_flat(v)
    rate = trace_functional(u)
    if rate <= 0:
        raise InvalidChannelError(f"channel {label!r} has zero weight on this state")
    post = devectorize(u / rate, gens.spec.r_max)
    return post, block_traces(post)


def step_fine(gens: GeneratorSet, v, dt: float, rng) -> tuple[VectorState, str | None]:
    """One step of the fixed-step sampler."""
    rates = channel_rates(gens, v)
    dp = dt * rates.sum()
    if dp >= 0.1:
        raise StepSizeError(f"dt * total rate = {dp:.3g} >= 0.1; reduce dt")
    if rng.random() < dp:
        label = select_channel(gens, v, rng)
        return apply_jump(gens, label, v)[0], label
    flat = _as_flat(v)
    w = flat + dt * (gens.D @ flat)
    return devectorize(w / trace_functional(w), gens.spec.r_max), None


# --- trajectories -----------------------------------------------------------


def stationary_post_jump(gens: GeneratorSet) -> VectorState:
    """M|rho_inf): the state right after an arbitrary event in the stationary regime."""
    rho_inf = stationary_null_state(gens.L)
    u = gens.J_total @ rho_inf.flat
    return devectorize(u / trace_functional(u), gens.spec.r_max)


def _one_hot_sample(v: VectorState, rng) -> VectorState:
    """Draw a definite configuration from the block populations of ``v``."""
    pops = np.clip(v.populations, 0.0, None)
    r = int(np.searchsorted(np.cumsum(pops) / pops.sum(), rng.random(), side="right"))
    r = min(r, v.r_max - 1)
    blocks = np.zeros_like(v.blocks)
    blocks[r] = v.blocks[r] / pops[r]
    return VectorState(blocks)


def _resolve_init(gens: GeneratorSet, init, rng) -> VectorState:
    if isinstance(init, VectorState):
        v = init
    elif isinstance(init, str) and init in ("stationary", "stationary-post-jump"):
        v = stationary_post_jump(gens)
    else:
        v = VectorState(np.asarray(init))
    if gens.spec.scheme is Scheme.PHOTON_AND_CONFIG and np.count_nonzero(np.abs(v.populations) > 0) > 1:
        v = _one_hot_sample(v, rng)
    return v


def _as_gens(spec_or_gens) -> GeneratorSet:
    if isinstance(spec_or_gens, GeneratorSet):
        return spec_or_gens
    return build_generators(spec_or_gens)


def dyadic_table(gens: GeneratorSet, tau_cap: float = TAU_CAP) -> np.ndarray:
    """Stack of exp(D * 0.1 * 2**k) for the levels used by the coarse kernel."""
    cache = gens.__dict__.setdefault("_dyadic_tables", {})
    if tau_cap not in cache:
        steps = K.BRACKET_START * 2.0 ** K.dyadic_levels(tau_cap).astype(float)
        cache[tau_cap] = np.ascontiguousarray(
            np.stack([scipy.linalg.expm(gens.D * s) for s in steps]).astype(np.complex128))
    return cache[tau_cap]


def _grow(arr, size):
    out = np.zeros((size,) + arr.shape[1:], dtype=arr.dtype)
    out[:arr.shape[0]] = arr
    return out


def _n_grid(t_end: float, trace_dt: float) -> int:
    return int(np.floor(t_end / trace_dt + 1e-9)) + 1


def simulate_trajectory(
    spec,
    seed: int,
    *,
    max_events: int | None = None,
    max_time: float | None = None,
    algorithm: str = "coarse",
    dt: float = DEFAULT_FINE_DT,
    init="stationary",
    trace_dt: float | None = DEFAULT_TRACE_DT,
    burn_in: int = 0,
    index: int = 0,
    tau_cap: float = TAU_CAP,
):
    """Simulate one measurement record.

    ``init`` is a :class:`VectorState` or ``"stationary"`` (the post-event
    stationary state).  ``burn_in`` extra events are simulated first and
    dropped from the log.  Returns ``(EventLog, Traces | None)``.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    if max_events is None and max_time is None:
        raise ValueError("need a stop criterion: max_events and/or max_time")
    if (max_events is not None and max_events < 0) or (max_time is not None and max_time <= 0):
        raise ValueError("stop criterion must be positive")
    gens = _as_gens(spec)
    rng = make_rng(seed, index)
    v0 = _resolve_init(gens, init, rng)
    labels = tuple(gens.labels)
    Js = np.ascontiguousarray(np.stack([gens.channels[k] for k in labels]))
    n = 4 * gens.spec.r_max
    r_max = gens.spec.r_max
    limit = -1 if max_events is None else int(max_events) + int(burn_in)
    t_limit = -1.0 if max_time is None else float(max_time)
    record = trace_dt is not None and trace_dt > 0

    cap = limit if limit >= 0 else 4096
    cap = max(cap, 1)
    times = np.zeros(cap)
    chans = np.zeros(cap, dtype=np.int64)
    weights = np.zeros((cap, r_max))
    v = np.array(v0.flat, dtype=np.complex128)
    t = 0.0
    e = 0
    dark_residual = None

    if algorithm == "coarse":
        store = record
        states = np.zeros((cap if store else 1, n), dtype=np.complex128)
        E = dyadic_table(gens, tau_cap)
        while True:
            status, t, e, resid = K.coarse_run(E, Js, v, t, rng, times, chans, weights, states,
                                               store, e, limit, t_limit, tau_cap)
            if status == K.EVENTS_FULL:
                cap *= 2
                times, chans, weights = _grow(times, cap), _grow(chans, cap), _grow(weights, cap)
                if store:
                    states = _grow(states, cap)
                continue
            break
        if status == K.DARK:
            dark_residual = resid
        elif status == K.NEGATIVE_RATE:
            raise NumericalCorruptionError(f"negative event rate {resid:.3e}")
        traces = None
        if record:
            ng = _n_grid(t, trace_dt)
            grid = np.arange(ng) * trace_dt
            upper = np.zeros(ng)
            pops = np.zeros((ng, r_max))
            K.dyadic_traces(E, np.array(v0.flat, dtype=np.complex128), times[:e], states[:e], grid, upper, pops)
            traces = Traces(grid, upper, pops)
    else:
        gcap = _n_grid(t_limit, trace_dt) if (record and t_limit > 0) else (4096 if record else 1)
        upper = np.zeros(gcap)
        pops = np.zeros((gcap, r_max))
        g = 0
        last = 0.0
        D = np.ascontiguousarray(gens.D)
        while True:
            status, t, e, g, aux = K.fine_run(D, Js, v, t, float(dt), rng, float(trace_dt) if record else 0.0, g,
                                              times, chans, weights, e, upper, pops, limit, t_limit, tau_cap,
                                              last)
            if status == K.EVENTS_FULL:
                last = aux
                cap *= 2
                times, chans, weights = _grow(times, cap), _grow(chans, cap), _grow(weights, cap)
                continue
            if status == K.GRID_FULL:
                last = aux
                gcap *= 2
                upper, pops = _grow(upper, gcap), _grow(pops, gcap)
                continue
            break
        if status == K.STEP_TOO_LARGE:
            raise StepSizeError(f"dt * total rate = {aux:.3g} >= 0.1 at t={t:.6g}; reduce dt")
        if status == K.NEGATIVE_RATE:
            raise NumericalCorruptionError("negative event rate in fine sampler")
        if status == K.DARK:
            dark_residual = float(trace_functional(v))
        traces = Traces(np.arange(g) * trace_dt, upper[:g], pops[:g]) if record else None

    keep = slice(min(burn_in, e), e)
    log = EventLog(
        times=times[keep].copy(),
        channels=chans[keep].copy(),
        weights=weights[keep].copy(),
        labels=labels,
        photon_labels=gens.photon_channels,
        meta={
            "seed": int(seed),
            "index": int(index),
            "algorithm": algorithm if algorithm == "coarse" else f"fine(dt={dt:g})",
            "spec_hash": gens.spec.digest(),
            "total_time": float(t),
            "n_events": int(e - keep.start),
            "burn_in": int(burn_in),
            "start_time": float(times[keep.start - 1]) if keep.start > 0 else 0.0,
            "kind": gens.spec.kind.value,
            "r_max": r_max,
        },
    )
    if dark_residual is not None:
        log.meta["dark_state"] = True
        raise DarkStateError(
            f"dark state after {e} events at t={t:.6g}: residual survival {dark_residual:.6g}",
            residual_survival=dark_residual,
            partial_log=log,
        )
    return log, traces


@dataclass
class EnsembleAverage:
    grid: np.ndarray
    upper_mean: np.ndarray
    upper_se: np.ndarray
    populations_mean: np.ndarray
    populations_se: np.ndarray
    n_traj: int


def _mean_se(stack):
    mean = stack.mean(axis=0)
    if stack.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, stack.std(axis=0, ddof=1) / np.sqrt(stack.shape[0])


def ensemble_average(spec, n_traj: int, t_grid, master_seed: int, v0=None, *, algorithm: str = "coarse",
                     dt: float = DEFAULT_FINE_DT, jobs: int | None = 1) -> EnsembleAverage:
    """Mean and standard error of the conditional traces over ``n_traj`` trajectories.

    ``t_grid`` must be uniform and start at 0.  Trajectory ``i`` uses stream
    ``(master_seed, i)``; results are assembled in index order, so they do not
    depend on ``jobs``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    gens = _as_gens(spec)
    t_grid = np.asarray(t_grid, dtype=float)
    step = t_grid[1] - t_grid[0] if t_grid.size > 1 else 1.0
    if t_grid[0] != 0 or (t_grid.size > 1 and not np.allclose(np.diff(t_grid), step, rtol=1e-9, atol=1e-12)):
        raise ValueError("t_grid must be uniform and start at 0")
    if v0 is None:
        v0 = VectorState.ground(np.full(gens.spec.r_max, 1.0 / gens.spec.r_max))
    t_end = float(t_grid[-1]) if t_grid.size > 1 else step
    ng = t_grid.size

    def run(i):
        _, tr = simulate_trajectory(gens, master_seed, max_time=t_end, algorithm=algorithm, dt=dt, init=v0,
                                    trace_dt=step, index=i)
        up = np.full(ng, tr.upper[-1])
        pp = np.repeat(tr.populations[-1:], ng, axis=0)
        m = min(ng, tr.grid.size)
        up[:m] = tr.upper[:m]
        pp[:m] = tr.populations[:m]
        return up, pp

    jobs = jobs or os.cpu_count() or 1
    if jobs == 1:
        results = [run(i) for i in range(n_traj)]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, range(n_traj)))
    uppers = np.array([r[0] for r in results])
    popss = np.array([r[1] for r in results])
    um, us = _mean_se(uppers)
    pm, ps = _mean_se(popss)
    return EnsembleAverage(t_grid, um, us, pm, ps, n_traj)
