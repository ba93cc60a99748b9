"""Ground-truth curves from closed forms and matrix exponentials.

Photon statistics are computed on the photon split of the generator: a
single channel J collecting every photon-emitting jump and D = L - J.  For
self-fluctuating models this keeps the configurational hopping inside the
no-photon evolution, which is what makes photon results independent of the
measurement scheme.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import mpmath
import numpy as np
import scipy.integrate
import scipy.linalg

from .errors import GridMismatchError, InputError, NumericalCorruptionError
from .model import (
    GeneratorSet,
    Kind,
    ModelSpec,
    build_generators,
    classical_stationary,
    fast_limit_params,
    photon_split,
)
from .supermath import VectorState, block_traces, stationary_null_state, trace_row

DEFAULT_TAU_MAX = 20.0
DEFAULT_POINTS = 400
DEGENERATE_ZETA = 1e-6
LAMBDA_FLOOR = 1e-12
CLOSED_FORM_TOL = 1e-8
TAIL_MASS = 1e-8


def default_grid(tau_max: float = DEFAULT_TAU_MAX, points: int = DEFAULT_POINTS) -> np.ndarray:
    return np.linspace(0.0, tau_max, points)


@dataclass
class DensityCurve:
    """Tabulated waiting-time density on a uniform grid.

    ``residual`` is |1 - trapezoid integral| over the grid.  Estimated
    curves also carry bin ``counts``, the ``bin_width`` and the fraction of
    intervals that fell outside the binning range.
    """

    grid: np.ndarray
    values: np.ndarray
    kind: str = "analytic"
    residual: float = float("nan")
    counts: np.ndarray | None = None
    bin_width: float | None = None
    out_of_range: float = 0.0
    n_samples: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.shape != self.values.shape:
            raise GridMismatchError(f"grid {self.grid.shape} and values {self.values.shape} differ")
        if np.isnan(self.residual):
            self.residual = abs(1.0 - integral(self))


@dataclass
class JointDensitySurface:
    """w(tau2, tau1) tabulated as ``values[i, j] = w(tau2[j], tau1[i])``.

    tau1 is the earlier of the two consecutive intervals.
    """

    tau1: np.ndarray
    tau2: np.ndarray
    values: np.ndarray
    kind: str = "analytic"
    counts: np.ndarray | None = None
    bin_width: float | None = None
    out_of_range: float = 0.0
    n_samples: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau1 = np.asarray(self.tau1, dtype=float)
        self.tau2 = np.asarray(self.tau2, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.tau1.size, self.tau2.size):
            raise GridMismatchError(f"surface shape {self.values.shape} does not match grids "
                                    f"({self.tau1.size}, {self.tau2.size})")

    def marginal(self) -> np.ndarray:
        """Integral over tau2 (trapezoid for analytic, bin sum for estimated)."""
        if self.kind == "estimated":
            return self.values.sum(axis=1) * self.bin_width
        return np.trapezoid(self.values, self.tau2, axis=1)


@dataclass
class LambdaSurface:
    """Renewal departure w2 / (w1 x w1) - 1 with a mask of unusable points."""

    tau1: np.ndarray
    tau2: np.ndarray
    values: np.ndarray
    mask: np.ndarray
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


@dataclass
class MasterCurves:
    grid: np.ndarray
    upper: np.ndarray
    populations: np.ndarray


def integral(curve: DensityCurve) -> float:
    if curve.kind == "estimated" and curve.bin_width:
        return float(curve.values.sum() * curve.bin_width)
    return float(np.trapezoid(curve.values, curve.grid))


def _ground_blocks(weights) -> VectorState:
    return VectorState.ground(np.asarray(weights, dtype=float))


def exp_stack(G: np.ndarray, taus) -> np.ndarray:
    """exp(G tau) for each tau, shape (len(taus), n, n)."""
    taus = np.asarray(taus, dtype=float)
    w, V = np.linalg.eig(G)
    if np.linalg.cond(V) < 1e8:
        Vinv = np.linalg.inv(V)
        return np.einsum("ik,tk,kj->tij", V, np.exp(np.outer(taus, w)), Vinv)
    return np.array([scipy.linalg.expm(G * t) for t in taus])


# --- master equation ---------------------------------------------------------


def master_evolve(gens: GeneratorSet, v0, t_grid) -> MasterCurves:
    """Excited population of the system and configurational populations under L."""
    v0 = v0 if isinstance(v0, VectorState) else VectorState(np.asarray(v0))
    problems = v0.physical_violations()
    if problems:
        raise InputError("initial state is not physical: " + "; ".join(problems))
    t_grid = np.asarray(t_grid, dtype=float)
    states = gens.L_propagator.apply_many(t_grid, v0.flat)
    pops = (states[:, 0::4] + states[:, 3::4]).real
    totals = pops.sum(axis=1)
    if np.max(np.abs(totals - 1.0)) > 1e-10:
        raise NumericalCorruptionError(f"trace drift {np.max(np.abs(totals - 1)):.3e} in master evolution")
    return MasterCurves(t_grid, states[:, 0::4].real.sum(axis=1), pops)


# --- single configuration ----------------------------------------------------


def _markov_spec(gamma, rabi, detuning) -> ModelSpec:
    return ModelSpec(kind=Kind.SELF_FLUCTUATING, r_max=1, rabi=[rabi], detuning=[detuning], decay=[gamma],
                     config_rates=[[0.0]])


def markov_density_numeric(gamma: float, rabi: float, detuning: float, tau, *, digits: int | None = None
                           ) -> np.ndarray:
    """Tr[J e^{D tau} |-><-|] on the 4x4 single-configuration generator.

    With ``digits`` the state is propagated in ``digits``-digit arithmetic
    between sorted sample times.  Double precision loses relative accuracy
    where the density nearly vanishes (it is a small difference of terms of
    order exp(-gamma tau / 2)); the extended path does not.
    """
    gens = build_generators(_markov_spec(gamma, rabi, detuning))
    row = trace_row(1) @ gens.J_total
    v0 = _ground_blocks([1.0]).flat
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if digits is None:
        vals = np.einsum("j,tjk,k->t", row, exp_stack(gens.D, tau), v0)
        return vals.real
    with mpmath.workdps(digits):
        D = mpmath.matrix(gens.D.tolist())
        r = mpmath.matrix([row.tolist()])
        v = mpmath.matrix(v0.tolist())
        steps = {}
        out = np.empty(tau.size)
        t_prev = 0.0
        for k in np.argsort(tau, kind="stable"):
            h = float(tau[k]) - t_prev
            if h > 0:
                if h not in steps:
                    steps[h] = mpmath.expm(D * mpmath.mpf(h))
                v = steps[h] * v
                t_prev = float(tau[k])
            out[k] = float(mpmath.re((r * v)[0]))
    return out


def markov_waiting_density(gamma: float, rabi: float, detuning: float, tau) -> np.ndarray:
    """Closed-form waiting-time density of a driven two-level emitter.

    w(tau) = (2 g W^2 / zeta) exp(-g tau / 2) [cosh(xi+ tau) - cosh(xi- tau)],
    evaluated in complex arithmetic so that imaginary xi turns cosh into cos.
    Near critical damping (zeta -> 0) the matrix path is used instead.
    """
    if gamma <= 0:
        raise InputError(f"decay must be > 0, got {gamma}")
    if rabi < 0:
        raise InputError(f"Rabi frequency must be >= 0, got {rabi}")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise InputError("tau must be >= 0")
    if rabi == 0:
        warnings.warn("Rabi frequency is zero: the emitter is dark and never emits", RuntimeWarning, stacklevel=2)
        return np.zeros_like(tau)
    s = gamma ** 2 + 4 * (rabi ** 2 + detuning ** 2)
    zeta = np.sqrt(complex(s ** 2 - 16 * gamma ** 2 * rabi ** 2))
    if abs(zeta) < DEGENERATE_ZETA * s:
        return markov_density_numeric(gamma, rabi, detuning, tau).reshape(tau.shape)
    a = gamma ** 2 - 4 * (rabi ** 2 + detuning ** 2)
    xi_p = np.sqrt(a + zeta) / (2 * np.sqrt(2))
    xi_m = np.sqrt(a - zeta) / (2 * np.sqrt(2))
    # e^{-g t/2} cosh(xi t) as a sum of exponentials that stay bounded at large t
    def damped_cosh(xi):
        return 0.5 * (np.exp((xi - gamma / 2) * tau) + np.exp((-xi - gamma / 2) * tau))

    w = (2 * gamma * rabi ** 2 / zeta) * (damped_cosh(xi_p) - damped_cosh(xi_m))
    if np.any(np.abs(w.imag) >= 1e-9 * np.abs(w.real) + 1e-12):
        raise NumericalCorruptionError("closed-form waiting density has a non-negligible imaginary part")
    return w.real


def markov_intensity(gamma: float, rabi: float, detuning: float) -> float:
    """Stationary photon rate g W^2 / (g^2 + 2 W^2 + 4 d^2)."""
    return gamma * rabi ** 2 / (gamma ** 2 + 2 * rabi ** 2 + 4 * detuning ** 2)


# --- stationary quantities ---------------------------------------------------


def _photon_gens(spec_or_gens) -> GeneratorSet:
    gens = spec_or_gens if isinstance(spec_or_gens, GeneratorSet) else build_generators(spec_or_gens)
    return photon_split(gens)


def _spec_of(spec_or_gens) -> ModelSpec:
    return spec_or_gens.spec if isinstance(spec_or_gens, GeneratorSet) else spec_or_gens


def stationary_state(spec) -> VectorState:
    return stationary_null_state(_photon_gens(spec).L)


def stationary_intensity(spec) -> float:
    """Photon rate in the stationary state."""
    spec = _spec_of(spec)
    rho = stationary_state(spec)
    return float(spec.effective_decay @ rho.upper)


@dataclass
class JumpWeights:
    """Post-photon configurational weights; q factors only for light-assisted models.

    ``q_cross[R2, R]`` is the probability that a photon from configuration R
    leaves the emitter in R2 != R.
    """

    p: np.ndarray
    q_self: np.ndarray | None = None
    q_cross: np.ndarray | None = None


def post_photon_state(gens: GeneratorSet) -> VectorState:
    rho = stationary_null_state(gens.L)
    u = gens.J_total @ rho.flat
    return VectorState((u / (trace_row(gens.spec.r_max) @ u)).reshape(-1, 2, 2))


def stationary_jump_weights(spec) -> JumpWeights:
    """Configurational populations right after a photon in the stationary regime."""
    spec = _spec_of(spec)
    gens = _photon_gens(spec)
    p = block_traces(post_photon_state(gens))
    if abs(p.sum() - 1) > 1e-10:
        raise NumericalCorruptionError("jump weights do not sum to one")
    if spec.kind is not Kind.LIGHT_ASSISTED:
        return JumpWeights(p)
    gt = spec.gamma_tilde
    q_self = spec.decay / gt
    q_cross = spec.config_rates / gt[None, :]
    return JumpWeights(p, q_self, q_cross)


# --- stationary waiting-time distributions ----------------------------------


def _block_markov(spec: ModelSpec, taus) -> np.ndarray:
    """w_R(tau) for each configuration with its effective decay, shape (r_max, len)."""
    g = spec.effective_decay
    return np.array([markov_waiting_density(g[r], spec.rabi[r], spec.detuning[r], taus) for r in range(spec.r_max)])


def _assert_close(a, b, what):
    scale = max(1.0, float(np.max(np.abs(b))))
    err = float(np.max(np.abs(a - b)))
    if err > CLOSED_FORM_TOL * scale:
        raise NumericalCorruptionError(f"{what}: matrix and closed-form paths differ by {err:.3e}")


def channel_generators(spec, channels: str) -> GeneratorSet:
    if channels == "photon":
        return _photon_gens(spec)
    if channels == "all":
        return spec if isinstance(spec, GeneratorSet) else build_generators(spec)
    raise ValueError(f"channels must be 'photon' or 'all', got {channels!r}")


def w1_light_closed_form(spec: ModelSpec, taus) -> np.ndarray:
    """sum_R w~_R(tau) p_R for a light-assisted model."""
    return stationary_jump_weights(spec).p @ _block_markov(spec, taus)


def w2_light_closed_form(spec: ModelSpec, tau1, tau2) -> np.ndarray:
    """Light-assisted two-interval density, indexed ``[i(tau1), j(tau2)]``."""
    jw = stationary_jump_weights(spec)
    w_1 = _block_markov(spec, tau1)
    w_2 = _block_markov(spec, tau2)
    # after a photon from R the emitter restarts in R2 with probability Q[R2, R]
    Q = jw.q_cross + np.diag(jw.q_self)
    follow = Q.T @ w_2  # follow[R, j] = sum_R2 Q[R2, R] w_R2(tau2_j)
    return np.einsum("r,ri,rj->ij", jw.p, w_1, follow)


def w1_stationary(spec, tau_grid=None, *, channels: str = "photon") -> DensityCurve:
    """First-order stationary waiting-time density Tr[J e^{D tau} M rho_inf]."""
    tau_grid = default_grid() if tau_grid is None else np.asarray(tau_grid, dtype=float)
    gens = channel_generators(spec, channels)
    s = gens.spec
    v = post_photon_state(gens)
    row = trace_row(s.r_max) @ gens.J_total
    vals = np.einsum("j,tjk,k->t", row, exp_stack(gens.D, tau_grid), v.flat).real
    if s.kind is Kind.LIGHT_ASSISTED and channels == "photon":
        _assert_close(vals, w1_light_closed_form(s, tau_grid), "w1")
    return DensityCurve(tau_grid, vals, meta={"object": "w1", "channels": channels})


def w2_stationary(spec, tau1_grid=None, tau2_grid=None, *, channels: str = "photon") -> JointDensitySurface:
    """Joint density of two consecutive intervals, Tr[J e^{D t2} J e^{D t1} M rho_inf]."""
    tau1 = default_grid() if tau1_grid is None else np.asarray(tau1_grid, dtype=float)
    tau2 = tau1 if tau2_grid is None else np.asarray(tau2_grid, dtype=float)
    gens = channel_generators(spec, channels)
    s = gens.spec
    v = post_photon_state(gens).flat
    J = gens.J_total
    row = trace_row(s.r_max) @ J
    first = np.einsum("ij,tjk,k->ti", J, exp_stack(gens.D, tau1), v)
    second = np.einsum("j,tjk->tk", row, exp_stack(gens.D, tau2))
    vals = (first @ second.T).real
    if s.kind is Kind.LIGHT_ASSISTED and channels == "photon":
        _assert_close(vals, w2_light_closed_form(s, tau1, tau2), "w2")
    return JointDensitySurface(tau1, tau2, vals, meta={"object": "w2", "channels": channels})


def survival_tail(spec, tau: float, *, channels: str = "photon") -> float:
    """Probability that the next interval exceeds ``tau`` in the stationary regime."""
    gens = channel_generators(spec, channels)
    v = post_photon_state(gens)
    return float((trace_row(gens.spec.r_max) @ scipy.linalg.expm(gens.D * tau) @ v.flat).real)


def w1_cdf(spec, tau, *, channels: str = "photon") -> np.ndarray:
    """Cumulative distribution 1 - P0(tau) of the stationary waiting time."""
    gens = channel_generators(spec, channels)
    v = post_photon_state(gens).flat
    t = trace_row(gens.spec.r_max)
    mats = exp_stack(gens.D, np.atleast_1d(tau))
    return 1.0 - np.einsum("j,tjk,k->t", t, mats, v).real


def normalization_support(spec, *, channels: str = "photon", tail: float = TAIL_MASS) -> float:
    """Smallest doubling of 20 whose stationary tail mass is below ``tail``."""
    T = DEFAULT_TAU_MAX
    while survival_tail(spec, T, channels=channels) > tail:
        T *= 2
        if T > 1e7:
            raise NumericalCorruptionError("waiting-time tail does not decay")
    return T


def w1_normalization(spec, *, channels: str = "photon", points_per_unit: int = 50) -> float:
    """Trapezoid integral of w1 over a support whose tail mass is below 1e-8."""
    T = normalization_support(spec, channels=channels)
    grid = np.linspace(0, T, int(T * points_per_unit) + 1)
    return integral(w1_stationary(spec, grid, channels=channels))


def marginal_residual(spec, tau1_grid=None, *, step: float = 0.01, channels: str = "photon") -> float:
    """max |int w2(t2, t1) dt2 - w1(t1)| with Simpson quadrature over a support of tail mass < 1e-8."""
    tau1 = default_grid() if tau1_grid is None else np.asarray(tau1_grid, dtype=float)
    T = normalization_support(spec, channels=channels)
    tau2 = np.linspace(0.0, T, int(round(T / step)) + 1)
    w2 = w2_stationary(spec, tau1, tau2, channels=channels)
    marg = scipy.integrate.simpson(w2.values, x=tau2, axis=1)
    return float(np.max(np.abs(marg - w1_stationary(spec, tau1, channels=channels).values)))


def symmetry_residual(surface: JointDensitySurface) -> float:
    if surface.tau1.shape != surface.tau2.shape or not np.array_equal(surface.tau1, surface.tau2):
        raise GridMismatchError("symmetry needs identical tau1 and tau2 grids")
    return float(np.max(np.abs(surface.values - surface.values.T)))


# --- renewal departure -------------------------------------------------------


def renewal_departure(w1: DensityCurve, w2: JointDensitySurface, floor: float = LAMBDA_FLOOR) -> LambdaSurface:
    """Lambda = w2(t2, t1) / (w1(t2) w1(t1)) - 1, masked where w1 < floor."""
    if w1.grid.shape != w2.tau1.shape or not np.allclose(w1.grid, w2.tau1, rtol=1e-12, atol=1e-12) \
            or w1.grid.shape != w2.tau2.shape or not np.allclose(w1.grid, w2.tau2, rtol=1e-12, atol=1e-12):
        raise GridMismatchError("w1 and w2 must be tabulated on the same grid")
    ok = w1.values >= floor
    mask = ~(ok[:, None] & ok[None, :])
    denom = np.outer(w1.values, w1.values)
    lam = np.full(w2.values.shape, np.nan)
    lam[~mask] = w2.values[~mask] / denom[~mask] - 1.0
    return LambdaSurface(w2.tau1, w2.tau2, lam, mask)


# --- stochastic waiting densities -------------------------------------------


def w_stochastic(spec, p_post, tau_grid=None) -> DensityCurve:
    """Waiting-time density after a photon that left configurational weights ``p_post``."""
    s = _spec_of(spec)
    p_post = np.asarray(p_post, dtype=float)
    if p_post.shape != (s.r_max,):
        raise InputError(f"need {s.r_max} weights, got {p_post.shape}")
    if np.any(p_post < -1e-12) or abs(p_post.sum() - 1) > 1e-9:
        raise InputError("weights must be non-negative and sum to one")
    tau_grid = default_grid() if tau_grid is None else np.asarray(tau_grid, dtype=float)
    gens = _photon_gens(spec)
    row = trace_row(s.r_max) @ gens.J_total
    vals = np.einsum("j,tjk,k->t", row, exp_stack(gens.D, tau_grid), _ground_blocks(p_post).flat).real
    if s.kind is Kind.LIGHT_ASSISTED:
        _assert_close(vals, p_post @ _block_markov(s, tau_grid), "w_stochastic")
    return DensityCurve(tau_grid, vals, meta={"object": "wst", "p": p_post.tolist()})


# --- limits --------------------------------------------------------------------


@dataclass
class SlowLimit:
    w1: DensityCurve
    w2: JointDensitySurface
    p: np.ndarray
    intensities: np.ndarray
    populations: np.ndarray
    ratio: float  # max configurational out-rate over min configuration intensity


def slow_limit_approximations(spec: ModelSpec, tau1_grid=None, tau2_grid=None) -> SlowLimit:
    """Slow-fluctuation approximations built from per-configuration renewal statistics.

    p_R ~ I_R P_R / sum I P, w1 ~ sum_R w_R p_R, w2 ~ sum_R w_R(t2) w_R(t1) p_R.
    ``ratio`` compares the fastest configurational rate with the slowest
    intensity; the approximation is meant for ratio << 1.
    """
    spec = _spec_of(spec)
    if spec.kind is not Kind.SELF_FLUCTUATING:
        raise ValueError("slow-limit approximations are defined for SelfFluctuating models only")
    tau1 = default_grid() if tau1_grid is None else np.asarray(tau1_grid, dtype=float)
    tau2 = tau1 if tau2_grid is None else np.asarray(tau2_grid, dtype=float)
    P = classical_stationary(spec)
    I = np.array([markov_intensity(spec.decay[r], spec.rabi[r], spec.detuning[r]) for r in range(spec.r_max)])
    p = I * P / (I @ P)
    w_1 = _block_markov(spec, tau1)
    w_2 = _block_markov(spec, tau2)
    w1 = DensityCurve(tau1, p @ w_1, meta={"object": "w1", "approximation": "slow"})
    w2 = JointDensitySurface(tau1, tau2, np.einsum("r,ri,rj->ij", p, w_1, w_2),
                             meta={"object": "w2", "approximation": "slow"})
    with np.errstate(divide="ignore"):
        ratio = float(np.max(spec.phi_tilde) / np.min(I)) if np.min(I) > 0 else float("inf")
    return SlowLimit(w1, w2, p, I, P, ratio)


def mode_relative_error(exact: DensityCurve, approx: DensityCurve) -> float:
    """|approx - exact| / exact at the mode of the exact curve."""
    k = int(np.argmax(exact.values))
    return float(abs(approx.values[k] - exact.values[k]) / exact.values[k])


def fast_limit_density(spec: ModelSpec, tau_grid=None) -> DensityCurve:
    """Renewal density with population-averaged parameters."""
    tau_grid = default_grid() if tau_grid is None else np.asarray(tau_grid, dtype=float)
    g, W, d = fast_limit_params(spec)
    return DensityCurve(tau_grid, markov_waiting_density(g, W, d, tau_grid), meta={"object": "w1",
                                                                                   "approximation": "fast"})


def l1_distance(a: DensityCurve, b: DensityCurve) -> float:
    if a.grid.shape != b.grid.shape or not np.allclose(a.grid, b.grid):
        raise GridMismatchError("curves must share a grid")
    return float(np.trapezoid(np.abs(a.values - b.values), a.grid))
