"""Dense linear algebra on the system (x) configuration space.

A vector state is an ordered collection of ``r_max`` complex 2x2 matrices,
one per configurational state.  The flat layout used by every superoperator
is block-major: configuration index outer, then the 2x2 block in row-major
order over the basis ``(|+>, |->)``, i.e. element order ``(++, +-, -+, --)``.
Flat index of element ``(i, j)`` of block ``R`` is ``4*R + 2*i + j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import DimensionError, InputError, NumericalCorruptionError, StationaryAmbiguityError

# Basis index of the excited and ground level inside a 2x2 block.
PLUS, MINUS = 0, 1

HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = 1e-10
TRACE_IMAG_DISCARD = 1e-12
TRACE_IMAG_ERROR = 1e-9
EIG_COND_MAX = 1e8


@dataclass(frozen=True, eq=False)
class VectorState:
    """Vectorial state |rho): ``blocks[R]`` is the auxiliary matrix rho_R."""

    blocks: np.ndarray

    def __post_init__(self):
        blocks = np.array(self.blocks, dtype=complex)
        if blocks.ndim != 3 or blocks.shape[1:] != (2, 2) or blocks.shape[0] < 1:
            raise DimensionError(f"expected blocks of shape (r_max, 2, 2), got {blocks.shape}")
        blocks.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def product(cls, rho_s, populations) -> "VectorState":
        """State ``rho_s (x) sum_R P_R |R)``."""
        rho_s = np.asarray(rho_s, dtype=complex)
        pops = np.asarray(populations, dtype=float)
        return cls(pops[:, None, None] * rho_s[None, :, :])

    @classmethod
    def ground(cls, populations) -> "VectorState":
        return cls.product(np.diag([0.0, 1.0]), populations)

    @property
    def r_max(self) -> int:
        return self.blocks.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return vectorize(self)

    @property
    def populations(self) -> np.ndarray:
        """Configurational populations (R|P) = Tr rho_R."""
        return np.trace(self.blocks, axis1=1, axis2=2).real

    @property
    def upper(self) -> np.ndarray:
        """Excited-level populations <+|rho_R|+> for each block."""
        return self.blocks[:, PLUS, PLUS].real

    @property
    def system(self) -> np.ndarray:
        """Reduced system state (1|rho) = sum_R rho_R."""
        return self.blocks.sum(axis=0)

    def __eq__(self, other):
        if not isinstance(other, VectorState):
            return NotImplemented
        return self.blocks.shape == other.blocks.shape and np.array_equal(self.blocks, other.blocks)

    __hash__ = None

    def physical_violations(self, normalized=True) -> list[str]:
        """Return descriptions of every physical-state invariant this state breaks."""
        problems = []
        for r, block in enumerate(self.blocks):
            if np.max(np.abs(block - block.conj().T)) > HERMITIAN_TOL:
                problems.append(f"block {r} not Hermitian")
                continue
            if np.linalg.eigvalsh(block).min() < -POSITIVITY_TOL:
                problems.append(f"block {r} not positive semidefinite")
        if normalized:
            total = float(np.trace(self.blocks, axis1=1, axis2=2).sum().real)
            if abs(total - 1.0) > 1e-10:
                problems.append(f"total trace {total!r} != 1")
        return problems

    def is_physical(self, normalized=True) -> bool:
        return not self.physical_violations(normalized)


def vectorize(state: VectorState) -> np.ndarray:
    """Flatten to length ``4*r_max`` in the documented block-major layout."""
    return state.blocks.reshape(-1).copy()


def devectorize(flat, r_max: int) -> VectorState:
    flat = np.asarray(flat)
    if flat.ndim != 1 or flat.size != 4 * r_max:
        raise DimensionError(f"flat vector of shape {flat.shape} does not match r_max={r_max} (need {4 * r_max})")
    return VectorState(flat.reshape(r_max, 2, 2))


def _as_flat(v) -> np.ndarray:
    if isinstance(v, VectorState):
        return v.blocks.reshape(-1)
    return np.asarray(v)


def trace_row(r_max: int) -> np.ndarray:
    """Row vector ``t`` with ``t @ flat == sum_R Tr rho_R``."""
    row = np.zeros(4 * r_max)
    row[0::4] = 1.0
    row[3::4] = 1.0
    return row


def _checked_real(value: complex, what: str = "trace") -> float:
    imag = abs(value.imag)
    if imag >= TRACE_IMAG_ERROR:
        raise NumericalCorruptionError(f"{what} has imaginary part {value.imag:.3e}")
    return float(value.real)


def trace_functional(v) -> float:
    """Sum of block traces, Tr_S[(1|v)].

    The imaginary residue is discarded when tiny and rejected when it reaches 1e-9.
    """
    flat = _as_flat(v)
    if flat.size % 4:
        raise DimensionError(f"flat length {flat.size} is not a multiple of 4")
    value = complex(flat[0::4].sum() + flat[3::4].sum())
    return _checked_real(value)


def block_traces(v) -> np.ndarray:
    flat = _as_flat(v)
    return (flat[0::4] + flat[3::4]).real


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InputError("non-finite entries in input")


class Propagator:
    """Cached exponential action ``tau -> exp(G tau) v`` for a fixed generator.

    Uses an eigendecomposition when the eigenvector matrix is well conditioned
    (condition number below 1e8), else scaling-and-squaring per time.
    """

    def __init__(self, G):
        G = np.asarray(G, dtype=complex)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise DimensionError(f"generator must be square, got {G.shape}")
        _check_finite(G)
        self.G = G
        self.n = G.shape[0]
        self.eigvals = self.eigvecs = self.eigvecs_inv = None
        try:
            w, V = np.linalg.eig(G)
            if np.linalg.cond(V) < EIG_COND_MAX:
                self.eigvals, self.eigvecs = w, V
                self.eigvecs_inv = np.linalg.inv(V)
        except np.linalg.LinAlgError:
            pass

    @property
    def spectral(self) -> bool:
        return self.eigvals is not None

    def apply(self, tau: float, v) -> np.ndarray:
        """Return ``exp(G tau) v`` as a flat vector."""
        v = _as_flat(v).astype(complex)
        if v.shape != (self.n,):
            raise DimensionError(f"vector of length {v.size} does not match generator of size {self.n}")
        _check_finite(v)
        if tau < 0:
            raise InputError(f"tau must be >= 0, got {tau}")
        if tau == 0:
            return v.copy()
        if self.spectral:
            return self.eigvecs @ (np.exp(self.eigvals * tau) * (self.eigvecs_inv @ v))
        return scipy.linalg.expm(self.G * tau) @ v

    def apply_many(self, taus, v) -> np.ndarray:
        """Rows are ``exp(G tau_k) v`` for each ``tau_k`` in ``taus``."""
        taus = np.asarray(taus, dtype=float)
        v = _as_flat(v).astype(complex)
        if v.shape != (self.n,):
            raise DimensionError(f"vector of length {v.size} does not match generator of size {self.n}")
        _check_finite(v, taus)
        if np.any(taus < 0):
            raise InputError("taus must be >= 0")
        if self.spectral:
            coeff = self.eigvecs_inv @ v
            out = (np.exp(np.outer(taus, self.eigvals)) * coeff) @ self.eigvecs.T
        else:
            out = np.array([scipy.linalg.expm(self.G * t) @ v for t in taus])
        out[taus == 0] = v
        return out

    def functional_many(self, row, taus, v) -> np.ndarray:
        """``row @ exp(G tau_k) v`` for each tau, without forming full vectors."""
        taus = np.asarray(taus, dtype=float)
        if self.spectral:
            left = np.asarray(row) @ self.eigvecs
            coeff = left * (self.eigvecs_inv @ _as_flat(v))
            return np.exp(np.outer(taus, self.eigvals)) @ coeff
        return self.apply_many(taus, v) @ np.asarray(row)

    def matrix(self, tau: float) -> np.ndarray:
        """Dense ``exp(G tau)``."""
        if self.spectral:
            return (self.eigvecs * np.exp(self.eigvals * tau)) @ self.eigvecs_inv
        return scipy.linalg.expm(self.G * tau)


def expm_action(G, tau: float, v) -> VectorState:
    """Return ``exp(G tau) v``; ``tau == 0`` returns ``v`` unchanged."""
    flat = _as_flat(v)
    r_max = flat.size // 4
    if tau == 0:
        _check_finite(np.asarray(G), flat)
        return devectorize(np.array(flat, dtype=complex), r_max)
    return devectorize(Propagator(G).apply(tau, flat), r_max)


def stationary_null_state(L) -> VectorState:
    """Unique normalized null vector of a trace-preserving generator.

    Solved twice, via the trace-bordered least-squares system and via the
    eigenvector of the eigenvalue closest to zero; the two must agree.
    """
    L = np.asarray(L, dtype=complex)
    n = L.shape[0]
    if L.shape != (n, n) or n % 4:
        raise DimensionError(f"generator shape {L.shape} is not (4r, 4r)")
    _check_finite(L)
    r_max = n // 4
    t = trace_row(r_max)
    norm_L = np.linalg.norm(L, 2)
    if np.max(np.abs(t @ L)) > 1e-12 * max(1.0, norm_L):
        raise NumericalCorruptionError("generator is not trace preserving")

    sv = np.linalg.svd(L, compute_uv=False)
    gap = sv[-2] if n > 1 else np.inf
    if gap < 1e-8 * norm_L:
        raise StationaryAmbiguityError(
            f"stationary manifold is degenerate: second-smallest singular value {gap:.3e}", gap=gap
        )

    bordered = np.vstack([L, t[None, :]])
    rhs = np.zeros(n + 1, dtype=complex)
    rhs[-1] = 1.0
    v_ls = np.linalg.lstsq(bordered, rhs, rcond=None)[0]

    w, V = np.linalg.eig(L)
    k = np.argmin(np.abs(w))
    v_eig = V[:, k] / (t @ V[:, k])

    if np.max(np.abs(v_ls - v_eig)) > 1e-8:
        raise NumericalCorruptionError("bordered and eigenvector stationary solutions disagree")
    residual = np.linalg.norm(L @ v_ls)
    if residual > 1e-10 * norm_L:
        raise NumericalCorruptionError(f"stationary residual {residual:.3e} too large")
    return devectorize(v_ls, r_max)


def clip_for_report(state: VectorState) -> VectorState:
    """Hermitize and zero tiny negative eigenvalues (within 1e-10) for output only."""
    blocks = []
    for block in state.blocks:
        h = 0.5 * (block + block.conj().T)
        w, U = np.linalg.eigh(h)
        w = np.where((w < 0) & (w >= -POSITIVITY_TOL), 0.0, w)
        blocks.append((U * w) @ U.conj().T)
    return VectorState(np.array(blocks))
