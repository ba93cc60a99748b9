"""Model documents and the generator set {L, J_mu, D} in the rotating frame.

``config_rates[R][R']`` is the rate of the configurational transition R' -> R
(destination row, source column).  It holds the self-fluctuating rates phi for
``SelfFluctuating`` models and the light-assisted rates gamma_{RR'} for
``LightAssisted`` models.  hbar = 1 and every number is in units of a reference
Rabi frequency.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import SpecError, StationaryAmbiguityError
from .supermath import Propagator, trace_row

PHOTON = "ph"


def config_channel(r: int) -> str:
    return f"cfg:{r}"


def channel_destination(label: str) -> int | None:
    """Configuration index encoded in a ``cfg:<R>`` label, None for the photon channel."""
    if label == PHOTON:
        return None
    if label.startswith("cfg:"):
        return int(label[4:])
    raise ValueError(f"unknown channel label {label!r}")


class Kind(str, enum.Enum):
    SELF_FLUCTUATING = "SelfFluctuating"
    LIGHT_ASSISTED = "LightAssisted"


class Scheme(str, enum.Enum):
    PHOTON_ONLY = "PhotonOnly"
    PHOTON_AND_CONFIG = "PhotonAndConfig"


SPEC_KEYS = ("kind", "scheme", "r_max", "rabi", "detuning", "decay", "config_rates")


@dataclass(frozen=True, eq=False)
class ModelSpec:
    kind: Kind
    r_max: int
    rabi: np.ndarray
    detuning: np.ndarray
    decay: np.ndarray
    config_rates: np.ndarray
    scheme: Scheme = Scheme.PHOTON_ONLY

    def __post_init__(self):
        for name in ("rabi", "detuning", "decay", "config_rates"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    @property
    def out_rates(self) -> np.ndarray:
        """Total configurational exit rate of each state, sum_{R'} rate(R -> R')."""
        return self.config_rates.sum(axis=0)

    @property
    def phi_tilde(self) -> np.ndarray:
        return self.out_rates

    @property
    def gamma_tilde(self) -> np.ndarray:
        """Photon-emission rate gamma_R + sum_{R'} gamma_{R'R} of a light-assisted model."""
        return self.decay + self.out_rates

    @property
    def effective_decay(self) -> np.ndarray:
        """Decay rate of the per-configuration Markovian system."""
        if self.kind is Kind.LIGHT_ASSISTED:
            return self.gamma_tilde
        return self.decay

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "scheme": self.scheme.value,
            "r_max": int(self.r_max),
            "rabi": self.rabi.tolist(),
            "detuning": self.detuning.tolist(),
            "decay": self.decay.tolist(),
            "config_rates": self.config_rates.tolist(),
        }

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def with_scheme(self, scheme) -> "ModelSpec":
        return replace(self, scheme=Scheme(scheme))

    def scaled_config_rates(self, factor: float) -> "ModelSpec":
        return replace(self, config_rates=self.config_rates * factor)


def _numeric_list(raw, key, n, violations):
    value = raw.get(key)
    if not isinstance(value, (list, tuple)):
        violations.append(f"{key}: expected a list of {n} numbers")
        return None
    if len(value) != n:
        violations.append(f"{key}: length {len(value)} != r_max={n}")
        return None
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        violations.append(f"{key}: non-numeric entries")
        return None
    if not np.all(np.isfinite(arr)):
        violations.append(f"{key}: non-finite entries")
        return None
    return arr


def validate_spec(raw: dict) -> ModelSpec:
    """Check a key-value model document and build a :class:`ModelSpec`.

    Every violation is collected before raising :class:`SpecError`.
    """
    if not isinstance(raw, dict):
        raise SpecError(["document must be a key-value mapping"])
    violations = []
    for key in sorted(set(raw) - set(SPEC_KEYS)):
        violations.append(f"{key}: unknown key")
    for key in SPEC_KEYS:
        if key not in raw:
            violations.append(f"{key}: missing")

    kind = scheme = None
    if "kind" in raw:
        try:
            kind = Kind(raw["kind"])
        except ValueError:
            violations.append(f"kind: unknown value {raw['kind']!r} (expected one of {[k.value for k in Kind]})")
    if "scheme" in raw:
        try:
            scheme = Scheme(raw["scheme"])
        except ValueError:
            violations.append(f"scheme: unknown value {raw['scheme']!r} (expected one of {[s.value for s in Scheme]})")

    r_max = raw.get("r_max")
    if isinstance(r_max, bool) or not isinstance(r_max, (int, np.integer)) or r_max < 1:
        if "r_max" in raw:
            violations.append(f"r_max: expected an integer >= 1, got {r_max!r}")
        raise SpecError(violations)

    rabi = _numeric_list(raw, "rabi", r_max, violations) if "rabi" in raw else None
    detuning = _numeric_list(raw, "detuning", r_max, violations) if "detuning" in raw else None
    decay = _numeric_list(raw, "decay", r_max, violations) if "decay" in raw else None

    if rabi is not None:
        for r in np.flatnonzero(rabi < 0):
            violations.append(f"rabi[{r}]: must be >= 0, got {rabi[r]}")
    if decay is not None:
        for r in np.flatnonzero(decay <= 0):
            violations.append(f"decay[{r}]: must be > 0, got {decay[r]}")

    rates = None
    if "config_rates" in raw:
        value = raw["config_rates"]
        try:
            rates = np.array(value, dtype=float)
        except (TypeError, ValueError):
            violations.append("config_rates: expected an r_max x r_max numeric matrix")
        if rates is not None:
            if rates.shape != (r_max, r_max):
                violations.append(f"config_rates: shape {rates.shape} != ({r_max}, {r_max})")
                rates = None
            elif not np.all(np.isfinite(rates)):
                violations.append("config_rates: non-finite entries")
                rates = None
        if rates is not None:
            for r, rp in zip(*np.nonzero(rates < 0)):
                violations.append(f"config_rates[{r}][{rp}]: must be >= 0, got {rates[r, rp]}")
            for r in np.flatnonzero(np.diag(rates) != 0):
                violations.append(f"config_rates[{r}][{r}]: diagonal must be exactly 0, got {rates[r, r]}")

    if violations:
        raise SpecError(violations)
    return ModelSpec(kind=kind, scheme=scheme, r_max=int(r_max), rabi=rabi, detuning=detuning,
                     decay=decay, config_rates=rates)


def load_spec(path) -> ModelSpec:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError([f"not a JSON document: {exc}"]) from None
    return validate_spec(raw)


# --- superoperator building blocks (2x2, row-major vec: vec(A X B) = kron(A, B.T) vec(X)) ---

_I2 = np.eye(2)
SIGMA = np.array([[0.0, 0.0], [1.0, 0.0]])  # |-><+|, basis (|+>, |->)
SIGMA_Z = np.diag([1.0, -1.0])
_D_OP = SIGMA.T @ SIGMA / 2  # sigma^dagger sigma / 2


def _left(A):
    return np.kron(A, _I2)


def _right(B):
    return np.kron(_I2, B.T)


def hamiltonian(rabi: float, detuning: float) -> np.ndarray:
    """Rotating-frame Hamiltonian -delta sigma_z / 2 + (Omega/2)(sigma^dagger + sigma)."""
    return -0.5 * detuning * SIGMA_Z + 0.5 * rabi * (SIGMA + SIGMA.T)


def _unitary(H):
    return -1j * (_left(H) - _right(H))


_ANTI_D = _left(_D_OP) + _right(_D_OP)
_JUMP = np.kron(SIGMA, SIGMA)
_IDENT = np.eye(4)


def no_jump_block(rabi, detuning, loss, extra_loss=0.0):
    """-i[H, .] - loss {D, .} - extra_loss (.) on one block."""
    return _unitary(hamiltonian(rabi, detuning)) - loss * _ANTI_D - extra_loss * _IDENT


@dataclass(frozen=True, eq=False)
class GeneratorSet:
    """L, the jump channels J_mu (label -> matrix), and D = L - sum_mu J_mu."""

    spec: ModelSpec
    L: np.ndarray
    channels: dict
    D: np.ndarray
    photon_channels: frozenset = field(default_factory=frozenset)

    @property
    def labels(self) -> list[str]:
        return list(self.channels)

    @property
    def J_total(self) -> np.ndarray:
        return sum(self.channels.values())

    @property
    def J_photon(self) -> np.ndarray:
        """Sum of the channels whose event is a photon emission."""
        return sum(self.channels[k] for k in self.channels if k in self.photon_channels)

    def emits_photon(self, label: str) -> bool:
        return label in self.photon_channels

    @cached_property
    def D_propagator(self) -> Propagator:
        return Propagator(self.D)

    @cached_property
    def L_propagator(self) -> Propagator:
        return Propagator(self.L)


def _place(M, r, rp, block):
    M[4 * r:4 * r + 4, 4 * rp:4 * rp + 4] += block


def build_generators(spec: ModelSpec) -> GeneratorSet:
    """Assemble L, the measurement channels of ``spec.scheme``, and D."""
    n = spec.r_max
    dim = 4 * n
    rates = spec.config_rates
    out = spec.out_rates
    light = spec.kind is Kind.LIGHT_ASSISTED
    L = np.zeros((dim, dim), dtype=complex)
    J_ph = np.zeros((dim, dim), dtype=complex)
    J_cfg = [np.zeros((dim, dim), dtype=complex) for _ in range(n)]

    for r in range(n):
        H_part = _unitary(hamiltonian(spec.rabi[r], spec.detuning[r]))
        if light:
            # all light-assisted transitions out of r carry a sigma-jump loss
            _place(L, r, r, H_part - spec.gamma_tilde[r] * _ANTI_D)
        else:
            _place(L, r, r, H_part - spec.decay[r] * _ANTI_D - out[r] * _IDENT)
        _place(J_ph, r, r, spec.decay[r] * _JUMP)
        for rp in range(n):
            if rates[r, rp] == 0:
                continue
            _place(J_cfg[r], r, rp, rates[r, rp] * (_JUMP if light else _IDENT))

    J_cfg_total = sum(J_cfg)
    L += J_ph + J_cfg_total

    if spec.scheme is Scheme.PHOTON_ONLY:
        if light:
            channels = {PHOTON: J_ph + J_cfg_total}
        else:
            channels = {PHOTON: J_ph}
        photon = frozenset([PHOTON])
    else:
        channels = {PHOTON: J_ph}
        channels.update({config_channel(r): J_cfg[r] for r in range(n)})
        photon = frozenset(channels) if light else frozenset([PHOTON])

    D = L - sum(channels.values())
    gens = GeneratorSet(spec=spec, L=L, channels=channels, D=D, photon_channels=photon)
    check_generator_identities(gens)
    for M in (gens.L, gens.D, *gens.channels.values()):
        M.setflags(write=False)
    return gens


def check_generator_identities(gens: GeneratorSet, tol: float = 1e-12) -> None:
    """Verify D = L - sum J exactly and the trace identities on every basis state."""
    resid = gens.L - gens.J_total - gens.D
    if np.max(np.abs(resid)) > 1e-14:
        raise AssertionError("D != L - sum_mu J_mu")
    t = trace_row(gens.spec.r_max)
    if np.max(np.abs(t @ gens.L)) > tol:
        raise AssertionError("L is not trace preserving")
    if np.max(np.abs(t @ gens.D + t @ gens.J_total)) > tol:
        raise AssertionError("Tr D v != -sum_mu Tr J_mu v")


def photon_split(gens: GeneratorSet) -> GeneratorSet:
    """The same L split into one photon channel (all photon-emitting jumps) and D."""
    if gens.spec.scheme is Scheme.PHOTON_ONLY:
        return gens
    return build_generators(gens.spec.with_scheme(Scheme.PHOTON_ONLY))


def classical_rate_matrix(spec: ModelSpec) -> np.ndarray:
    """Generator Q of the classical configurational master equation, dP/dt = Q P."""
    return spec.config_rates - np.diag(spec.out_rates)


def classical_stationary(spec: ModelSpec) -> np.ndarray:
    """Normalized null vector of the classical rate matrix."""
    n = spec.r_max
    if n == 1:
        return np.ones(1)
    Q = classical_rate_matrix(spec)
    sv = np.linalg.svd(Q, compute_uv=False)
    scale = max(np.abs(Q).max(), 1e-300)
    if sv[-2] < 1e-10 * scale:
        raise StationaryAmbiguityError("configurational chain is disconnected: no unique stationary distribution",
                                       gap=sv[-2])
    A = np.vstack([Q, np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    p = np.linalg.lstsq(A, b, rcond=None)[0]
    return p


def reduce_to_markov(spec: ModelSpec, r: int) -> ModelSpec:
    """Single-configuration model frozen in state ``r``."""
    if not 0 <= r < spec.r_max:
        raise IndexError(f"configuration index {r} out of range for r_max={spec.r_max}")
    if spec.r_max == 1:
        return spec
    gamma = spec.effective_decay[r]
    return ModelSpec(kind=spec.kind, scheme=spec.scheme, r_max=1, rabi=[spec.rabi[r]],
                     detuning=[spec.detuning[r]], decay=[gamma], config_rates=[[0.0]])


def fast_limit_params(spec: ModelSpec) -> tuple[float, float, float]:
    """Population-averaged (gamma, Omega, delta) of a self-fluctuating model."""
    if spec.kind is not Kind.SELF_FLUCTUATING:
        raise ValueError("fast-limit parameters are defined for SelfFluctuating models only")
    p = classical_stationary(spec)
    return float(spec.decay @ p), float(spec.rabi @ p), float(spec.detuning @ p)
