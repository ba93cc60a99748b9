import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindjump.errors import DimensionError, InputError, NumericalCorruptionError, StationaryAmbiguityError
from lindjump.model import build_generators
from lindjump.supermath import (
    Propagator,
    VectorState,
    clip_for_report,
    devectorize,
    expm_action,
    stationary_null_state,
    trace_functional,
    vectorize,
)

from conftest import single
from oracles import random_physical_state, rk4_step_doubling


def test_ground_projector_layout():
    v = VectorState(np.diag([0.0, 1.0])[None])
    np.testing.assert_array_equal(vectorize(v), [0, 0, 0, 1])


def test_identity_blocks_layout():
    v = VectorState(np.array([np.eye(2) / 4, np.eye(2) / 4]))
    np.testing.assert_array_equal(vectorize(v), [0.25, 0, 0, 0.25, 0.25, 0, 0, 0.25])


@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_roundtrip_exact(r, seed):
    rng = np.random.default_rng(seed)
    blocks = rng.normal(size=(r, 2, 2)) + 1j * rng.normal(size=(r, 2, 2))
    v = VectorState(blocks)
    assert devectorize(vectorize(v), r) == v


def test_devectorize_rejects_bad_length():
    with pytest.raises(DimensionError):
        devectorize(np.zeros(6), 2)


def test_trace_functional_examples():
    assert trace_functional(VectorState(np.zeros((2, 2, 2)))) == 0.0
    v = VectorState(np.array([0.3 * np.diag([1.0, 0.0]), 0.7 * np.diag([0.0, 1.0])]))
    assert trace_functional(v) == pytest.approx(1.0, abs=1e-15)
    assert v.is_physical()


def test_trace_functional_imaginary_residue():
    flat = np.array([0.5, 0, 0, 0.5 + 1e-13j])
    assert trace_functional(flat) == pytest.approx(1.0)
    with pytest.raises(NumericalCorruptionError):
        trace_functional(np.array([0.5, 0, 0, 0.5 + 1e-8j]))


def test_physical_violations_report():
    bad = VectorState(np.array([[[1.0, 0.0], [0.0, -0.5]]]))
    problems = bad.physical_violations()
    assert any("positive" in p for p in problems)
    assert any("trace" in p for p in problems)


def test_expm_zero_time_is_identity():
    rng = np.random.default_rng(0)
    G = rng.normal(size=(8, 8))
    v = VectorState(rng.normal(size=(2, 2, 2)))
    assert expm_action(G, 0.0, v) == v


def test_expm_scalar_decay():
    G = np.diag([-0.7, -1.0, -2.0, -3.0])
    v = np.array([1.0, 0, 0, 0])
    np.testing.assert_allclose(expm_action(G, 1.3, v).flat, np.exp(-0.7 * 1.3) * v, rtol=1e-14)


def test_expm_against_rk4_oracle():
    rng = np.random.default_rng(3)
    G = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    v = rng.normal(size=8) + 0j
    ref = rk4_step_doubling(G, v, 0.7, h=1e-4)
    np.testing.assert_allclose(expm_action(G, 0.7, v).flat, ref, rtol=1e-8, atol=1e-10)


def test_expm_rejects_nonfinite():
    with pytest.raises(InputError):
        expm_action(np.full((4, 4), np.nan), 1.0, np.zeros(4))


def test_defective_generator_falls_back():
    J = np.array([[-1.0, 1.0, 0, 0], [0, -1.0, 0, 0], [0, 0, -2.0, 0], [0, 0, 0, -3.0]])
    prop = Propagator(J)
    assert not prop.spectral
    v = np.array([0, 1.0, 0, 0])
    np.testing.assert_allclose(prop.apply(2.0, v).real, [2 * np.exp(-2), np.exp(-2), 0, 0], rtol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 3), st.floats(0, 3))
def test_semigroup_and_linearity(seed, s, t):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(8, 8)) - 2 * np.eye(8)
    u, v = rng.normal(size=8), rng.normal(size=8)
    a = expm_action(G, s, expm_action(G, t, v)).flat
    b = expm_action(G, s + t, v).flat
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9 * np.abs(b).max())
    lhs = expm_action(G, t, 2.0 * u - 0.5 * v).flat
    rhs = 2.0 * expm_action(G, t, u).flat - 0.5 * expm_action(G, t, v).flat
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10 * max(1, np.abs(rhs).max()))


def test_stationary_undriven_decays_to_ground():
    gens = build_generators(single(rabi=0.0))
    v = stationary_null_state(gens.L)
    np.testing.assert_allclose(v.blocks[0], np.diag([0.0, 1.0]), atol=1e-12)


def test_stationary_matches_long_time_propagation():
    from conftest import SLOW_SF, make

    spec = make(SLOW_SF, config_rates=[[0.0, 0.4], [0.7, 0.0]], detuning=[0.3, -0.2], rabi=[1.0, 0.6])
    gens = build_generators(spec)
    v_inf = stationary_null_state(gens.L)
    rho0 = VectorState.ground([0.5, 0.5])
    far = expm_action(gens.L, 1e4, rho0)
    np.testing.assert_allclose(far.flat, v_inf.flat, atol=1e-6)
    assert v_inf.is_physical()
    for t in (1.0, 10.0, 100.0):
        np.testing.assert_allclose(expm_action(gens.L, t, v_inf).flat, v_inf.flat, atol=1e-8)


def test_stationary_ambiguous_for_disconnected_model():
    from conftest import SLOW_SF, make

    gens = build_generators(make(SLOW_SF, config_rates=[[0.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(StationaryAmbiguityError) as info:
        stationary_null_state(gens.L)
    assert info.value.gap is not None


def test_stationary_rejects_non_trace_preserving():
    with pytest.raises(NumericalCorruptionError):
        stationary_null_state(-np.eye(4))


def test_clip_for_report_zeroes_tiny_negative_eigenvalues():
    v = VectorState(np.array([np.diag([1.0, -1e-12])]))
    clipped = clip_for_report(v)
    assert np.linalg.eigvalsh(clipped.blocks[0]).min() >= 0
    rng = np.random.default_rng(1)
    phys = VectorState(random_physical_state(rng, 2))
    np.testing.assert_allclose(clip_for_report(phys).blocks, phys.blocks, atol=1e-14)
