import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from inverter_afd.kalman import (RiccatiConvergenceError, build_filter, dare_residual,
                                 filter_step, riccati_map, solve_dare)
from inverter_afd.model import DiscreteMode, Mode, NoiseSpec


def scalar_mode(a, c):
    return DiscreteMode(Ad=np.array([[a]]), Bd=np.array([[0.0]]), C=np.array([[c]]), dt=1.0,
                        mode=Mode.FAULT_FREE, baseline_input=np.zeros(1),
                        perturbation_columns=(0,))


def test_dare_scalar_dead_dynamics():
    S = solve_dare([[0.0]], [[1.0]], [[0.3]], [[2.0]])
    assert S[0, 0] == pytest.approx(0.3, abs=1e-10)


def test_dare_scalar_golden_ratio():
    # Sigma^2 - Sigma - 1 = 0
    S = solve_dare([[1.0]], [[1.0]], [[1.0]], [[1.0]])
    assert S[0, 0] == pytest.approx((1 + math.sqrt(5)) / 2, abs=1e-10)


def test_dare_scalar_lyapunov_limit():
    S = solve_dare([[0.5]], [[0.0]], [[0.75]], [[1.0]])
    assert S[0, 0] == pytest.approx(1.0, abs=1e-10)


def test_dare_forms_agree_for_symmetric_a(rng):
    X = rng.standard_normal((3, 3))
    A = 0.4 * (X + X.T) / np.abs(np.linalg.eigvalsh(X + X.T)).max()
    C = rng.standard_normal((2, 3))
    a = solve_dare(A, C, 0.1 * np.eye(3), np.eye(2), form="printed")
    b = solve_dare(A, C, 0.1 * np.eye(3), np.eye(2), form="standard")
    np.testing.assert_allclose(a, b, atol=1e-9)


@pytest.mark.parametrize("mode_id", [Mode.FAULT_FREE, Mode.FAULTY])
def test_dare_inverter_residual_and_limit(mm, mode_id):
    m = mm[mode_id]
    W, V = mm.noise.process(m.n), mm.noise.measurement(m.p)
    S = solve_dare(m.Ad, m.C, W, V)
    assert dare_residual(S, m.Ad, m.C, W, V) <= 1e-10
    np.testing.assert_array_equal(S, S.T)
    assert np.linalg.eigvalsh(S).min() >= 0
    nxt = S
    for _ in range(10):
        nxt = riccati_map(nxt, m.Ad, m.C, W, V)
    assert np.linalg.norm(nxt - S) < 1e-10


def test_dare_errors():
    with pytest.raises(ValueError):
        solve_dare([[0.5]], [[1.0]], [[1.0]], [[0.0]])
    with pytest.raises(RiccatiConvergenceError):
        solve_dare([[1.0]], [[1.0]], [[1.0]], [[1.0]], max_iter=3)


def test_filter_scalar_values():
    f = build_filter(scalar_mode(0.0, 1.0), NoiseSpec(sigma_w=1.0, sigma_v=1.0))
    assert f.H[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert f.SigmaY[0, 0] == pytest.approx(2.0, abs=1e-12)
    assert f.beta == pytest.approx(1 / math.sqrt(2), abs=1e-12)


def test_filter_without_measurement():
    f = build_filter(scalar_mode(0.5, 0.0), NoiseSpec(sigma_w=0.75, sigma_v=0.3))
    assert f.H[0, 0] == 0.0
    assert f.SigmaY[0, 0] == pytest.approx(0.3)


@pytest.mark.parametrize("mode_id", [Mode.FAULT_FREE, Mode.FAULTY])
def test_inverter_sigma_y_positive_definite(mm, mode_id):
    f = build_filter(mm[mode_id], mm.noise)
    np.testing.assert_array_equal(f.SigmaY, f.SigmaY.T)
    assert np.linalg.eigvalsh(f.SigmaY).min() > 0
    assert f.beta > 0


def test_beta_invariant_to_output_permutation(mm):
    from dataclasses import replace
    m = mm.mode_h
    swapped = replace(m, C=m.C[::-1])
    assert build_filter(swapped, mm.noise).beta == pytest.approx(
        build_filter(m, mm.noise).beta, rel=1e-12)


def test_filter_step_open_loop_and_zero_innovation(mm, rng):
    m = mm.mode_f
    f = build_filter(m, mm.noise)
    x = rng.standard_normal(m.n)
    zero_gain = type(f)(mode=f.mode, H=np.zeros_like(f.H), Sigma=f.Sigma, SigmaY=f.SigmaY,
                        beta=f.beta)
    nxt, _ = filter_step(zero_gain, m, x, np.zeros(4), rng.standard_normal(2))
    np.testing.assert_allclose(nxt, m.Ad @ x, rtol=0, atol=1e-15)
    u = rng.standard_normal(4)
    nxt, yhat = filter_step(f, m, x, u, m.C @ x)
    np.testing.assert_allclose(nxt, m.Ad @ x + m.Bd @ u, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(yhat, m.C @ x)
    with pytest.raises(ValueError):
        filter_step(f, m, x[:2], u, m.C @ x)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_filter_step_superposition(mm, seed):
    rng = np.random.default_rng(seed)
    m = mm.mode_h
    f = build_filter(m, mm.noise) if not hasattr(test_filter_step_superposition, "_f") else \
        test_filter_step_superposition._f
    test_filter_step_superposition._f = f
    args1 = [rng.standard_normal(k) for k in (m.n, 4, 2)]
    args2 = [rng.standard_normal(k) for k in (m.n, 4, 2)]
    a, _ = filter_step(f, m, *args1)
    b, _ = filter_step(f, m, *args2)
    c, _ = filter_step(f, m, *[x + 2.0 * y for x, y in zip(args1, args2)])
    np.testing.assert_allclose(c, a + 2.0 * b, atol=1e-12 * max(1.0, np.abs(c).max()))


def test_zero_noise_tracking_keeps_error_zero(mm, rng):
    m = mm.mode_f
    f = build_filter(m, mm.noise)
    x = rng.standard_normal(m.n)
    xhat = x.copy()
    for k in range(20):
        u = rng.standard_normal(4)
        y = m.C @ x
        xhat, _ = filter_step(f, m, xhat, u, y)
        x = m.Ad @ x + m.Bd @ u
        assert np.abs(xhat - x).max() <= 1e-12 * max(1.0, np.abs(x).max())
