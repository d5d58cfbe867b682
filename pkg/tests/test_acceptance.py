"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from conftest import random_stats
from inverter_afd.config import RunConfig
from inverter_afd.horizon import mean_output, output_covariance_block
from inverter_afd.kalman import dare_residual, solve_dare
from inverter_afd.mmkf import PosteriorState, Residuals, posterior_update
from inverter_afd.model import DiscreteMode, InverterParams, Mode, build_multimodel
from inverter_afd.optimizer import optimize_free, vertex_oracle, zero_plan
from inverter_afd.presets import PRESETS, benchmark_horizon, run_preset
from inverter_afd.sim import Experiment, median_detection, robustness_experiment

SEEDS = range(1, 101)
F, H = Mode.FAULTY, Mode.FAULT_FREE


@pytest.fixture
def report(capsys):
    def _report(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[criterion {number:>2}] {'PASS' if ok else 'FAIL'}  {title}  {detail}")
        assert ok, f"criterion {number} failed: {detail}"
    return _report


@pytest.fixture(scope="module")
def exp():
    return Experiment(InverterParams(), N=8)


def _median_rms(reports):
    return float(np.median([r.tracking_error_rms for r in reports]))


def test_01_dare(report):
    mm = build_multimodel(InverterParams())
    t0 = time.perf_counter()
    worst = 0.0
    for m in (mm.mode_h, mm.mode_f):
        W, V = mm.noise.process(m.n), mm.noise.measurement(m.p)
        S = solve_dare(m.Ad, m.C, W, V)
        worst = max(worst, dare_residual(S, m.Ad, m.C, W, V))
    elapsed = time.perf_counter() - t0
    s1 = solve_dare([[0.0]], [[1.0]], [[0.37]], [[1.0]])[0, 0]
    s2 = solve_dare([[1.0]], [[1.0]], [[1.0]], [[1.0]])[0, 0]
    ok = (worst <= 1e-9 and abs(s1 - 0.37) <= 1e-10
          and abs(s2 - (1 + math.sqrt(5)) / 2) <= 1e-10 and elapsed < 1.0)
    report(1, "DARE correctness", ok,
           f"residual={worst:.2e} scalar_err=({abs(s1 - 0.37):.1e}, "
           f"{abs(s2 - (1 + math.sqrt(5)) / 2):.1e}) time={elapsed:.2f}s")


def test_02_posterior_normalization_and_scale(report):
    rng = np.random.default_rng(2)
    n = 1_000_000
    p = rng.uniform(1e-6, 1 - 1e-6, n)
    ah, af = rng.exponential(3.0, (2, n))
    bh, bf = np.exp(rng.uniform(-5, 5, (2, n)))
    c = np.exp(rng.uniform(-5, 5, n))
    worst_sum = worst_scale = 0.0
    for i in range(n):
        s = PosteriorState(float(p[i]), 1.0 - float(p[i]))
        res = Residuals(float(ah[i]), float(af[i]))
        a = posterior_update(s, res, float(bh[i]), float(bf[i]))
        b = posterior_update(s, res, float(c[i] * bh[i]), float(c[i] * bf[i]))
        worst_sum = max(worst_sum, abs(a.pH + a.pF - 1.0))
        worst_scale = max(worst_scale, abs(a.pH - b.pH), abs(a.pF - b.pF))
    report(2, "MMKF normalization and beta-scale invariance",
           worst_sum <= 1e-12 and worst_scale <= 1e-12,
           f"sum_err={worst_sum:.1e} scale_err={worst_scale:.1e} updates={n}")


def test_03_horizon_monte_carlo(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    A = rng.standard_normal((2, 2))
    A *= 0.8 / np.abs(np.linalg.eigvals(A)).max()
    mode = DiscreteMode(Ad=A, Bd=rng.standard_normal((2, 2)), C=rng.standard_normal((1, 2)),
                        dt=1e-3, mode=H, baseline_input=np.array([0.4, -0.2]),
                        perturbation_columns=(0, 1))
    S0, W, V = np.diag([0.5, 0.3]), np.diag([0.2, 0.1]), np.array([[0.15]])
    x0, N, n = np.array([1.0, -0.5]), 3, 2_000_000
    du = np.array([[0.3, -0.2], [0.0, 0.5], [-0.4, 0.1]])
    ybar = mean_output(mode, x0, N, du)
    cov = output_covariance_block(mode, S0, W, V, N)
    u = mode.input_sequence(du)
    x = x0[:, None] + np.linalg.cholesky(S0) @ rng.standard_normal((2, n))
    ys = []
    for k in range(N + 1):
        ys.append((mode.C @ x)[0] + math.sqrt(V[0, 0]) * rng.standard_normal(n))
        if k < N:
            x = A @ x + (mode.Bd @ u[k])[:, None] + np.linalg.cholesky(W) @ \
                rng.standard_normal((2, n))
    Y = np.array(ys)
    mean_mc = Y.mean(axis=1)
    Yc = Y - mean_mc[:, None]
    cov_mc = Yc @ Yc.T / (n - 1)
    d = np.diag(cov)
    z_mean = np.abs(mean_mc - ybar) / np.sqrt(d / n)
    z_cov = np.abs(cov_mc - cov) / np.sqrt((np.outer(d, d) + cov ** 2) / n)
    elapsed = time.perf_counter() - t0
    report(3, "horizon statistics vs Monte Carlo",
           z_mean.max() <= 4 and z_cov.max() <= 4 and elapsed < 30,
           f"max_z_mean={z_mean.max():.2f} max_z_cov={z_cov.max():.2f} time={elapsed:.1f}s")


def test_04_optimizer_exactness(report):
    rng = np.random.default_rng(4)
    worst_gap = worst_box = 0.0
    for _ in range(50):
        st = random_stats(rng, n_inputs=int(rng.choice([2, 4, 6, 8, 10, 12])))
        gamma = float(rng.uniform(0.05, 3.0))
        free = optimize_free(st, (0.5, 0.5), gamma)
        oracle = vertex_oracle(st, (0.5, 0.5), gamma)
        worst_gap = max(worst_gap, abs(free.phi_achieved - oracle.phi_achieved))
        worst_box = max(worst_box, free.inf_norm - gamma)
    report(4, "optimizer matches vertex enumeration", worst_gap <= 1e-6 and worst_box <= 1e-12,
           f"max_gap={worst_gap:.1e} max_box_excess={worst_box:.1e}")


def test_05_dominance_and_monotonicity(report, exp):
    gammas = (0.1, 0.25, 0.5, 1.0)
    zero = zero_plan(exp.stats, exp.mm.priors).phi_achieved
    free = [exp.design(g, "free").phi_achieved for g in gammas]
    harm = [exp.design(g, "harmonic").phi_achieved for g in gammas]
    dominance = all(f >= h >= zero for f, h in zip(free, harm))
    monotone = all(b >= a for a, b in zip(free, free[1:]))
    report(5, "phi(free) >= phi(harmonic) >= phi(zero); phi* nondecreasing in gamma",
           dominance and monotone,
           "free=" + ",".join(f"{v:.4g}" for v in free)
           + " harmonic=" + ",".join(f"{v:.4g}" for v in harm) + f" zero={zero:.4g}")


def test_06_example1(report, exp):
    t0 = time.perf_counter()
    opt = exp.run_many(F, exp.design(0.5, "free"), SEEDS)
    zero = exp.run_many(F, exp.design(0.5, "zero"), SEEDS)
    pf_opt = float(np.median([r.final_p_true for r in opt]))
    pf_zero = float(np.median([r.final_p_true for r in zero]))
    det_opt, det_zero = median_detection(opt), median_detection(zero)
    elapsed = time.perf_counter() - t0
    report(6, "Example 1: optimal plan beats zero plan",
           pf_opt > pf_zero and det_opt < det_zero and elapsed < 60,
           f"median_pF={pf_opt:.4f} vs {pf_zero:.4f} median_detect={det_opt} vs {det_zero} "
           f"time={elapsed:.1f}s")


def test_07_detection_within_one_cycle(report):
    # one 60 Hz cycle is 16.7 ms, i.e. 17 steps at 1 ms
    e17 = Experiment(InverterParams(), N=17)
    plan = e17.design(1.0, "free")
    med = {m: median_detection(e17.run_many(m, plan, SEEDS)) for m in (F, H)}
    report(7, "median detection within 17 steps at gamma=1", all(v <= 17 for v in med.values()),
           f"faulty={med[F]} fault_free={med[H]}")


def test_08_tradeoff_shape(report, exp):
    gammas = (0.1, 0.5, 1.0)
    ok, parts = True, []
    for mode in (F, H):
        det, rms = [], []
        for g in gammas:
            reps = exp.run_many(mode, exp.design(g, "free"), SEEDS)
            det.append(median_detection(reps))
            rms.append(_median_rms(reps))
        ok &= all(b <= a for a, b in zip(det, det[1:]))
        ok &= all(b >= a for a, b in zip(rms, rms[1:]))
        parts.append(f"{mode.value}: detect={det} rms=" + ",".join(f"{v:.3g}" for v in rms))
    report(8, "detection/tracking tradeoff across gamma", ok, "; ".join(parts))


def test_09_voltage_indicator(report, exp):
    plan = exp.design(1.0, "free")
    assert plan.inf_norm <= 1.0
    rf = _median_rms(exp.run_many(F, plan, SEEDS))
    rh = _median_rms(exp.run_many(H, plan, SEEDS))
    report(9, "faulty voltage deviation >= 1.5x fault-free", rf >= 1.5 * rh,
           f"faulty={rf:.4g}V fault_free={rh:.4g}V ratio={rf / rh:.3f}")


def test_10_robustness(report, exp):
    plan = exp.design(0.5, "free")
    sets = {"nominal": {}, "gains_x1.1": {"kpI": 1.1, "kiI": 1.1}, "load_x0.8": {"R": 0.8},
            "load_x1.2": {"R": 1.2}}
    reps = {r.label: r for r in robustness_experiment(exp, sets, plan, SEEDS, F)}
    nominal = reps["nominal"].correct_rate
    rates_ok = all(reps[k].correct_rate >= 0.95 * nominal for k in sets if k != "nominal")
    redesigned = reps["load_x1.2"].redesigned_plan
    mag_new = float(np.mean(np.abs(redesigned.delta_u)))
    mag_nom = float(np.mean(np.abs(plan.delta_u)))
    report(10, "robustness to gain and load errors", rates_ok and mag_new <= mag_nom,
           " ".join(f"{k}={r.correct_rate:.2f}" for k, r in reps.items())
           + f" redesigned_mean_abs_du={mag_new:.4g} nominal={mag_nom:.4g}")


def test_11_timing_scaling(report):
    rep = benchmark_horizon(RunConfig(), horizons=(4, 8, 16, 32), repetitions=200)
    norm = rep.normalized
    t8 = rep.mean_s[rep.horizons.index(8)]
    ok = all(b >= a for a, b in zip(norm, norm[1:])) and t8 < 0.05
    report(11, "optimization time grows with N; N=8 under 50 ms", ok,
           "normalized=" + ",".join(f"{v:.3f}" for v in norm) + f" t8={t8 * 1e3:.2f}ms")


DETERMINISTIC = tuple(p for p in PRESETS if p != "horizon-timing")


def _csv_bytes(name, out, seed=7):
    cfg = RunConfig()
    run_preset(name, cfg, {"out": str(out), "seed": seed, "runs": 20})
    return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}


def test_12_determinism(report, tmp_path):
    mismatched = []
    for name in DETERMINISTIC:
        a = _csv_bytes(name, tmp_path / f"{name}_a")
        b = _csv_bytes(name, tmp_path / f"{name}_b")
        if not a or a != b:
            mismatched.append(name)
    report(12, "preset reruns give bit-identical CSVs", not mismatched,
           f"presets={','.join(DETERMINISTIC)} mismatched={mismatched or 'none'}")


@pytest.mark.xfail(strict=True, reason="the timing preset records measured wall-clock times")
def test_12_determinism_timing_preset(tmp_path):
    a = _csv_bytes("horizon-timing", tmp_path / "a")
    b = _csv_bytes("horizon-timing", tmp_path / "b")
    assert a == b
