"""Stochastic simulation of the true inverter and the MMKF running on it."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .horizon import horizon_stats
from .kalman import SteadyStateFilter, build_filter, filter_step
from .mmkf import PosteriorState, decide, posterior_update, residuals
from .model import (DiscreteMode, InverterParams, Mode, MultiModel, NoiseSpec,
                    build_multimodel)
from .optimizer import (HarmonicBasis, PerturbationPlan, optimize_free,
                        optimize_harmonic, zero_plan)

STREAM_X0, STREAM_PROCESS, STREAM_MEASUREMENT = 0, 1, 2


@dataclass(frozen=True)
class ScenarioConfig:
    true_mode: Mode = Mode.FAULTY
    N: int = 8
    dt: float = 1e-3
    gamma: float = 0.5
    plan: str = "free"  # free | harmonic | zero
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 1
    detect_threshold: float = 0.95
    priors: tuple[float, float] = (0.5, 0.5)
    # multiplicative factors on kpI, kiI, kpV, kiV, R applied to the truth only
    param_perturbations: dict = field(default_factory=dict)
    trigger_threshold: float | None = None
    likelihood: str = "exponential"

    def __post_init__(self):
        if not 0.5 < self.detect_threshold < 1:
            raise ValueError("detect_threshold must lie in (0.5, 1)")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if self.plan not in ("free", "harmonic", "zero"):
            raise ValueError(f"unknown plan {self.plan!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "true_mode", Mode(self.true_mode))


@dataclass(frozen=True, eq=False)
class Trajectory:
    mode: Mode
    x: np.ndarray  # (N+1) x n true states
    y: np.ndarray  # (N+1) x p measurements
    u: np.ndarray  # N x m applied inputs
    delta_u: np.ndarray  # N x 2
    v_dev: np.ndarray  # (N+1) x 2 PCC voltage minus reference
    dt: float

    @property
    def N(self) -> int:
        return self.u.shape[0]


@dataclass(frozen=True)
class TraceRecord:
    step: int
    time_s: float
    y: tuple[float, float]
    yhat_h: tuple[float, float]
    yhat_f: tuple[float, float]
    alpha_h: float
    alpha_f: float
    p_h: float
    p_f: float
    du: tuple[float, float]
    v_dev: tuple[float, float]


@dataclass(frozen=True)
class DetectionReport:
    decided_mode: Mode
    correct: bool
    detection_steps: int | None
    tracking_error_rms: float
    phi_used: float
    gamma_used: float
    final_p_true: float


def _generator(seed: int, stream: int) -> np.random.Generator:
    # Philox is counter based: (seed, stream) fixes the whole draw sequence
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(stream)]))


def _psd_factor(S: np.ndarray) -> np.ndarray:
    """``L`` with ``L L^T = S`` for a possibly singular PSD ``S``."""
    lam, V = np.linalg.eigh(0.5 * (S + S.T))
    return V * np.sqrt(np.clip(lam, 0.0, None))


def voltage_deviation(mode: DiscreteMode, x: np.ndarray) -> np.ndarray:
    """PCC voltage error per axis, ``R * i - v_ref``.

    The load is resistive, so the PCC voltage is the load resistance times the
    inverter current (the mode's output states).
    """
    return mode.load_resistance * (x @ mode.C.T) - mode.v_ref


def _perturbation(delta_u, N):
    if delta_u is None:
        return np.zeros((N, 2))
    if isinstance(delta_u, PerturbationPlan):
        delta_u = delta_u.delta_u
    du = np.asarray(delta_u, float).reshape(N, 2)
    return du


def simulate_truth(mode: DiscreteMode, delta_u, noise: NoiseSpec, N: int, seed: int,
                   x0_mean=None) -> Trajectory:
    """One realization of ``x+ = A x + B u + w``, ``y = C x + v`` for ``k = 0..N``."""
    du = _perturbation(delta_u, N)
    u = mode.input_sequence(du) if N > 0 else np.zeros((0, mode.Bd.shape[1]))
    mean0 = noise.mean(mode.mode, mode.n) if x0_mean is None else np.asarray(x0_mean, float)
    L0 = _psd_factor(noise.initial(mode.n))
    Lw = _psd_factor(noise.process(mode.n))
    Lv = _psd_factor(noise.measurement(mode.p))
    z0 = _generator(seed, STREAM_X0).standard_normal(mode.n)
    zw = _generator(seed, STREAM_PROCESS).standard_normal((N, mode.n))
    zv = _generator(seed, STREAM_MEASUREMENT).standard_normal((N + 1, mode.p))
    x = np.empty((N + 1, mode.n))
    x[0] = mean0 + L0 @ z0
    for k in range(N):
        x[k + 1] = mode.Ad @ x[k] + mode.Bd @ u[k] + Lw @ zw[k]
    y = x @ mode.C.T + zv @ Lv.T
    return Trajectory(mode=mode.mode, x=x, y=y, u=u, delta_u=du,
                      v_dev=voltage_deviation(mode, x), dt=mode.dt)


def build_filters(mm: MultiModel, **kwargs) -> dict[Mode, SteadyStateFilter]:
    return {m.mode: build_filter(m, mm.noise, **kwargs) for m in (mm.mode_h, mm.mode_f)}


def run_mmkf(truth: Trajectory, mm: MultiModel, filters, delta_u=None,
             detect_threshold: float = 0.95, likelihood: str = "exponential",
             phi_used: float = float("nan"), gamma_used: float | None = None):
    """Run both filters and the posterior update over a measured trajectory.

    Returns the per-step records (posterior after processing ``y_k``) and a
    detection report scored against ``truth.mode``.
    """
    N = truth.N
    du = _perturbation(truth.delta_u if delta_u is None else delta_u, N)
    fh, ff = filters[Mode.FAULT_FREE], filters[Mode.FAULTY]
    h, f = mm.mode_h, mm.mode_f
    uh = h.input_sequence(du) if N else None
    uf = f.input_sequence(du) if N else None
    xh = mm.noise.mean(Mode.FAULT_FREE, h.n)
    xf = mm.noise.mean(Mode.FAULTY, f.n)
    gaussian = likelihood == "gaussian"
    state = PosteriorState(*mm.priors)
    records = []
    detected = None
    for k in range(N + 1):
        y = truth.y[k]
        yh, yf = h.C @ xh, f.C @ xf
        res = residuals(y, yh, yf, fh.SigmaY if gaussian else None,
                        ff.SigmaY if gaussian else None)
        state = posterior_update(state, res, fh.beta, ff.beta, likelihood)
        if detected is None and state[truth.mode] >= detect_threshold:
            detected = k
        if k < N:
            xh, _ = filter_step(fh, h, xh, uh[k], y)
            xf, _ = filter_step(ff, f, xf, uf[k], y)
            step_du = du[k]
        else:
            step_du = np.zeros(2)
        records.append(TraceRecord(
            step=k, time_s=k * truth.dt, y=tuple(y), yhat_h=tuple(yh), yhat_f=tuple(yf),
            alpha_h=res.alphaH, alpha_f=res.alphaF, p_h=state.pH, p_f=state.pF,
            du=tuple(step_du), v_dev=tuple(truth.v_dev[k]),
        ))
    decided = decide(state)
    report = DetectionReport(
        decided_mode=decided, correct=decided is truth.mode, detection_steps=detected,
        tracking_error_rms=tracking_error(truth.v_dev),
        phi_used=phi_used,
        gamma_used=float(np.max(np.abs(du))) if gamma_used is None else gamma_used,
        final_p_true=state[truth.mode],
    )
    return records, report


def trigger_monitor(i_ref, zeta_u, threshold: float | None = None) -> bool:
    """Whether the current reference came within ``threshold`` of the limiter.

    ``threshold`` defaults to 5% of ``|zeta_u|``.
    """
    i_ref = np.asarray(i_ref, float)
    zeta = np.asarray(zeta_u, float)
    if threshold is None:
        threshold = 0.05 * float(np.max(np.abs(zeta)))
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    margin = np.abs(i_ref - zeta)
    return bool(margin.size and np.min(margin) <= threshold)


def tracking_error(voltage, reference=None) -> float:
    """Root-mean-square of ``voltage - reference`` over all samples and axes."""
    v = np.asarray(voltage, float)
    if v.size == 0:
        raise ValueError("empty trace")
    if reference is not None:
        ref = np.asarray(reference, float)
        if ref.shape != v.shape:
            raise ValueError("trace and reference lengths differ")
        v = v - ref
    return float(np.sqrt(np.mean(v * v)))


class Experiment:
    """Nominal detector plus plan design for one parameter set.

    Holds the discretized modes, both steady-state filters and the horizon
    statistics, so that many seeded runs can share them.
    """

    def __init__(self, params: InverterParams, N: int = 8, dt: float = 1e-3,
                 noise: NoiseSpec | None = None, priors=(0.5, 0.5),
                 likelihood: str = "exponential", n_starts: int = 32, max_iters: int = 10_000,
                 optimizer_seed: int = 0, harmonic_orders=(3, 5, 7),
                 small_signal: bool = True):
        self.params = params
        self.N, self.dt = N, dt
        self.small_signal = small_signal
        self.mm = build_multimodel(params, dt, noise, priors, small_signal)
        self.filters = build_filters(self.mm)
        self.stats = horizon_stats(self.mm, N)
        self.likelihood = likelihood
        self.n_starts, self.max_iters = n_starts, max_iters
        self.optimizer_seed = optimizer_seed
        self.harmonic_orders = tuple(harmonic_orders)

    def design(self, gamma: float, method: str = "free") -> PerturbationPlan:
        priors = self.mm.priors
        if method == "zero" or gamma == 0:
            return zero_plan(self.stats, priors, gamma)
        if method == "free":
            return optimize_free(self.stats, priors, gamma, self.n_starts, self.max_iters,
                                 seed=self.optimizer_seed)
        if method == "harmonic":
            basis = HarmonicBasis(orders=self.harmonic_orders,
                                  fundamental_hz=self.params.omega0 / (2 * math.pi),
                                  dt=self.dt, N=self.N)
            return optimize_harmonic(self.stats, priors, gamma, basis,
                                     seed=self.optimizer_seed)
        raise ValueError(f"unknown plan method {method!r}")

    def truth_mode(self, true_mode: Mode, perturbations: dict | None = None) -> DiscreteMode:
        if perturbations:
            mm = build_multimodel(self.params.scaled(**perturbations), self.dt, self.mm.noise,
                                  self.mm.priors, self.small_signal)
        else:
            mm = self.mm
        return mm[Mode(true_mode)]

    def run(self, true_mode: Mode, plan: PerturbationPlan, seed: int,
            detect_threshold: float = 0.95, perturbations: dict | None = None):
        mode = self.truth_mode(true_mode, perturbations)
        truth = simulate_truth(mode, plan, self.mm.noise, self.N, seed)
        return run_mmkf(truth, self.mm, self.filters, plan.delta_u, detect_threshold,
                        self.likelihood, phi_used=plan.phi_achieved, gamma_used=plan.gamma)

    def run_many(self, true_mode: Mode, plan: PerturbationPlan, seeds,
                 detect_threshold: float = 0.95, perturbations: dict | None = None):
        """Reports for each seed; runs are independent and order-free."""
        mode = self.truth_mode(true_mode, perturbations)
        out = []
        for s in seeds:
            truth = simulate_truth(mode, plan, self.mm.noise, self.N, s)
            out.append(run_mmkf(truth, self.mm, self.filters, plan.delta_u, detect_threshold,
                                self.likelihood, phi_used=plan.phi_achieved,
                                gamma_used=plan.gamma)[1])
        return out


def median_detection(reports) -> float:
    """Median detection step; runs that never detect count as infinitely late."""
    steps = [math.inf if r.detection_steps is None else r.detection_steps for r in reports]
    return float(np.median(steps))


def correct_rate(reports) -> float:
    return float(np.mean([r.correct for r in reports]))


@dataclass(frozen=True, eq=False)
class RobustnessReport:
    label: str
    factors: dict
    true_mode: Mode
    correct_rate: float
    median_detection: float
    median_final_p_true: float
    reports: list
    # plan re-designed on the perturbed load (None when R is not perturbed)
    redesigned_plan: PerturbationPlan | None = None

    @property
    def redesigned_inf_profile(self):
        if self.redesigned_plan is None:
            return None
        return np.max(np.abs(self.redesigned_plan.delta_u), axis=1)


def robustness_experiment(exp: Experiment, factor_sets: dict, plan: PerturbationPlan,
                          seeds, true_mode: Mode = Mode.FAULTY,
                          detect_threshold: float = 0.95) -> list[RobustnessReport]:
    """Detector on nominal models, truth on perturbed ones, one report per factor set.

    ``factor_sets`` maps a label to a dict of multiplicative factors, e.g.
    ``{"load+20%": {"R": 1.2}}``. When the load is perturbed the plan is also
    re-designed on the perturbed model.
    """
    out = []
    for label, factors in factor_sets.items():
        for name, value in factors.items():
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"factor {name}={value} must be finite and positive")
        reports = exp.run_many(true_mode, plan, seeds, detect_threshold, factors or None)
        redesigned = None
        if factors.get("R", 1.0) != 1.0:
            pert = Experiment(exp.params.scaled(R=factors["R"]), exp.N, exp.dt, exp.mm.noise,
                              exp.mm.priors, exp.likelihood, exp.n_starts, exp.max_iters,
                              exp.optimizer_seed, exp.harmonic_orders, exp.small_signal)
            redesigned = pert.design(plan.gamma, "free")
        out.append(RobustnessReport(
            label=label, factors=dict(factors), true_mode=Mode(true_mode),
            correct_rate=correct_rate(reports),
            median_detection=median_detection(reports),
            median_final_p_true=float(np.median([r.final_p_true for r in reports])),
            reports=reports, redesigned_plan=redesigned,
        ))
    return out
