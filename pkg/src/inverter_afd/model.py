"""Fault-free and faulty inverter models in the dq frame.

Both modes share the input layout ``u = [ref_d, du_d, ref_q, du_q]`` where the
``ref`` entries are the voltage references (fault-free) or the fault current
limiter ceilings (faulty), and ``du`` is the auxiliary perturbation added to
the current-controller reference.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

PERTURBATION_COLUMNS = (1, 3)


class Mode(str, enum.Enum):
    FAULT_FREE = "h"
    FAULTY = "f"


SCALABLE = ("kpV", "kiV", "kpI", "kiI", "R")


@dataclass(frozen=True)
class InverterParams:
    """Physical and controller constants for one inverter.

    Defaults are the controller and circuit values used throughout the
    simulation study. ``vref_d``/``vref_q`` and the limiter ceilings are not
    published; ``zetaU_*`` default to 1.2x the fault-free steady-state current
    ``vref / R``.
    """

    kpV: float = 0.1
    kiV: float = 8.0
    kpI: float = 170.0
    kiI: float = 100.0
    R: float = 10.0
    R1: float = 1.5e-3
    L1: float = 0.3
    Vdc: float = 150.0
    vref_d: float = 60.0
    vref_q: float = 0.0
    zetaU_d: float | None = None
    zetaU_q: float | None = None
    omega0: float = 2 * math.pi * 60.0

    def __post_init__(self):
        for name in ("kpV", "kiV", "kpI", "kiI", "R", "R1", "L1", "Vdc",
                     "vref_d", "vref_q", "omega0"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.L1 <= 0:
            raise ValueError("L1 must be positive")
        if self.Vdc <= 0:
            raise ValueError("Vdc must be positive")
        if self.R < 0:
            raise ValueError("R must be non-negative")
        if self.omega0 <= 0:
            raise ValueError("omega0 must be positive")
        for name in ("zetaU_d", "zetaU_q"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise ValueError(f"{name} must be finite")

    @property
    def steady_current(self) -> tuple[float, float]:
        """Fault-free steady-state current ``vref / R`` on each axis."""
        if self.R == 0:
            raise ValueError("steady-state current undefined for R = 0")
        return self.vref_d / self.R, self.vref_q / self.R

    @property
    def zeta_u(self) -> tuple[float, float]:
        i_d, i_q = (None, None)
        if self.zetaU_d is None or self.zetaU_q is None:
            i_d, i_q = self.steady_current
        zd = self.zetaU_d if self.zetaU_d is not None else 1.2 * i_d
        zq = self.zetaU_q if self.zetaU_q is not None else 1.2 * i_q
        return zd, zq

    def scaled(self, **factors: float) -> "InverterParams":
        """Copy with the named fields multiplied by the given factors."""
        changes = {}
        for name, factor in factors.items():
            if name not in SCALABLE:
                raise ValueError(f"cannot scale {name!r}; choose from {SCALABLE}")
            if not math.isfinite(factor) or factor <= 0:
                raise ValueError(f"factor for {name} must be finite and positive")
            changes[name] = getattr(self, name) * factor
        # pin the limiter to the nominal operating point when the load moves
        if "R" in changes:
            zd, zq = self.zeta_u
            changes.setdefault("zetaU_d", zd)
            changes.setdefault("zetaU_q", zq)
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class ContinuousMode:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    mode: Mode
    baseline_input: np.ndarray
    perturbation_columns: tuple[int, ...] = PERTURBATION_COLUMNS
    # used only to reconstruct the PCC voltage v = R * i from the current output
    load_resistance: float = 0.0
    v_ref: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True, eq=False)
class DiscreteMode:
    Ad: np.ndarray
    Bd: np.ndarray
    C: np.ndarray
    dt: float
    mode: Mode
    baseline_input: np.ndarray
    perturbation_columns: tuple[int, ...] = PERTURBATION_COLUMNS
    load_resistance: float = 0.0
    v_ref: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @property
    def n(self) -> int:
        return self.Ad.shape[0]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def B_pert(self) -> np.ndarray:
        """Columns of ``Bd`` that carry the perturbation."""
        return self.Bd[:, list(self.perturbation_columns)]

    def input_sequence(self, delta_u: np.ndarray) -> np.ndarray:
        """Full input sequence (N x m): baseline plus perturbation columns."""
        delta_u = np.atleast_2d(np.asarray(delta_u, dtype=float))
        u = np.tile(self.baseline_input, (delta_u.shape[0], 1))
        u[:, list(self.perturbation_columns)] += delta_u
        return u

    def small_signal(self) -> "DiscreteMode":
        """Same dynamics with baseline inputs and voltage reference removed.

        States and outputs then read as deviations from the operating point at
        which the limiter engages, where both modes carry the same current.
        """
        return replace(self, baseline_input=np.zeros_like(self.baseline_input),
                       v_ref=np.zeros_like(self.v_ref))


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Noise covariances; scalars expand to ``s * I`` of the needed size."""

    sigma_w: float | np.ndarray = 1e-4
    sigma_v: float | np.ndarray = 1e-4
    sigma_0: float | np.ndarray = 1e-2
    # per-mode initial mean; missing entries mean zero
    x0_mean: dict = field(default_factory=dict)

    def process(self, n: int) -> np.ndarray:
        return _expand(self.sigma_w, n, "sigma_w")

    def measurement(self, p: int) -> np.ndarray:
        return _expand(self.sigma_v, p, "sigma_v")

    def initial(self, n: int) -> np.ndarray:
        return _expand(self.sigma_0, n, "sigma_0")

    def mean(self, mode: Mode, n: int) -> np.ndarray:
        x0 = self.x0_mean.get(mode, self.x0_mean.get(mode.value))
        if x0 is None:
            return np.zeros(n)
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (n,):
            raise ValueError(f"x0 mean for mode {mode.value} must have shape ({n},)")
        return x0


def _expand(spec, n, name):
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        out = float(arr) * np.eye(n)
    elif arr.ndim == 1:
        if arr.shape != (n,):
            raise ValueError(f"{name} diagonal must have length {n}")
        out = np.diag(arr)
    else:
        if arr.shape != (n, n):
            raise ValueError(f"{name} must be {n}x{n}")
        out = arr
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} must be finite")
    if not np.allclose(out, out.T):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(out).min() < -1e-12 * max(1.0, np.abs(out).max()):
        raise ValueError(f"{name} must be positive semidefinite")
    return out


@dataclass(frozen=True, eq=False)
class MultiModel:
    mode_h: DiscreteMode
    mode_f: DiscreteMode
    noise: NoiseSpec
    priors: tuple[float, float] = (0.5, 0.5)

    def __getitem__(self, mode: Mode) -> DiscreteMode:
        return self.mode_h if Mode(mode) is Mode.FAULT_FREE else self.mode_f

    def small_signal(self) -> "MultiModel":
        return replace(self, mode_h=self.mode_h.small_signal(),
                       mode_f=self.mode_f.small_signal())


def _kron2(block: np.ndarray) -> np.ndarray:
    return np.kron(np.eye(2), block)


def build_fault_free(params: InverterParams) -> ContinuousMode:
    """Six-state model with cascaded voltage and current PI loops."""
    kpV, kiV, kpI, kiI = params.kpV, params.kiV, params.kpI, params.kiI
    R, R1, L1, Vdc = params.R, params.R1, params.L1, params.Vdc
    g = Vdc / (2 * L1)
    A = np.array([
        [0.0, -kiI - kiI * kpV, kiI],
        [g, -(kpI * g + R1 / L1 + kpI * kpV * Vdc * R / (2 * L1)), kpI * g],
        [0.0, -kiV * R, 0.0],
    ])
    B = np.array([
        [kiI * kpV, kiI],
        [kpI * kiI * g, kpI * g],
        [kiV, 0.0],
    ])
    C = np.zeros((2, 6))
    C[0, 1] = C[1, 4] = 1.0
    return ContinuousMode(
        A=_kron2(A), B=_kron2(B), C=C, mode=Mode.FAULT_FREE,
        baseline_input=np.array([params.vref_d, 0.0, params.vref_q, 0.0]),
        load_resistance=R, v_ref=np.array([params.vref_d, params.vref_q]),
    )


def build_faulty(params: InverterParams) -> ContinuousMode:
    """Four-state model: the limiter ceiling drives the current loop directly."""
    kpI, kiI, R1, L1, Vdc = params.kpI, params.kiI, params.R1, params.L1, params.Vdc
    g = Vdc / (2 * L1)
    A = np.array([
        [0.0, -kiI],
        [g, -(kpI * g + R1 / L1)],
    ])
    B = np.array([
        [kiI, kiI],
        [kpI * g, kpI * g],
    ])
    C = np.zeros((2, 4))
    C[0, 1] = C[1, 3] = 1.0
    zd, zq = params.zeta_u
    return ContinuousMode(
        A=_kron2(A), B=_kron2(B), C=C, mode=Mode.FAULTY,
        baseline_input=np.array([zd, 0.0, zq, 0.0]),
        load_resistance=params.R, v_ref=np.array([params.vref_d, params.vref_q]),
    )


def discretize(mode: ContinuousMode, dt: float) -> DiscreteMode:
    """Exact zero-order-hold discretization.

    ``expm([[A, B], [0, 0]] * dt)`` holds ``exp(A dt)`` in its top-left block
    and ``int_0^dt exp(A s) ds B`` in its top-right block.
    """
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError("dt must be finite and positive")
    A, B = np.asarray(mode.A, float), np.asarray(mode.B, float)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise ValueError("A and B must be finite")
    n, m = B.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A
    aug[:n, n:] = B
    E = expm(aug * dt)
    if not np.all(np.isfinite(E)):
        raise ArithmeticError("matrix exponential did not converge")
    return DiscreteMode(
        Ad=E[:n, :n], Bd=E[:n, n:], C=np.array(mode.C, float), dt=dt,
        mode=mode.mode, baseline_input=np.array(mode.baseline_input, float),
        perturbation_columns=tuple(mode.perturbation_columns),
        load_resistance=mode.load_resistance, v_ref=np.array(mode.v_ref, float),
    )


def assemble_multimodel(h: DiscreteMode, f: DiscreteMode, noise: NoiseSpec,
                        priors=(0.5, 0.5)) -> MultiModel:
    if h.p != f.p:
        raise ValueError(f"output dimensions differ: {h.p} vs {f.p}")
    if len(h.perturbation_columns) != len(f.perturbation_columns):
        raise ValueError("modes must carry the same number of perturbation inputs")
    p0h, p0f = (float(p) for p in priors)
    if not (0 < p0h < 1 and 0 < p0f < 1):
        raise ValueError("priors must lie strictly inside (0, 1)")
    if abs(p0h + p0f - 1) > 1e-12:
        raise ValueError("priors must sum to 1")
    # validate every covariance against the mode it will be used with
    for mode in (h, f):
        noise.process(mode.n)
        noise.initial(mode.n)
        noise.mean(mode.mode, mode.n)
    sv = noise.measurement(h.p)
    if np.linalg.eigvalsh(sv).min() <= 0:
        raise ValueError("sigma_v must be positive definite")
    return MultiModel(mode_h=h, mode_f=f, noise=noise, priors=(p0h, p0f))


def build_multimodel(params: InverterParams, dt: float = 1e-3,
                     noise: NoiseSpec | None = None, priors=(0.5, 0.5),
                     small_signal: bool = True) -> MultiModel:
    """Both inverter modes, discretized and assembled with ``noise``."""
    mm = assemble_multimodel(
        discretize(build_fault_free(params), dt),
        discretize(build_faulty(params), dt),
        noise if noise is not None else NoiseSpec(),
        priors,
    )
    return mm.small_signal() if small_signal else mm
