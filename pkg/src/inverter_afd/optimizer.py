"""Perturbation design: maximize the mode separation over an inf-norm box.

The covariances do not depend on the perturbation, so ``phi`` is a convex
quadratic in the vectorized sequence and its maximum over the box (or over
any polytope) sits at a vertex. The free problem uses multi-start projected
gradient ascent followed by single-coordinate flip polishing; the harmonic
problem uses successive linear maximization over the polytope
``{c : |B c| <= gamma}``.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .horizon import HorizonStats, j_hat, phi


class Method(str, enum.Enum):
    FREE = "free"
    HARMONIC = "harmonic"
    VERTEX_ORACLE = "vertex_oracle"
    ZERO = "zero"


@dataclass(frozen=True, eq=False)
class PerturbationPlan:
    delta_u: np.ndarray  # N x 2, columns d and q
    gamma: float
    phi_achieved: float
    j_hat_achieved: float
    method: Method

    @property
    def N(self) -> int:
        return self.delta_u.shape[0]

    @property
    def inf_norm(self) -> float:
        return float(np.max(np.abs(self.delta_u))) if self.delta_u.size else 0.0


def _plan(stats, priors, gamma, v, method):
    du = np.asarray(v, float).reshape(stats.N, -1).copy()
    ph = phi(stats, du)
    return PerturbationPlan(delta_u=du, gamma=float(gamma), phi_achieved=ph,
                            j_hat_achieved=j_hat(priors, ph), method=method)


def zero_plan(stats: HorizonStats, priors, gamma: float = 0.0) -> PerturbationPlan:
    return _plan(stats, priors, gamma, np.zeros(stats.n_inputs), Method.ZERO)


def _check_gamma(gamma):
    if not (math.isfinite(gamma) and gamma >= 0):
        raise ValueError("gamma must be finite and non-negative")


def _better(val, v, best_val, best_v, rtol=1e-12):
    """Higher objective wins; near-ties go to the lexicographically smaller vector."""
    if best_v is None:
        return True
    tol = rtol * max(1.0, abs(best_val))
    if val > best_val + tol:
        return True
    if val < best_val - tol:
        return False
    for a, b in zip(v, best_v):
        if a != b:
            return a < b
    return False


def _ascend_box(Q, g, x, gamma, max_iters):
    """Projected gradient ascent on ``x^T Q x + g^T x`` over ``[-gamma, gamma]^n``."""
    f = lambda z: z @ Q @ z + g @ z
    fx = f(x)
    for _ in range(max_iters):
        grad = 2.0 * Q @ x + g
        # a projected-gradient fixed point is one for every step length
        if np.array_equal(np.clip(x + grad, -gamma, gamma), x):
            break
        t = 1.0
        improved = False
        while t > 1e-12:
            cand = np.clip(x + t * grad, -gamma, gamma)
            fc = f(cand)
            if fc > fx:
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        gain = fc - fx
        x, fx = cand, fc
        if gain < 1e-12 * max(1.0, abs(fx)):
            break
    return x, fx


def _flip_polish(Q, g, x, gamma):
    """Move to a vertex, then flip single coordinates while that helps."""
    grad = 2.0 * Q @ x + g
    # a convex objective never decreases when an interior coordinate moves to
    # the bound its partial derivative points at
    x = np.where(np.abs(x) >= gamma, np.sign(x) * gamma, np.where(grad >= 0, gamma, -gamma))
    fx = x @ Q @ x + g @ x
    diag = np.diag(Q)
    while True:
        grad = 2.0 * Q @ x + g
        # change of the objective when x_i -> -x_i
        delta = -2.0 * x * grad + 4.0 * diag * x * x
        i = int(np.argmax(delta))
        if delta[i] <= 1e-12 * max(1.0, abs(fx)):
            return x, fx
        x = x.copy()
        x[i] = -x[i]
        fx = x @ Q @ x + g @ x


def optimize_free(stats: HorizonStats, priors, gamma: float, n_starts: int = 32,
                  max_iters: int = 10_000, seed: int = 0) -> PerturbationPlan:
    """Best-of-multistart maximizer of ``phi`` over the box ``|du| <= gamma``."""
    _check_gamma(gamma)
    n = stats.n_inputs
    if gamma == 0:
        return _plan(stats, priors, gamma, np.zeros(n), Method.FREE)
    Q, g, _ = stats.quadratic()
    rng = np.random.default_rng(seed)
    aligned = np.sign(stats.M.T @ stats.solve(stats.d0)) * gamma
    # sign patterns of the dominant curvature directions
    _, vecs = np.linalg.eigh(Q)
    eig_starts = [np.where(vecs[:, -j] >= 0, gamma, -gamma) for j in range(1, min(n, 4) + 1)]
    starts = ([np.zeros(n), aligned] + eig_starts
              + [rng.uniform(-gamma, gamma, n) for _ in range(n_starts)])
    best_v, best_val = None, -np.inf
    for x0 in starts:
        x, _ = _ascend_box(Q, g, x0, gamma, max_iters)
        x, fx = _flip_polish(Q, g, x, gamma)
        if _better(fx, x, best_val, best_v):
            best_v, best_val = x, fx
    # exact zero is always feasible
    if best_val < 0.0:
        best_v = np.zeros(n)
    return _plan(stats, priors, gamma, best_v, Method.FREE)


MAX_ORACLE_INPUTS = 16


def vertex_oracle(stats: HorizonStats, priors, gamma: float) -> PerturbationPlan:
    """Exhaustive evaluation of ``phi`` at all box vertices and at zero."""
    _check_gamma(gamma)
    n = stats.n_inputs
    if n > MAX_ORACLE_INPUTS:
        raise ValueError(f"vertex enumeration limited to {MAX_ORACLE_INPUTS} inputs, got {n}")
    best_v, best_val = np.zeros(n), phi(stats, np.zeros(n))
    if gamma == 0:
        return _plan(stats, priors, gamma, best_v, Method.VERTEX_ORACLE)
    # evaluated straight from the definition, one vertex at a time
    for signs in itertools.product((-1.0, 1.0), repeat=n):
        v = gamma * np.array(signs)
        val = phi(stats, v)
        if _better(val, v, best_val, best_v):
            best_v, best_val = v, val
    return _plan(stats, priors, gamma, best_v, Method.VERTEX_ORACLE)


@dataclass(frozen=True, eq=False)
class HarmonicBasis:
    """Sampled sinusoids at integer multiples of the fundamental.

    Coefficients are ordered ``[axis][order][sin, cos]``; the basis maps them
    to the vectorized (row-major ``N x 2``) perturbation.
    """

    orders: tuple[int, ...] = (3, 5, 7)
    fundamental_hz: float = 60.0
    dt: float = 1e-3
    N: int = 8

    def __post_init__(self):
        if not self.orders:
            raise ValueError("harmonic set is empty")
        if self.N < 1 or self.dt <= 0:
            raise ValueError("basis needs N >= 1 and dt > 0")

    @property
    def n_coeffs(self) -> int:
        return 2 * 2 * len(self.orders)

    @property
    def matrix(self) -> np.ndarray:
        t = np.arange(self.N) * self.dt
        per_axis = []
        for h in self.orders:
            w = 2 * math.pi * h * self.fundamental_hz
            per_axis += [np.sin(w * t), np.cos(w * t)]
        per_axis = np.column_stack(per_axis)  # N x 2|orders|
        k = per_axis.shape[1]
        out = np.zeros((2 * self.N, 2 * k))
        out[0::2, :k] = per_axis  # d axis
        out[1::2, k:] = per_axis  # q axis
        return out


def _lp_vertex(direction, B, gamma):
    """Maximize ``direction^T c`` subject to ``|B c| <= gamma``."""
    n = B.shape[1]
    res = linprog(-direction, A_ub=np.vstack([B, -B]), b_ub=np.full(2 * B.shape[0], gamma),
                  bounds=[(None, None)] * n, method="highs")
    if res.status != 0:
        raise ArithmeticError(f"harmonic LP failed: {res.message}")
    return res.x


def optimize_harmonic(stats: HorizonStats, priors, gamma: float,
                      basis: HarmonicBasis | None = None, n_starts: int = 16,
                      max_iters: int = 200, seed: int = 0) -> PerturbationPlan:
    """Maximize ``phi`` over perturbations spanned by ``basis``.

    Each iteration maximizes the linearization of ``phi`` over the feasible
    polytope; for a convex objective this never decreases ``phi``.
    """
    _check_gamma(gamma)
    if basis is None:
        basis = HarmonicBasis(N=stats.N)
    B = basis.matrix
    if B.shape[0] != stats.n_inputs:
        raise ValueError("basis does not match the horizon")
    if gamma == 0:
        return _plan(stats, priors, gamma, np.zeros(stats.n_inputs), Method.HARMONIC)
    Q, g, _ = stats.quadratic()
    Qc = B.T @ Q @ B
    gc = B.T @ g
    f = lambda c: c @ Qc @ c + gc @ c
    rng = np.random.default_rng(seed)
    starts = [np.zeros(B.shape[1])]
    for _ in range(n_starts):
        c = rng.standard_normal(B.shape[1])
        peak = np.max(np.abs(B @ c))
        starts.append(c * gamma / peak if peak > 0 else c)
    best_v, best_val = np.zeros(stats.n_inputs), 0.0
    for c in starts:
        fc = f(c)
        for _ in range(max_iters):
            grad = 2.0 * Qc @ c + gc
            if not np.any(grad):
                break
            nxt = _lp_vertex(grad, B, gamma)
            fn = f(nxt)
            if fn <= fc + 1e-12 * max(1.0, abs(fc)):
                break
            c, fc = nxt, fn
        v = B @ c
        peak = np.max(np.abs(v))
        if peak > gamma:  # LP round-off
            v = v * (gamma / peak)
        val = v @ Q @ v + g @ v
        if _better(val, v, best_val, best_v):
            best_v, best_val = v, val
    return _plan(stats, priors, gamma, best_v, Method.HARMONIC)
