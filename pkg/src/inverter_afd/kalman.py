"""Steady-state Kalman filter for one mode."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DiscreteMode, Mode, NoiseSpec


class RiccatiConvergenceError(ArithmeticError):
    def __init__(self, iterations, residual):
        super().__init__(
            f"Riccati iteration did not converge in {iterations} iterations "
            f"(last step {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True, eq=False)
class SteadyStateFilter:
    mode: Mode
    H: np.ndarray
    Sigma: np.ndarray
    SigmaY: np.ndarray
    beta: float


def _innovation_solve(S, rhs):
    # LAPACK gesv: pivoted LU
    return np.linalg.solve(S, rhs)


def riccati_map(Sigma, Ad, C, SigmaW, SigmaV, form="printed"):
    """One application of the Riccati recursion.

    ``form="printed"`` subtracts ``A^T S C^T (C S C^T + V)^-1 C S A``;
    ``form="standard"`` uses the textbook ``A S C^T (...)^-1 C S A^T``.
    The two coincide when ``A`` is symmetric.
    """
    S = C @ Sigma @ C.T + SigmaV
    if form == "printed":
        left = Ad.T @ Sigma @ C.T
        right = C @ Sigma @ Ad
    elif form == "standard":
        left = Ad @ Sigma @ C.T
        right = C @ Sigma @ Ad.T
    else:
        raise ValueError(f"unknown Riccati form {form!r}")
    return Ad @ Sigma @ Ad.T + SigmaW - left @ _innovation_solve(S, right)


def dare_residual(Sigma, Ad, C, SigmaW, SigmaV, form="printed") -> float:
    """Frobenius norm of the fixed-point defect at ``Sigma``."""
    return float(np.linalg.norm(riccati_map(Sigma, Ad, C, SigmaW, SigmaV, form) - Sigma))


def solve_dare(Ad, C, SigmaW, SigmaV, tol=1e-10, max_iter=100_000, form="printed"):
    """Fixed-point Riccati iteration from ``Sigma = SigmaW``.

    Stops once successive iterates differ by less than ``tol`` in Frobenius
    norm and the geometric tail bound ``step * rho / (1 - rho)`` (``rho`` the
    observed contraction ratio) is also below ``tol``, so further iterations
    cannot move the result by ``tol`` or more. Slowly contracting modes need
    many iterations past the first small step.
    """
    Ad, C = np.asarray(Ad, float), np.atleast_2d(np.asarray(C, float))
    SigmaW, SigmaV = np.atleast_2d(SigmaW).astype(float), np.atleast_2d(SigmaV).astype(float)
    Ad = np.atleast_2d(Ad)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not np.allclose(SigmaV, SigmaV.T) or np.linalg.eigvalsh(SigmaV).min() <= 0:
        raise ValueError("SigmaV must be symmetric positive definite")
    Sigma = SigmaW.copy()
    step = prev = np.inf
    for it in range(1, max_iter + 1):
        nxt = riccati_map(Sigma, Ad, C, SigmaW, SigmaV, form)
        nxt = 0.5 * (nxt + nxt.T)
        if not np.all(np.isfinite(nxt)):
            raise RiccatiConvergenceError(it, np.inf)
        step = np.linalg.norm(nxt - Sigma)
        if step == 0.0:
            return nxt
        if step < tol:
            rho = step / prev
            if rho < 1.0 and step * rho / (1.0 - rho) < tol:
                return nxt
            # round-off floor: steps stop shrinking at a few ulps
            if rho >= 1.0 and step <= 64 * np.finfo(float).eps * np.linalg.norm(nxt):
                return nxt
        prev = step
        Sigma = nxt
    raise RiccatiConvergenceError(max_iter, step)


def build_filter(mode: DiscreteMode, noise: NoiseSpec, tol=1e-10, max_iter=100_000,
                 form="printed") -> SteadyStateFilter:
    SigmaW = noise.process(mode.n)
    SigmaV = noise.measurement(mode.p)
    Sigma = solve_dare(mode.Ad, mode.C, SigmaW, SigmaV, tol, max_iter, form)
    C = mode.C
    SigmaY = C @ Sigma @ C.T + SigmaV
    SigmaY = 0.5 * (SigmaY + SigmaY.T)
    if np.linalg.cond(SigmaY) > 1e12:
        raise np.linalg.LinAlgError("output residual covariance is singular")
    sign, logdet = np.linalg.slogdet(SigmaY)
    if sign <= 0:
        raise np.linalg.LinAlgError("output residual covariance is not positive definite")
    H = _innovation_solve(SigmaY, C @ Sigma).T  # Sigma C^T SigmaY^-1, SigmaY symmetric
    return SteadyStateFilter(mode=mode.mode, H=H, Sigma=Sigma, SigmaY=SigmaY,
                             beta=float(np.exp(-0.5 * logdet)))


def filter_step(filt: SteadyStateFilter, mode: DiscreteMode, xhat, u, y):
    """One estimator update; returns ``(xhat_next, yhat)``.

    ``yhat = C xhat`` is the prediction the measurement ``y`` is compared to.
    """
    xhat = np.asarray(xhat, float)
    u = np.asarray(u, float)
    y = np.asarray(y, float)
    if xhat.shape != (mode.n,) or u.shape != (mode.Bd.shape[1],) or y.shape != (mode.p,):
        raise ValueError("dimension mismatch in filter_step")
    yhat = mode.C @ xhat
    return mode.Ad @ xhat + mode.Bd @ u + filt.H @ (y - yhat), yhat
