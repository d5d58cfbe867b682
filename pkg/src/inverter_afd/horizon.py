"""Output statistics of both modes stacked over a detection horizon.

Outputs are stacked for ``k = 0..N`` (``p * (N + 1)`` entries) and the
perturbation is vectorized row-major from an ``N x 2`` array, i.e.
``[du_0^d, du_0^q, du_1^d, ...]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .model import DiscreteMode, Mode, MultiModel


@dataclass(frozen=True, eq=False)
class HorizonStats:
    N: int
    ybar_h: np.ndarray
    ybar_f: np.ndarray
    sigma_y_h: np.ndarray
    sigma_y_f: np.ndarray
    d0: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        S = self.sigma_y_h + self.sigma_y_f
        try:
            chol = la.cho_factor(S, lower=True)
        except la.LinAlgError as exc:
            raise np.linalg.LinAlgError("covariance sum is singular") from exc
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_logdet_term", _logdet_term(self.sigma_y_h, self.sigma_y_f, chol))

    @property
    def n_inputs(self) -> int:
        return self.M.shape[1]

    @property
    def covariance_sum(self) -> np.ndarray:
        return self.sigma_y_h + self.sigma_y_f

    @property
    def logdet_term(self) -> float:
        """The perturbation-independent part of ``phi``."""
        return self._logdet_term

    def difference(self, delta_u) -> np.ndarray:
        return self.d0 + self.M @ _vec(delta_u, self.n_inputs)

    def solve(self, rhs) -> np.ndarray:
        """``(Sigma_h + Sigma_f)^-1 rhs``."""
        return la.cho_solve(self._chol, rhs)

    def quadratic(self):
        """``(Q, g, c)`` with ``phi(v) = v^T Q v + g^T v + c`` for vectorized ``v``."""
        SiM = self.solve(self.M)
        Q = 0.25 * self.M.T @ SiM
        g = 0.5 * SiM.T @ self.d0
        c = 0.25 * self.d0 @ self.solve(self.d0) + self._logdet_term
        return 0.5 * (Q + Q.T), g, c


def _vec(delta_u, n_inputs):
    v = np.asarray(delta_u, dtype=float).reshape(-1)
    if v.shape != (n_inputs,):
        raise ValueError(f"perturbation must have {n_inputs} entries, got {v.size}")
    return v


def _logdet_chol(chol):
    return 2.0 * float(np.sum(np.log(np.diag(chol[0]))))


def _logdet_term(sh, sf, chol_sum):
    n = sh.shape[0]
    ld_half = _logdet_chol(chol_sum) - n * math.log(2.0)
    ld_h = _logdet_chol(la.cho_factor(sh, lower=True))
    ld_f = _logdet_chol(la.cho_factor(sf, lower=True))
    return 0.5 * (ld_half - 0.5 * (ld_h + ld_f))


def mean_state_trajectory(mode: DiscreteMode, x0_mean, inputs) -> np.ndarray:
    """Mean states ``x_0..x_N`` under the full input sequence ``inputs`` (N x m)."""
    u = np.atleast_2d(np.asarray(inputs, dtype=float))
    x0 = np.asarray(x0_mean, dtype=float)
    if x0.shape != (mode.n,) or u.shape[1] != mode.Bd.shape[1]:
        raise ValueError("dimension mismatch")
    if u.shape[0] < 1:
        raise ValueError("need at least one input step")
    out = np.empty((u.shape[0] + 1, mode.n))
    out[0] = x0
    for k in range(u.shape[0]):
        out[k + 1] = mode.Ad @ out[k] + mode.Bd @ u[k]
    return out


def state_covariance(mode: DiscreteMode, Sigma0, SigmaW, k: int, l: int) -> np.ndarray:
    """Cross-time state covariance ``E[(x_k - xbar_k)(x_l - xbar_l)^T]`` for ``k >= l``.

    Direct evaluation of
    ``A^k S0 (A^l)^T + sum_{j=1..l} A^(k-j) W (A^(l-j))^T``.
    """
    if l < 0 or k < 0:
        raise ValueError("time indices must be non-negative")
    if k < l:
        raise ValueError("requires k >= l; use the transpose of (l, k)")
    A = mode.Ad
    mp = np.linalg.matrix_power
    out = mp(A, k) @ Sigma0 @ mp(A, l).T
    for j in range(1, l + 1):
        out = out + mp(A, k - j) @ SigmaW @ mp(A, l - j).T
    return out


def output_covariance_block(mode: DiscreteMode, Sigma0, SigmaW, SigmaV, N: int) -> np.ndarray:
    """Stacked output covariance over ``k, l = 0..N``.

    Block ``(k, l)`` is ``C Sigma_x(k, l) C^T``, plus ``SigmaV`` when ``k == l``.
    """
    if N < 0:
        raise ValueError("N must be non-negative")
    A, C = mode.Ad, mode.C
    p = mode.p
    # diagonal state covariances by the Lyapunov recursion
    P = [np.asarray(Sigma0, float)]
    for _ in range(N):
        P.append(A @ P[-1] @ A.T + SigmaW)
    out = np.zeros((p * (N + 1), p * (N + 1)))
    for l in range(N + 1):
        cross = P[l]
        for k in range(l, N + 1):
            blk = C @ cross @ C.T
            if k == l:
                blk = blk + SigmaV
            out[k * p:(k + 1) * p, l * p:(l + 1) * p] = blk
            if k != l:
                out[l * p:(l + 1) * p, k * p:(k + 1) * p] = blk.T
            cross = A @ cross
    out = 0.5 * (out + out.T)
    if np.linalg.eigvalsh(out).min() < -1e-10 * max(1.0, np.abs(out).max()):
        raise np.linalg.LinAlgError("output covariance is indefinite")
    return out


def _markov_matrix(mode: DiscreteMode, N: int) -> np.ndarray:
    """Map from vectorized perturbation (2N) to stacked outputs (p(N+1))."""
    p, q = mode.p, len(mode.perturbation_columns)
    Bp = mode.B_pert
    G = np.zeros((p * (N + 1), q * N))
    CA = mode.C.copy()  # C A^(k-1-j)
    blocks = []
    for _ in range(N):
        blocks.append(CA @ Bp)
        CA = CA @ mode.Ad
    for k in range(1, N + 1):
        for j in range(k):
            G[k * p:(k + 1) * p, j * q:(j + 1) * q] = blocks[k - 1 - j]
    return G


def mean_output(mode: DiscreteMode, x0_mean, N: int, delta_u=None) -> np.ndarray:
    """Stacked mean outputs ``ybar_0..ybar_N`` (flattened)."""
    if delta_u is None:
        delta_u = np.zeros((N, len(mode.perturbation_columns)))
    xs = mean_state_trajectory(mode, x0_mean, mode.input_sequence(delta_u))
    return (xs @ mode.C.T).reshape(-1)


def mean_difference_map(mm: MultiModel, N: int, x0_mean=None):
    """``(d0, M)`` with ``ybar_h - ybar_f = d0 + M vec(du)`` exactly.

    ``x0_mean`` optionally overrides the noise spec's per-mode initial means;
    it is a mapping ``Mode -> vector``.
    """
    h, f = mm.mode_h, mm.mode_f
    if h.p != f.p or len(h.perturbation_columns) != len(f.perturbation_columns):
        raise ValueError("modes must share output and perturbation dimensions")
    if N < 1:
        raise ValueError("N must be at least 1")
    x0h, x0f = _initial_means(mm, x0_mean)
    d0 = mean_output(h, x0h, N) - mean_output(f, x0f, N)
    M = _markov_matrix(h, N) - _markov_matrix(f, N)
    return d0, M


def _initial_means(mm, x0_mean):
    out = []
    for mode in (mm.mode_h, mm.mode_f):
        if x0_mean is not None and mode.mode in x0_mean:
            x0 = np.asarray(x0_mean[mode.mode], float)
            if x0.shape != (mode.n,):
                raise ValueError("initial mean has the wrong dimension")
        else:
            x0 = mm.noise.mean(mode.mode, mode.n)
        out.append(x0)
    return out


def horizon_stats(mm: MultiModel, N: int, x0_mean=None) -> HorizonStats:
    x0h, x0f = _initial_means(mm, x0_mean)
    noise = mm.noise
    cov = {}
    for mode in (mm.mode_h, mm.mode_f):
        cov[mode.mode] = output_covariance_block(
            mode, noise.initial(mode.n), noise.process(mode.n), noise.measurement(mode.p), N)
    d0, M = mean_difference_map(mm, N, x0_mean)
    return HorizonStats(
        N=N,
        ybar_h=mean_output(mm.mode_h, x0h, N),
        ybar_f=mean_output(mm.mode_f, x0f, N),
        sigma_y_h=cov[Mode.FAULT_FREE], sigma_y_f=cov[Mode.FAULTY],
        d0=d0, M=M,
    )


def phi(stats: HorizonStats, delta_u=None) -> float:
    """Bhattacharyya distance between the two modes' stacked output laws."""
    if delta_u is None:
        d = stats.d0
    else:
        d = stats.difference(delta_u)
    if not np.all(np.isfinite(d)):
        raise ValueError("non-finite perturbation")
    return 0.25 * float(d @ stats.solve(d)) + stats.logdet_term


def j_hat(priors, phi_value: float) -> float:
    """Upper bound ``sqrt(p_h p_f) exp(-phi)`` on the misidentification rate."""
    p0h, p0f = priors
    return math.sqrt(p0h * p0f) * math.exp(-phi_value)
