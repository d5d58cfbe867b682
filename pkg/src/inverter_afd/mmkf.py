"""Two-hypothesis posterior tracking driven by filter residuals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Mode

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class PosteriorState:
    pH: float
    pF: float

    def __post_init__(self):
        if not (0 <= self.pH <= 1 and 0 <= self.pF <= 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(self.pH + self.pF - 1) > 1e-9:
            raise ValueError("probabilities must sum to 1")

    def __getitem__(self, mode: Mode) -> float:
        return self.pH if Mode(mode) is Mode.FAULT_FREE else self.pF


@dataclass(frozen=True)
class Residuals:
    alphaH: float
    alphaF: float


def _norm(r, sigma_y):
    if sigma_y is None:
        return float(np.sqrt(np.sum(r * r)))
    # Mahalanobis length, for the Gaussian likelihood
    return float(np.sqrt(r @ np.linalg.solve(sigma_y, r)))


def residuals(y, yhat_h, yhat_f, sigma_y_h=None, sigma_y_f=None) -> Residuals:
    """Residual norms ``||y - yhat||`` for both filters.

    Euclidean by default; pass the residual covariances to get the whitened
    norm used by the Gaussian likelihood.
    """
    y, yhat_h, yhat_f = (np.atleast_1d(np.asarray(a, float)) for a in (y, yhat_h, yhat_f))
    if not (y.shape == yhat_h.shape == yhat_f.shape):
        raise ValueError("output dimension mismatch")
    return Residuals(_norm(y - yhat_h, sigma_y_h), _norm(y - yhat_f, sigma_y_f))


def _log(p):
    return math.log(p) if p > 0 else -math.inf


def posterior_update(state: PosteriorState, res: Residuals, betaH: float, betaF: float,
                     likelihood: str = "exponential", floor: float = PROB_FLOOR) -> PosteriorState:
    """Bayes update with per-mode likelihood ``beta * exp(-alpha)``.

    ``likelihood="gaussian"`` uses ``beta * exp(-alpha**2 / 2)`` instead.
    Evaluated in the log domain; the result is clipped to ``[floor, 1-floor]``
    so that neither hypothesis is ever absorbed.
    """
    if betaH <= 0 or betaF <= 0:
        raise ValueError("beta must be positive")
    if likelihood == "exponential":
        eh, ef = -res.alphaH, -res.alphaF
    elif likelihood == "gaussian":
        eh, ef = -0.5 * res.alphaH ** 2, -0.5 * res.alphaF ** 2
    else:
        raise ValueError(f"unknown likelihood {likelihood!r}")
    lh = math.log(betaH) + eh + _log(state.pH)
    lf = math.log(betaF) + ef + _log(state.pF)
    if not (math.isfinite(lh) or math.isfinite(lf)):
        raise FloatingPointError("both mode likelihoods vanished")
    top = max(lh, lf)
    wh, wf = math.exp(lh - top), math.exp(lf - top)
    # floor the smaller probability so its complement cannot round past 1 - floor
    if wh <= wf:
        pH = max(wh / (wh + wf), floor)
        return PosteriorState(float(pH), float(1.0 - pH))
    pF = max(wf / (wh + wf), floor)
    return PosteriorState(float(1.0 - pF), float(pF))


def decide(state: PosteriorState) -> Mode:
    """Mode with the larger posterior; exact ties go to fault-free."""
    return Mode.FAULTY if state.pF > state.pH else Mode.FAULT_FREE
