"""Friction laws ``d(m)`` for the damped wave system.

Three families are supported::

    linear        d(m) = beta * m
    power_abs     d(m) = alpha * |m|**sigma * m
    affine_power  d(m) = beta * m + alpha * |m|**sigma * m

All are odd and monotone, with ``d(0) = 0``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

FAMILIES = ("linear", "power_abs", "affine_power")


class DampingWarning(UserWarning):
    """Raised (as a warning) when a law violates the strict positivity of ``d'``."""


@dataclass(frozen=True)
class DampingModel:
    family: str = "power_abs"
    alpha: float = 1.0
    beta: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown damping family {self.family!r}; expected one of {FAMILIES}")
        for name in ("alpha", "beta", "sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"damping parameter {name} must be nonnegative")

    @classmethod
    def linear(cls, beta):
        return cls("linear", alpha=0.0, beta=beta, sigma=0.0)

    @classmethod
    def power_abs(cls, alpha=1.0, sigma=1.0):
        return cls("power_abs", alpha=alpha, beta=0.0, sigma=sigma)

    @classmethod
    def affine_power(cls, beta, alpha, sigma):
        return cls("affine_power", alpha=alpha, beta=beta, sigma=sigma)

    @classmethod
    def from_config(cls, cfg):
        cfg = dict(cfg)
        family = cfg.pop("family", "power_abs")
        if family == "linear":
            return cls.linear(float(cfg.get("beta", 1.0)))
        if family == "power_abs":
            return cls.power_abs(float(cfg.get("alpha", 1.0)), float(cfg.get("sigma", 1.0)))
        if family == "affine_power":
            return cls.affine_power(
                float(cfg.get("beta", 0.0)), float(cfg.get("alpha", 1.0)), float(cfg.get("sigma", 1.0))
            )
        raise ValueError(f"unknown damping family {family!r}; expected one of {FAMILIES}")

    def to_config(self):
        return {"family": self.family, "alpha": self.alpha, "beta": self.beta, "sigma": self.sigma}

    @property
    def _b(self):
        return 0.0 if self.family == "power_abs" else self.beta

    @property
    def _a(self):
        return 0.0 if self.family == "linear" else self.alpha

    def __call__(self, m):
        return evaluate(self, m)

    def derivative(self, m):
        return evaluate_derivative(self, m)


def evaluate(model: DampingModel, m):
    """``d(m)``, elementwise on arrays."""
    m = np.asarray(m, dtype=float)
    out = model._b * m
    if model._a:
        out = out + model._a * np.abs(m) ** model.sigma * m
    return out if out.ndim else float(out)


def evaluate_derivative(model: DampingModel, m):
    """``d'(m) = beta + alpha * (sigma + 1) * |m|**sigma``.

    For ``0 < sigma < 1`` the value at ``m = 0`` is the one-sided limit ``beta``.
    """
    m = np.asarray(m, dtype=float)
    out = np.full(m.shape, model._b)
    if model._a:
        absm = np.abs(m)
        if model.sigma == 0:
            out = out + model._a
        else:
            out = out + model._a * (model.sigma + 1.0) * absm**model.sigma
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Assumption1Report:
    satisfies_d0_positive: bool
    d0: float
    d1: float
    d2: float
    sigma: float
    c1_smooth: bool
    m_bound: float


def check_assumption1(model: DampingModel, m_bound: float, *, warn=True) -> Assumption1Report:
    """Certify the monotonicity and growth constants of ``d`` on ``[-m_bound, m_bound]``.

    ``d'`` is even and nondecreasing in ``|m|``, so its infimum is ``d'(0) = beta``.
    The growth bound ``|d'(m)| <= d1 + d2 |m|**sigma`` holds with ``d1 = beta`` and
    ``d2 = alpha * (sigma + 1)``.
    """
    if not m_bound > 0:
        raise ValueError("m_bound must be positive")
    d0 = float(evaluate_derivative(model, 0.0))
    d1 = model._b
    d2 = model._a * (model.sigma + 1.0) if model.sigma > 0 else 0.0
    if model._a and model.sigma == 0:
        # alpha * |m|**0 * m = alpha * m: a linear term
        d0 = d1 = model._b + model._a
        d2 = 0.0
    smooth = not (model._a and 0 < model.sigma < 1)
    ok = d0 > 0
    if warn and not ok:
        warnings.warn(
            f"damping {model.family} has d'(0) = {d0:g}; strict monotonicity d' > d0 > 0 fails",
            DampingWarning,
            stacklevel=2,
        )
    return Assumption1Report(ok, d0, d1, d2, model.sigma, smooth, float(m_bound))
