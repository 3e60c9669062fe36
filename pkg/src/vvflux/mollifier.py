"""Smooth regularizations of the Heaviside, delta, absolute value and sign.

The transition profile is a quintic polynomial smoothstep: it is C^2, monotone,
its derivative is even, and it integrates the smoothed delta to exactly 1.
All functions accept scalars or numpy arrays and vectorize elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "MollifierFamily",
    "WeightSchedule",
    "heaviside_eps",
    "delta_eps",
    "reg_abs",
    "sgn_eps",
    "sgn_plus",
    "sgn_minus",
    "power_schedule",
    "check_schedule",
]

_TRANSITIONS = ("quintic",)


@dataclass(frozen=True)
class MollifierFamily:
    """A smoothed-Heaviside family H_eps(x) = omega(x/eps) of width eps."""

    eps: float
    transition_kind: str = "quintic"

    def __post_init__(self):
        if not (np.isfinite(self.eps) and self.eps > 0):
            raise ValueError(f"mollifier width must be positive, got {self.eps}")
        if self.transition_kind not in _TRANSITIONS:
            raise ValueError(f"unknown transition profile {self.transition_kind!r}")


def _omega(z):
    # 1/2 + (15/16) z - (5/8) z^3 + (3/16) z^5 on [-1, 1], clamped outside.
    # Written as 0.5 + z * p(z^2) so omega(z) - 1/2 is odd to the bit; the
    # polynomial is evaluated on the clipped argument to avoid overflow in
    # the branch np.where discards.
    zc = np.clip(z, -1.0, 1.0)
    w = zc * zc
    p = 0.9375 - w * (0.625 - w * 0.1875)
    return np.where(z <= -1.0, 0.0, np.where(z >= 1.0, 1.0, 0.5 + zc * p))


def _omega_prime(z):
    # (15/16) (1 - z^2)^2 inside [-1, 1]; even in z by construction.
    zc = np.clip(z, -1.0, 1.0)
    w = 1.0 - zc * zc
    return np.where(np.abs(z) >= 1.0, 0.0, 0.9375 * w * w)


def _check_finite(x, name: str):
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite")


def _maybe_scalar(out, scalar: bool):
    return float(out) if scalar else out


def heaviside_eps(x, fam: MollifierFamily):
    """Smoothed Heaviside: exactly 0 for x <= -eps, exactly 1 for x >= eps."""
    x = np.asarray(x, dtype=float)
    _check_finite(x, "x")
    out = _omega(x / fam.eps)
    return _maybe_scalar(out, x.ndim == 0)


def delta_eps(x, fam: MollifierFamily):
    """Smoothed delta H_eps'(x): even, nonnegative, supported in (-eps, eps)."""
    x = np.asarray(x, dtype=float)
    _check_finite(x, "x")
    out = _omega_prime(x / fam.eps) / fam.eps
    return _maybe_scalar(out, x.ndim == 0)


def reg_abs(x, eps: float):
    """C^2 regularized absolute value: |x| outside (-eps, eps), a sextic inside."""
    if not (np.isfinite(eps) and eps > 0):
        raise ValueError(f"regularization width must be positive, got {eps}")
    x = np.asarray(x, dtype=float)
    z = np.clip(x / eps, -1.0, 1.0)
    w = z * z
    inner = eps * w * (1.875 - w * (1.25 - w * 0.375))
    out = np.where(np.abs(x) >= eps, np.abs(x), inner)
    return _maybe_scalar(out, x.ndim == 0)


def sgn_eps(x, eps: float):
    """Derivative of reg_abs: smooth odd sign approximation, +/-1 outside (-eps, eps)."""
    if not (np.isfinite(eps) and eps > 0):
        raise ValueError(f"regularization width must be positive, got {eps}")
    x = np.asarray(x, dtype=float)
    z = np.clip(x / eps, -1.0, 1.0)
    w = z * z
    inner = z * (3.75 - w * (5.0 - w * 2.25))
    out = np.where(np.abs(x) >= eps, np.sign(x), inner)
    return _maybe_scalar(out, x.ndim == 0)


def sgn_plus(x):
    """One-sided sign: 1 for x > 0, else 0."""
    x = np.asarray(x, dtype=float)
    out = np.where(x > 0.0, 1.0, 0.0)
    return _maybe_scalar(out, x.ndim == 0)


def sgn_minus(x):
    """One-sided sign: -1 for x < 0, else 0."""
    x = np.asarray(x, dtype=float)
    out = np.where(x < 0.0, -1.0, 0.0)
    return _maybe_scalar(out, x.ndim == 0)


@dataclass(frozen=True)
class WeightSchedule:
    """Width schedules for the interface concentration weight.

    a(eps) sets the decay length of the exponential weight, sigma(eps) the
    smoothing width of the regularized absolute value inside it.
    """

    a: Callable[[float], float]
    sigma: Callable[[float], float]
    p: float = 1.0 / 3.0


def power_schedule(p: float = 1.0 / 3.0) -> WeightSchedule:
    """a(eps) = eps**p with 0 < p < 1/2 (so eps / a(eps)^2 -> 0), sigma = eps**(1/4)."""
    if not (0.0 < p < 0.5):
        raise ValueError(f"schedule exponent must lie in (0, 1/2), got {p}")
    return WeightSchedule(a=lambda e: e**p, sigma=lambda e: e**0.25, p=p)


def check_schedule(sched: WeightSchedule, eps_values) -> None:
    """Verify the schedule hypotheses on a decreasing eps sweep.

    Requires a > 0, sigma > 0, a decreasing along the sweep, and the ratio
    eps / a(eps)^2 strictly decreasing as eps decreases.
    """
    eps_values = list(eps_values)
    if any(e <= 0 for e in eps_values):
        raise ValueError("eps sweep values must be positive")
    a_vals = [sched.a(e) for e in eps_values]
    s_vals = [sched.sigma(e) for e in eps_values]
    if any(v <= 0 for v in a_vals) or any(v <= 0 for v in s_vals):
        raise ValueError("schedule must be positive for eps > 0")
    ratios = [e / a**2 for e, a in zip(eps_values, a_vals)]
    for i in range(1, len(eps_values)):
        if not eps_values[i] < eps_values[i - 1]:
            raise ValueError("eps sweep must be strictly decreasing")
        if not ratios[i] < ratios[i - 1]:
            raise ValueError(
                "eps / a(eps)^2 must decrease along the sweep; "
                f"got {ratios[i - 1]} -> {ratios[i]}"
            )
        if not a_vals[i] < a_vals[i - 1]:
            raise ValueError("a(eps) must decrease with eps")
