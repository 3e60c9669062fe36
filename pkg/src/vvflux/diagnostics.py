"""Quantitative functionals on solver trajectories.

Covers the L1 norm and signed mass, the worst positive excursion, the
exponentially weighted interface concentration integral and its running time
integral, signed mass inside slabs around the interface, and the audit of the
per-step conservation ledger.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import InterfaceSurface, offset_field, signed_offset
from .mollifier import WeightSchedule, reg_abs
from .solver import Field, Grid, LedgerEntry

__all__ = [
    "DiagnosticsSeries",
    "FitResult",
    "SeriesCollector",
    "l1_norm",
    "total_mass",
    "positivity_violation",
    "concentration_weight",
    "weight_field",
    "band_mask",
    "band_mass",
    "concentration_series",
    "cumulative_trapezoid",
    "fit_quadratic_decay",
    "ledger_check",
]


def l1_norm(field: Field) -> float:
    """Discrete L1 norm: sum of |u| times cell volume."""
    return float(np.sum(np.abs(field.values))) * field.grid.cell_volume


def total_mass(field: Field) -> float:
    return float(np.sum(field.values)) * field.grid.cell_volume


def positivity_violation(field: Field) -> float:
    """Worst positive excursion, 0 for sign-correct fields."""
    return max(0.0, float(np.max(field.values)))


def concentration_weight(x, eps: float, sched: WeightSchedule,
                         surf: InterfaceSurface) -> float:
    """exp(-|s / a(eps)|_sigma(eps)) with s the signed interface offset of x."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    s = signed_offset(np.asarray(x, dtype=float), surf)
    return float(np.exp(-reg_abs(s / sched.a(eps), sched.sigma(eps))))


def weight_field(grid: Grid, eps: float, sched: WeightSchedule,
                 surf: InterfaceSurface) -> np.ndarray:
    """Concentration weight evaluated at every cell center."""
    s = np.broadcast_to(offset_field(surf, grid.cell_mesh()), grid.shape)
    return np.exp(-reg_abs(s / sched.a(eps), sched.sigma(eps)))


def band_mask(grid: Grid, eta: float, surf: InterfaceSurface) -> np.ndarray:
    """Boolean cell mask of the slab |x1 - phi(xhat)| < eta."""
    if eta <= 0:
        raise ValueError("band half-width must be positive")
    s = np.broadcast_to(offset_field(surf, grid.cell_mesh()), grid.shape)
    return np.abs(s) < eta


def band_mass(field: Field, eta: float, surf: InterfaceSurface) -> float:
    """Signed mass inside the slab |x1 - phi(xhat)| < eta."""
    mask = band_mask(field.grid, eta, surf)
    return float(np.sum(field.values[mask])) * field.grid.cell_volume


def cumulative_trapezoid(times, values) -> np.ndarray:
    """Running trapezoid integral, anchored at 0 for the first sample."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    out = np.zeros_like(v)
    if len(t) > 1:
        out[1:] = np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))
    return out


def concentration_series(trajectory: Sequence[Field], eps: float,
                         sched: WeightSchedule, surf: InterfaceSurface):
    """Weighted-mass samples W(t) and their running integral I(t) for a trajectory."""
    if len(trajectory) < 2:
        raise ValueError("need at least two snapshots")
    grid = trajectory[0].grid
    w = weight_field(grid, eps, sched, surf)
    times = np.array([f.t for f in trajectory])
    W = np.array([float(np.sum(f.values * w)) * grid.cell_volume for f in trajectory])
    return times, W, cumulative_trapezoid(times, W)


@dataclass(frozen=True)
class FitResult:
    beta: float
    r_squared: float | None     # None when the fit is degenerate
    n_samples: int
    window: tuple


def fit_quadratic_decay(times, values, t_start: float) -> FitResult:
    """Least-squares fit of I(t) ~ -beta t^2 through the origin on [t_start, end].

    r_squared compares the fitted model with the sample mean; an all-zero
    window returns beta = 0 with r_squared marked undefined.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    sel = t >= t_start - 1e-12
    t, v = t[sel], v[sel]
    if t.size < 5:
        raise ValueError("need at least 5 samples in the fit window")
    if t[0] <= 0:
        raise ValueError("fit window must start at positive time")
    t2 = t * t
    denom = float(np.sum(t2 * t2))
    beta = -float(np.sum(v * t2)) / denom
    if np.all(v == 0.0):
        return FitResult(beta=0.0, r_squared=None, n_samples=int(t.size),
                         window=(float(t[0]), float(t[-1])))
    ss_res = float(np.sum((v + beta * t2) ** 2))
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else None
    return FitResult(beta=beta, r_squared=r2, n_samples=int(t.size),
                     window=(float(t[0]), float(t[-1])))


def ledger_check(ledger: Sequence[LedgerEntry]) -> float:
    """Worst relative mismatch between mass change and boundary fluxes."""
    if not ledger:
        raise ValueError("empty ledger")
    worst = 0.0
    for e in ledger:
        dmass = e.mass_after - e.mass_before
        flux = e.dt * (e.boundary_advective + e.boundary_diffusive)
        resid = abs(dmass + flux) / max(abs(dmass), abs(flux), 1e-300)
        worst = max(worst, resid)
    return worst


@dataclass
class DiagnosticsSeries:
    """Per-probe diagnostics of one run plus the ledger audit result."""

    times: np.ndarray
    l1: np.ndarray
    mass: np.ndarray
    max_u: np.ndarray
    W: np.ndarray
    I: np.ndarray
    band: dict                  # eta -> signed band mass per probe
    ledger_max_rel: float

    def write_csv(self, path) -> None:
        etas = sorted(self.band)
        header = "t,l1,mass,max_u,W,I," + ",".join(f"band_mass_{e:g}" for e in etas)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for j in range(len(self.times)):
                row = [self.times[j], self.l1[j], self.mass[j], self.max_u[j],
                       self.W[j], self.I[j]] + [self.band[e][j] for e in etas]
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
            fh.write(f"# ledger_max_rel={repr(float(self.ledger_max_rel))}\n")


class SeriesCollector:
    """Probe callback that accumulates the standard diagnostics row per snapshot.

    Precomputes the concentration weight and band masks for the grid so the
    per-probe cost is a handful of masked reductions.
    """

    def __init__(self, grid: Grid, surf: InterfaceSurface, eps: float,
                 sched: WeightSchedule, etas: Sequence[float]):
        self.grid = grid
        self.etas = list(etas)
        self._w = weight_field(grid, eps, sched, surf)
        self._masks = {eta: band_mask(grid, eta, surf) for eta in self.etas}

    def __call__(self, field: Field):
        u = field.values
        vol = self.grid.cell_volume
        row = {
            "t": field.t,
            "l1": float(np.sum(np.abs(u))) * vol,
            "mass": float(np.sum(u)) * vol,
            "max_u": float(np.max(u)),
            "W": float(np.sum(u * self._w)) * vol,
        }
        for eta, m in self._masks.items():
            row[f"band_{eta}"] = float(np.sum(u[m])) * vol
        return row

    def assemble(self, times, rows, ledger) -> DiagnosticsSeries:
        times = np.asarray(times, dtype=float)
        W = np.array([r["W"] for r in rows])
        return DiagnosticsSeries(
            times=times,
            l1=np.array([r["l1"] for r in rows]),
            mass=np.array([r["mass"] for r in rows]),
            max_u=np.array([r["max_u"] for r in rows]),
            W=W,
            I=cumulative_trapezoid(times, W),
            band={eta: np.array([r[f"band_{eta}"] for r in rows]) for eta in self.etas},
            ledger_max_rel=ledger_check(ledger) if ledger else 0.0,
        )
