"""Left/right flux pairs, the mollified combined flux, and hypothesis validators.

Flux components are callables f(xhat, lam) where xhat is a tuple of d-1
broadcastable coordinate arrays (the point with the k-th component removed)
and lam is the conserved quantity. Fixtures also carry analytic envelopes
over lam and an optional SharedProfile structure hint that lets the solver
evaluate the lam-dependent part once per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .geometry import Box, InterfaceSurface, signed_offset
from .mollifier import MollifierFamily, heaviside_eps

__all__ = [
    "FluxPair",
    "SharedProfile",
    "NonAlignmentEntry",
    "NonAlignmentReport",
    "make_flux",
    "combined_flux",
    "flux_u_derivative",
    "nonalignment_margin",
    "nonalignment_report",
    "zero_trace_gap",
    "riemann_reduce",
]

LAMBDA_MAX = 1000.0
N_LAMBDA = 2001
N_TRANSVERSE = 201
MARGIN_TOL = 1e-6


@dataclass(frozen=True)
class SharedProfile:
    """Structure hint: f_{L,R}(xhat, lam) = transverse(xhat) * (base(lam) + shift_{L,R}).

    base and dbase are shared between the two sides, so a stepper can evaluate
    them once per state array and assemble both one-sided fluxes from it.
    """

    base: Callable
    dbase: Callable
    transverse: Callable
    shift_left: float
    shift_right: float


@dataclass(frozen=True)
class FluxPair:
    """Per-axis left/right flux components with optional analytic extras.

    All per-axis tuples are indexed 0-based (axis k of the equation is entry
    k-1). Envelopes are suprema/infima over lam in R as functions of xhat;
    zero_trace maps xhat to the pair (f_L(xhat, 0), f_R(xhat, 0)). bound is a
    global magnitude bound, or None for deliberately unbounded test fluxes.
    """

    dim: int
    f_left: tuple
    f_right: tuple
    df_left: tuple = None
    df_right: tuple = None
    sup_left: tuple = None
    inf_left: tuple = None
    sup_right: tuple = None
    inf_right: tuple = None
    zero_trace: tuple = None
    bound: float | None = None
    fused: tuple = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        for attr in ("f_left", "f_right"):
            if len(getattr(self, attr)) != self.dim:
                raise ValueError(f"{attr} needs one component per axis")
        for attr in ("df_left", "df_right", "sup_left", "inf_left", "sup_right",
                     "inf_right", "zero_trace", "fused"):
            if getattr(self, attr) is None:
                object.__setattr__(self, attr, (None,) * self.dim)
            elif len(getattr(self, attr)) != self.dim:
                raise ValueError(f"{attr} needs one entry per axis")

    def has_envelopes(self, k: int) -> bool:
        i = k - 1
        return all(t[i] is not None for t in
                   (self.sup_left, self.inf_left, self.sup_right, self.inf_right))


def _const(value: float):
    def f(xhat, _v=value):
        if len(xhat) == 0:
            return _v
        return _v * np.ones_like(np.asarray(xhat[0], dtype=float))
    return f


def make_flux(name: str, dim: int, gap: float = 4.0, speed: float = 1.0) -> FluxPair:
    """Build a registry flux pair.

    "arctan_gap" (d = 1): f_{L,R}(lam) = arctan(lam) -/+ gap/2.
    "gauss_arctan" (d >= 2): f^k_{L,R}(xhat, lam) = exp(-|xhat|^2) (arctan(lam) -/+ gap/2).
    "linear": f_L = f_R = speed * lam; unbounded, for solver verification only.
    """
    half = gap / 2.0
    if name == "arctan_gap":
        if dim != 1:
            raise ValueError("arctan_gap is a one-dimensional fixture")
        fL = lambda xhat, lam: np.arctan(lam) - half
        fR = lambda xhat, lam: np.arctan(lam) + half
        df = lambda xhat, lam: 1.0 / (1.0 + np.asarray(lam, dtype=float) ** 2)
        prof = SharedProfile(base=np.arctan,
                             dbase=lambda lam: 1.0 / (1.0 + np.asarray(lam, dtype=float) ** 2),
                             transverse=_const(1.0),
                             shift_left=-half, shift_right=half)
        return FluxPair(
            dim=1, f_left=(fL,), f_right=(fR,), df_left=(df,), df_right=(df,),
            sup_left=(_const(math.pi / 2 - half),),
            inf_left=(_const(-math.pi / 2 - half),),
            sup_right=(_const(math.pi / 2 + half),),
            inf_right=(_const(-math.pi / 2 + half),),
            zero_trace=(lambda xhat: (-half, half),),
            bound=math.pi / 2 + abs(half), fused=(prof,),
            name=name, params={"gap": float(gap)})

    if name == "gauss_arctan":
        if dim < 2:
            raise ValueError("gauss_arctan needs d >= 2")
        T = lambda xhat: np.exp(-sum(np.asarray(x, dtype=float) ** 2 for x in xhat))
        fL = lambda xhat, lam: T(xhat) * (np.arctan(lam) - half)
        fR = lambda xhat, lam: T(xhat) * (np.arctan(lam) + half)
        df = lambda xhat, lam: T(xhat) / (1.0 + np.asarray(lam, dtype=float) ** 2)
        prof = SharedProfile(base=np.arctan,
                             dbase=lambda lam: 1.0 / (1.0 + np.asarray(lam, dtype=float) ** 2),
                             transverse=T, shift_left=-half, shift_right=half)
        def trace(xhat, _T=T, _h=half):
            t = _T(xhat)
            return (-_h * t, _h * t)
        return FluxPair(
            dim=dim,
            f_left=(fL,) * dim, f_right=(fR,) * dim,
            df_left=(df,) * dim, df_right=(df,) * dim,
            sup_left=(lambda xhat: T(xhat) * (math.pi / 2 - half),) * dim,
            inf_left=(lambda xhat: T(xhat) * (-math.pi / 2 - half),) * dim,
            sup_right=(lambda xhat: T(xhat) * (math.pi / 2 + half),) * dim,
            inf_right=(lambda xhat: T(xhat) * (-math.pi / 2 + half),) * dim,
            zero_trace=(trace,) * dim,
            bound=math.pi / 2 + abs(half), fused=(prof,) * dim,
            name=name, params={"gap": float(gap)})

    if name == "linear":
        f = lambda xhat, lam: speed * np.asarray(lam, dtype=float)
        df = lambda xhat, lam: speed * np.ones_like(np.asarray(lam, dtype=float))
        prof = SharedProfile(base=lambda lam: speed * np.asarray(lam, dtype=float),
                             dbase=lambda lam: speed * np.ones_like(np.asarray(lam, dtype=float)),
                             transverse=_const(1.0), shift_left=0.0, shift_right=0.0)
        return FluxPair(
            dim=dim, f_left=(f,) * dim, f_right=(f,) * dim,
            df_left=(df,) * dim, df_right=(df,) * dim,
            zero_trace=(lambda xhat: (0.0, 0.0),) * dim,
            bound=None, fused=(prof,) * dim,
            name=name, params={"speed": float(speed)})

    raise ValueError(f"unknown flux fixture {name!r}")


def _xhat_of_point(x, k: int):
    x = np.asarray(x, dtype=float)
    return tuple(float(x[j]) for j in range(x.shape[0]) if j != k - 1)


def combined_flux(k: int, x, u, fp: FluxPair, surf: InterfaceSurface,
                  fam: MollifierFamily):
    """Mollified axis-k flux f_L H_eps(-s) + f_R H_eps(s) at the point x."""
    if not 1 <= k <= fp.dim:
        raise ValueError(f"axis {k} out of range for dim {fp.dim}")
    s = signed_offset(x, surf)
    xhat = _xhat_of_point(x, k)
    hl = heaviside_eps(-s, fam)
    hr = heaviside_eps(s, fam)
    return fp.f_left[k - 1](xhat, u) * hl + fp.f_right[k - 1](xhat, u) * hr


def flux_u_derivative(k: int, x, u, fp: FluxPair, surf: InterfaceSurface,
                      fam: MollifierFamily):
    """d/du of combined_flux; analytic when both sides declare it, else central FD."""
    if fp.df_left[k - 1] is not None and fp.df_right[k - 1] is not None:
        s = signed_offset(x, surf)
        xhat = _xhat_of_point(x, k)
        return (fp.df_left[k - 1](xhat, u) * heaviside_eps(-s, fam)
                + fp.df_right[k - 1](xhat, u) * heaviside_eps(s, fam))
    h = 1e-6 * max(1.0, abs(u))
    return (combined_flux(k, x, u + h, fp, surf, fam)
            - combined_flux(k, x, u - h, fp, surf, fam)) / (2.0 * h)


def _lattice_weights(K: float, m: int, n_points: int):
    """Tensor-product trapezoid nodes and weights on [-K, K]^m; m = 0 gives one unit node."""
    if m == 0:
        return np.zeros((1, 0)), np.ones(1)
    nodes = np.linspace(-K, K, n_points)
    w = np.full(n_points, nodes[1] - nodes[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    mesh = np.meshgrid(*([nodes] * m), indexing="ij")
    wmesh = np.meshgrid(*([w] * m), indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=-1)
    wts = np.ones(pts.shape[0])
    for g in wmesh:
        wts *= g.ravel()
    return pts, wts


@dataclass(frozen=True)
class NonAlignmentEntry:
    """One axis of the flux-gap condition: the integrated envelope margin."""

    axis: int
    form: str                      # "max_min" (gap below zero) or "min_max" (gap above)
    sampled_margin: float
    analytic_margin: float | None
    margin: float                  # analytic when available, else sampled
    passed: bool
    tolerance: float
    lam_max: float
    n_lambda: int
    n_transverse: int


@dataclass(frozen=True)
class NonAlignmentReport:
    entries: tuple
    ordering_worst: tuple          # per axis: worst signed violation of the zero-state ordering
    ordering_passed: bool
    mixed_orientation: bool
    passed: bool

    def summary(self) -> str:
        lines = []
        for e in self.entries:
            ana = "n/a" if e.analytic_margin is None else f"{e.analytic_margin:.6g}"
            lines.append(
                f"axis {e.axis} [{e.form}]: sampled {e.sampled_margin:.6g}, "
                f"analytic {ana} -> {'ok' if e.passed else 'FAIL'}"
            )
        lines.append(
            f"zero-state ordering: worst violation {max(self.ordering_worst):.3g} "
            f"-> {'ok' if self.ordering_passed else 'FAIL'}"
        )
        if self.mixed_orientation:
            lines.append("note: interface slopes of both signs; the gap condition is "
                         "applied per axis, a case outside the usual hypotheses")
        return "\n".join(lines)


def _axis_form(k: int, surf: InterfaceSurface) -> str:
    if k == 1:
        return "max_min"
    return "min_max" if surf.orientation[k - 2] == 1 else "max_min"


def nonalignment_margin(k: int, fp: FluxPair, surf: InterfaceSurface, box: Box,
                        lam_max: float = LAMBDA_MAX, n_lambda: int = N_LAMBDA,
                        n_transverse: int = N_TRANSVERSE,
                        tolerance: float = MARGIN_TOL) -> NonAlignmentEntry:
    """Integrated flux-gap margin for axis k over the truncated transverse box.

    The "max_min" form integrates (max_lam f_L - min_lam f_R) and must come
    out <= -tolerance; for transverse axes with positive interface slope the
    "min_max" form integrates (min_lam f_L - max_lam f_R) and must be
    >= +tolerance. Envelopes over lam are estimated by grid search and, when
    the pair declares analytic envelopes, also evaluated exactly.
    """
    if n_lambda < 2:
        raise ValueError("lambda grid needs at least 2 points")
    form = _axis_form(k, surf)
    pts, wts = _lattice_weights(box.K, fp.dim - 1, n_transverse)
    xhat = tuple(pts[:, j][:, None] for j in range(fp.dim - 1))
    lam = np.linspace(-lam_max, lam_max, n_lambda)

    # chunk the lambda sweep so the (points x lambda) table stays small
    env_L_max = np.full(pts.shape[0], -np.inf)
    env_L_min = np.full(pts.shape[0], np.inf)
    env_R_max = np.full(pts.shape[0], -np.inf)
    env_R_min = np.full(pts.shape[0], np.inf)
    for start in range(0, n_lambda, 512):
        block = lam[start:start + 512][None, :]
        vL = np.broadcast_to(np.asarray(fp.f_left[k - 1](xhat, block), dtype=float),
                             (pts.shape[0], block.shape[1]))
        vR = np.broadcast_to(np.asarray(fp.f_right[k - 1](xhat, block), dtype=float),
                             (pts.shape[0], block.shape[1]))
        env_L_max = np.maximum(env_L_max, vL.max(axis=1))
        env_L_min = np.minimum(env_L_min, vL.min(axis=1))
        env_R_max = np.maximum(env_R_max, vR.max(axis=1))
        env_R_min = np.minimum(env_R_min, vR.min(axis=1))

    if form == "max_min":
        sampled = float(np.dot(wts, env_L_max - env_R_min))
    else:
        sampled = float(np.dot(wts, env_L_min - env_R_max))

    analytic = None
    if fp.has_envelopes(k):
        flat = tuple(pts[:, j] for j in range(fp.dim - 1))
        if form == "max_min":
            integrand = (np.asarray(fp.sup_left[k - 1](flat), dtype=float)
                         - np.asarray(fp.inf_right[k - 1](flat), dtype=float))
        else:
            integrand = (np.asarray(fp.inf_left[k - 1](flat), dtype=float)
                         - np.asarray(fp.sup_right[k - 1](flat), dtype=float))
        analytic = float(np.dot(wts, np.broadcast_to(integrand, (pts.shape[0],))))

    margin = analytic if analytic is not None else sampled
    passed = margin <= -tolerance if form == "max_min" else margin >= tolerance
    return NonAlignmentEntry(axis=k, form=form, sampled_margin=sampled,
                             analytic_margin=analytic, margin=margin,
                             passed=bool(passed), tolerance=tolerance,
                             lam_max=lam_max, n_lambda=n_lambda,
                             n_transverse=n_transverse)


def nonalignment_report(fp: FluxPair, surf: InterfaceSurface, box: Box,
                        lam_max: float = LAMBDA_MAX, n_lambda: int = N_LAMBDA,
                        n_transverse: int = N_TRANSVERSE,
                        tolerance: float = MARGIN_TOL) -> NonAlignmentReport:
    """All-axis non-alignment margins plus the zero-state ordering check."""
    entries = tuple(
        nonalignment_margin(k, fp, surf, box, lam_max, n_lambda, n_transverse, tolerance)
        for k in range(1, fp.dim + 1)
    )
    pts, _ = _lattice_weights(box.K, fp.dim - 1, n_transverse)
    xhat = tuple(pts[:, j] for j in range(fp.dim - 1))
    worst = []
    for k in range(1, fp.dim + 1):
        if fp.zero_trace[k - 1] is not None:
            tl, tr = fp.zero_trace[k - 1](xhat)
        else:
            tl = fp.f_left[k - 1](xhat, 0.0)
            tr = fp.f_right[k - 1](xhat, 0.0)
        diff = np.asarray(tl, dtype=float) - np.asarray(tr, dtype=float)
        # ordering flips along with the margin form
        if _axis_form(k, surf) == "max_min":
            worst.append(float(np.max(diff)))       # needs f_L <= f_R at zero
        else:
            worst.append(float(np.max(-diff)))      # needs f_L >= f_R at zero
    ordering_ok = all(v <= 1e-12 for v in worst)
    transverse_signs = {s for s in surf.orientation if s in (-1, 1)}
    mixed = len(transverse_signs) > 1
    passed = ordering_ok and all(e.passed for e in entries)
    return NonAlignmentReport(entries=entries, ordering_worst=tuple(worst),
                              ordering_passed=bool(ordering_ok),
                              mixed_orientation=mixed, passed=bool(passed))


def zero_trace_gap(fp: FluxPair, box: Box, n_points: int = N_TRANSVERSE) -> float:
    """Summed transverse integral of |f_L - f_R| at the zero state.

    This is the per-unit-time growth constant of the solution's L1 norm. For
    d = 1 the transverse integral degenerates to the plain absolute difference.
    """
    if n_points < 2:
        raise ValueError("quadrature needs at least 2 points per axis")
    pts, wts = _lattice_weights(box.K, fp.dim - 1, n_points)
    xhat = tuple(pts[:, j] for j in range(fp.dim - 1))
    total = 0.0
    for k in range(1, fp.dim + 1):
        if fp.zero_trace[k - 1] is not None:
            tl, tr = fp.zero_trace[k - 1](xhat)
        else:
            tl = fp.f_left[k - 1](xhat, 0.0)
            tr = fp.f_right[k - 1](xhat, 0.0)
        diff = np.abs(np.asarray(tl, dtype=float) - np.asarray(tr, dtype=float))
        total += float(np.dot(wts, np.broadcast_to(diff, (pts.shape[0],))))
    return total


def riemann_reduce(fp: FluxPair, u_left: float, u_right: float) -> FluxPair:
    """Shift the two sides so a two-state initial condition becomes zero data.

    Returns the pair g_L(xhat, lam) = f_L(xhat, lam + u_left) and
    g_R(xhat, lam) = f_R(xhat, lam + u_right). Envelopes over lam in R are
    translation invariant and carry over unchanged; zero traces evaluate the
    original sides at their respective states.
    """
    if u_left == 0.0 and u_right == 0.0:
        return fp

    def shift(f, du):
        if f is None:
            return None
        return lambda xhat, lam, _f=f, _du=du: _f(xhat, np.asarray(lam, dtype=float) + _du)

    def shifted_trace(k):
        fL, fR = fp.f_left[k], fp.f_right[k]
        return lambda xhat, _fL=fL, _fR=fR: (_fL(xhat, u_left), _fR(xhat, u_right))

    fused = []
    for prof in fp.fused:
        if prof is None or u_left != u_right:
            fused.append(None)
        else:
            du = u_left
            fused.append(SharedProfile(
                base=lambda lam, _b=prof.base, _du=du: _b(np.asarray(lam, dtype=float) + _du),
                dbase=lambda lam, _d=prof.dbase, _du=du: _d(np.asarray(lam, dtype=float) + _du),
                transverse=prof.transverse,
                shift_left=prof.shift_left, shift_right=prof.shift_right))

    return replace(
        fp,
        f_left=tuple(shift(f, u_left) for f in fp.f_left),
        f_right=tuple(shift(f, u_right) for f in fp.f_right),
        df_left=tuple(shift(f, u_left) for f in fp.df_left),
        df_right=tuple(shift(f, u_right) for f in fp.df_right),
        zero_trace=tuple(shifted_trace(k) for k in range(fp.dim)),
        fused=tuple(fused),
        name=f"{fp.name}+shift",
        params={**fp.params, "u_left": float(u_left), "u_right": float(u_right)},
    )
