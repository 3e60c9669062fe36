"""Interface surfaces x1 = phi(x2..xd), signed offsets, and box/band subsets.

A surface is described by phi acting on the transverse coordinates, together
with its analytic gradient and diagonal Hessian. For d = 1 the surface
degenerates to a single point x1 = offset and phi takes an empty tuple.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "InterfaceSurface",
    "Box",
    "MonotonicityReport",
    "make_surface",
    "signed_offset",
    "offset_field",
    "replace_component",
    "band_indicator",
    "validate_monotonicity",
    "transverse_lattice",
]


@dataclass(frozen=True)
class InterfaceSurface:
    """Twice continuously differentiable interface x1 = phi(xhat).

    phi, grad_phi and hess_diag_phi take a tuple of d-1 broadcastable arrays
    (the transverse coordinates x2..xd) and vectorize elementwise. orientation
    holds the declared sign of d(phi)/dx_k for k = 2..d; 0 marks a flat
    coordinate, which fails the monotonicity validator for d >= 2.
    """

    dim: int
    phi: Callable
    grad_phi: Callable
    hess_diag_phi: Callable
    orientation: tuple[int, ...]
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if len(self.orientation) != self.dim - 1:
            raise ValueError("orientation needs one sign tag per transverse axis")


@dataclass(frozen=True)
class Box:
    """Symmetric box [-K, K]^d."""

    K: float
    dim: int

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError("box half-width must be positive")


def make_surface(dim: int, name: str = "constant", offset: float = 0.0,
                 coeffs: Sequence[float] | None = None) -> InterfaceSurface:
    """Build a registry surface: "constant", "affine" or "arctan".

    affine: phi(xhat) = offset + sum(c_j xhat_j); arctan: offset + sum of
    c_j * arctan(xhat_j). coeffs defaults to -1 per transverse axis.
    """
    m = dim - 1
    if coeffs is None:
        coeffs = [-1.0] * m
    c = np.asarray(coeffs, dtype=float)
    if c.shape != (m,):
        raise ValueError(f"expected {m} transverse coefficients, got {c.shape}")
    params = {"offset": float(offset), "coeffs": [float(v) for v in c]}

    if name == "constant":
        phi = lambda xhat: _expand(offset, xhat)
        grad = lambda xhat: tuple(_expand(0.0, xhat) for _ in range(m))
        hess = grad
        orientation = (0,) * m
    elif name == "affine":
        def phi(xhat, _c=c, _b=offset):
            return _b + sum(_c[j] * np.asarray(xhat[j], dtype=float) for j in range(len(_c)))
        def grad(xhat, _c=c):
            return tuple(_expand(_c[j], xhat) for j in range(len(_c)))
        hess = lambda xhat: tuple(_expand(0.0, xhat) for _ in range(m))
        orientation = tuple(int(np.sign(v)) for v in c)
    elif name == "arctan":
        def phi(xhat, _c=c, _b=offset):
            return _b + sum(_c[j] * np.arctan(np.asarray(xhat[j], dtype=float))
                            for j in range(len(_c)))
        def grad(xhat, _c=c):
            return tuple(_c[j] / (1.0 + np.asarray(xhat[j], dtype=float) ** 2)
                         for j in range(len(_c)))
        def hess(xhat, _c=c):
            return tuple(-2.0 * _c[j] * np.asarray(xhat[j], dtype=float)
                         / (1.0 + np.asarray(xhat[j], dtype=float) ** 2) ** 2
                         for j in range(len(_c)))
        orientation = tuple(int(np.sign(v)) for v in c)
    else:
        raise ValueError(f"unknown surface {name!r}")

    return InterfaceSurface(dim=dim, phi=phi, grad_phi=grad, hess_diag_phi=hess,
                            orientation=orientation, name=name, params=params)


def _expand(value: float, xhat):
    """Broadcast a constant against the transverse coordinate arrays."""
    if len(xhat) == 0:
        return float(value)
    shape = np.broadcast(*(np.asarray(a) for a in xhat)).shape if len(xhat) > 1 \
        else np.asarray(xhat[0]).shape
    return np.full(shape, value) if shape else float(value)


def signed_offset(x, surf: InterfaceSurface) -> float:
    """s(x) = x1 - phi(xhat); zero exactly on the interface."""
    x = np.asarray(x, dtype=float)
    if x.shape != (surf.dim,):
        raise ValueError(f"point has shape {x.shape}, surface has dim {surf.dim}")
    return float(x[0] - surf.phi(tuple(x[1:])))


def offset_field(surf: InterfaceSurface, coords) -> np.ndarray:
    """Vectorized signed offset over broadcastable coordinate arrays (x1, x2, ...)."""
    if len(coords) != surf.dim:
        raise ValueError(f"expected {surf.dim} coordinate arrays, got {len(coords)}")
    x1 = np.asarray(coords[0], dtype=float)
    return x1 - surf.phi(tuple(coords[1:]))


def replace_component(x, k: int, a: float):
    """Return x with its k-th component (1-based) replaced by a."""
    x = np.asarray(x, dtype=float)
    if not 1 <= k <= x.shape[-1]:
        raise ValueError(f"component index {k} out of range for dim {x.shape[-1]}")
    out = x.copy()
    out[..., k - 1] = a
    return out


def band_indicator(x, eta: float, surf: InterfaceSurface) -> bool:
    """True iff x lies within the open slab |x1 - phi(xhat)| < eta."""
    if not eta > 0:
        raise ValueError("band half-width must be positive")
    return bool(abs(signed_offset(x, surf)) < eta)


def transverse_lattice(K: float, dim: int, points_per_axis: int = 33) -> np.ndarray:
    """Deterministic sample lattice in the transverse box [-K, K]^(d-1), shape (m, d-1)."""
    m = dim - 1
    if m == 0:
        return np.zeros((1, 0))
    axes = [np.linspace(-K, K, points_per_axis)] * m
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


@dataclass(frozen=True)
class MonotonicityReport:
    """Per-coordinate derivative ranges of phi and the resulting pass flags."""

    passed: bool
    vacuous: bool
    entries: tuple  # (axis k>=2, declared sign, min, max, min_abs, ok) per coordinate
    n_samples: int

    def summary(self) -> str:
        if self.vacuous:
            return "monotonicity: vacuous pass (no transverse coordinates)"
        lines = []
        for k, sign, lo, hi, lo_abs, ok in self.entries:
            lines.append(
                f"d(phi)/dx_{k}: declared {sign:+d}, range [{lo:.6g}, {hi:.6g}], "
                f"min |.| {lo_abs:.6g} -> {'ok' if ok else 'FAIL'}"
            )
        return "\n".join(lines)


def validate_monotonicity(surf: InterfaceSurface, samples=None, *,
                          box: Box | None = None,
                          points_per_axis: int = 33) -> MonotonicityReport:
    """Check that each transverse derivative of phi keeps its declared sign.

    samples is an (m, d-1) array of transverse points; if omitted, a lattice
    over the given box is used. d = 1 passes vacuously.
    """
    if surf.dim == 1:
        return MonotonicityReport(passed=True, vacuous=True, entries=(), n_samples=0)
    if samples is None:
        if box is None:
            raise ValueError("need either explicit samples or a box")
        samples = transverse_lattice(box.K, surf.dim, points_per_axis)
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != surf.dim - 1 or samples.shape[0] == 0:
        raise ValueError("samples must be a nonempty (m, d-1) array")

    xhat = tuple(samples[:, j] for j in range(surf.dim - 1))
    grads = surf.grad_phi(xhat)
    entries = []
    all_ok = True
    for j, g in enumerate(grads):
        g = np.asarray(g, dtype=float)
        lo, hi = float(g.min()), float(g.max())
        lo_abs = float(np.abs(g).min())
        declared = surf.orientation[j]
        ok = declared in (-1, 1) and lo_abs > 0.0 and np.all(np.sign(g) == declared)
        all_ok &= bool(ok)
        entries.append((j + 2, declared, lo, hi, lo_abs, bool(ok)))
    return MonotonicityReport(passed=bool(all_ok), vacuous=False,
                              entries=tuple(entries), n_samples=samples.shape[0])
