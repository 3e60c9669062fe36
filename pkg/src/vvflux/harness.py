"""Run configurations, viscosity sweeps, verdicts, and report files.

A run configuration is a flat JSON object. A sweep integrates the viscous
problem once per viscosity level, collects the diagnostics series, fits the
quadratic decay of the concentration integral, and grades five verdicts:
decay-coefficient trend, band-fraction trend, non-positivity, the linear-in-t
L1 bound, and the conservation ledger. Hypothesis validation (flux gap
margins, interface monotonicity, schedule admissibility) runs before any PDE
solve and refuses the sweep on failure.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import SeriesCollector, fit_quadratic_decay
from .flux import (FluxPair, make_flux, nonalignment_report, riemann_reduce,
                   zero_trace_gap)
from .geometry import Box, InterfaceSurface, make_surface, validate_monotonicity
from .mollifier import MollifierFamily, check_schedule, power_schedule
from .solver import Grid, SchemeConfig, Stepper, dump_snapshot

__all__ = [
    "ConfigError",
    "HypothesisError",
    "RunConfig",
    "SweepRow",
    "SweepReport",
    "ValidationResult",
    "parse_config",
    "validate_only",
    "run_sweep",
    "write_outputs",
]

POSITIVITY_TOL = 1e-6
L1_MARGIN_TOL = 1.1
LEDGER_TOL = 1e-10
BETA_TREND_FACTOR = 0.9

_REQUIRED_KEYS = ("dim", "K", "eps", "T", "fixture")
_OPTIONAL_KEYS = {
    "n": "auto",
    "probes": 41,
    "fixture_params": {},
    "etas": [0.2, 0.5, 1.0],
    "schedule_p": 1.0 / 3.0,
    "u_left": 0.0,
    "u_right": 0.0,
    "out_dir": "vvflux_out",
}
_FIXTURE_PARAM_KEYS = {"gap", "surface", "surface_offset", "surface_coeffs"}
_CONFIG_FIXTURES = ("arctan_gap", "gauss_arctan")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


class HypothesisError(RuntimeError):
    """The configured problem violates the structural hypotheses."""


@dataclass(frozen=True)
class RunConfig:
    dim: int
    K: float
    eps: tuple
    T: float
    fixture: str
    n: object = "auto"           # "auto" or a fixed cell count
    probes: int = 41
    fixture_params: dict = field(default_factory=dict)
    etas: tuple = (0.2, 0.5, 1.0)
    schedule_p: float = 1.0 / 3.0
    u_left: float = 0.0
    u_right: float = 0.0
    out_dir: str = "vvflux_out"

    def cells_for(self, eps: float) -> int:
        if self.n == "auto":
            return int(math.ceil(2.0 * self.K / (eps / 5.0)))
        return int(self.n)

    def gap(self) -> float:
        return float(self.fixture_params.get("gap", 4.0))


def parse_config(text: str) -> RunConfig:
    """Parse and validate the JSON run configuration; rejects unknown keys."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    known = set(_REQUIRED_KEYS) | set(_OPTIONAL_KEYS)
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown configuration key {key!r}")
    for key in _REQUIRED_KEYS:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")

    dim = raw["dim"]
    if not isinstance(dim, int) or dim < 1:
        raise ConfigError("dim must be a positive integer")
    K = float(raw["K"])
    if not K > 0:
        raise ConfigError("K must be positive")
    eps = raw["eps"]
    if not isinstance(eps, list) or not eps:
        raise ConfigError("eps must be a nonempty array")
    eps = [float(e) for e in eps]
    if any(e <= 0 for e in eps):
        raise ConfigError("eps values must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("eps list must be strictly decreasing")
    T = float(raw["T"])
    if not T > 0:
        raise ConfigError("T must be positive")
    fixture = raw["fixture"]
    if fixture not in _CONFIG_FIXTURES:
        raise ConfigError(f"fixture must be one of {_CONFIG_FIXTURES}, got {fixture!r}")

    n = raw.get("n", "auto")
    if n != "auto":
        if not isinstance(n, int) or n < 8:
            raise ConfigError('n must be "auto" or an integer >= 8')
    probes = raw.get("probes", _OPTIONAL_KEYS["probes"])
    if not isinstance(probes, int) or probes < 20:
        raise ConfigError("probes must be an integer >= 20")

    fixture_params = raw.get("fixture_params", {})
    if not isinstance(fixture_params, dict):
        raise ConfigError("fixture_params must be an object")
    for key in fixture_params:
        if key not in _FIXTURE_PARAM_KEYS:
            raise ConfigError(f"unknown fixture_params key {key!r}")

    etas = raw.get("etas", list(_OPTIONAL_KEYS["etas"]))
    if not isinstance(etas, list) or not etas:
        raise ConfigError("etas must be a nonempty array")
    etas = [float(e) for e in etas]
    if any(e <= 0 for e in etas):
        raise ConfigError("etas must be positive")
    if any(b <= a for a, b in zip(etas, etas[1:])) and len(etas) > 1:
        raise ConfigError("etas must be strictly ascending")

    schedule_p = float(raw.get("schedule_p", _OPTIONAL_KEYS["schedule_p"]))
    if not 0.0 < schedule_p < 0.5:
        raise ConfigError("schedule_p must lie in (0, 1/2)")

    cfg = RunConfig(
        dim=dim, K=K, eps=tuple(eps), T=T, fixture=fixture, n=n, probes=probes,
        fixture_params=dict(fixture_params), etas=tuple(etas),
        schedule_p=schedule_p,
        u_left=float(raw.get("u_left", 0.0)),
        u_right=float(raw.get("u_right", 0.0)),
        out_dir=str(raw.get("out_dir", _OPTIONAL_KEYS["out_dir"])),
    )

    for e in cfg.eps:
        h = 2.0 * cfg.K / cfg.cells_for(e)
        if h > e / 4.0 + 1e-15:
            raise ConfigError(
                f"n: grid spacing h={h:g} exceeds eps/4={e / 4.0:g} for eps={e:g}; "
                "the interface mollifier would be unresolved")
    return cfg


def build_surface(cfg: RunConfig) -> InterfaceSurface:
    params = cfg.fixture_params
    name = params.get("surface", "constant" if cfg.dim == 1 else "affine")
    offset = float(params.get("surface_offset", 0.0))
    coeffs = params.get("surface_coeffs")
    return make_surface(cfg.dim, name, offset=offset, coeffs=coeffs)


def build_flux(cfg: RunConfig, reduced: bool = True) -> FluxPair:
    fp = make_flux(cfg.fixture, cfg.dim, gap=cfg.gap())
    if reduced:
        fp = riemann_reduce(fp, cfg.u_left, cfg.u_right)
    return fp


@dataclass
class ValidationResult:
    nonalignment: object
    monotonicity: object
    schedule_ok: bool
    schedule_detail: str
    passed: bool

    def summary(self) -> str:
        parts = [self.nonalignment.summary(), self.monotonicity.summary(),
                 f"schedule: {self.schedule_detail}"]
        parts.append("hypothesis validation: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(parts)


def validate_only(cfg: RunConfig) -> ValidationResult:
    """Run the flux/geometry/schedule validators without any PDE solve."""
    surf = build_surface(cfg)
    fp = build_flux(cfg)
    box = Box(K=cfg.K, dim=cfg.dim)
    na = nonalignment_report(fp, surf, box)
    mono = validate_monotonicity(surf, box=box)
    try:
        check_schedule(power_schedule(cfg.schedule_p), cfg.eps)
        sched_ok, detail = True, f"a(eps)=eps^{cfg.schedule_p:g} admissible on the sweep"
    except ValueError as exc:
        sched_ok, detail = False, str(exc)
    passed = na.passed and mono.passed and sched_ok
    return ValidationResult(nonalignment=na, monotonicity=mono,
                            schedule_ok=sched_ok, schedule_detail=detail,
                            passed=passed)


@dataclass
class SweepRow:
    eps: float
    n: int
    h: float
    steps: int
    gap_constant: float          # summed zero-state trace gap G
    beta: float
    r_squared: float
    i_ratio: float               # I(T) / I(T/2)
    max_positivity: float
    l1_margin: float             # max over probes of l1 / (t G)
    ledger_residual: float
    band_fraction: float         # band mass at the smallest eta over total, at t = T
    boundary_guard_ok: bool
    wall_time: float


@dataclass
class SweepReport:
    config: RunConfig
    rows: list
    series: list                 # DiagnosticsSeries per eps
    verdicts: dict               # name -> (status, detail)
    passed: bool
    version: str
    total_wall_time: float

    def verdict_table(self) -> str:
        lines = ["verdict                  status   detail"]
        for name, (status, detail) in self.verdicts.items():
            lines.append(f"{name:<24} {status:<8} {detail}")
        return "\n".join(lines)


def _run_single(cfg: RunConfig, eps: float, snapshot_dir: str | None = None):
    """One viscosity level: solve, collect diagnostics, summarize."""
    t0 = time.perf_counter()
    n = cfg.cells_for(eps)
    grid = Grid(cfg.dim, cfg.K, n)
    surf = build_surface(cfg)
    fp = build_flux(cfg)
    fam = MollifierFamily(eps=eps)
    sched = power_schedule(cfg.schedule_p)
    scheme = SchemeConfig(eps=eps, t_end=cfg.T)
    collector = SeriesCollector(grid, surf, eps, sched, cfg.etas)
    probe_times = np.linspace(0.0, cfg.T, cfg.probes)

    if snapshot_dir is not None:
        snap_path = Path(snapshot_dir)
        snap_path.mkdir(parents=True, exist_ok=True)
        counter = {"i": 0}

        def probe(fld, _c=collector):
            dump_snapshot(fld, eps, snap_path / f"snap_{counter['i']:04d}.txt")
            counter["i"] += 1
            return _c(fld)
    else:
        probe = collector

    stepper = Stepper(grid, fp, surf, fam, scheme)
    result = stepper.run(probe_times, probe=probe)
    series = collector.assemble(result.times, result.probe_values, result.ledger)

    fit = fit_quadratic_decay(series.times, series.I, cfg.T / 4.0)
    G = zero_trace_gap(fp, Box(K=cfg.K, dim=cfg.dim))
    tpos = series.times[1:]
    margins = series.l1[1:] / (tpos * G) if G > 0 else np.full_like(tpos, math.inf)
    i_half = float(np.interp(cfg.T / 2.0, series.times, series.I))
    i_ratio = series.I[-1] / i_half if i_half != 0 else math.nan
    eta_min = min(cfg.etas)
    total = series.mass[-1]
    band_fraction = series.band[eta_min][-1] / total if total != 0 else 0.0

    row = SweepRow(
        eps=eps, n=n, h=grid.h, steps=result.steps, gap_constant=G,
        beta=fit.beta, r_squared=fit.r_squared if fit.r_squared is not None else math.nan,
        i_ratio=float(i_ratio),
        max_positivity=float(np.max(np.maximum(series.max_u, 0.0)))
        if series.max_u.size else 0.0,
        l1_margin=float(np.max(margins)) if margins.size else 0.0,
        ledger_residual=series.ledger_max_rel,
        band_fraction=float(band_fraction),
        boundary_guard_ok=result.boundary_guard_ok,
        wall_time=time.perf_counter() - t0,
    )
    return row, series


def _sweep_worker(cfg_dict: dict, eps: float, snapshot_dir):
    cfg = RunConfig(**cfg_dict)
    return _run_single(cfg, eps, snapshot_dir)


def _grade(rows) -> dict:
    verdicts = {}
    betas = [r.beta for r in rows]
    if any(b <= 0 for b in betas):
        verdicts["beta_trend"] = ("FAIL", f"nonpositive decay coefficient in {betas}")
    elif len(rows) < 2:
        verdicts["beta_trend"] = ("insufficient data", "trend needs >= 2 sweep members")
    else:
        drops = [b2 >= BETA_TREND_FACTOR * b1 for b1, b2 in zip(betas, betas[1:])]
        detail = ", ".join(f"{b:.4g}" for b in betas)
        verdicts["beta_trend"] = ("PASS" if all(drops) else "FAIL",
                                  f"beta per eps: {detail} (allowed drop {BETA_TREND_FACTOR:g}x)")

    fracs = [r.band_fraction for r in rows]
    if len(rows) < 2:
        verdicts["band_fraction_trend"] = ("insufficient data",
                                           "trend needs >= 2 sweep members")
    else:
        mono = all(f2 >= f1 - 1e-12 for f1, f2 in zip(fracs, fracs[1:]))
        verdicts["band_fraction_trend"] = (
            "PASS" if mono else "FAIL",
            "fractions " + ", ".join(f"{f:.4f}" for f in fracs))

    worst_pos = max(r.max_positivity for r in rows)
    verdicts["non_positivity"] = (
        "PASS" if worst_pos <= POSITIVITY_TOL else "FAIL",
        f"worst positive excursion {worst_pos:.3e} (tol {POSITIVITY_TOL:g})")

    worst_l1 = max(r.l1_margin for r in rows)
    verdicts["l1_bound"] = (
        "PASS" if worst_l1 <= L1_MARGIN_TOL else "FAIL",
        f"worst L1/(t G) margin {worst_l1:.4f} (tol {L1_MARGIN_TOL:g})")

    worst_ledger = max(r.ledger_residual for r in rows)
    verdicts["conservation_ledger"] = (
        "PASS" if worst_ledger <= LEDGER_TOL else "FAIL",
        f"worst relative residual {worst_ledger:.3e} (tol {LEDGER_TOL:g})")
    return verdicts


def run_sweep(cfg: RunConfig, jobs: int = 1, snapshots: bool = False,
              out_dir: str | None = None) -> SweepReport:
    """Validate hypotheses, run every viscosity level, grade the verdicts.

    Raises HypothesisError before any solve when validation fails. CSVs and
    the report are written separately by write_outputs; snapshot dumps, when
    requested, stream to out_dir during the runs.
    """
    t0 = time.perf_counter()
    validation = validate_only(cfg)
    if not validation.passed:
        raise HypothesisError(
            "configured problem violates the structural hypotheses:\n"
            + validation.summary())

    base = Path(out_dir if out_dir is not None else cfg.out_dir)
    snap_dirs = [str(base / f"snapshots_eps{e:g}") if snapshots else None
                 for e in cfg.eps]

    results = []
    if jobs > 1 and len(cfg.eps) > 1:
        cfg_dict = asdict(cfg)
        with ProcessPoolExecutor(max_workers=min(jobs, len(cfg.eps))) as pool:
            futures = [pool.submit(_sweep_worker, cfg_dict, e, sd)
                       for e, sd in zip(cfg.eps, snap_dirs)]
            results = [f.result() for f in futures]
    else:
        for e, sd in zip(cfg.eps, snap_dirs):
            results.append(_run_single(cfg, e, sd))

    rows = [r for r, _ in results]
    series = [s for _, s in results]
    verdicts = _grade(rows)
    passed = all(status != "FAIL" for status, _ in verdicts.values())
    return SweepReport(config=cfg, rows=rows, series=series, verdicts=verdicts,
                       passed=passed, version=__version__,
                       total_wall_time=time.perf_counter() - t0)


def write_outputs(report: SweepReport, out_dir: str | None = None) -> list:
    """Write per-run CSVs, the machine-readable sweep CSV, and the markdown report.

    Everything except the provenance block of the markdown report is a pure
    function of the configuration, so reruns produce byte-identical files.
    """
    cfg = report.config
    base = Path(out_dir if out_dir is not None else cfg.out_dir)
    base.mkdir(parents=True, exist_ok=True)
    written = []

    for row, series in zip(report.rows, report.series):
        path = base / f"run_eps{row.eps:g}.csv"
        series.write_csv(path)
        written.append(path)

    cols = ["eps", "n", "h", "steps", "gap_constant", "beta", "r_squared",
            "i_ratio", "max_positivity", "l1_margin", "ledger_residual",
            "band_fraction", "boundary_guard_ok"]
    sweep_csv = base / "sweep_report.csv"
    with open(sweep_csv, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in report.rows:
            vals = [row.eps, row.n, row.h, row.steps, row.gap_constant, row.beta,
                    row.r_squared, row.i_ratio, row.max_positivity, row.l1_margin,
                    row.ledger_residual, row.band_fraction,
                    int(row.boundary_guard_ok)]
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in vals) + "\n")
    written.append(sweep_csv)

    md = base / "sweep_report.md"
    with open(md, "w", encoding="utf-8") as fh:
        fh.write("# Viscosity sweep report\n\n")
        fh.write(f"Overall: **{'PASS' if report.passed else 'FAIL'}**\n\n")
        fh.write("## Verdicts\n\n")
        fh.write("| verdict | status | detail |\n|---|---|---|\n")
        for name, (status, detail) in report.verdicts.items():
            fh.write(f"| {name} | {status} | {detail} |\n")
        fh.write("\nThresholds: positivity <= "
                 f"{POSITIVITY_TOL:g}, L1 margin <= {L1_MARGIN_TOL:g}, ledger <= "
                 f"{LEDGER_TOL:g}, decay-coefficient drop factor >= {BETA_TREND_FACTOR:g}. "
                 "These are artifact choices printed for transparency.\n")
        fh.write("\n## Per-viscosity results\n\n")
        fh.write("| eps | n | steps | G | beta | r^2 | I(T)/I(T/2) | max u+ | "
                 "L1 margin | ledger | band frac |\n")
        fh.write("|---|---|---|---|---|---|---|---|---|---|---|\n")
        for r in report.rows:
            fh.write(f"| {r.eps:g} | {r.n} | {r.steps} | {r.gap_constant:.6g} | "
                     f"{r.beta:.6g} | {r.r_squared:.4f} | {r.i_ratio:.4f} | "
                     f"{r.max_positivity:.3e} | {r.l1_margin:.4f} | "
                     f"{r.ledger_residual:.3e} | {r.band_fraction:.4f} |\n")
        fh.write("\nPer-run series: " + ", ".join(f"run_eps{r.eps:g}.csv"
                                                  for r in report.rows) + "\n")
        fh.write("\n## Provenance\n\n")
        fh.write(f"- tool version: {report.version}\n")
        fh.write(f"- config: `{json.dumps(asdict(cfg), sort_keys=True)}`\n")
        for r in report.rows:
            fh.write(f"- eps={r.eps:g}: wall time {r.wall_time:.2f} s\n")
        fh.write(f"- total wall time: {report.total_wall_time:.2f} s\n")
    written.append(md)
    return written
