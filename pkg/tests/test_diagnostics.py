"""Diagnostics functionals: norms, weights, band masses, decay fit, ledger audit."""

import math

import numpy as np
import pytest

from vvflux.diagnostics import (SeriesCollector, band_mass, concentration_series,
                                concentration_weight, cumulative_trapezoid,
                                fit_quadratic_decay, l1_norm, ledger_check,
                                positivity_violation, total_mass, weight_field)
from vvflux.flux import make_flux
from vvflux.geometry import make_surface
from vvflux.mollifier import MollifierFamily, power_schedule
from vvflux.solver import Field, Grid, LedgerEntry, SchemeConfig, Stepper

SURF1 = make_surface(1, "constant")
SCHED = power_schedule()
GRID = Grid(1, 5.0, 100)   # h = 0.1


def single_cell_field(value=-2.0, idx=50):
    u = np.zeros(100)
    u[idx] = value
    return Field(u, GRID)


class TestNorms:
    def test_zero_field(self):
        z = Field.zeros(GRID)
        assert l1_norm(z) == 0.0
        assert total_mass(z) == 0.0
        assert positivity_violation(z) == 0.0

    def test_single_cell(self):
        f = single_cell_field(-2.0)
        assert l1_norm(f) == pytest.approx(0.2, rel=1e-14)
        assert total_mass(f) == pytest.approx(-0.2, rel=1e-14)
        assert positivity_violation(f) == 0.0

    def test_l1_dominates_mass(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            f = Field(rng.normal(size=100), GRID)
            assert l1_norm(f) >= abs(total_mass(f)) - 1e-15

    def test_positivity_violation_picks_worst(self):
        u = np.full(100, -1.0)
        u[7] = 0.3
        assert positivity_violation(Field(u, GRID)) == 0.3


class TestConcentrationWeight:
    def test_unit_on_interface(self):
        assert concentration_weight([0.0], 0.01, SCHED, SURF1) == 1.0

    def test_outer_branch_frozen_value(self):
        # eps = 1e-3: a ~ 0.1, sigma ~ 0.178; s = 0.2 -> s/a = 2 > sigma -> e^-2
        w = concentration_weight([0.2], 1e-3, SCHED, SURF1)
        assert w == pytest.approx(0.1353352832366127, rel=1e-12)

    def test_far_field_exponential(self):
        eps = 1e-3
        a = SCHED.a(eps)
        for s in (0.5, 1.0, 2.0):
            w = concentration_weight([s], eps, SCHED, SURF1)
            assert w == pytest.approx(math.exp(-s / a), rel=1e-12)

    def test_range(self):
        w = weight_field(GRID, 0.05, SCHED, SURF1)
        assert np.all(w > 0.0) and np.all(w <= 1.0)

    def test_weight_field_matches_pointwise(self):
        w = weight_field(GRID, 0.05, SCHED, SURF1)
        x = GRID.cell_centers()
        for i in (0, 33, 50, 99):
            assert w[i] == pytest.approx(
                concentration_weight([x[i]], 0.05, SCHED, SURF1), rel=1e-14)


class TestBandMass:
    def test_zero_field(self):
        assert band_mass(Field.zeros(GRID), 0.2, SURF1) == 0.0

    def test_full_box_band_equals_total(self):
        rng = np.random.default_rng(4)
        f = Field(rng.normal(size=100), GRID)
        assert band_mass(f, 6.0, SURF1) == pytest.approx(total_mass(f), rel=1e-14)

    def test_monotone_in_eta_for_nonpositive_fields(self):
        rng = np.random.default_rng(6)
        f = Field(-np.abs(rng.normal(size=100)), GRID)
        masses = [band_mass(f, eta, SURF1) for eta in (0.2, 0.5, 1.0, 3.0)]
        assert all(a >= b for a, b in zip(masses, masses[1:]))   # more negative as eta grows


class TestConcentrationSeries:
    def test_zero_trajectory(self):
        traj = [Field.zeros(GRID, t=t) for t in np.linspace(0, 1, 21)]
        _, W, I = concentration_series(traj, 0.05, SCHED, SURF1)
        assert np.all(W == 0.0)
        assert np.all(I == 0.0)

    def test_constant_band_gives_linear_integral(self):
        u = np.where(np.abs(GRID.cell_centers()) < 0.3, -1.0, 0.0)
        times = np.linspace(0, 1, 21)
        traj = [Field(u.copy(), GRID, t=t) for t in times]
        _, W, I = concentration_series(traj, 0.05, SCHED, SURF1)
        assert np.allclose(W, W[0])
        assert np.allclose(I, W[0] * times, rtol=1e-12, atol=1e-15)

    def test_w_bounded_by_l1(self):
        grid = Grid(1, 5.0, 500)
        fp = make_flux("arctan_gap", 1)
        st = Stepper(grid, fp, SURF1, MollifierFamily(eps=0.1),
                     SchemeConfig(eps=0.1, t_end=0.3))
        res = st.run(np.linspace(0, 0.3, 21))
        times, W, I = concentration_series(res.snapshots, 0.1, SCHED, SURF1)
        for s, w in zip(res.snapshots, W):
            assert abs(w) <= l1_norm(s) + 1e-14
        assert np.all(np.diff(I) <= 1e-15)     # nonincreasing for nonpositive fields

    def test_needs_two_snapshots(self):
        with pytest.raises(ValueError):
            concentration_series([Field.zeros(GRID)], 0.05, SCHED, SURF1)

    def test_cumulative_trapezoid_identity(self):
        t = np.linspace(0, 2, 31)
        v = np.sin(t)
        I = cumulative_trapezoid(t, v)
        manual = np.concatenate(
            ([0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))))
        assert np.max(np.abs(I - manual)) <= 1e-12


class TestQuadraticFit:
    def test_exact_quadratic(self):
        t = np.linspace(0.25, 1.0, 31)
        fit = fit_quadratic_decay(t, -2.0 * t**2, 0.25)
        assert fit.beta == pytest.approx(2.0, rel=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_zero_input_flagged(self):
        t = np.linspace(0.25, 1.0, 31)
        fit = fit_quadratic_decay(t, np.zeros_like(t), 0.25)
        assert fit.beta == 0.0
        assert fit.r_squared is None

    def test_noisy_quadratic(self):
        rng = np.random.default_rng(17)
        t = np.linspace(0.0, 1.0, 41)
        values = -t**2 + 0.01 * rng.uniform(-1.0, 1.0, size=t.size)
        fit = fit_quadratic_decay(t, values, 0.25)
        assert abs(fit.beta - 1.0) <= 0.02
        assert fit.r_squared >= 0.99

    def test_window_selection(self):
        t = np.linspace(0.0, 1.0, 41)
        fit = fit_quadratic_decay(t, -t**2, 0.5)
        assert fit.window[0] >= 0.5
        assert fit.n_samples == int(np.sum(t >= 0.5 - 1e-12))

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            fit_quadratic_decay([0.5, 0.6, 0.7], [-1, -1, -1], 0.5)

    def test_window_must_start_positive(self):
        t = np.linspace(0.0, 1.0, 21)
        with pytest.raises(ValueError):
            fit_quadratic_decay(t, -t**2, 0.0)


class TestLedgerCheck:
    def test_perfect_entry(self):
        e = LedgerEntry(t=0.0, dt=0.125, mass_before=1.0, mass_after=0.875,
                        boundary_advective=1.0, boundary_diffusive=0.0)
        assert ledger_check([e]) == 0.0

    def test_corrupted_entry_detected(self):
        e = LedgerEntry(t=0.0, dt=1e-3, mass_before=1.0, mass_after=0.99,
                        boundary_advective=1.0, boundary_diffusive=0.0)
        assert ledger_check([e]) > 0.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ledger_check([])


class TestSeriesCollector:
    def make_series(self, T=0.3, eps=0.1, etas=(0.2, 0.5)):
        grid = Grid(1, 5.0, 500)
        fp = make_flux("arctan_gap", 1)
        col = SeriesCollector(grid, SURF1, eps, SCHED, etas)
        st = Stepper(grid, fp, SURF1, MollifierFamily(eps=eps),
                     SchemeConfig(eps=eps, t_end=T))
        res = st.run(np.linspace(0, T, 21), probe=col)
        return col.assemble(res.times, res.probe_values, res.ledger)

    def test_series_invariants(self):
        s = self.make_series()
        assert np.all(s.l1 >= np.abs(s.mass) - 1e-15)
        recomputed = cumulative_trapezoid(s.times, s.W)
        assert np.max(np.abs(recomputed - s.I)) <= 1e-12
        assert s.ledger_max_rel <= 1e-10

    def test_csv_round_trip(self, tmp_path):
        s = self.make_series()
        path = tmp_path / "series.csv"
        s.write_csv(path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "t,l1,mass,max_u,W,I,band_mass_0.2,band_mass_0.5"
        assert lines[-1].startswith("# ledger_max_rel=")
        assert float(lines[-1].split("=")[1]) == s.ledger_max_rel
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:-1]])
        assert data.shape == (21, 8)
        assert np.array_equal(data[:, 0], s.times)
        assert np.array_equal(data[:, 1], s.l1)
        assert np.array_equal(data[:, 6], s.band[0.2])
