"""Config parsing, hypothesis gating, sweep verdicts, reports, CLI exit codes."""

import json
import math
from types import SimpleNamespace

import numpy as np
import pytest

import vvflux.cli as cli
from vvflux.harness import (ConfigError, HypothesisError, SweepRow, _grade,
                            parse_config, run_sweep, validate_only, write_outputs)
from vvflux.solver import SolverInstabilityError

MINIMAL = {"dim": 1, "K": 5.0, "eps": [0.1, 0.05, 0.025], "T": 1.0,
           "fixture": "arctan_gap"}


def cfg_text(**overrides):
    d = dict(MINIMAL)
    d.update(overrides)
    return json.dumps(d)


def tiny_cfg(**overrides):
    base = dict(MINIMAL, eps=[0.1, 0.05], T=0.3, probes=21)
    base.update(overrides)
    return parse_config(json.dumps(base))


class TestParseConfig:
    def test_minimal_defaults(self):
        cfg = parse_config(cfg_text())
        assert cfg.n == "auto"
        assert cfg.cells_for(0.1) == 500
        assert cfg.cells_for(0.025) == 2000
        assert cfg.probes == 41
        assert cfg.etas == (0.2, 0.5, 1.0)
        assert cfg.u_left == 0.0 and cfg.u_right == 0.0
        assert cfg.gap() == 4.0

    def test_explicit_cells(self):
        cfg = parse_config(cfg_text(eps=[0.1], n=512))
        assert cfg.cells_for(0.1) == 512

    @pytest.mark.parametrize("overrides,fragment", [
        ({"eps": [0.05, 0.1]}, "strictly decreasing"),
        ({"eps": []}, "eps"),
        ({"eps": [0.1, -0.05]}, "positive"),
        ({"probes": 10}, "probes"),
        ({"etas": [0.5, 0.2]}, "ascending"),
        ({"schedule_p": 0.6}, "schedule_p"),
        ({"fixture": "linear"}, "fixture"),
        ({"T": 0.0}, "T"),
        ({"dim": 0}, "dim"),
        ({"n": 4}, "n"),
    ])
    def test_invalid_values_name_the_key(self, overrides, fragment):
        with pytest.raises(ConfigError, match=fragment):
            parse_config(cfg_text(**overrides))

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="mystery"):
            parse_config(cfg_text(mystery=1))

    def test_missing_required_key(self):
        d = dict(MINIMAL)
        del d["fixture"]
        with pytest.raises(ConfigError, match="fixture"):
            parse_config(json.dumps(d))

    def test_unresolved_mollifier_rejected(self):
        # n = 100 at K = 5 gives h = 0.1 > eps/4 for eps = 0.01
        with pytest.raises(ConfigError, match="eps/4"):
            parse_config(cfg_text(eps=[0.01], n=100))

    def test_fixture_params_keys_checked(self):
        with pytest.raises(ConfigError, match="wobble"):
            parse_config(cfg_text(fixture_params={"wobble": 2}))

    def test_not_json(self):
        with pytest.raises(ConfigError, match="JSON"):
            parse_config("dim: 1")

    def test_non_object(self):
        with pytest.raises(ConfigError, match="object"):
            parse_config("[1, 2]")


class TestValidateOnly:
    def test_default_fixture_passes(self):
        result = validate_only(parse_config(cfg_text()))
        assert result.passed
        entry = result.nonalignment.entries[0]
        assert entry.analytic_margin == pytest.approx(math.pi - 4.0, rel=1e-12)

    def test_negative_gap_fails_ordering_clause(self):
        cfg = parse_config(cfg_text(fixture_params={"gap": -1.0}))
        result = validate_only(cfg)
        assert not result.passed
        assert not result.nonalignment.ordering_passed

    def test_zero_gap_fails_margin(self):
        result = validate_only(parse_config(cfg_text(fixture_params={"gap": 0.0})))
        assert not result.passed
        assert not result.nonalignment.entries[0].passed

    def test_positive_slope_selects_flipped_form(self):
        cfg = parse_config(cfg_text(
            dim=2, T=0.5, eps=[0.1], fixture="gauss_arctan",
            fixture_params={"surface": "affine", "surface_coeffs": [1.0]}))
        result = validate_only(cfg)
        assert result.nonalignment.entries[1].form == "min_max"

    def test_summary_mentions_verdict(self):
        s = validate_only(parse_config(cfg_text())).summary()
        assert "PASS" in s


class TestRunSweep:
    def test_hypothesis_gate_refuses_before_solving(self):
        cfg = tiny_cfg(fixture_params={"gap": 0.0})
        with pytest.raises(HypothesisError):
            run_sweep(cfg)

    def test_small_sweep_passes(self, tmp_path):
        report = run_sweep(tiny_cfg(out_dir=str(tmp_path / "out")))
        assert report.passed
        assert [r.eps for r in report.rows] == [0.1, 0.05]
        assert all(v[0] == "PASS" for v in report.verdicts.values())
        assert all(r.steps > 0 for r in report.rows)
        assert all(r.gap_constant == 4.0 for r in report.rows)

    def test_single_eps_trend_verdicts_insufficient(self, tmp_path):
        report = run_sweep(tiny_cfg(eps=[0.1], out_dir=str(tmp_path / "out")))
        assert report.verdicts["beta_trend"][0] == "insufficient data"
        assert report.verdicts["band_fraction_trend"][0] == "insufficient data"
        assert report.verdicts["non_positivity"][0] == "PASS"
        assert report.verdicts["l1_bound"][0] == "PASS"
        assert report.verdicts["conservation_ledger"][0] == "PASS"
        assert report.passed

    def test_outputs_deterministic(self, tmp_path):
        cfg = tiny_cfg(eps=[0.1])
        paths1 = write_outputs(run_sweep(cfg), out_dir=str(tmp_path / "a"))
        paths2 = write_outputs(run_sweep(cfg), out_dir=str(tmp_path / "b"))
        for p1, p2 in zip(paths1, paths2):
            b1, b2 = p1.read_bytes(), p2.read_bytes()
            if p1.suffix == ".md":
                b1 = b1.split(b"## Provenance")[0]
                b2 = b2.split(b"## Provenance")[0]
            assert b1 == b2, f"{p1.name} differs between reruns"

    def test_jobs_parallel_matches_serial(self, tmp_path):
        cfg = tiny_cfg(T=0.2)
        serial = run_sweep(cfg, jobs=1)
        parallel = run_sweep(cfg, jobs=2)
        for a, b in zip(serial.rows, parallel.rows):
            assert a.beta == b.beta
            assert a.ledger_residual == b.ledger_residual
        for sa, sb in zip(serial.series, parallel.series):
            assert np.array_equal(sa.l1, sb.l1)
            assert np.array_equal(sa.I, sb.I)

    def test_csv_schema(self, tmp_path):
        report = run_sweep(tiny_cfg(eps=[0.1]))
        paths = write_outputs(report, out_dir=str(tmp_path))
        run_csv = next(p for p in paths if p.name.startswith("run_eps"))
        header = run_csv.read_text().splitlines()[0]
        assert header == "t,l1,mass,max_u,W,I,band_mass_0.2,band_mass_0.5,band_mass_1"
        sweep_csv = next(p for p in paths if p.name == "sweep_report.csv")
        assert sweep_csv.read_text().splitlines()[0].startswith("eps,n,h,steps,")

    def test_snapshot_dumps(self, tmp_path):
        cfg = tiny_cfg(eps=[0.1], probes=21, out_dir=str(tmp_path / "o"))
        run_sweep(cfg, snapshots=True)
        snaps = sorted((tmp_path / "o" / "snapshots_eps0.1").glob("snap_*.txt"))
        assert len(snaps) == 21
        assert snaps[0].read_text().startswith("# t=0.0 d=1 n=500")

    def test_nonzero_riemann_states(self, tmp_path):
        # the two-state problem reduces to zero data with shifted traces
        cfg = tiny_cfg(eps=[0.1], u_left=0.5, u_right=-0.5)
        report = run_sweep(cfg)
        row = report.rows[0]
        expected_G = abs((math.atan(0.5) - 2.0) - (math.atan(-0.5) + 2.0))
        assert row.gap_constant == pytest.approx(expected_G, rel=1e-12)
        assert row.max_positivity <= 1e-6
        assert row.ledger_residual <= 1e-10
        assert report.verdicts["l1_bound"][0] == "PASS"

    def test_curved_interface_sweep_flags_boundary_coupling(self):
        # a bounded interface profile runs out to the transverse boundary, so
        # the domain guard must fire while the physics verdicts still pass
        cfg = parse_config(json.dumps({
            "dim": 2, "K": 5.0, "eps": [0.6, 0.5], "T": 0.2, "probes": 21,
            "fixture": "gauss_arctan",
            "fixture_params": {"gap": 4.0, "surface": "arctan",
                               "surface_coeffs": [-0.8]},
        }))
        with pytest.warns(RuntimeWarning, match="domain too small"):
            report = run_sweep(cfg)
        assert report.passed
        assert all(not r.boundary_guard_ok for r in report.rows)
        assert all(r.max_positivity == 0.0 for r in report.rows)
        assert max(r.ledger_residual for r in report.rows) <= 1e-10


def mk_row(**kw):
    base = dict(eps=0.1, n=500, h=0.02, steps=100, gap_constant=4.0, beta=1.4,
                r_squared=0.99, i_ratio=3.5, max_positivity=0.0, l1_margin=1.0,
                ledger_residual=1e-12, band_fraction=0.5, boundary_guard_ok=True,
                wall_time=0.1)
    base.update(kw)
    return SweepRow(**base)


class TestGrading:
    def test_all_pass(self):
        rows = [mk_row(), mk_row(eps=0.05, beta=1.5, band_fraction=0.6)]
        verdicts = _grade(rows)
        assert all(v[0] == "PASS" for v in verdicts.values())

    def test_beta_drop_fails(self):
        rows = [mk_row(beta=2.0), mk_row(eps=0.05, beta=1.0)]
        assert _grade(rows)["beta_trend"][0] == "FAIL"

    def test_nonpositive_beta_fails_even_single(self):
        assert _grade([mk_row(beta=-0.1)])["beta_trend"][0] == "FAIL"

    def test_band_fraction_decrease_fails(self):
        rows = [mk_row(band_fraction=0.6), mk_row(eps=0.05, band_fraction=0.5)]
        assert _grade(rows)["band_fraction_trend"][0] == "FAIL"

    def test_positivity_fails(self):
        assert _grade([mk_row(max_positivity=1e-3)])["non_positivity"][0] == "FAIL"

    def test_l1_margin_fails(self):
        assert _grade([mk_row(l1_margin=1.2)])["l1_bound"][0] == "FAIL"

    def test_ledger_fails(self):
        assert _grade([mk_row(ledger_residual=1e-8)])["conservation_ledger"][0] == "FAIL"


class TestCli:
    def write_cfg(self, tmp_path, **overrides):
        base = dict(MINIMAL, eps=[0.1], T=0.2, probes=21)
        base.update(overrides)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(base))
        return str(path)

    def test_run_pass_exit_zero(self, tmp_path, capsys):
        rc = cli.main(["run", self.write_cfg(tmp_path), "--out", str(tmp_path / "o")])
        out = capsys.readouterr().out
        assert rc == 0
        assert "overall: PASS" in out
        assert (tmp_path / "o" / "sweep_report.md").exists()

    def test_validate_exit_zero(self, tmp_path, capsys):
        rc = cli.main(["validate", self.write_cfg(tmp_path)])
        assert rc == 0
        assert "PASS" in capsys.readouterr().out

    def test_validate_bad_hypotheses_exit_three(self, tmp_path):
        path = self.write_cfg(tmp_path, fixture_params={"gap": 0.0})
        assert cli.main(["validate", path]) == 3

    def test_run_refused_config_exit_three(self, tmp_path):
        path = self.write_cfg(tmp_path, fixture_params={"gap": 0.0})
        assert cli.main(["run", path]) == 3

    def test_config_error_exit_three(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(dict(MINIMAL, eps=[0.05, 0.1])))
        assert cli.main(["run", str(path)]) == 3

    def test_missing_file_exit_three(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "nope.json")]) == 3

    def test_verdict_failure_exit_two(self, tmp_path, monkeypatch):
        fake = SimpleNamespace(passed=False, verdict_table=lambda: "fail table")
        monkeypatch.setattr(cli, "run_sweep", lambda cfg, **kw: fake)
        monkeypatch.setattr(cli, "write_outputs", lambda rep, out_dir=None: [])
        assert cli.main(["run", self.write_cfg(tmp_path)]) == 2

    def test_instability_exit_four(self, tmp_path, monkeypatch):
        def boom(cfg, **kw):
            raise SolverInstabilityError("blew up", t=0.0, steps=3)
        monkeypatch.setattr(cli, "run_sweep", boom)
        assert cli.main(["run", self.write_cfg(tmp_path)]) == 4

    def test_version(self, capsys):
        assert cli.main(["version"]) == 0
        assert "vvflux" in capsys.readouterr().out

    def test_mms_passes(self, capsys):
        assert cli.main(["mms"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out

    def test_run_with_jobs_and_snapshots(self, tmp_path):
        base = dict(MINIMAL, eps=[0.1, 0.05], T=0.2, probes=21)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(base))
        out = tmp_path / "o"
        rc = cli.main(["run", str(path), "--out", str(out), "--jobs", "2",
                       "--snapshots"])
        assert rc == 0
        assert (out / "sweep_report.csv").exists()
        assert len(list((out / "snapshots_eps0.1").glob("snap_*.txt"))) == 21
        assert len(list((out / "snapshots_eps0.05").glob("snap_*.txt"))) == 21
