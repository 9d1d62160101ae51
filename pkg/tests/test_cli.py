"""Driver plumbing: tables, configs, determinism, experiment wiring."""

import hashlib
import json

import numpy as np
import pytest

from patchdg.cli import (
    DEFAULTS,
    UsageError,
    emit_table,
    load_config,
    main,
    read_table,
    resolve_config,
)


class TestEmitTable:
    def test_float_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        vals = list(rng.standard_normal(20)) + [1e-300, 1e300, np.pi]
        path = emit_table([[v] for v in vals], ["x"], tmp_path / "t.csv")
        _, rows = read_table(path)
        back = [float(r[0]) for r in rows]
        assert all(a == b for a, b in zip(back, vals))

    def test_empty_rows_give_header_only(self, tmp_path):
        path = emit_table([], ["a", "b"], tmp_path / "t.csv")
        assert path.read_bytes() == b"a,b\n"

    def test_schema_width_mismatch_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_table([[1, 2, 3]], ["a", "b"], tmp_path / "t.csv")

    def test_lf_line_endings_and_integer_formatting(self, tmp_path):
        path = emit_table([[3, "uniform", 0.5]], ["k", "fam", "x"],
                          tmp_path / "t.csv")
        data = path.read_bytes()
        assert b"\r" not in data
        assert data.splitlines()[1] == b"3,uniform,0.5"


class TestConfig:
    def test_unknown_field_names_path(self):
        with pytest.raises(UsageError, match="dispersion.bogus"):
            resolve_config("dispersion", {"bogus": 1})

    def test_empty_sweep_list_rejected(self):
        with pytest.raises(UsageError, match="knot_counts"):
            resolve_config("spectrum", {"knot_counts": []})

    def test_defaults_round_trip_through_json(self):
        for kind in DEFAULTS:
            cfg = resolve_config(kind, {})
            assert json.loads(json.dumps(cfg)) == cfg

    def test_toml_and_json_configs_load(self, tmp_path):
        t = tmp_path / "a.toml"
        t.write_text('p = 3\nK = 16\n')
        j = tmp_path / "a.json"
        j.write_text('{"p": 3, "K": 16}')
        assert load_config(t) == load_config(j) == {"p": 3, "K": 16}

    def test_overrides_do_not_mutate_defaults(self):
        cfg = resolve_config("eigstudy", {"p": 9})
        assert cfg["p"] == 9
        assert DEFAULTS["eigstudy"]["p"] == 4


class TestMainExitCodes:
    def test_unknown_config_field_exits_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("nonsense = 1\n")
        code = main(["--config", str(bad), "--out", str(tmp_path), "eigstudy"])
        assert code == 2
        assert "eigstudy.nonsense" in capsys.readouterr().err

    def test_empty_sweep_exits_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"wavenumbers": []}')
        code = main(["--config", str(bad), "--out", str(tmp_path),
                     "dispersion"])
        assert code == 2
        assert "wavenumbers" in capsys.readouterr().err

    def test_numerical_failure_reports_module(self, tmp_path, capsys):
        # an unsatisfiable eigensolve resolution is a runtime error, not usage
        bad = tmp_path / "bad.json"
        bad.write_text('{"K": -3}')
        code = main(["--config", str(bad), "--out", str(tmp_path), "eigstudy"])
        assert code == 1
        assert "eigstudy" in capsys.readouterr().err


class TestExperiments:
    def test_constants_rows_and_known_value(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(
            {"families": ["uniform"], "degrees": [2], "knot_rules": ["p"]}))
        assert main(["--config", str(cfg), "--out", str(tmp_path),
                     "constants"]) == 0
        schema, rows = read_table(tmp_path / "constants.csv")
        assert schema == ["family", "p", "K", "lambda_T", "lambda_I",
                          "C_T_over_K", "C_I_over_K"]
        assert rows[0][:3] == ["uniform", "2", "2"]
        assert float(rows[0][5]) == pytest.approx(2.8364, abs=2e-4)

    def test_repeat_runs_byte_identical(self, tmp_path):
        for sub in ("r1", "r2"):
            assert main(["--out", str(tmp_path / sub), "--workers",
                         "2" if sub == "r1" else "1", "dispersion"]) == 0
        a = (tmp_path / "r1" / "dispersion.csv").read_bytes()
        b = (tmp_path / "r2" / "dispersion.csv").read_bytes()
        assert a == b

    def test_sidecar_carries_config_hash(self, tmp_path):
        assert main(["--out", str(tmp_path), "eigstudy"]) == 0
        meta = json.loads((tmp_path / "eigstudy.json").read_text())
        want = hashlib.sha256(
            json.dumps(meta["config"], sort_keys=True).encode()).hexdigest()
        assert meta["config_hash"] == want
        assert meta["experiment"] == "eigstudy"
        assert "git_revision" in meta

    def test_convergence_rates_near_p_plus_one(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text('formulations = ["first"]\ndegrees = [2]\n'
                       'knot_counts = [4, 8, 16]\n')
        assert main(["--config", str(cfg), "--out", str(tmp_path),
                     "convergence1d"]) == 0
        _, rows = read_table(tmp_path / "convergence1d.csv")
        assert rows[0][5] == ""  # no rate at the coarsest level
        finest_rate = float(rows[-1][5])
        assert abs(finest_rate - 3.0) <= 0.2

    def test_knots_flag_overrides_family(self, tmp_path):
        assert main(["--out", str(tmp_path), "--knots", "smoothed",
                     "eigstudy"]) == 0
        meta = json.loads((tmp_path / "eigstudy.json").read_text())
        assert meta["config"]["family"] == "smoothed"

    def test_smoke_box_checks_pass(self, tmp_path):
        cfg = tmp_path / "s.json"
        cfg.write_text('{"num_steps": 60}')
        assert main(["--config", str(cfg), "--out", str(tmp_path),
                     "smoke3d"]) == 0
        meta = json.loads((tmp_path / "smoke3d.json").read_text())
        assert meta["constant_residual"] < 1e-11
        assert 0.0 < meta["energy_decay"] <= 1.0
        _, rows = read_table(tmp_path / "smoke3d.csv")
        energies = [float(r[2]) for r in rows]
        assert all(np.isfinite(energies))
        assert all(b <= a for a, b in zip(energies, energies[1:]))

    def test_simulate_reports_nonincreasing_energy(self, tmp_path):
        cfg = tmp_path / "s.toml"
        cfg.write_text('final_time = 0.4\n')
        assert main(["--config", str(cfg), "--out", str(tmp_path),
                     "simulate"]) == 0
        _, rows = read_table(tmp_path / "simulate.csv")
        energies = [float(r[2]) for r in rows]
        assert energies[-1] <= energies[0] * (1.0 + 1e-12)
