import csv
import hashlib
import json
import math

import numpy as np
import pytest

from profile_shift import (
    ParseError,
    ValidationError,
    build_grid,
    interval,
)
from profile_shift.cli import (
    build_shift,
    config_from_dict,
    gamma_vector,
    main,
    parse_config,
    run,
)

PI = math.pi


def base_config(**overrides):
    data = {
        "domain": {"dimension": 1, "box": [[0.0, PI]]},
        "resolution": 63,
        "T": 1.0,
        "N_t": 64,
        "theta": 1.0,
        "gamma": {"eigenfunction": 1},
    }
    data.update(overrides)
    return data


def write_config(tmp_path, name="config.json", **overrides):
    data = base_config(**overrides)
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


class TestParseConfig:
    def test_defaults(self, tmp_path):
        path = tmp_path / "minimal.json"
        path.write_text(json.dumps({
            "domain": {"dimension": 1, "box": [[0.0, PI]]},
            "resolution": 31,
        }))
        cfg = parse_config(path)
        assert cfg.T == 1.0
        assert cfg.steps == 256
        assert cfg.theta == 1.0
        assert cfg.advection_mode == "upwind"
        assert cfg.coefficients == {"preset": "heat"}
        assert cfg.gamma == {"eigenfunction": 1}
        assert cfg.nonneg is None
        assert cfg.tol == 1e-10
        assert cfg.max_iter == 200
        assert cfg.restart == 50
        assert cfg.out_dir == "out"
        assert cfg.slice_stride == 1

    def test_scalar_resolution_broadcasts(self):
        cfg = config_from_dict({
            "domain": {"dimension": 2, "box": [[0.0, PI], [0.0, PI]]},
            "resolution": 15,
        })
        assert cfg.resolution == (15, 15)

    def test_round_trip_through_to_dict(self):
        mask = [[1, 1, 1], [1, 0, 1], [1, 1, 1]]
        cfg = config_from_dict({
            "domain": {"dimension": 2, "box": [[0.0, PI], [0.0, 2.0]], "mask": mask},
            "resolution": [3, 3],
            "T": 0.5,
            "N_t": 32,
            "theta": 0.5,
            "advection_mode": "centered",
            "coefficients": {"preset": "drift", "velocity": [1.0, -2.0], "absorption": 0.5},
            "gamma": {"indicator": {"box": [[0.5, 1.0], [0.5, 1.0]], "value": 2.0},
                      "nonneg": True},
            "solver": {"tol": 1e-8, "max_iter": 50, "restart": 10},
            "outputs": {"directory": "results", "slice_stride": 4},
        })
        echoed = cfg.to_dict()
        assert config_from_dict(echoed).to_dict() == echoed

    def test_theta_out_of_range(self, tmp_path):
        path = write_config(tmp_path, theta=0.3)
        with pytest.raises(ValidationError):
            parse_config(path)

    def test_gamma_must_pick_one_form(self):
        with pytest.raises(ValidationError):
            config_from_dict(base_config(
                gamma={"eigenfunction": 1, "table": [1.0] * 63}
            ))

    def test_unknown_top_level_field(self):
        with pytest.raises(ValidationError):
            config_from_dict(base_config(horizon=2.0))

    def test_unknown_domain_field(self):
        with pytest.raises(ValidationError):
            config_from_dict(base_config(
                domain={"dimension": 1, "box": [[0.0, PI]], "holes": []}
            ))

    def test_degenerate_box(self):
        with pytest.raises(ValidationError):
            config_from_dict(base_config(domain={"dimension": 1, "box": [[1.0, 1.0]]}))

    def test_mask_requires_matching_shape(self):
        data = base_config(
            domain={"dimension": 2, "box": [[0.0, PI], [0.0, PI]],
                    "mask": [[1, 1], [1, 1]]},
            resolution=[3, 3],
        )
        with pytest.raises(ValidationError, match="mask shape"):
            config_from_dict(data)

    def test_invalid_json_reports_location(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"domain": }')
        with pytest.raises(ParseError, match="line 1"):
            parse_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            parse_config(tmp_path / "nope.json")

    def test_tabulated_and_preset_conflict(self):
        with pytest.raises(ValidationError):
            config_from_dict(base_config(
                coefficients={"preset": "heat", "tabulated": {"a": [[1.0]]}}
            ))


class TestGammaVector:
    def grid(self, m=63):
        return build_grid(interval(0.0, PI), [m])

    def test_first_eigenfunction(self):
        grid = self.grid()
        cfg = config_from_dict(base_config())
        assert gamma_vector(cfg, grid) == pytest.approx(
            np.sin(grid.coordinates()[:, 0])
        )

    def test_eigenfunction_respects_box_offset(self):
        grid = build_grid(interval(2.0, 5.0), [31])
        cfg = config_from_dict(base_config(
            domain={"dimension": 1, "box": [[2.0, 5.0]]},
            gamma={"eigenfunction": 2},
        ))
        x = grid.coordinates()[:, 0]
        assert gamma_vector(cfg, grid) == pytest.approx(
            np.sin(2.0 * PI * (x - 2.0) / 3.0)
        )

    def test_product_eigenfunction_2d(self):
        from profile_shift import box2d

        grid = build_grid(box2d(), [7, 7])
        cfg = config_from_dict({
            "domain": {"dimension": 2, "box": [[0.0, PI], [0.0, PI]]},
            "resolution": [7, 7],
            "gamma": {"eigenfunction": [1, 2]},
        })
        coords = grid.coordinates()
        assert gamma_vector(cfg, grid) == pytest.approx(
            np.sin(coords[:, 0]) * np.sin(2.0 * coords[:, 1])
        )

    def test_indicator(self):
        grid = self.grid()
        cfg = config_from_dict(base_config(
            gamma={"indicator": {"box": [[1.0, 2.0]], "value": 3.0}}
        ))
        x = grid.coordinates()[:, 0]
        expected = np.where((x >= 1.0) & (x <= 2.0), 3.0, 0.0)
        assert gamma_vector(cfg, grid) == pytest.approx(expected)

    def test_table_passthrough_and_length_check(self):
        grid = self.grid(5)
        values = [0.1, 0.2, 0.3, 0.4, 0.5]
        cfg = config_from_dict(base_config(resolution=5, gamma={"table": values}))
        assert gamma_vector(cfg, grid) == pytest.approx(values)
        short = config_from_dict(base_config(resolution=5, gamma={"table": [1.0, 2.0]}))
        with pytest.raises(ValidationError, match="interior nodes"):
            gamma_vector(short, grid)


class TestBuildShift:
    def test_autodetect_nonneg(self):
        grid = build_grid(interval(0.0, PI), [63])
        cfg = config_from_dict(base_config())
        assert build_shift(cfg, grid).nonneg is True

    def test_autodetect_mixed_sign(self):
        grid = build_grid(interval(0.0, PI), [63])
        cfg = config_from_dict(base_config(gamma={"eigenfunction": 2}))
        assert build_shift(cfg, grid).nonneg is False

    def test_explicit_nonneg_conflicts_with_negative_gamma(self):
        grid = build_grid(interval(0.0, PI), [63])
        cfg = config_from_dict(base_config(
            gamma={"eigenfunction": 2, "nonneg": True}
        ))
        with pytest.raises(ValidationError):
            build_shift(cfg, grid)


class TestSolveCommand:
    def test_exit_zero_and_artifacts(self, tmp_path, capsys):
        path = write_config(tmp_path, outputs={"directory": str(tmp_path / "out")})
        assert main(["solve", "--config", str(path)]) == 0
        out = capsys.readouterr().out
        assert "solve:" in out and "-> ok" in out
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["command"] == "solve"
        assert report["passed"] is True
        assert report["relative_residual"] <= 1e-10
        assert report["checks"]["fixed_shift"]["passed"] is True
        assert report["checks"]["mass"]["defect"] <= 1e-12
        assert (tmp_path / "out" / "trajectory.csv").exists()
        assert (tmp_path / "out" / "normalized_trajectory.csv").exists()

    def test_csv_columns_reproduce_the_shift(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, outputs={"directory": str(out)})
        assert main(["solve", "--config", str(path), "--quiet"]) == 0
        with open(out / "trajectory.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        assert header[0] == "x"
        assert float(header[1]) == 0.0
        assert float(header[-1]) == 1.0
        assert len(body) == 63
        x = np.array([float(r[0]) for r in body])
        initial = np.array([float(r[1]) for r in body])
        terminal = np.array([float(r[-1]) for r in body])
        # the fixed-shift identity survives the round trip through text
        assert initial - terminal == pytest.approx(np.sin(x), abs=1e-9)

    def test_slice_stride_thins_columns_but_keeps_endpoints(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(
            tmp_path, outputs={"directory": str(out), "slice_stride": 10}
        )
        assert main(["solve", "--config", str(path), "--quiet"]) == 0
        with open(out / "trajectory.csv", newline="") as fh:
            header = next(csv.reader(fh))
        # N_t=64: slices 0,10,...,60 plus the forced final slice
        assert len(header) == 1 + 8
        assert float(header[1]) == 0.0
        assert float(header[-1]) == 1.0

    def test_metadata_manifest_hashes_match(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, outputs={"directory": str(out)})
        assert main(["solve", "--config", str(path), "--quiet"]) == 0
        meta = json.loads((out / "metadata.json").read_text())
        assert meta["package"] == "profile-shift"
        assert meta["command"] == "solve"
        assert set(meta["files"]) == {
            "report.json", "trajectory.csv", "normalized_trajectory.csv"
        }
        for name, digest in meta["files"].items():
            actual = hashlib.sha256((out / name).read_bytes()).hexdigest()
            assert actual == digest, name
        cfg = parse_config(path)
        assert meta["config"] == cfg.to_dict()

    def test_runs_are_deterministic(self, tmp_path):
        path = write_config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["solve", "--config", str(path), "--out", str(a), "--quiet"]) == 0
        assert main(["solve", "--config", str(path), "--out", str(b), "--quiet"]) == 0
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()

    def test_out_flag_overrides_config(self, tmp_path):
        path = write_config(tmp_path, outputs={"directory": str(tmp_path / "ignored")})
        target = tmp_path / "elsewhere"
        assert main(["solve", "--config", str(path), "--out", str(target), "--quiet"]) == 0
        assert (target / "report.json").exists()
        assert not (tmp_path / "ignored").exists()

    def test_quiet_suppresses_summary(self, tmp_path, capsys):
        path = write_config(tmp_path, outputs={"directory": str(tmp_path / "out")})
        assert main(["solve", "--config", str(path), "--quiet"]) == 0
        assert capsys.readouterr().out == ""


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path, capsys):
        path = write_config(tmp_path, theta=0.3)
        assert main(["solve", "--config", str(path)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_config_is_2(self, tmp_path):
        assert main(["solve", "--config", str(tmp_path / "absent.json")]) == 2

    def test_bad_resolutions_flag_is_2(self, tmp_path):
        path = write_config(tmp_path)
        code = main(["posedness", "--config", str(path), "--resolutions", "7,x"])
        assert code == 2

    def test_no_convergence_is_3(self, tmp_path, capsys):
        # an eigenfunction shift would converge in one Krylov iteration even
        # here, so use an indicator to make the single restarted step fail
        path = write_config(
            tmp_path,
            T=0.01, N_t=4,
            gamma={"indicator": {"box": [[1.0, 2.0]]}},
            solver={"max_iter": 1, "restart": 1},
            outputs={"directory": str(tmp_path / "out")},
        )
        assert main(["solve", "--config", str(path)]) == 3
        assert "solver error" in capsys.readouterr().err

    def test_failed_check_is_4(self, tmp_path):
        # one Crank-Nicolson step against a sharp indicator overshoots below
        # zero, so the positivity check on the normalized profile fails
        path = write_config(
            tmp_path,
            N_t=1, theta=0.5,
            gamma={"indicator": {"box": [[1.5, 1.65]]}, "nonneg": True},
            outputs={"directory": str(tmp_path / "out")},
        )
        assert main(["solve", "--config", str(path), "--quiet"]) == 4
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["passed"] is False
        assert report["checks"]["positivity"]["violation_count"] >= 1

    def test_oracle_cap_is_5(self, tmp_path, capsys):
        path = write_config(
            tmp_path,
            domain={"dimension": 2, "box": [[0.0, PI], [0.0, PI]]},
            resolution=70,
        )
        assert main(["oracle", "--config", str(path)]) == 5
        assert "size cap" in capsys.readouterr().err


class TestOracleCommand:
    def test_agreement_and_qmatrix(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(
            tmp_path, resolution=31,
            coefficients={"preset": "drift", "velocity": [1.5], "absorption": 0.25},
            gamma={"eigenfunction": 2},
            outputs={"directory": str(out)},
        )
        assert main(["oracle", "--config", str(path), "--quiet"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["agreement"] <= 1e-8
        q = np.load(out / "qmatrix.npy")
        assert q.shape == (31, 31)
        assert report["spectral_radius"] < 1.0


class TestSpectrumCommand:
    def test_structured_beats_saturated_svd(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(
            tmp_path, resolution=31, N_t=512,
            outputs={"directory": str(out)},
        )
        assert main(["spectrum", "--config", str(path), "--quiet"]) == 0
        report = json.loads((out / "report.json").read_text())
        # double-precision SVD saturates near 1e16..1e19 while the structured
        # route resolves the true decades of decay
        assert report["log10_cond_Q_svd"] <= 20.0
        assert report["log10_cond_Q_structured"] > 100.0
        assert report["log10_cond_Q"] == report["log10_cond_Q_structured"]
        assert len(report["eigenvalues"]["real"]) == 31

    def test_drift_falls_back_to_svd(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(
            tmp_path, resolution=15, N_t=32,
            coefficients={"preset": "drift", "velocity": [1.0]},
            outputs={"directory": str(out)},
        )
        assert main(["spectrum", "--config", str(path), "--quiet"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["log10_cond_Q_structured"] is None
        assert report["log10_cond_Q"] == report["log10_cond_Q_svd"]


class TestPosednessCommand:
    def test_resolutions_flag(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, outputs={"directory": str(out)})
        code = main([
            "posedness", "--config", str(path), "--resolutions", "7,15", "--quiet"
        ])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert [r["M"] for r in report["records"]] == [7, 15]
        assert all(r["cond_identity_minus_Q"] <= 2.0 for r in report["records"])

    def test_tabulated_rejected(self, tmp_path):
        grid = build_grid(interval(0.0, PI), [5])
        a = np.ones((5, 1, 1)).tolist()
        path = write_config(
            tmp_path, resolution=5, coefficients={"tabulated": {"a": a}},
            gamma={"table": [0.0, 1.0, 1.0, 1.0, 0.0]},
        )
        assert grid.size == 5
        assert main(["posedness", "--config", str(path)]) == 2


class TestConvergenceCommand:
    def test_heat1d(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, outputs={"directory": str(out)})
        code = main([
            "convergence", "--config", str(path), "--resolutions", "15,31", "--quiet"
        ])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["case"] == "heat1d"
        assert report["spatial_order"] >= 1.9
        assert report["temporal_order"] >= 0.9
        assert report["temporal_order_threshold"] == 0.9

    def test_unregistered_case_is_2(self, tmp_path):
        path = write_config(
            tmp_path, domain={"dimension": 1, "box": [[0.0, 1.0]]}
        )
        assert main(["convergence", "--config", str(path)]) == 2


class TestValidateCommand:
    def test_certified_upwind_includes_contraction_probe(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(
            tmp_path,
            coefficients={"preset": "drift", "velocity": [1.5], "absorption": 0.25},
            outputs={"directory": str(out)},
        )
        assert main(["validate", "--config", str(path), "--quiet"]) == 0
        report = json.loads((out / "report.json").read_text())
        names = [c["name"] for c in report["checks"]]
        assert "coefficients" in names
        assert "random_shifts" in names
        assert "max_norm_contraction" in names
        assert report["m_matrix_certified"] is True
        assert all(c["passed"] for c in report["checks"])

    def test_crank_nicolson_skips_contraction_probe(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(
            tmp_path, theta=0.5, advection_mode="centered",
            outputs={"directory": str(out)},
        )
        assert main(["validate", "--config", str(path), "--quiet"]) == 0
        report = json.loads((out / "report.json").read_text())
        names = [c["name"] for c in report["checks"]]
        assert "max_norm_contraction" not in names


class TestRunApi:
    def test_bundle_fields(self, tmp_path):
        cfg = config_from_dict(base_config(
            outputs={"directory": str(tmp_path / "out")}
        ))
        bundle = run(cfg, "solve", quiet=True)
        assert bundle.command == "solve"
        assert bundle.passed is True
        assert bundle.report["iterations"] >= 1
        assert set(bundle.files) == {
            "report.json", "trajectory.csv", "normalized_trajectory.csv"
        }

    def test_unknown_command_rejected(self, tmp_path):
        cfg = config_from_dict(base_config(
            outputs={"directory": str(tmp_path / "out")}
        ))
        with pytest.raises(ValidationError):
            run(cfg, "frobnicate")
