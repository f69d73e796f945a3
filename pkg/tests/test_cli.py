"""CSV ingestion, configuration handling, and the command-line surface."""

import json

import numpy as np
import pytest

from cqs.cli import (
    RunConfig,
    basis_from_serialized,
    bootstrap_stability,
    canonical_sign,
    load_csv,
    main,
    serialize_basis,
)
from cqs.exceptions import ConfigError, DataError
from cqs.metrics import subspace_angle
from cqs.simulation import ModelSpec, generate
from cqs.subspace import Basis


@pytest.fixture
def small_csv(tmp_path):
    path = tmp_path / "small.csv"
    path.write_text("a,b,y\n1.0,2.0,3.0\n4.0,5.0,6.0\n7.0,8.0,9.0\n")
    return path


class TestLoadCsv:
    def test_small_file(self, small_csv):
        ds = load_csv(small_csv, "y")
        assert ds.n == 3 and ds.p == 2
        assert ds.predictor_names == ["a", "b"]
        assert np.allclose(ds.y, [3.0, 6.0, 9.0])
        assert np.allclose(ds.X[:, 0], [1.0, 4.0, 7.0])

    def test_blank_cell_named(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,y\n1.0,,3.0\n")
        with pytest.raises(DataError, match="row 2.*'b'"):
            load_csv(path, "y")

    def test_missing_response_column(self, small_csv):
        with pytest.raises(DataError, match="response column"):
            load_csv(small_csv, "z")

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("a,b,y\n1.0,2.0\n")
        with pytest.raises(DataError, match="row 2"):
            load_csv(path, "y")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(tmp_path / "absent.csv", "y")


class TestRunConfig:
    def test_unknown_key_rejected(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("mystery = 12\n")
        with pytest.raises(ConfigError, match="unknown configuration key"):
            RunConfig.from_sources(str(cfg_file))

    def test_tau_out_of_range_rejected(self):
        with pytest.raises(ConfigError, match="tau"):
            RunConfig.from_sources(None, {"tau": "0.5,1.5"})

    def test_config_file_plus_overrides(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("# comment\nseed = 9\ntau = 0.25,0.75\n")
        cfg = RunConfig.from_sources(str(cfg_file), {"seed": "11"})
        assert cfg.seed == 11
        assert cfg.tau == [0.25, 0.75]

    def test_bad_format(self):
        with pytest.raises(ConfigError, match="format"):
            RunConfig.from_sources(None, {"format": "xml"})


class TestSignConvention:
    def test_largest_coordinate_positive(self):
        v = np.array([0.1, -0.9, 0.2])
        out = canonical_sign(v)
        assert out[1] == pytest.approx(0.9)
        assert np.allclose(out, -v)
        assert np.allclose(canonical_sign(out), out)


class TestBasisRoundTrip:
    def test_serialize_then_read_same_span(self):
        rng = np.random.default_rng(0)
        names = [f"x{i}" for i in range(6)]
        basis = Basis(columns=rng.standard_normal((6, 2)))
        cols = serialize_basis(basis, names)
        recovered = basis_from_serialized(cols, names)
        assert subspace_angle(basis, recovered) < 1e-10


def write_model_csv(path, n=140, p=5, seed=7):
    ds, _ = generate(ModelSpec(model_id="Ex1a", n=n, p=p, seed=seed))
    header = ",".join(ds.predictor_names + ["y"])
    rows = [
        ",".join(repr(float(v)) for v in list(ds.X[i]) + [ds.y[i]])
        for i in range(ds.n)
    ]
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return ds


class TestCommands:
    def test_estimate_json_and_determinism(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
        csv_path = tmp_path / "data.csv"
        write_model_csv(csv_path)
        out1 = tmp_path / "out1.json"
        out2 = tmp_path / "out2.json"
        for out in (out1, out2):
            code = main(["estimate", "--input", str(csv_path), "--response", "y",
                         "--tau", "0.5", "--d-tau", "1", "--cs-dim", "1",
                         "--seed", "4", "--output", str(out)])
            assert code == 0
        assert out1.read_bytes() == out2.read_bytes()
        payload = json.loads(out1.read_text())
        assert payload["meta"]["seed"] == 4
        assert payload["meta"]["timestamp"] == "2023-11-14T22:13:20Z"
        entry = payload["directions"][0]
        assert entry["tau"] == 0.5
        vec = np.array([entry["directions"][0][n] for n in payload["predictors"]])
        # direction close to (3,1,0,...)/sqrt(10), canonical sign
        assert vec[np.argmax(np.abs(vec))] > 0
        assert abs(vec[0]) > 0.8

    def test_cli_matches_library_run(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
        code = main(["simulate", "--model", "Ex1a", "--n", "120", "--p", "5",
                     "--tau", "0.5", "--reps", "2", "--seed", "21"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        from cqs.simulation import EstimatorSettings, run_cell
        cell = run_cell(ModelSpec(model_id="Ex1a", n=120, p=5, seed=21), 0.5,
                        EstimatorSettings(), n_reps=2)
        assert payload["cells"][0]["mean_error"] == cell.mean_error

    def test_simulate_rejects_empty(self):
        code = main(["simulate"])
        assert code == 2

    def test_unknown_preset(self):
        assert main(["simulate", "--preset", "bogus"]) == 2

    def test_dimension_hand_fed_eigenvalues(self, capsys):
        code = main(["dimension", "--eigenvalues", "5,5,0,0,0,0,0,0,0,0",
                     "--n", "600"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["dimension"][0]["selected"] == 2
        assert len(payload["dimension"][0]["g_profile"]) == 10

    def test_missing_input_is_config_error(self):
        assert main(["estimate", "--tau", "0.5"]) == 2

    def test_data_error_exit_code(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,y\n1.0,oops,3.0\n")
        assert main(["estimate", "--input", str(path), "--response", "y"]) == 3

    def test_table_format(self, tmp_path, capsys):
        csv_path = tmp_path / "data.csv"
        write_model_csv(csv_path)
        code = main(["estimate", "--input", str(csv_path), "--response", "y",
                     "--tau", "0.5", "--d-tau", "1", "--cs-dim", "1",
                     "--format", "table"])
        assert code == 0
        text = capsys.readouterr().out
        assert "direction 1" in text
        assert "x1" in text


class TestPresets:
    def test_size_grid_shape(self):
        from cqs.cli import _PRESETS
        cells = _PRESETS["size-grid"](0)
        assert len(cells) == 9  # 3 sample sizes x 3 predictor counts
        assert all(c["taus"] == (0.25, 0.5, 0.75) for c in cells)
        assert {(c["n"], c["p"]) for c in cells} == {
            (n, p) for n in (200, 400, 600) for p in (10, 20, 40)
        }

    def test_error_dists_shape(self):
        from cqs.cli import _PRESETS
        cells = _PRESETS["error-dists"](0)
        assert len(cells) == 12  # 4 models x 3 error distributions
        assert {c["model"] for c in cells} == {"I", "II", "III", "IV"}
        assert {c["error_dist"] for c in cells} == {"N", "t3", "chisq3"}


class TestOzoneSchema:
    def test_validator_accepts_expected_layout(self):
        from cqs.cli import OZONE_PREDICTORS, validate_ozone_schema
        from cqs.data import Dataset
        rng = np.random.default_rng(0)
        ds = Dataset(X=rng.standard_normal((150, 8)), y=rng.standard_normal(150),
                     predictor_names=list(OZONE_PREDICTORS), response_name="O3")
        assert validate_ozone_schema(ds)

    def test_validator_rejects_missing_column(self):
        from cqs.cli import validate_ozone_schema
        from cqs.data import Dataset
        rng = np.random.default_rng(1)
        ds = Dataset(X=rng.standard_normal((150, 8)), y=rng.standard_normal(150),
                     predictor_names=[f"c{i}" for i in range(8)], response_name="O3")
        with pytest.raises(DataError, match="missing"):
            validate_ozone_schema(ds)


class TestBootstrap:
    def test_identity_resample_scores_zero(self, tmp_path):
        ds, _ = generate(ModelSpec(model_id="Ex1a", n=150, p=5, seed=33))
        report = bootstrap_stability(ds, 0.5, n_resamples=1, resample_size=150,
                                     seed=1, d_tau=1, cs_dim=1,
                                     with_replacement=False)
        # a permutation of the full sample is the same dataset
        assert report["mean_error"] == pytest.approx(0.0, abs=1e-6)

    def test_oversized_resample_with_replacement_allowed(self):
        ds, _ = generate(ModelSpec(model_id="Ex1a", n=50, p=4, seed=34))
        report = bootstrap_stability(ds, 0.5, n_resamples=2, resample_size=100,
                                     seed=2, d_tau=1, cs_dim=1)
        assert report["n_failed"] + 2 == 2 or report["n_failed"] >= 0
        assert report["resample_size"] == 100

    def test_without_replacement_oversize_rejected(self):
        ds, _ = generate(ModelSpec(model_id="Ex1a", n=50, p=4, seed=35))
        with pytest.raises(ConfigError):
            bootstrap_stability(ds, 0.5, n_resamples=1, resample_size=60,
                                seed=3, with_replacement=False)
