import json

import numpy as np
import pytest

import scenario_ddc as sd
from scenario_ddc.errors import DataValidationError
from scenario_ddc.io import (
    file_sha256,
    load_controller,
    load_dataset,
    save_controller,
    save_dataset,
    save_raster_csv,
)

from conftest import make_scalar_data


def make_dataset(tmp_path, n=3, M=8, seed=0):
    dist = sd.default_benchmark_fleet(0.001)
    cfg = sd.RolloutConfig(M=M, wbar=0.015)
    trajectories = sd.generate_dataset(dist, n, cfg, master_seed=seed)
    path = tmp_path / "ds.json"
    save_dataset(path, trajectories)
    return path, trajectories


class TestDataset:
    def test_round_trip_bit_exact(self, tmp_path):
        path, originals = make_dataset(tmp_path)
        loaded, nx, nu, M = load_dataset(path)
        assert (nx, nu, M) == (3, 3, 8)
        for orig, back in zip(originals, loaded):
            np.testing.assert_array_equal(orig.states, back.states)
            np.testing.assert_array_equal(orig.inputs, back.inputs)
            assert orig.seed == back.seed
            assert orig.system_id == back.system_id

    def test_schema_fields_present(self, tmp_path):
        path, _ = make_dataset(tmp_path)
        doc = json.loads(path.read_text())
        assert set(doc) == {"nx", "nu", "M", "trajectories"}
        assert set(doc["trajectories"][0]) == {"system_id", "seed", "states", "inputs"}

    def test_rejects_missing_field(self, tmp_path):
        path, _ = make_dataset(tmp_path)
        doc = json.loads(path.read_text())
        del doc["M"]
        path.write_text(json.dumps(doc))
        with pytest.raises(DataValidationError):
            load_dataset(path)

    def test_rejects_inconsistent_trajectory(self, tmp_path):
        path, _ = make_dataset(tmp_path)
        doc = json.loads(path.read_text())
        doc["trajectories"][0]["states"] = doc["trajectories"][0]["states"][:-1]
        path.write_text(json.dumps(doc))
        with pytest.raises(DataValidationError):
            load_dataset(path)

    def test_rejects_heterogeneous_save(self, tmp_path):
        dist = sd.default_benchmark_fleet(0.001)
        t1 = sd.generate_dataset(dist, 1, sd.RolloutConfig(M=5, wbar=0.0), 0)
        t2 = sd.generate_dataset(dist, 1, sd.RolloutConfig(M=6, wbar=0.0), 0)
        with pytest.raises(DataValidationError):
            save_dataset(tmp_path / "bad.json", t1 + t2)


class TestController:
    def _certificate(self):
        dm, qmi, _ = make_scalar_data(M=20, seed=0)
        problem = sd.assemble_scenario_lmi([dm], [qmi])
        cert = sd.solve_feasibility(problem)
        assert isinstance(cert, sd.SynthesisCertificate)
        return cert

    def test_round_trip(self, tmp_path):
        cert = self._certificate()
        path = tmp_path / "controller.json"
        save_controller(path, cert, dataset_hash="ab" * 32, seeds=[1, 2])
        doc = load_controller(path)
        np.testing.assert_array_equal(doc["K"], cert.K)
        np.testing.assert_array_equal(doc["P"], cert.P)
        assert doc["a"] == cert.a
        assert doc["b"] == cert.b
        assert doc["delta"] == cert.delta
        assert doc["per_scenario_margins"] == list(cert.per_scenario_margins)
        assert doc["provenance"]["dataset_sha256"] == "ab" * 32
        assert doc["provenance"]["seeds"] == [1, 2]
        assert doc["provenance"]["tool_version"] == sd.__version__

    def test_rejects_shape_mismatch(self, tmp_path):
        cert = self._certificate()
        path = tmp_path / "controller.json"
        save_controller(path, cert)
        doc = json.loads(path.read_text())
        doc["nx"] = 2
        path.write_text(json.dumps(doc))
        with pytest.raises(DataValidationError):
            load_controller(path)


def test_raster_csv_format(tmp_path):
    dm, qmi, _ = make_scalar_data(M=10, seed=4)
    raster = sd.consistent_set_raster_1d(dm, qmi, (0.4, 1.4, 0.9, 1.9), 5)
    path = tmp_path / "raster.csv"
    save_raster_csv(path, raster)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "a,b,inside"
    assert len(lines) == 1 + 25
    a, b, inside = lines[1].split(",")
    assert float(a) == pytest.approx(0.4)
    assert inside in ("0", "1")


def test_file_sha256_changes_with_content(tmp_path):
    p = tmp_path / "x"
    p.write_text("alpha")
    h1 = file_sha256(p)
    p.write_text("beta")
    assert file_sha256(p) != h1
    assert len(h1) == 64
