"""Snapshot formats, manifest validation, run records and the CLI surface."""

import json
import os

import numpy as np
import pytest

from randns.cli import main, replay_run_record, run_manifest
from randns.manifests import ManifestError, normalize_manifest, parse_manifest
from randns.records import read_run_record
from randns.snapshots import (
    SnapshotError,
    load_field,
    load_trajectory,
    save_field,
    save_trajectory,
)
from randns.spectral import TorusSpec, random_real_field, zero_field
from randns.trajectories import TimeGrid, heat_trajectory


class TestFieldSnapshots:
    def test_zero_round_trip(self, tmp_path, spec2d):
        path = tmp_path / "zero.nsrf1"
        save_field(path, zero_field(spec2d), s=-0.4)
        loaded, s = load_field(path)
        assert s == -0.4
        assert loaded.spec == spec2d
        assert np.array_equal(loaded.coeffs, zero_field(spec2d).coeffs)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_random_round_trip_bit_exact(self, tmp_path, dim):
        spec = TorusSpec(dim, 8, 16)
        f = random_real_field(spec, seed=3, solenoidal=True)
        path = tmp_path / "f.nsrf1"
        save_field(path, f, s=-0.2)
        loaded, _ = load_field(path)
        assert loaded.coeffs.tobytes() == f.coeffs.tobytes()
        assert loaded.solenoidal

    def test_corrupted_magic(self, tmp_path, spec2d):
        path = tmp_path / "bad.nsrf1"
        save_field(path, zero_field(spec2d))
        raw = bytearray(path.read_bytes())
        raw[0] = ord("X")
        path.write_bytes(bytes(raw))
        with pytest.raises(SnapshotError, match="bad magic"):
            load_field(path)

    def test_truncated_payload(self, tmp_path, spec2d):
        path = tmp_path / "cut.nsrf1"
        save_field(path, random_real_field(spec2d, seed=1))
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(SnapshotError, match="truncated"):
            load_field(path)

    def test_trailing_garbage(self, tmp_path, spec2d):
        path = tmp_path / "extra.nsrf1"
        save_field(path, zero_field(spec2d))
        path.write_bytes(path.read_bytes() + b"junk")
        with pytest.raises(SnapshotError, match="trailing"):
            load_field(path)


class TestTrajectorySnapshots:
    def test_round_trip(self, tmp_path, spec2d):
        grid = TimeGrid(0.2, 8)
        traj = heat_trajectory(random_real_field(spec2d, seed=5,
                                                 solenoidal=True), grid)
        path = tmp_path / "traj.nstj1"
        save_trajectory(path, traj, s=-0.3)
        loaded, s = load_trajectory(path)
        assert s == -0.3
        assert loaded.grid == grid
        assert loaded.coeffs.tobytes() == traj.coeffs.tobytes()

    def test_truncated(self, tmp_path, spec2d):
        grid = TimeGrid(0.2, 8)
        traj = heat_trajectory(zero_field(spec2d), grid)
        path = tmp_path / "traj.nstj1"
        save_trajectory(path, traj)
        path.write_bytes(path.read_bytes()[:100])
        with pytest.raises(SnapshotError):
            load_trajectory(path)


class TestManifests:
    def test_minimal_defaults(self):
        man = parse_manifest('{"kind": "tail", "s": -0.2, "selector": "E2"}')
        assert man.params.m == pytest.approx(8.0)
        assert man.params.delta == pytest.approx(1 / 8)
        assert man.torus == (32, 64)
        assert man.samples == 5000

    def test_s_constraint_cited(self):
        with pytest.raises(ManifestError, match="-1 < s < 0"):
            parse_manifest('{"kind": "solve", "s": -1.5}')

    def test_m_interval_cited(self):
        with pytest.raises(ManifestError, match=r"\(8, 16\]"):
            parse_manifest('{"kind": "solve", "dim": 3, "s": -0.1, "m": 5}')

    def test_unknown_keys_with_path(self):
        with pytest.raises(ManifestError, match="unknown key 'frobnicate' at manifest"):
            parse_manifest('{"kind": "solve", "s": -0.2, "frobnicate": 1}')
        with pytest.raises(ManifestError, match="at manifest.torus"):
            parse_manifest(
                '{"kind": "solve", "s": -0.2, "torus": {"weird": 2}}')
        with pytest.raises(ManifestError, match="at manifest.ensemble"):
            parse_manifest(
                '{"kind": "solve", "s": -0.2, "ensemble": {"n": 2}}')

    def test_syntax_error(self):
        with pytest.raises(ManifestError, match="not valid JSON"):
            parse_manifest("{nope")

    def test_selector_required(self):
        with pytest.raises(ManifestError, match="selector"):
            parse_manifest('{"kind": "tail", "s": -0.2}')

    def test_theorem_needs_lambda(self):
        with pytest.raises(ManifestError, match="lambda"):
            parse_manifest('{"kind": "theorem", "s": -0.2}')

    def test_digest_idempotent(self):
        man = parse_manifest('{"kind": "tail", "s": -0.2, "selector": "E2"}')
        again = normalize_manifest(json.loads(json.dumps(man.normalized)))
        assert again.digest() == man.digest()

    def test_plain_regime_manifest(self):
        man = parse_manifest('{"kind": "tail", "s": -0.6, "selector": "E1"}')
        assert man.params.regime == "plain"
        again = normalize_manifest(json.loads(json.dumps(man.normalized)))
        assert again.digest() == man.digest()


def small_tail_manifest(tmp_path, **extra):
    raw = {
        "kind": "tail", "s": -0.2, "selector": "E2",
        "torus": {"modes_per_axis": 8, "grid_points_per_axis": 16},
        "time": {"T": 0.2, "steps": 24},
        "ensemble": {"samples": 150, "base_seed": 9},
        "out": str(tmp_path / "tail.ndjson"),
    }
    raw.update(extra)
    return raw


class TestRunManifest:
    def test_tail_record_contents(self, tmp_path):
        man = normalize_manifest(small_tail_manifest(tmp_path))
        result = run_manifest(man)
        rec = read_run_record(result.record_path)
        assert rec["digest"] == man.digest()
        points = [r for r in rec["rows"] if r["type"] == "point"]
        samples = [r for r in rec["rows"] if r["type"] == "sample"]
        assert len(samples) == 150
        assert {"lambda", "p_hat", "ci_low", "ci_high"} <= points[0].keys()
        assert {"c1", "c2", "r_squared", "fit_ok"} <= rec["aggregate"].keys()

    def test_replay_identical(self, tmp_path):
        man = normalize_manifest(small_tail_manifest(tmp_path))
        result = run_manifest(man)
        same, _ = replay_run_record(result.record_path)
        assert same

    def test_worker_count_invariance(self, tmp_path):
        man = normalize_manifest(small_tail_manifest(tmp_path))
        os.environ["RANDNS_THREADS"] = "1"
        try:
            rows_serial = run_manifest(man).rows
        finally:
            os.environ["RANDNS_THREADS"] = "2"
        try:
            rows_parallel = run_manifest(man).rows
        finally:
            del os.environ["RANDNS_THREADS"]
        assert rows_serial == rows_parallel


class TestCliMain:
    def write(self, tmp_path, name, obj):
        path = tmp_path / name
        path.write_text(json.dumps(obj))
        return str(path)

    def test_randomize_deterministic_snapshots(self, tmp_path):
        manifest = self.write(tmp_path, "r.json", {
            "kind": "randomize", "s": -0.3,
            "torus": {"modes_per_axis": 8, "grid_points_per_axis": 16},
            "ensemble": {"base_seed": 7},
        })
        a, b = str(tmp_path / "a.nsrf1"), str(tmp_path / "b.nsrf1")
        assert main(["randomize", "--manifest", manifest, "--out", a]) == 0
        assert main(["randomize", "--manifest", manifest, "--out", b]) == 0
        assert (tmp_path / "a.nsrf1").read_bytes() == \
            (tmp_path / "b.nsrf1").read_bytes()

    def test_solve_shear(self, tmp_path, capsys):
        manifest = self.write(tmp_path, "s.json", {
            "kind": "solve", "s": -0.2,
            "torus": {"modes_per_axis": 8, "grid_points_per_axis": 16},
            "time": {"T": 0.1, "steps": 16},
            "data": {"source": "shear"},
            "out": str(tmp_path / "shear.nstj1"),
        })
        assert main(["solve", "--manifest", manifest]) == 0
        rec = read_run_record(tmp_path / "shear.nstj1.ndjson")
        row = rec["rows"][0]
        assert row["iterations"] == 1
        assert row["residual"] <= 1e-8

    def test_inadmissible_manifest_exit_2(self, tmp_path, capsys):
        manifest = self.write(tmp_path, "bad.json",
                              {"kind": "solve", "s": -1.5})
        assert main(["solve", "--manifest", manifest]) == 2
        assert "-1 < s < 0" in capsys.readouterr().err

    def test_kind_verb_mismatch(self, tmp_path, capsys):
        manifest = self.write(tmp_path, "k.json",
                              {"kind": "solve", "s": -0.2})
        assert main(["tail", "--manifest", manifest]) == 2

    def test_overrides(self, tmp_path):
        manifest = self.write(tmp_path, "t.json", small_tail_manifest(tmp_path))
        out = str(tmp_path / "t2.ndjson")
        code = main(["tail", "--manifest", manifest, "--samples", "120",
                     "--seed", "11", "--out", out, "--csv",
                     str(tmp_path / "t.csv")])
        assert code in (0, 3)
        rec = read_run_record(out)
        assert rec["manifest"]["ensemble"]["samples"] == 120
        assert rec["manifest"]["ensemble"]["base_seed"] == 11
        assert (tmp_path / "t.csv").read_text().startswith("ci_high")

    def test_replay_verb(self, tmp_path):
        manifest = self.write(tmp_path, "t.json", small_tail_manifest(tmp_path))
        assert main(["tail", "--manifest", manifest]) in (0, 3)
        assert main(["replay", str(tmp_path / "tail.ndjson")]) == 0

    def test_khinchin_contract_exit(self, tmp_path):
        manifest = self.write(tmp_path, "k.json", {
            "kind": "khinchin",
            "ensemble": {"samples": 2000, "base_seed": 1},
            "r_values": [2, 4], "vectors": 2, "vector_length": 8,
            "out": str(tmp_path / "kh.ndjson"),
        })
        assert main(["khinchin", "--manifest", manifest]) == 0
        rec = read_run_record(tmp_path / "kh.ndjson")
        assert rec["aggregate"]["max_ratio"] <= 1.2
