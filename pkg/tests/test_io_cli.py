import json
import math
import struct

import numpy as np
import pytest

from partition_trees.cli import main
from partition_trees.dataset import Dataset
from partition_trees.experiment import (ExperimentConfig, FailureReport, emit_report, make_data,
                                        read_report, run_experiment)
from partition_trees.io import (DatasetFormatError, load_dataset, load_points, load_tree,
                                save_dataset, save_tree)
from partition_trees.linalg import rng_for
from partition_trees.trees import TreeFormatError, build_tree, tree_to_bytes


@pytest.fixture
def points():
    pts = rng_for(1).standard_normal((37, 4))
    pts[0, 0] = 1e-300
    pts[1, 1] = -123456789.123456789
    pts[2, 2] = 0.1
    return pts


class TestDatasetFiles:
    @pytest.mark.parametrize("name", ["d.csv", "d.bin", "d.pdat"])
    def test_round_trip_bit_identical(self, tmp_path, points, name):
        save_dataset(points, tmp_path / name)
        back = load_points(tmp_path / name)
        assert back.tobytes() == points.tobytes()

    def test_binary_layout(self, tmp_path, points):
        save_dataset(points, tmp_path / "d.bin")
        raw = (tmp_path / "d.bin").read_bytes()
        magic, version, n, d = struct.unpack_from("<4sHQI", raw)
        assert (magic, version, n, d) == (b"PDAT", 1, 37, 4)
        assert len(raw) == 18 + 8 * 37 * 4
        assert np.frombuffer(raw, "<f8", offset=18).reshape(37, 4).tobytes() == points.tobytes()

    def test_csv_header_skipped(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text("x1,x2\n1.5,2\n-3,4e-3\n")
        assert load_points(path).tolist() == [[1.5, 2.0], [-3.0, 0.004]]

    def test_csv_without_header(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text("1,2\n3,4\n")
        assert load_points(path).shape == (2, 2)

    def test_csv_ragged_row_names_line(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("x1,x2\n1,2\n3\n")
        with pytest.raises(DatasetFormatError, match=":3:"):
            load_points(path)

    def test_csv_bad_token_names_line(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("1,2\n3,abc\n")
        with pytest.raises(DatasetFormatError, match=":2:"):
            load_points(path)

    def test_truncated_binary(self, tmp_path, points):
        path = tmp_path / "t.bin"
        save_dataset(points, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-10])
        expected = 18 + 8 * 37 * 4
        with pytest.raises(DatasetFormatError, match=f"expected {expected} bytes.*got {expected - 10}"):
            load_points(path)
        path.write_bytes(raw[:7])
        with pytest.raises(DatasetFormatError, match="18 bytes.*has 7"):
            load_points(path)

    def test_bad_magic(self, tmp_path, points):
        path = tmp_path / "m.bin"
        save_dataset(points, path)
        path.write_bytes(b"NOPE" + path.read_bytes()[4:])
        with pytest.raises(DatasetFormatError, match="magic"):
            load_points(path)

    def test_nan_rejected(self, tmp_path):
        path = tmp_path / "n.csv"
        path.write_text("1,2\nnan,3\n")
        with pytest.raises(ValueError, match="row 1, column 0"):
            load_points(path)

    def test_explicit_format(self, tmp_path, points):
        path = tmp_path / "noext"
        save_dataset(points, path, "csv")
        assert load_dataset(path, "csv").points.tobytes() == points.tobytes()
        with pytest.raises(ValueError):
            save_dataset(points, path, "xml")


class TestTreeFiles:
    def test_round_trip(self, tmp_path, points):
        tree = build_tree("spill", points, 5, 0.2, seed=3)
        save_tree(tree, tmp_path / "t.ptrf")
        back = load_tree(tmp_path / "t.ptrf", Dataset(points))
        assert tree_to_bytes(back) == tree_to_bytes(tree)

    def test_trailing_bytes(self, tmp_path, points):
        tree = build_tree("rp", points, 5, seed=3)
        path = tmp_path / "t.ptrf"
        path.write_bytes(tree_to_bytes(tree) + b"\0")
        with pytest.raises(TreeFormatError, match="trailing"):
            load_tree(path, points)


def small_config(**kw):
    base = dict(generator="doubling", tree_kind="rp", n=400, d=4, leaf_size=20, trials=5,
                queries=6, seed=11)
    base.update(kw)
    return ExperimentConfig(**base)


class TestExperiment:
    @pytest.mark.parametrize("kind", ["rp", "spill", "virtual-spill"])
    def test_single_leaf_never_fails(self, kind):
        rep = run_experiment(small_config(tree_kind=kind, n=50, leaf_size=50, k=3))
        assert rep.failure_rate == 0.0
        assert rep.std_error == 0.0
        assert rep.mean_points_scanned == 50

    def test_wide_virtual_overlap_small_n(self):
        rep = run_experiment(small_config(tree_kind="virtual-spill", n=60, leaf_size=20,
                                          alpha=0.49, trials=10, queries=10))
        assert rep.failure_rate == 0.0

    def test_reproducible(self):
        a = run_experiment(small_config(tree_kind="spill"))
        b = run_experiment(small_config(tree_kind="spill"))
        assert a.to_dict() == b.to_dict()
        c = run_experiment(small_config(tree_kind="spill", seed=12))
        assert a.to_dict() != c.to_dict()

    def test_std_error_formula(self):
        rep = run_experiment(small_config(n=300, leaf_size=5, trials=8, queries=10))
        p = rep.failure_rate
        assert rep.std_error == pytest.approx(math.sqrt(p * (1 - p) / 80))
        assert 0.0 <= p <= 1.0
        assert rep.failure_rate == pytest.approx(np.mean(rep.per_query_failure))

    def test_bound_precondition_recorded(self):
        rep = run_experiment(small_config(tree_kind="spill", k=3, alpha=0.1, leaf_size=20))
        assert rep.bound is None
        assert "alpha*n_o/2" in rep.bound_note

    @pytest.mark.parametrize("bad", [dict(queries=0), dict(trials=0), dict(alpha=0.5, tree_kind="spill"),
                                     dict(generator="nope"), dict(tree_kind="kd"),
                                     dict(k=400), dict(intrinsic_dim=5),
                                     dict(generator="adversarial", queries=2, d=4, M=10.0),
                                     dict(generator="external-file")])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            small_config(**bad).validate()

    def test_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown"):
            ExperimentConfig.from_dict({"bogus": 1})

    def test_topic_and_adversarial_data(self):
        data, q = make_data(small_config(generator="topic", d=60, doc_length=6.0, topics=2))
        assert set(np.unique(data.points).tolist()) <= {0.0, 1.0}
        assert q.shape == (6, 60)
        data, q = make_data(small_config(generator="adversarial", d=10, M=100.0, queries=1))
        assert np.all(q == 0) and np.all(data.points[0] == 1)

    def test_external_file_holdout(self, tmp_path, points):
        save_dataset(points, tmp_path / "x.bin")
        cfg = small_config(generator="external-file", data_path=str(tmp_path / "x.bin"),
                           queries=5, leaf_size=8)
        data, q = make_data(cfg)
        assert data.n == 32 and q.shape == (5, 4)
        rows = {tuple(r) for r in data.points} | {tuple(r) for r in q}
        assert rows == {tuple(r) for r in points}
        rep = run_experiment(cfg)
        assert len(rep.per_query_failure) == 5


class TestReports:
    def test_round_trip_exact(self, tmp_path):
        rep = run_experiment(small_config(tree_kind="spill", n=300, leaf_size=10))
        json_path, txt_path = emit_report(rep, tmp_path / "r")
        assert json_path.name == "r.json" and txt_path.name == "r.txt"
        back = read_report(tmp_path / "r.json")
        assert back == rep
        assert back.config == small_config(tree_kind="spill", n=300, leaf_size=10).to_dict()
        assert "empirical failure rate" in txt_path.read_text()

    def test_none_bounds_survive(self, tmp_path):
        rep = FailureReport(0.25, 0.1, None, [], 3.0, 1.0, 10.0, [0.25], [None], {"k": 2},
                            "no bound")
        emit_report(rep, tmp_path / "x.txt")
        assert read_report(tmp_path / "x") == rep


@pytest.fixture
def files(tmp_path):
    rc = main(["gen", "--generator", "doubling", "--intrinsic-dim", "2", "--ambient-dim", "3",
               "--n", "300", "--seed", "5", "--queries", "4", "--query-out",
               str(tmp_path / "q.csv"), "--out", str(tmp_path / "d.bin")])
    assert rc == 0
    return tmp_path


class TestCLI:
    def test_gen_from_config(self, tmp_path):
        cfg = tmp_path / "g.json"
        cfg.write_text(json.dumps({"generator": "topic", "topics": 2, "vocab_size": 40,
                                   "doc_length": 5.0, "n": 30, "seed": 1}))
        assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "t.csv")]) == 0
        pts = load_points(tmp_path / "t.csv")
        assert pts.shape == (30, 40)

    def test_gen_rejects_unknown_keys(self, tmp_path):
        cfg = tmp_path / "g.json"
        cfg.write_text(json.dumps({"generator": "doubling", "intrinsic_dim": 2,
                                   "ambient_dim": 2, "n": 5, "seed": 1, "M": 3}))
        assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "x.bin")]) == 2

    def test_gen_adversarial_with_query(self, tmp_path):
        assert main(["gen", "--generator", "adversarial", "--n", "20", "--d", "4", "--M", "9",
                     "--seed", "1", "--queries", "1", "--query-out", str(tmp_path / "q.bin"),
                     "--out", str(tmp_path / "a.bin")]) == 0
        assert np.all(load_points(tmp_path / "q.bin") == 0)

    def test_build_query_pipeline(self, files, capsys):
        assert main(["build", "--data", str(files / "d.bin"), "--kind", "rp", "--leaf-size",
                     "300", "--seed", "9", "--out", str(files / "t.ptrf")]) == 0
        assert main(["query", "--data", str(files / "d.bin"), "--tree", str(files / "t.ptrf"),
                     "--queries", str(files / "q.csv"), "--k", "2",
                     "--out", str(files / "res.csv")]) == 0
        lines = (files / "res.csv").read_text().splitlines()
        assert lines[0] == "query,rank,index,distance,leaves_visited,points_scanned,short"
        assert len(lines) == 1 + 4 * 2
        # one leaf holding everything: results are exact
        data = load_points(files / "d.bin")
        q = load_points(files / "q.csv")
        row = lines[1].split(",")
        assert int(row[2]) == int(np.argmin(np.linalg.norm(data - q[0], axis=1)))

    def test_phi_levels(self, files):
        assert main(["phi", "--data", str(files / "d.bin"), "--queries", str(files / "q.csv"),
                     "--beta", "0.5", "--leaf-size", "30", "--out", str(files / "phi.csv")]) == 0
        lines = (files / "phi.csv").read_text().splitlines()
        assert lines[0] == "query,k,m,phi"
        ms = sorted({int(r.split(",")[2]) for r in lines[1:]})
        assert ms == [18, 37, 75, 150, 300]  # ell = ceil(log2(10)) = 4

    def test_phi_full_profile(self, files, capsys):
        assert main(["phi", "--data", str(files / "d.bin"), "--queries",
                     str(files / "q.csv"), "--k", "2"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert len(out) == 1 + 4 * (300 - 2)

    def test_bench_requires_seed(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["bench", "--n", "100"])
        assert exc.value.code == 2

    def test_bench(self, tmp_path, capsys):
        rc = main(["bench", "--seed", "4", "--generator", "doubling", "--tree-kind", "spill",
                   "--n", "200", "--d", "3", "--leaf-size", "20", "--trials", "3",
                   "--queries", "4", "--out", str(tmp_path / "rep")])
        assert rc == 0
        rep = read_report(tmp_path / "rep")
        assert rep.config["seed"] == 4 and rep.config["n"] == 200
        assert "empirical failure rate" in capsys.readouterr().out

    def test_bench_validation_exit(self):
        assert main(["bench", "--seed", "1", "--queries", "0"]) == 2

    def test_bounds_closed_forms(self, capsys):
        assert main(["bounds", "doubling-phi", "--m", "200", "--d-o", "2",
                     "--delta", str(math.exp(-1))]) == 0
        val = json.loads(capsys.readouterr().out)["value"]
        assert val == pytest.approx(0.6)
        assert main(["bounds", "summation", "--A", "1", "--B", "40", "--d-o", "1",
                     "--beta", "0.5", "--leaf-size", "40"]) == 0
        assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(2.0)
        assert main(["bounds", "topic-phi", "--v", "0", "--L", "64", "--n", "100",
                     "--m", "10", "--c-o", "0.125"]) == 0
        assert json.loads(capsys.readouterr().out)["value"] == 0.0
        assert main(["bounds", "doubling-failure", "--k", "1", "--d-o", "2",
                     "--leaf-size", "100", "--raw"]) == 0

    def test_bounds_precondition_exit(self):
        assert main(["bounds", "topic-phi", "--v", "3", "--L", "8", "--n", "1024", "--m", "1",
                     "--c-o", "0.125"]) == 2

    def test_bounds_from_data(self, files, capsys):
        assert main(["bounds", "rp", "--data", str(files / "d.bin"), "--queries",
                     str(files / "q.csv"), "--leaf-size", "30", "--query-index", "2",
                     "--out", str(files / "b")]) == 0
        out = json.loads((files / "b.json").read_text())
        assert out["kind"] == "rp" and out["params"]["n_o"] == 30
        assert "raw bound" in capsys.readouterr().out

    def test_io_errors(self, tmp_path, files):
        assert main(["build", "--data", str(tmp_path / "missing.bin"), "--kind", "rp",
                     "--leaf-size", "5", "--seed", "1", "--out", str(tmp_path / "t")]) == 3
        bad = tmp_path / "bad.bin"
        bad.write_bytes((files / "d.bin").read_bytes()[:-3])
        assert main(["build", "--data", str(bad), "--kind", "rp", "--leaf-size", "5",
                     "--seed", "1", "--out", str(tmp_path / "t")]) == 3
        (tmp_path / "junk.ptrf").write_bytes(b"junk")
        assert main(["query", "--data", str(files / "d.bin"), "--tree",
                     str(tmp_path / "junk.ptrf"), "--queries", str(files / "q.csv")]) == 3

    def test_validation_errors(self, files):
        assert main(["build", "--data", str(files / "d.bin"), "--kind", "spill",
                     "--leaf-size", "5", "--alpha", "0.7", "--seed", "1",
                     "--out", str(files / "t")]) == 2
        assert main(["query", "--data", str(files / "d.bin"), "--tree", str(files / "t"),
                     "--queries", str(files / "q.csv")]) == 3

    def test_module_entry_point(self):
        import subprocess
        import sys
        out = subprocess.run([sys.executable, "-m", "partition_trees", "--help"],
                             capture_output=True, text=True)
        assert out.returncode == 0 and "bench" in out.stdout
