import json
import subprocess
import sys

import numpy as np
import pytest

from clustered_sampling import cli, sampling
from clustered_sampling.alloc_size import allocate_by_size


def run(argv, capsys=None):
    try:
        code = cli.main([str(a) for a in argv])
    except SystemExit as e:
        code = e.code
    return code


@pytest.fixture
def manifest(tmp_path):
    out = tmp_path / "ds.json"
    assert run(["partition", "--groups", 3, "--per-group", 2, "--n-per-client", 20, "--dim", 4,
                "--seed", 1, "--out", out]) == 0
    return out


class TestPartition:
    def test_synthetic_layout(self, tmp_path, capsys):
        out = tmp_path / "ds.json"
        assert run(["partition", "--source", "synthetic", "--groups", 10, "--per-group", 10,
                    "--n-per-client", 500, "--seed", 42, "--out", out]) == 0
        spec = json.loads(out.read_text())
        assert len(spec["client_sizes"]) == 100 and spec["M"] == 50_000
        assert "n=100 clients" in capsys.readouterr().out

    def test_missing_out_is_usage_error(self):
        assert run(["partition", "--groups", 2]) == 2

    def test_dirichlet_unbalanced_profile(self, tmp_path, capsys):
        out = tmp_path / "d.json"
        assert run(["partition", "--alpha", 0.01, "--sizes-profile", "paper-unbalanced", "--dim", 3,
                    "--seed", 0, "--out", out]) == 0
        assert "M=48500" in capsys.readouterr().out
        assert json.loads(out.read_text())["M"] == 48500

    def test_missing_idx_file(self, tmp_path):
        code = run(["partition", "--source", "idx", "--alpha", 1.0, "--images", tmp_path / "nope",
                    "--labels", tmp_path / "nope2", "--out", tmp_path / "x.json"])
        assert code == 3


class TestAllocate:
    def test_size_equal_clients(self, tmp_path, capsys):
        out = tmp_path / "a.csv"
        assert run(["allocate", "--sizes-profile", "equal:100:1", "--m", 10, "--method", "size",
                    "--out", out]) == 0
        assert "support=1 for all clients" in capsys.readouterr().out
        assert sampling.load_allocation(out) == allocate_by_size([1] * 100, 10)

    def test_similarity_without_gradients(self, tmp_path, manifest, capsys):
        out = tmp_path / "a.csv"
        assert run(["allocate", "--dataset", manifest, "--m", 3, "--method", "similarity",
                    "--out", out, "--tree-out", tmp_path / "t.json"]) == 0
        a = sampling.load_allocation(out)
        assert a.m == 3 and a.n == 6
        tree = json.loads((tmp_path / "t.json").read_text())
        assert sorted(i for g in tree["groups"] for i in g) == list(range(6))

    def test_similarity_with_gradients(self, tmp_path):
        np.save(tmp_path / "g.npy", np.array([[1.0, 0.0], [1.0, 0.01], [0.0, 1.0], [0.01, 1.0]]))
        out = tmp_path / "a.csv"
        assert run(["allocate", "--sizes-profile", "equal:4:1", "--m", 2, "--method", "similarity",
                    "--grads", tmp_path / "g.npy", "--out", out]) == 0
        assert sampling.load_allocation(out).r_prime.tolist() == [[2, 2, 0, 0], [0, 0, 2, 2]]

    def test_m_zero_is_usage_error(self, tmp_path):
        assert run(["allocate", "--sizes-profile", "equal:4:1", "--m", 0, "--out", tmp_path / "a.csv"]) == 2

    def test_no_sizes_is_usage_error(self, tmp_path):
        assert run(["allocate", "--out", tmp_path / "a.csv"]) == 2


class TestTrain:
    def test_zero_rounds_header_only(self, tmp_path, manifest):
        out = tmp_path / "m.jsonl"
        assert run(["train", "--dataset", manifest, "--rounds", 0, "--m", 2, "--metrics-out", out]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 1 and json.loads(lines[0])["header"]["rounds"] == 0

    @pytest.mark.parametrize("sampler", ["md", "similarity"])
    def test_byte_identical_reruns(self, tmp_path, manifest, sampler):
        outs = []
        for k in range(2):
            out, csv = tmp_path / f"m{k}.jsonl", tmp_path / f"m{k}.csv"
            assert run(["train", "--dataset", manifest, "--sampler", sampler, "--rounds", 4, "--m", 3,
                        "--N", 3, "--batch", 5, "--seed", 7, "--metrics-out", out, "--csv-out", csv]) == 0
            outs.append((out.read_bytes(), csv.read_bytes()))
        assert outs[0] == outs[1]
        assert len(outs[0][0].splitlines()) == 5

    def test_config_file_defaults_and_override(self, tmp_path, manifest):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"dataset": str(manifest), "rounds": 2, "m": 2, "N": 2, "batch": 4,
                                   "metrics-out": str(tmp_path / "a.jsonl")}))
        assert run(["--config", cfg, "train"]) == 0
        header = json.loads((tmp_path / "a.jsonl").read_text().splitlines()[0])["header"]
        assert header["rounds"] == 2 and header["m"] == 2
        assert run(["--config", cfg, "train", "--rounds", 1, "--metrics-out", tmp_path / "b.jsonl"]) == 0
        header = json.loads((tmp_path / "b.jsonl").read_text().splitlines()[0])["header"]
        assert header["rounds"] == 1 and header["m"] == 2

    def test_missing_dataset_file(self, tmp_path):
        assert run(["train", "--dataset", tmp_path / "none.json", "--metrics-out", tmp_path / "m.jsonl"]) == 3

    def test_negative_rounds(self, tmp_path, manifest):
        assert run(["train", "--dataset", manifest, "--rounds", -1, "--metrics-out", tmp_path / "m"]) == 2


class TestVerify:
    @pytest.mark.parametrize("spec", [
        {"kind": "md", "sizes_profile": "equal:100:1", "m": 10},
        {"kind": "size", "sizes_profile": "equal:100:1", "m": 10},
    ])
    def test_passes(self, tmp_path, spec, capsys):
        out = tmp_path / "r.json"
        assert run(["verify", "--sampler-spec", json.dumps(spec), "--fast", "--out", out]) == 0
        assert capsys.readouterr().out.strip().endswith("PASS")
        assert json.loads(out.read_text())["pass"] is True

    def test_allocation_file_and_determinism(self, tmp_path):
        sampling.save_allocation(allocate_by_size([5, 3, 2, 2, 1], 3), tmp_path / "a.csv")
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"kind": "clustered", "allocation": str(tmp_path / "a.csv")}))
        for k in range(2):
            assert run(["verify", "--sampler-spec", spec, "--trials", 3000, "--seed", 4,
                        "--out", tmp_path / f"r{k}.json"]) == 0
        assert (tmp_path / "r0.json").read_bytes() == (tmp_path / "r1.json").read_bytes()

    def test_corrupted_allocation_fails(self, tmp_path, capsys):
        sampling.save_allocation(allocate_by_size([3, 2, 1], 2), tmp_path / "a.csv")
        (tmp_path / "a.csv").write_text("0,1,2\n6,0,0\n0,4,1\n")
        spec = json.dumps({"kind": "clustered", "allocation": str(tmp_path / "a.csv")})
        assert run(["verify", "--sampler-spec", spec, "--fast", "--out", tmp_path / "r.json"]) == 1
        assert json.loads((tmp_path / "r.json").read_text())["pass"] is False
        assert "invalid allocation" in capsys.readouterr().out

    def test_unknown_kind(self):
        assert run(["verify", "--sampler-spec", '{"kind": "alias", "sizes": [1], "m": 1}']) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "clustered_sampling", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "partition" in res.stdout
