from __future__ import annotations

import json

import numpy as np
import pytest

from tanner_gnn import cli, gf2, gnn, noise


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, (json.loads(out.out) if code == 0 else None), out.err


def test_config_hash_is_order_independent():
    assert cli.config_hash({"a": 1, "b": [1, 2]}) == cli.config_hash({"b": [1, 2], "a": 1})
    assert cli.config_hash({"a": 1}) != cli.config_hash({"a": 2})
    assert len(cli.config_hash({})) == 16


def test_usage_errors_exit_one(capsys, tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["sample", "--code", "surface_d3"])
    assert exc.value.code == 1
    code, _, err = run(capsys, "sample", "--code", "no_such_code", "--count", 3, "-o", tmp_path / "x")
    assert code == 1 and "cannot load code" in err
    code, _, _ = run(capsys, "decode", "--code", "surface_d3", "--decoder", "bp",
                     "--syndrome-file", tmp_path / "missing.txt")
    assert code == 1


def test_code_build(capsys, tmp_path):
    out_path = tmp_path / "bb.json"
    code, res, _ = run(capsys, "code", "build", "--family", "bb", "--l", 6, "--m", 6,
                       "--a", "[[3,0],[0,1],[0,2]]", "--b", "[[0,3],[1,0],[2,0]]", "-o", out_path)
    assert code == 0 and res["n"] == 72 and res["k"] == 12
    assert {"config_hash", "seed"} <= set(res)
    code, res, _ = run(capsys, "code", "build", "--family", "surface", "--d", 5)
    assert code == 0 and res["n"] == 25 and res["k"] == 1
    code, _, _ = run(capsys, "code", "build", "--family", "surface", "--d", 4)
    assert code == 1


def test_sample_round_trip(capsys, tmp_path):
    path = tmp_path / "ds.bin"
    code, res, _ = run(capsys, "sample", "--code", "surface_d3", "--count", 100, "--seed", 4, "-o", path)
    assert code == 0 and res["seed"] == 4 and len(res["config_hash"]) == 16
    ds = noise.load_dataset(path)
    assert len(ds) == 100 and ds.seed == 4
    _, again, _ = run(capsys, "sample", "--code", "surface_d3", "--count", 100, "--seed", 4, "-o", path)
    assert again["config_hash"] == res["config_hash"]


def test_decode_bp_from_stdin(capsys, monkeypatch, surface3):
    e = np.zeros(9, np.uint8)
    e[4] = noise.Y
    syn = noise.compute_syndrome(surface3, e)
    monkeypatch.setattr("sys.stdin", __import__("io").StringIO("".join(map(str, syn))))
    code, res, _ = run(capsys, "decode", "--code", "surface_d3", "--decoder", "bp+osd")
    assert code == 0
    assert res["syndrome_satisfied"] and res["error"] == "IIIIYIIII"
    assert res["seed"] is None and "config_hash" in res


def test_decode_bad_syndrome_length(capsys, tmp_path):
    f = tmp_path / "s.txt"
    f.write_text("0101")
    code, _, err = run(capsys, "decode", "--code", "surface_d3", "--decoder", "bp", "--syndrome-file", f)
    assert code == 1 and "syndrome" in err


def test_inconsistent_syndrome_exits_two(capsys, tmp_path, bb72):
    mx = bb72.h_x.shape[0]
    rank = gf2.rank(bb72.h_z)
    for i in range(bb72.h_z.shape[0]):
        unit = np.zeros(bb72.h_z.shape[0], np.uint8)
        unit[i] = 1
        if gf2.rank(np.hstack([bb72.h_z, unit[:, None]])) > rank:
            break
    syn = np.concatenate([np.zeros(mx, np.uint8), unit])
    f = tmp_path / "s.json"
    f.write_text(json.dumps(syn.tolist()))
    code, _, err = run(capsys, "decode", "--code", "bb_72_12_6", "--decoder", "bp+osd",
                       "--iterations", 5, "--syndrome-file", f)
    assert code == 2 and "numeric failure" in err


def test_train_decode_bench_threshold(capsys, tmp_path, surface3):
    cfg = {"epochs": 1, "batch_size": 16, "samples_per_epoch": 32, "test_size": 16, "iterations": 2,
           "node_dim": 8, "msg_hidden": 8, "edge_dim": 4, "seed": 2, "stop_rule": "none"}
    cfg_path = tmp_path / "train.json"
    cfg_path.write_text(json.dumps(cfg))
    ckpt = tmp_path / "m.ckpt"
    code, res, _ = run(capsys, "train", "--code", "surface_d3", "--config", cfg_path,
                       "--log", tmp_path / "log.csv", "-o", ckpt)
    assert code == 0 and res["epochs_run"] == 1 and res["seed"] == 2
    model = gnn.load_model(ckpt)
    assert model.meta["config_hash"] == res["config_hash"]

    warm = tmp_path / "w.ckpt"
    code, res, _ = run(capsys, "train", "--code", "surface_d5", "--config", cfg_path, "--init", ckpt, "-o", warm)
    assert code == 0 and gnn.load_model(warm).meta["warm_start_from"] == "surface_d3"

    syn = noise.compute_syndrome(surface3, noise.error_stream(surface3, 0.1, 1, seed=0))[0]
    f = tmp_path / "s.txt"
    f.write_text(" ".join(map(str, syn)))
    code, res, _ = run(capsys, "decode", "--code", "surface_d3", "--model", ckpt, "--syndrome-file", f)
    assert code == 0 and res["syndrome_satisfied"]
    code, _, _ = run(capsys, "decode", "--code", "surface_d3", "--decoder", "gnn", "--syndrome-file", f)
    assert code == 1

    bench_cfg = {"codes": ["surface_d3", "surface_d5"], "decoders": ["bp+osd", "gnn+osd"],
                 "p_grid": [0.05, 0.1], "trials": 50, "seed": 7, "bp": {"max_iterations": 20},
                 "gnn_iterations": 2, "model": str(ckpt)}
    bpath = tmp_path / "bench.json"
    bpath.write_text(json.dumps(bench_cfg))
    out_dir = tmp_path / "out"
    code, res, _ = run(capsys, "bench", "--config", bpath, "--out-dir", out_dir)
    assert code == 0 and res["points"] == 8 and res["seed"] == 7
    assert (out_dir / "ler.svg").read_text().startswith("<svg")
    rows = (out_dir / "ler.csv").read_text().splitlines()
    assert len(rows) == 9 and rows[1].endswith(res["config_hash"])

    code, th, _ = run(capsys, "threshold", "--csv", out_dir / "ler.csv", "--decoder", "bp+osd",
                      "--svg", tmp_path / "th.svg")
    assert code == 0 and th["config_hash"] == res["config_hash"] and th["seed"] == 7
    assert "3-5" in th["crossings"]
    assert (tmp_path / "th.svg").exists()

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"codes": ["surface_d3"]}))
    code, _, _ = run(capsys, "bench", "--config", bad)
    assert code == 1
