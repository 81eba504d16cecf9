import json
import pickle
import hashlib
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from meguide.cli import main
from meguide.exceptions import ConversionError
from meguide.convert import load_planetoid
from meguide.graph import load_dataset


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fx") / "citation"
    assert run(["gen-fixture", "citation", "--nodes", "300", "--seed", "5",
                "--out", out]) == 0
    return out


def dir_digest(path: Path) -> dict:
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(path.iterdir())
        if p.is_file()
    }


def test_gen_fixture_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert run(["gen-fixture", "two-cluster", "--gap", "1.0", "--seed", "7",
                "--out", a]) == 0
    assert run(["gen-fixture", "two-cluster", "--gap", "1.0", "--seed", "7",
                "--out", b]) == 0
    assert dir_digest(a) == dir_digest(b)


def test_gen_fixture_path_smoke(tmp_path):
    out = tmp_path / "p3"
    assert run(["gen-fixture", "path", "--nodes", "3", "--out", out]) == 0
    g = load_dataset(out).graph
    assert g.num_nodes == 3
    assert g.num_edges == 2


def test_metrics_stdout_has_lambda_f(tmp_path, capsys):
    out = tmp_path / "p3"
    run(["gen-fixture", "path", "--nodes", "3", "--out", out])
    capsys.readouterr()
    assert run(["metrics", "--dataset", out]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert "lambda_f" in payload
    assert "lambda_d" in payload
    assert payload["lambda_d_mode"] in ("exact", "estimated")


def test_metrics_out_file_and_figures(tmp_path, fixture_dir):
    report = tmp_path / "metrics.json"
    figs = tmp_path / "figs"
    assert run(["metrics", "--dataset", fixture_dir, "--emit-edge-smoothness",
                "--out", report, "--figures", figs]) == 0
    payload = json.loads(report.read_text())
    assert "edge_smoothness" in payload
    assert (figs / "edge_smoothness.png").exists()


def test_metrics_pool_all_labeled(fixture_dir, capsys):
    assert run(["metrics", "--dataset", fixture_dir, "--pool", "all-labeled",
                "--pool-cap", "50", "--seed", "3"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["num_sources_used"] == 50
    assert payload["lambda_d_mode"] == "estimated"


def test_sample_writes_subgraphs_and_manifest(tmp_path, fixture_dir):
    out = tmp_path / "samples"
    assert run(["sample", "--dataset", fixture_dir, "--sampler", "meguide",
                "--rho", "0.3", "--count", "3", "--seed", "1",
                "--out", out]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["count"] == 3
    assert len(manifest["roots"]) == 3
    assert "config_hash" in manifest and manifest["seed"] == 1
    for k in range(3):
        rec = json.loads((out / f"subgraph_{k:04d}.json").read_text())
        assert rec["root"] in rec["nodes"]


def test_sample_random_requires_target_size(tmp_path, fixture_dir):
    assert run(["sample", "--dataset", fixture_dir, "--sampler", "random",
                "--count", "1", "--out", tmp_path / "s"]) == 1


def train_config_file(tmp_path, **kw):
    cfg = dict(M=4, iterations=20, eval_every=5, hidden=8,
               predictor_epochs=30, seed=0)
    cfg.update(kw)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_train_writes_all_artifacts(tmp_path, fixture_dir):
    cfg = train_config_file(tmp_path)
    out = tmp_path / "run"
    assert run(["train", "--dataset", fixture_dir, "--config", cfg,
                "--out", out]) == 0
    for rel in ("run_report.json", "checkpoint.bin", "history.csv",
                "manifest.json", "batch/manifest.json",
                "figures/training_curves.png"):
        assert (out / rel).exists(), rel
    report = json.loads((out / "run_report.json").read_text())
    assert 0.0 <= report["final_test_accuracy"] <= 1.0
    assert report["config_hash"]
    lines = (out / "history.csv").read_text().strip().splitlines()
    assert lines[0] == "iteration,loss,val_accuracy"
    assert len(lines) == 1 + report["iterations_run"]


def test_train_cli_deterministic_reports(tmp_path, fixture_dir):
    cfg = train_config_file(tmp_path, seed=1)
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert run(["train", "--dataset", fixture_dir, "--config", cfg, "--out", out1]) == 0
    assert run(["train", "--dataset", fixture_dir, "--config", cfg, "--out", out2]) == 0
    a = json.loads((out1 / "run_report.json").read_text())
    b = json.loads((out2 / "run_report.json").read_text())
    for key in ("wall_time_seconds", "wall_time_to_best_seconds"):
        a.pop(key)
        b.pop(key)
    assert a == b
    assert (out1 / "checkpoint.bin").read_bytes() == (out2 / "checkpoint.bin").read_bytes()


def test_train_cli_matches_library_path(tmp_path, fixture_dir):
    # the CLI precomputes the metrics (threaded) and injects them; the
    # library path computes its own -- reports must agree exactly
    cfg_path = train_config_file(tmp_path, seed=2)
    out = tmp_path / "run"
    assert run(["train", "--dataset", fixture_dir, "--config", cfg_path,
                "--out", out, "--threads", "2"]) == 0
    from meguide.training import TrainConfig, train as lib_train

    g = load_dataset(fixture_dir).graph
    _, _, report, _ = lib_train(g, TrainConfig.from_dict(
        json.loads(cfg_path.read_text())))
    a = json.loads((out / "run_report.json").read_text())
    b = report.to_dict()
    for key in ("wall_time_seconds", "wall_time_to_best_seconds"):
        a.pop(key)
        b.pop(key)
    assert a == b


def test_predict_then_eval(tmp_path, fixture_dir, capsys):
    cfg = train_config_file(tmp_path)
    out = tmp_path / "run"
    run(["train", "--dataset", fixture_dir, "--config", cfg, "--out", out])
    preds = tmp_path / "preds.json"
    assert run(["predict", "--dataset", fixture_dir,
                "--checkpoint", out / "checkpoint.bin",
                "--batch-manifest", out, "--predictor-epochs", "30",
                "--out", preds]) == 0
    payload = json.loads(preds.read_text())
    g = load_dataset(fixture_dir).graph
    assert len(payload["nodes"]) == g.num_nodes
    capsys.readouterr()
    assert run(["eval", "--dataset", fixture_dir, "--predictions", preds]) == 0
    result = json.loads(capsys.readouterr().out)
    assert "test_accuracy" in result
    assert 0.0 <= result["test_accuracy"] <= 1.0


def test_sweep_outputs(tmp_path, fixture_dir):
    cfg = train_config_file(tmp_path, iterations=10)
    out = tmp_path / "sweep"
    assert run(["sweep", "--dataset", fixture_dir, "--config", cfg,
                "--rhos", "0.2,0.6", "--out", out]) == 0
    rows = (out / "sweep.csv").read_text().strip().splitlines()
    assert rows[0].startswith("rho,")
    assert len(rows) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["rhos"] == [0.2, 0.6]
    assert (out / "figures" / "sweep.png").exists()
    assert (out / "report_rho0.2.json").exists()


def test_unknown_flag_exits_one():
    with pytest.raises(SystemExit) as exc:
        run(["metrics", "--bogus-flag", "x"])
    assert exc.value.code == 1


def test_missing_dataset_exits_one(tmp_path):
    assert run(["metrics", "--dataset", tmp_path / "nope"]) == 1


def test_data_dir_env_resolution(tmp_path, fixture_dir, monkeypatch, capsys):
    monkeypatch.setenv("MEGUIDE_DATA_DIR", str(fixture_dir.parent))
    assert run(["metrics", "--dataset", fixture_dir.name]) == 0
    assert "lambda_f" in json.loads(capsys.readouterr().out)


def test_commands_do_not_mutate_dataset(tmp_path, fixture_dir):
    before = dir_digest(fixture_dir)
    run(["metrics", "--dataset", fixture_dir])
    run(["sample", "--dataset", fixture_dir, "--count", "1",
         "--out", tmp_path / "s"])
    assert dir_digest(fixture_dir) == before


# ---------------------------------------------------------------------------
# planetoid conversion on synthetic raw files


def write_fake_planetoid(raw: Path, name="mini"):
    """12-node miniature in the standard raw layout, with a gap in
    test.index to exercise the citeseer-style fill-in."""
    rng = np.random.default_rng(0)
    d, c = 6, 3
    n_train, n_unlabeled = 3, 4  # allx rows: train + unlabeled
    test_ids = [7, 8, 10, 11]  # gap at 9

    x = sp.csr_matrix(rng.random((n_train, d)).astype(np.float32))
    allx_rows = rng.random((n_train + n_unlabeled, d)).astype(np.float32)
    allx = sp.csr_matrix(allx_rows)
    tx = sp.csr_matrix(rng.random((len(test_ids), d)).astype(np.float32))

    def onehot(labels):
        out = np.zeros((len(labels), c), dtype=np.int32)
        for i, lab in enumerate(labels):
            out[i, lab] = 1
        return out

    y = onehot([0, 1, 2])
    ally = np.vstack([y, np.zeros((n_unlabeled, c), dtype=np.int32)])
    ty = onehot([0, 2, 1, 0])

    graph = {
        0: [1, 7], 1: [0, 2], 2: [1, 3], 3: [2, 4], 4: [3, 5], 5: [4, 6],
        6: [5, 7], 7: [6, 0, 8], 8: [7, 10], 9: [], 10: [8, 11], 11: [10],
    }
    parts = {"x": x, "y": y, "tx": tx, "ty": ty, "allx": allx, "ally": ally,
             "graph": graph}
    raw.mkdir(parents=True, exist_ok=True)
    for part, obj in parts.items():
        with open(raw / f"ind.{name}.{part}", "wb") as fh:
            pickle.dump(obj, fh)
    (raw / f"ind.{name}.test.index").write_text(
        "\n".join(str(t) for t in test_ids) + "\n"
    )


def test_convert_planetoid_roundtrip(tmp_path):
    raw = tmp_path / "raw"
    write_fake_planetoid(raw)
    out = tmp_path / "mini"
    assert run(["convert", "--raw", raw, "--name", "mini", "--out", out]) == 0
    g = load_dataset(out).graph
    assert g.num_nodes == 12
    assert g.num_classes == 3
    assert g.feature_dim == 6
    assert int(g.train_mask.sum()) == 3
    assert sorted(np.flatnonzero(g.test_mask).tolist()) == [7, 8, 10, 11]
    assert g.labels[9] == -1  # gap row is unlabeled
    assert g.labels[7] == 0  # first test row keeps its ty label
    # val block: 500 capped by node count -> nodes 3..6 funnel into val
    assert int(g.val_mask.sum()) == 4


def test_convert_missing_file_names_it(tmp_path):
    raw = tmp_path / "raw"
    write_fake_planetoid(raw)
    (raw / "ind.mini.ally").unlink()
    with pytest.raises(ConversionError, match="ind.mini.ally"):
        load_planetoid(raw, "mini")


def test_convert_missing_file_exit_code(tmp_path):
    raw = tmp_path / "raw"
    write_fake_planetoid(raw)
    (raw / "ind.mini.tx").unlink()
    assert run(["convert", "--raw", raw, "--name", "mini",
                "--out", tmp_path / "o"]) == 1
