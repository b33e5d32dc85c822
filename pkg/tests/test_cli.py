import json

import numpy as np
import pytest

from cgmvae.cli import main

from synthdata import factor_dataset


@pytest.fixture
def dataset_dir(tmp_path):
    x, y = factor_dataset(n=120, seed=9)
    np.savetxt(tmp_path / "X.csv", x, fmt="%.10g", delimiter=",")
    np.savetxt(tmp_path / "Y.csv", y, fmt="%d", delimiter=",")
    (tmp_path / "names.txt").write_text("red\ngreen\nblue\n")
    return tmp_path


TRAIN_FLAGS = ["--epochs", "3", "--embed-dim", "16", "--latent-dim", "4",
               "--kl-warmup-epochs", "2", "--seed", "1", "--no-figures"]


def run_train(dataset_dir, out, extra=()):
    return main(["train",
                 "--dataset-x", str(dataset_dir / "X.csv"),
                 "--dataset-y", str(dataset_dir / "Y.csv"),
                 "--out", str(out), *TRAIN_FLAGS, *extra])


class TestTrain:
    def test_artifacts_written(self, dataset_dir, tmp_path):
        out = tmp_path / "run"
        assert run_train(dataset_dir, out, ["--label-names", str(dataset_dir / "names.txt")]) == 0
        for name in ("manifest.json", "config.resolved.json", "best.ckpt", "last.ckpt",
                     "runlog.jsonl", "timing.json", "test_report.json", "test_report.txt"):
            assert (out / name).exists(), name
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["resolved_config"]["epochs"] == 3
        assert "X.csv" in manifest["dataset"]["fingerprint"]

    def test_figures_rendered_by_default(self, dataset_dir, tmp_path):
        out = tmp_path / "figrun"
        rc = main(["train",
                   "--dataset-x", str(dataset_dir / "X.csv"),
                   "--dataset-y", str(dataset_dir / "Y.csv"),
                   "--out", str(out), "--epochs", "2", "--embed-dim", "16",
                   "--latent-dim", "4", "--seed", "1"])
        assert rc == 0
        assert (out / "training_curves.png").exists()
        assert (out / "test_report_per_class_f1.png").exists()

    def test_train_fraction_honored_and_recorded(self, dataset_dir, tmp_path):
        out = tmp_path / "frac"
        assert run_train(dataset_dir, out, ["--train-fraction", "0.5"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["resolved_config"]["train_fraction"] == 0.5
        header = json.loads((out / "runlog.jsonl").read_text().splitlines()[0])
        assert header["n_train_rows"] == 48  # floor(0.5 * 96)

    def test_missing_dataset_is_usage_error(self, tmp_path, capsys):
        rc = main(["train", "--dataset-x", str(tmp_path / "nope.csv"),
                   "--dataset-y", str(tmp_path / "nope_y.csv"),
                   "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "nope.csv" in capsys.readouterr().err

    def test_unknown_flag_is_usage_error(self, dataset_dir, tmp_path):
        rc = main(["train", "--dataset-x", str(dataset_dir / "X.csv"),
                   "--bogus-flag", "1", "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_bad_config_key_is_usage_error(self, dataset_dir, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"learning_rte": 0.1}')
        rc = run_train(dataset_dir, tmp_path / "o", ["--config", str(cfg)])
        assert rc == 2
        assert "learning_rte" in capsys.readouterr().err

    def test_preset_applied(self, dataset_dir, tmp_path):
        out = tmp_path / "preset"
        assert run_train(dataset_dir, out, ["--preset", "scene"]) == 0
        cfg = json.loads((out / "config.resolved.json").read_text())
        assert cfg["learning_rate"] == 0.003
        assert cfg["dropout"] == 0.3
        assert cfg["embed_dim"] == 16  # explicit flag still wins over preset

    def test_named_dataset_resolution(self, dataset_dir, tmp_path):
        base = tmp_path / "datasets"
        (base / "toy").mkdir(parents=True)
        (base / "toy" / "X.csv").write_text((dataset_dir / "X.csv").read_text())
        (base / "toy" / "Y.csv").write_text((dataset_dir / "Y.csv").read_text())
        out = tmp_path / "named"
        rc = main(["train", "--dataset", "toy", "--data-dir", str(base),
                   "--out", str(out), *TRAIN_FLAGS])
        assert rc == 0
        assert (out / "best.ckpt").exists()

    def test_named_dataset_missing_reports_path(self, tmp_path, capsys):
        rc = main(["train", "--dataset", "ghost", "--data-dir", str(tmp_path),
                   "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "ghost" in capsys.readouterr().err

    def test_sparse_input(self, tmp_path):
        x, y = factor_dataset(n=60, seed=4)
        lines = ["#L=3 D=10"]
        for xi, yi in zip(x, y):
            labels = ",".join(str(j) for j in np.flatnonzero(yi))
            feats = " ".join(f"{j}:{xi[j]:.6g}" for j in range(10))
            lines.append(f"{labels} {feats}")
        sp = tmp_path / "data.sparse"
        sp.write_text("\n".join(lines) + "\n")
        out = tmp_path / "sparse_run"
        rc = main(["train", "--sparse", str(sp), "--out", str(out), *TRAIN_FLAGS])
        assert rc == 0
        assert (out / "best.ckpt").exists()


class TestEvalPredictExport:
    @pytest.fixture
    def trained(self, dataset_dir, tmp_path):
        out = tmp_path / "run"
        assert run_train(dataset_dir, out,
                         ["--label-names", str(dataset_dir / "names.txt")]) == 0
        return out

    def test_eval_reproduces_training_report(self, trained, dataset_dir, tmp_path, capsys):
        evaldir = tmp_path / "evalout"
        rc = main(["eval", "--checkpoint", str(trained / "best.ckpt"),
                   "--dataset-x", str(dataset_dir / "X.csv"),
                   "--dataset-y", str(dataset_dir / "Y.csv"),
                   "--split", "test", "--out", str(evaldir), "--no-figures"])
        assert rc == 0
        train_report = json.loads((trained / "test_report.json").read_text())
        eval_report = json.loads((evaldir / "test_report.json").read_text())
        assert train_report == eval_report

    def test_eval_wrong_shape_checkpoint(self, trained, tmp_path, capsys):
        xb = tmp_path / "XB.csv"
        yb = tmp_path / "YB.csv"
        gen = np.random.default_rng(0)
        np.savetxt(xb, gen.normal(size=(30, 4)), fmt="%.5g", delimiter=",")
        np.savetxt(yb, (gen.random((30, 3)) < 0.5).astype(int), fmt="%d", delimiter=",")
        rc = main(["eval", "--checkpoint", str(trained / "best.ckpt"),
                   "--dataset-x", str(xb), "--dataset-y", str(yb)])
        assert rc == 1

    def test_predict_shapes_and_range(self, trained, dataset_dir, tmp_path):
        out_csv = tmp_path / "probs.csv"
        rc = main(["predict", "--checkpoint", str(trained / "best.ckpt"),
                   "--features", str(dataset_dir / "X.csv"), "--out", str(out_csv)])
        assert rc == 0
        probs = np.loadtxt(out_csv, delimiter=",")
        assert probs.shape == (120, 3)
        assert np.all(probs > 0) and np.all(probs < 1)

    def test_export_embeddings(self, trained, tmp_path):
        out = tmp_path / "emb"
        rc = main(["export-embeddings", "--checkpoint", str(trained / "best.ckpt"),
                   "--out", str(out), "--pgm"])
        assert rc == 0
        sim_lines = (out / "label_similarity.csv").read_text().splitlines()
        assert sim_lines[0] == "red,green,blue"  # names from the checkpoint
        sim = np.loadtxt(sim_lines[1:], delimiter=",")
        np.testing.assert_array_equal(sim, sim.T)
        np.testing.assert_array_equal(np.diag(sim), 0.0)
        emb = np.loadtxt((out / "label_embeddings.csv").read_text().splitlines()[1:],
                         delimiter=",")
        assert emb.shape == (3, 16)
        pgm = (out / "label_similarity.pgm").read_text().splitlines()
        assert pgm[0] == "P2" and pgm[1] == "3 3" and pgm[2] == "255"
        assert (out / "label_similarity.png").exists()


class TestAbortPath:
    @pytest.mark.filterwarnings("ignore:overflow encountered:RuntimeWarning")
    def test_diverging_run_exits_1_with_artifacts(self, dataset_dir, tmp_path, capsys):
        out = tmp_path / "diverge"
        rc = run_train(dataset_dir, out, ["--lr", "1e25"])
        assert rc == 1
        assert "aborted" in capsys.readouterr().err
        assert (out / "runlog.jsonl").exists()
        assert (out / "last_good.ckpt").exists()


class TestGradcheckCommand:
    def test_passes_and_writes_json(self, tmp_path):
        out = tmp_path / "gc.json"
        rc = main(["gradcheck", "--out", str(out)])
        assert rc == 0
        parsed = json.loads(out.read_text())
        assert parsed["passed"] is True
        assert {c["name"] for c in parsed["checks"]} >= {"kl", "recon", "ce", "total"}


class TestReplay:
    def test_manifest_config_reproduces_bits(self, dataset_dir, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert run_train(dataset_dir, out1) == 0
        # replay from the recorded resolved config, no explicit flags
        rc = main(["train",
                   "--dataset-x", str(dataset_dir / "X.csv"),
                   "--dataset-y", str(dataset_dir / "Y.csv"),
                   "--config", str(out1 / "config.resolved.json"),
                   "--out", str(out2), "--no-figures"])
        assert rc == 0
        assert (out1 / "best.ckpt").read_bytes() == (out2 / "best.ckpt").read_bytes()
        assert (out1 / "runlog.jsonl").read_bytes() == (out2 / "runlog.jsonl").read_bytes()
