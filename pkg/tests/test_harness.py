import json

import numpy as np
import pytest

from xermlab.datasets import LongTailDataset, save_tabular
from xermlab.errors import (ConfigError, ConfigMismatch, MissingManifest, NoFeatureLayer,
                            StageError)
from xermlab.harness import cli
from xermlab.harness.config import ExperimentConfig, dump_config, load_config, parse_config_text
from xermlab.harness.pipeline import (BALANCED, VOLATILE_KEYS, RunManifest, ablate_constant_w,
                                      evaluate_model, feature_probe, load_data,
                                      run_xerm_pipeline, sha256, suite_name, sweep_gamma,
                                      train_xe, xerm_targets)
from xermlab.harness.report import report
from xermlab.harness.training import fresh_params, predict
from xermlab.model import LINEAR, MLP1, init_params, save_checkpoint


class TestConfig:
    def test_parse(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("# comment\nname = demo\nseeds = 3, 4  # two seeds\n"
                        "standardize = false\nmu = 0.05\n\n")
        cfg = load_config(path)
        assert (cfg.name, cfg.seeds, cfg.standardize, cfg.mu) == ("demo", [3, 4], False, 0.05)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="bogus"):
            load_config(overrides={"bogus": "1"})

    def test_bad_lines(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("a = 1\nnot a pair\n")
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("a = 1\na = 2\n")

    def test_bad_values(self):
        for key, value in [("epochs", "many"), ("standardize", "maybe"), ("arch", "cnn"),
                           ("tau", "-1"), ("mu", "2"), ("ws", "0, 1.5")]:
            with pytest.raises(ConfigError):
                load_config(overrides={key: value})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.txt")

    def test_hash(self):
        base = ExperimentConfig()
        assert base.config_hash() == base.replace(seeds=[9], out="elsewhere").config_hash()
        assert base.config_hash() != base.replace(gamma=3.0).config_hash()

    def test_dump_round_trip(self, tmp_path):
        cfg = ExperimentConfig(name="x", gammas=[0.1, 2.0], standardize=False)
        (tmp_path / "c.txt").write_text(dump_config(cfg))
        assert load_config(tmp_path / "c.txt") == cfg


def separable_config(tmp_path, **changes):
    rng = np.random.default_rng(0)
    labels = np.repeat([0, 1], 40)
    x = rng.normal(0, 0.3, (80, 2)) + np.where(labels[:, None] == 0, -2.0, 2.0)
    ds = LongTailDataset.from_arrays(x, labels, 2)
    save_tabular(ds, tmp_path / "train.csv")
    save_tabular(ds, tmp_path / "test.csv")
    values = dict(dataset="tabular", train_path=str(tmp_path / "train.csv"),
                  test_path=str(tmp_path / "test.csv"), test_mus=[1.0], epochs=20,
                  lr_milestones=[15], hidden=4, batch_size=16, seeds=[0])
    values.update(changes)
    return ExperimentConfig(**values).validate()


class TestTrainXE:
    def test_separable_toy(self, tmp_path):
        cfg = separable_config(tmp_path)
        data = load_data(cfg, 0)
        params = train_xe(cfg, 0, data)
        assert np.mean(predict(params, data.train.features) == data.train.labels) == 1.0

    def test_zero_epochs_returns_init(self, tmp_path):
        cfg = separable_config(tmp_path, epochs=0)
        params, curve = train_xe(cfg, 5, return_curve=True)
        assert curve == []
        assert params.equals(fresh_params(MLP1, 2, 2, 4, 5, np.float32))

    def test_same_seed_same_bytes(self, small_config):
        a = save_checkpoint(train_xe(small_config, 1))
        b = save_checkpoint(train_xe(small_config, 1))
        assert a == b
        assert a != save_checkpoint(train_xe(small_config, 2))


def _strip(manifest_text):
    body = json.loads(manifest_text)
    for key in VOLATILE_KEYS:
        body.pop(key)
    return body


class TestPipeline:
    def test_manifest_and_artifacts(self, small_config, tmp_path):
        m = run_xerm_pipeline(small_config, 0, tmp_path / "a")
        suites = [BALANCED] + [suite_name(mu) for mu in small_config.test_mus]
        assert set(m.evaluations) == {"XE", "PC", "xERM"}
        for by_suite in m.evaluations.values():
            assert list(by_suite) == suites
        out = tmp_path / "a"
        for info in m.checkpoints.values():
            assert sha256((out / info["path"]).read_bytes()) == info["sha256"]
        for rel in m.artifacts.values():
            assert (out / rel).is_file()
        assert RunManifest.from_json((out / "manifest.json").read_text()) == m
        assert m.suites[BALANCED] == [small_config.n_test_per_class] * small_config.n_classes

    def test_deterministic(self, small_config, tmp_path):
        run_xerm_pipeline(small_config, 0, tmp_path / "a")
        run_xerm_pipeline(small_config, 0, tmp_path / "b")
        a, b = tmp_path / "a", tmp_path / "b"
        assert _strip((a / "manifest.json").read_text()) == _strip((b / "manifest.json").read_text())
        for f in a.iterdir():
            if f.name != "manifest.json":
                assert f.read_bytes() == (b / f.name).read_bytes(), f.name

    def test_pc_and_xe_share_training(self, small_config, tmp_path):
        m = run_xerm_pipeline(small_config.replace(tau=0.0), 0, tmp_path)
        assert m.evaluations["PC"] == m.evaluations["XE"]

    def test_tau_zero_weights_half(self, small_config):
        cfg = small_config.replace(tau=0.0)
        data = load_data(cfg, 0)
        weights, _ = xerm_targets(cfg, data, train_xe(cfg, 0, data))
        assert (weights.w_f == 0.5).all() and (weights.w_cf == 0.5).all()

    def test_config_error_is_staged(self, small_config):
        bad = small_config.replace(dataset="tabular", train_path="/nonexistent.csv",
                                   test_path="/nonexistent.csv")
        with pytest.raises(StageError) as info:
            run_xerm_pipeline(bad, 0)
        assert info.value.stage == "load-data" and isinstance(info.value.cause, OSError)


class TestSweeps:
    def test_gamma_zero_is_half_weight_distillation(self, small_config):
        g = sweep_gamma(small_config, gammas=[0.0])
        w = ablate_constant_w(small_config, ws=[0.5])
        strip = lambda rows: [{k: v for k, v in r.items() if k not in ("gamma", "w")} for r in rows]
        assert strip(g) == strip(w)

    def test_w_zero_is_xe(self, small_config):
        row = ablate_constant_w(small_config, ws=[0.0])[0]
        data = load_data(small_config, 0)
        reports = evaluate_model(train_xe(small_config, 0, data), data)
        for suite, rep in reports.items():
            assert row[f"acc_{suite}"] == rep.accuracy
        assert row["xe_sha256"] == sha256(save_checkpoint(train_xe(small_config, 0, data)))

    def test_duplicate_gamma_rows(self, small_config):
        rows = sweep_gamma(small_config, gammas=[2.0, 2.0, -2.0])
        assert rows[0] == rows[1]
        assert len({r["xe_sha256"] for r in rows}) == 1
        assert all(np.isfinite(r["acc_balanced"]) for r in rows)


class TestProbe:
    def test_linear_backbone(self, small_config):
        data = load_data(small_config, 0)
        with pytest.raises(NoFeatureLayer):
            feature_probe(init_params(LINEAR, 8, 10), data.probe_pool, small_config,
                          data.suites[BALANCED], data.partition)

    def test_deterministic(self, small_config):
        data = load_data(small_config, 0)
        backbone = train_xe(small_config, 0, data)
        args = (data.probe_pool, small_config, data.suites[BALANCED], data.partition, 0)
        assert feature_probe(backbone, *args).to_dict() == feature_probe(backbone, *args).to_dict()

    def test_trained_beats_random(self, small_config):
        cfg = small_config.replace(epochs=20, lr_milestones=[15])
        wins = 0
        for seed in range(3):
            data = load_data(cfg, seed)
            args = (data.probe_pool, cfg, data.suites[BALANCED], data.partition, seed)
            trained = feature_probe(train_xe(cfg, seed, data), *args).accuracy
            random = feature_probe(fresh_params(MLP1, 8, 10, cfg.hidden, seed + 50,
                                                np.float32), *args).accuracy
            wins += trained > random
        assert wins >= 2


class TestReport:
    def test_single_seed(self, small_config, tmp_path):
        run_xerm_pipeline(small_config, 0, tmp_path / "s0")
        rows = report([tmp_path / "s0"], tmp_path / "rep")
        assert all(r["std"] == 0 and r["n"] == 1 for r in rows)
        for name in ("summary.csv", "prediction_hist.csv", "summary.txt"):
            assert (tmp_path / "rep" / name).is_file()

    def test_four_seeds(self, small_config, tmp_path):
        paths = [run_xerm_pipeline(small_config, s, tmp_path / f"s{s}") and tmp_path / f"s{s}"
                 for s in range(4)]
        rows = report(paths)
        acc = [r for r in rows if (r["model"], r["suite"], r["metric"]) ==
               ("xERM", BALANCED, "accuracy")][0]
        values = [json.loads((p / "manifest.json").read_text())
                  ["evaluations"]["xERM"][BALANCED]["accuracy"] for p in paths]
        assert acc["n"] == 4
        assert acc["mean"] == pytest.approx(np.mean(values))
        assert acc["std"] == pytest.approx(np.std(values))

    def test_mismatch_and_missing(self, small_config, tmp_path):
        run_xerm_pipeline(small_config, 0, tmp_path / "a")
        run_xerm_pipeline(small_config.replace(gamma=1.0), 0, tmp_path / "b")
        with pytest.raises(ConfigMismatch):
            report([tmp_path / "a", tmp_path / "b"])
        with pytest.raises(MissingManifest):
            report([tmp_path / "nothing"])


def _small_args(out):
    return ["--n-head", "100", "--n-test-per-class", "40", "--n-probe-per-class", "40",
            "--epochs", "4", "--lr-milestones", "3", "--probe-epochs", "2", "--hidden", "8",
            "--mu", "0.05", "--many-threshold", "50", "--few-threshold", "10",
            "--seeds", "0", "--out", str(out)]


class TestCLI:
    def test_end_to_end(self, tmp_path, capsys):
        out = tmp_path / "cli"
        small = _small_args(out)
        assert cli.main(["train-xerm", *small]) == 0
        assert (out / "seed_0" / "manifest.json").is_file()
        assert cli.main(["report", str(out / "seed_0"), "--out", str(out / "rep")]) == 0
        ckpt = str(out / "seed_0" / "xerm.ckpt")
        assert cli.main(["eval", "--checkpoint", ckpt, "--adjust", *small]) == 0
        assert cli.main(["probe", "--checkpoint", ckpt, *small]) == 0
        assert cli.main(["train-xe", *small]) == 0
        assert cli.main(["gen-data", *small]) == 0
        assert (out / "train.csv").is_file()
        assert cli.main(["sweep-gamma", "--gammas", "0, 2", *small]) == 0
        assert cli.main(["ablate-w", "--ws", "0, 1", *small]) == 0
        assert len((out / "ablate_w.csv").read_text().splitlines()) == 3
        assert "accuracy" in capsys.readouterr().out

    def test_config_errors_exit_1(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("nonsense_key = 3\n")
        assert cli.main(["train-xe", "--config", str(bad)]) == 1
        assert cli.main(["train-xe", "--epochs", "lots"]) == 1
        with pytest.raises(SystemExit) as info:
            cli.main(["no-such-command"])
        assert info.value.code == 1

    def test_runtime_error_exit_2(self, tmp_path):
        (tmp_path / "broken.ckpt").write_bytes(b"XERM\x01")
        assert cli.main(["eval", "--checkpoint", str(tmp_path / "broken.ckpt"),
                         "--out", str(tmp_path)]) == 2

    def test_verify_causal_exit_codes(self, monkeypatch):
        assert cli.main(["verify-causal", "--n", "20"]) == 0
        monkeypatch.setattr(cli, "verify_random_scms",
                            lambda n, seed: {"backdoor": (False, 1.0)})
        assert cli.main(["verify-causal"]) == 3
