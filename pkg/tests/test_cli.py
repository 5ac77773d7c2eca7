import csv
import os

import numpy as np
import pytest

from adsnn import data
from adsnn.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from adsnn.network import load_checkpoint
from adsnn.run import (ConfigError, PRESETS, RunConfig, build_run_config,
                       derive_seeds, run_training)
from adsnn.tasks import make_event_fixture


@pytest.fixture
def tiny_dataset(tmp_path):
    """Small event dataset with a manifest, cheap enough to train on."""
    fixture = make_event_fixture(12, seed=0, num_classes=3, raw_channels=20,
                                 events_per_sample=25)
    evt = tmp_path / "train.evt"
    data.write_events(str(evt), fixture)
    manifest = tmp_path / "manifest.txt"
    manifest.write_text("train=train.evt\nnum_classes=3\nraw_channels=20\n"
                        "channel_factor=2\nbin_width=0.05\ntimesteps=20\n")
    return str(manifest)


class TestRunConfig:
    def test_preset_values(self):
        run = build_run_config(preset="shd")
        assert (run.hidden, run.epochs, run.batch_size) == (128, 100, 128)
        assert run.dropout == 0.5 and run.lr_weights == 0.01
        run = build_run_config(preset="ssc")
        assert (run.hidden, run.batch_size, run.dropout) == (512, 32, 0.25)
        assert run.lr_weights == 0.001

    def test_precedence_preset_file_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("hidden=64\nepochs=7\n")
        run = build_run_config(str(cfg), "shd", ["epochs=3"])
        assert run.hidden == 64      # file beats preset
        assert run.epochs == 3       # override beats file
        assert run.batch_size == 128  # preset survives where not overridden

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="bogus"):
            build_run_config(overrides=["bogus=1"])
        cfg = tmp_path / "run.cfg"
        cfg.write_text("momentum=0.9\n")
        with pytest.raises(ConfigError, match="momentum"):
            build_run_config(str(cfg))

    def test_bad_values_rejected(self):
        with pytest.raises(ConfigError):
            build_run_config(overrides=["epochs=three"])
        with pytest.raises(ConfigError):
            build_run_config(overrides=["use_delays=maybe"])
        with pytest.raises(ConfigError):
            build_run_config(preset="imagenet")

    def test_bool_coercion(self):
        assert build_run_config(overrides=["use_delays=false"]).use_delays is False
        assert build_run_config(overrides=["use_delays=1"]).use_delays is True

    def test_lr_delays_default(self):
        assert build_run_config(overrides=["lr_weights=0.004"]) \
            .resolved_lr_delays() == pytest.approx(0.04)
        assert build_run_config(overrides=["lr_delays=0.2"]) \
            .resolved_lr_delays() == pytest.approx(0.2)

    def test_derived_seeds_independent_and_stable(self):
        r1a, r2a, sa = derive_seeds(42)
        r1b, r2b, sb = derive_seeds(42)
        assert sa == sb
        assert r1a.random(4).tolist() == r1b.random(4).tolist()
        # init and train streams differ from each other
        assert r1b.random(4).tolist() != r2b.random(4).tolist()
        assert derive_seeds(43)[2] != sa


class TestTrainEvalCli:
    def run_train(self, tiny_dataset, tmp_path, extra=()):
        out = str(tmp_path / "run")
        rc = main(["train", "--data", tiny_dataset, "--out", out,
                   "--seed", "1", "--set", "epochs=2", "--set", "hidden=8",
                   "--set", "batch_size=4", "--set", "dropout=0.0",
                   *extra])
        return rc, out

    def test_train_writes_artifacts(self, tiny_dataset, tmp_path, capsys):
        rc, out = self.run_train(tiny_dataset, tmp_path)
        assert rc == EXIT_OK
        assert os.path.exists(os.path.join(out, "best.npz"))
        assert os.path.exists(os.path.join(out, "last.npz"))
        with open(os.path.join(out, "metrics.csv")) as fh:
            lines = fh.read().splitlines()
        assert lines[0].startswith("# created ")
        rows = list(csv.reader(lines[1:]))
        assert rows[0][:4] == ["epoch", "train_loss", "train_acc", "valid_acc"]
        assert len(rows) == 1 + 2  # header + one row per epoch
        model = load_checkpoint(os.path.join(out, "last.npz"))
        assert model.config.num_hidden == 8

    def test_metrics_reproducible_across_runs(self, tiny_dataset, tmp_path):
        _, out1 = self.run_train(tiny_dataset, tmp_path / "a")
        _, out2 = self.run_train(tiny_dataset, tmp_path / "b")
        read = lambda p: open(os.path.join(p, "metrics.csv")).read().splitlines()[1:]
        assert read(out1) == read(out2)

    def test_eval_runs_on_checkpoint(self, tiny_dataset, tmp_path, capsys):
        _, out = self.run_train(tiny_dataset, tmp_path)
        rc = main(["eval", "--checkpoint", os.path.join(out, "last.npz"),
                   "--data", tiny_dataset, "--split", "train"])
        assert rc == EXIT_OK
        assert "accuracy" in capsys.readouterr().out

    def test_stats_command(self, tiny_dataset, tmp_path, capsys):
        _, out = self.run_train(tiny_dataset, tmp_path)
        stats_dir = str(tmp_path / "stats")
        rc = main(["stats", "--checkpoint", os.path.join(out, "last.npz"),
                   "--data", tiny_dataset, "--split", "train",
                   "--out", stats_dir])
        assert rc == EXIT_OK
        assert os.path.exists(os.path.join(stats_dir, "spike_stats.csv"))
        assert os.path.exists(os.path.join(stats_dir, "neuron1_alpha.csv"))

    def test_missing_manifest_exit_config(self, tmp_path, capsys):
        rc = main(["train", "--data", str(tmp_path / "absent.txt"),
                   "--out", str(tmp_path / "o")])
        assert rc == EXIT_CONFIG
        assert "error" in capsys.readouterr().err

    def test_bad_override_exit_config(self, tiny_dataset, tmp_path, capsys):
        rc = main(["train", "--data", tiny_dataset,
                   "--out", str(tmp_path / "o"), "--set", "bogus=1"])
        assert rc == EXIT_CONFIG

    def test_eval_missing_checkpoint(self, tiny_dataset, tmp_path, capsys):
        rc = main(["eval", "--checkpoint", str(tmp_path / "no.npz"),
                   "--data", tiny_dataset])
        assert rc == EXIT_CONFIG


class TestGradcheckCli:
    def test_pass_exit_ok(self, capsys):
        rc = main(["gradcheck", "--seeds", "2", "--hidden", "4",
                   "--inputs", "3", "--classes", "2", "--timesteps", "8"])
        assert rc == EXIT_OK
        assert "passed" in capsys.readouterr().out

    def test_impossible_tolerance_exit_runtime(self, capsys):
        rc = main(["gradcheck", "--seeds", "1", "--hidden", "4",
                   "--inputs", "3", "--classes", "2", "--timesteps", "8",
                   "--tol", "0"])
        assert rc == EXIT_RUNTIME
        assert "FAILED" in capsys.readouterr().out


class TestRegimeMapCli:
    def test_writes_csv(self, tmp_path, capsys):
        spec = tmp_path / "spec.toml"
        spec.write_text("a_range = [0.0, 1.0, 4]\nb_range = [0.0, 2.0, 4]\n")
        out = str(tmp_path / "map.csv")
        rc = main(["regime-map", "--spec", str(spec), "--out", out])
        assert rc == EXIT_OK
        rows = list(csv.reader(open(out)))
        assert len(rows) == 1 + 16

    def test_bad_spec_exit_config(self, tmp_path):
        spec = tmp_path / "spec.toml"
        spec.write_text("whatever = 3\n")
        rc = main(["regime-map", "--spec", str(spec),
                   "--out", str(tmp_path / "m.csv")])
        assert rc == EXIT_CONFIG


class TestBinDataCli:
    def test_conserves_events(self, tmp_path, capsys):
        fixture = make_event_fixture(5, seed=3, num_classes=4,
                                     raw_channels=20, events_per_sample=15)
        evt = str(tmp_path / "e.evt")
        data.write_events(evt, fixture)
        out = str(tmp_path / "e.snnb")
        rc = main(["bin-data", "--events", evt, "--out", out,
                   "--channel-factor", "2", "--bin-width", "0.05",
                   "--timesteps", "20"])
        assert rc == EXIT_OK
        values, labels = data.load_binned(out)
        assert values.shape == (5, 20, 10)
        assert values.sum() == len(fixture.records)
        assert list(labels) == [i % 4 for i in range(5)]

    def test_binarize_flag(self, tmp_path):
        evt = str(tmp_path / "e.evt")
        with open(evt, "w") as fh:
            fh.write("#snnevt v1 raw_channels=4 classes=2\n")
            fh.write("0,1,0,0.001\n0,1,1,0.002\n")
        out = str(tmp_path / "e.snnb")
        rc = main(["bin-data", "--events", evt, "--out", out,
                   "--channel-factor", "2", "--bin-width", "0.01",
                   "--timesteps", "5", "--binarize"])
        assert rc == EXIT_OK
        values, _ = data.load_binned(out)
        assert values.max() == 1.0

    def test_malformed_events_exit_config(self, tmp_path, capsys):
        evt = tmp_path / "bad.evt"
        evt.write_text("#snnevt v1 raw_channels=4 classes=2\n0,1,9,0.1\n")
        rc = main(["bin-data", "--events", str(evt),
                   "--out", str(tmp_path / "o.snnb")])
        assert rc == EXIT_CONFIG
