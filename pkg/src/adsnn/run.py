"""Run configuration, presets, and the end-to-end training runner.

A run is described by a flat key=value config (file and/or CLI overrides)
on top of a dataset preset.  One master seed drives everything: it is split
with numpy's SeedSequence into independent streams for model
initialization, the training loop (shuffling, dropout, state init) and the
validation split, in that fixed spawn order.
"""

from __future__ import annotations

import csv
import os
import signal
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from adsnn.data import load_manifest, load_split, split_validation
from adsnn.network import NetworkConfig, SNNModel, save_checkpoint
from adsnn.training import Optimizer, train_epoch, evaluate

# Hyperparameter presets (per-dataset training setups).
PRESETS = {
    "shd": dict(hidden=128, epochs=100, batch_size=128, dropout=0.5,
                lr_weights=0.01),
    "ssc": dict(hidden=512, epochs=200, batch_size=32, dropout=0.25,
                lr_weights=0.001),
    "gsc": dict(hidden=512, epochs=200, batch_size=32, dropout=0.25,
                lr_weights=0.001),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    data: str = ""                    # dataset manifest path
    out_dir: str = "runs/out"
    seed: int = 0
    preset: str = ""
    hidden: int = 128
    epochs: int = 100
    batch_size: int = 128
    dropout: float = 0.5
    lr_weights: float = 0.01
    lr_delays: float = -1.0           # -1 = 10 * lr_weights
    d_max: int = 25
    neuron_model: str = "adlif"       # adlif | lif
    use_delays: bool = True
    train_neuron_params: bool = True
    readout_mode: str = "softmax_sum"
    horizon_mode: str = "T"
    state_init: str = "random_uniform"
    valid_fraction: float = 0.2       # used when the manifest has no valid split

    def resolved_lr_delays(self) -> float:
        return 10.0 * self.lr_weights if self.lr_delays < 0 else self.lr_delays


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_BOOL_FIELDS = {"use_delays", "train_neuron_params"}


def _coerce(key: str, value: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    if key in _BOOL_FIELDS:
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    current = getattr(RunConfig(), key)
    try:
        return type(current)(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def build_run_config(config_path: str | None = None, preset: str | None = None,
                     overrides: list | None = None) -> RunConfig:
    """Assemble a RunConfig from preset < config file < CLI overrides."""
    values: dict = {}
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
        values.update(PRESETS[preset])
        values["preset"] = preset
    if config_path:
        if not os.path.exists(config_path):
            raise ConfigError(f"config file not found: {config_path}")
        with open(config_path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{config_path}:{lineno}: expected key=value")
                key, raw = (x.strip() for x in line.split("=", 1))
                if key == "preset":
                    if raw not in PRESETS:
                        raise ConfigError(f"{config_path}:{lineno}: unknown preset {raw!r}")
                    values.update(PRESETS[raw])
                    values["preset"] = raw
                else:
                    values[key] = _coerce(key, raw)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, raw = (x.strip() for x in item.split("=", 1))
        values[key] = _coerce(key, raw)
    return RunConfig(**values)


def derive_seeds(master_seed: int):
    """Fixed splitting scheme: (init, train_loop, split) streams."""
    init_ss, train_ss, split_ss = np.random.SeedSequence(master_seed).spawn(3)
    return (np.random.default_rng(init_ss), np.random.default_rng(train_ss),
            split_ss.entropy)


def network_config_for(run: RunConfig, num_inputs: int, num_timesteps: int,
                       num_classes: int) -> NetworkConfig:
    return NetworkConfig(
        num_inputs=num_inputs, num_hidden=run.hidden, num_classes=num_classes,
        num_timesteps=num_timesteps, dropout=run.dropout, d_max=run.d_max,
        readout_mode=run.readout_mode, horizon_mode=run.horizon_mode,
        neuron_model=run.neuron_model, use_delays=run.use_delays,
        state_init=run.state_init,
    )


def run_training(run: RunConfig, log=print) -> dict:
    """Full training run: trains, writes metrics.csv plus best/last
    checkpoints under run.out_dir, returns the final metrics summary."""
    if not run.data:
        raise ConfigError("no dataset manifest configured (key 'data')")
    if not os.path.exists(run.data):
        raise ConfigError(f"dataset manifest not found: {run.data}")
    manifest = load_manifest(run.data)

    init_rng, train_rng, split_seed = derive_seeds(run.seed)
    train_values, train_labels = load_split(manifest, "train")
    if manifest.valid:
        valid_values, valid_labels = load_split(manifest, "valid")
    else:
        (train_values, train_labels), (valid_values, valid_labels) = \
            split_validation(train_values, train_labels, run.valid_fraction,
                             split_seed)

    net_cfg = network_config_for(run, train_values.shape[2],
                                 train_values.shape[1], manifest.num_classes)
    model = SNNModel.init(net_cfg, init_rng)
    optimizer = Optimizer(model, run.lr_weights, run.resolved_lr_delays(),
                          train_neuron_params=run.train_neuron_params)

    os.makedirs(run.out_dir, exist_ok=True)
    metrics_path = os.path.join(run.out_dir, "metrics.csv")
    best_path = os.path.join(run.out_dir, "best.npz")
    last_path = os.path.join(run.out_dir, "last.npz")

    stop = {"requested": False}

    def _on_interrupt(signum, frame):
        stop["requested"] = True

    previous = signal.signal(signal.SIGINT, _on_interrupt)
    best_acc = -1.0
    summary = {}
    try:
        with open(metrics_path, "w", newline="") as fh:
            fh.write(f"# created {time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "train_acc", "valid_acc",
                             "lr_weights", "lr_delays", "spikes_per_neuron"])
            for epoch in range(1, run.epochs + 1):
                train_metrics = train_epoch(model, train_values, train_labels,
                                            optimizer, run.batch_size, train_rng,
                                            stop_flag=lambda: stop["requested"])
                valid_metrics = evaluate(model, valid_values, valid_labels)
                optimizer.scheduler_step(valid_metrics["accuracy"])
                writer.writerow([epoch, f"{train_metrics['loss']:.6f}",
                                 f"{train_metrics['accuracy']:.6f}",
                                 f"{valid_metrics['accuracy']:.6f}",
                                 f"{optimizer.lr_weights:.8g}",
                                 f"{optimizer.lr_delays:.8g}",
                                 f"{train_metrics['spikes_per_neuron']:.4f}"])
                fh.flush()
                save_checkpoint(model, last_path)
                if valid_metrics["accuracy"] > best_acc:
                    best_acc = valid_metrics["accuracy"]
                    save_checkpoint(model, best_path)
                summary = {"epoch": epoch, **train_metrics,
                           "valid_accuracy": valid_metrics["accuracy"],
                           "best_valid_accuracy": best_acc}
                log(f"epoch {epoch}: loss {train_metrics['loss']:.4f} "
                    f"train {train_metrics['accuracy']:.3f} "
                    f"valid {valid_metrics['accuracy']:.3f}")
                if stop["requested"]:
                    log("interrupted; last checkpoint written")
                    break
    finally:
        signal.signal(signal.SIGINT, previous)
    return summary
