"""Dataset ingestion: event files, channel/time binning, batches and splits.

Two on-disk formats are supported:

* Event file (text, UTF-8): header ``#snnevt v1 raw_channels=<int>
  classes=<int>``, then one event per line as
  ``sample_id,label,channel,time_seconds``.
* Binned tensor file (binary): magic ``SNNB``, u32 version=1,
  u32 num_samples, u32 T, u32 channels, then per sample a u32 label
  followed by T*channels little-endian float32, row-major by time.

A manifest (key=value text) ties split files and binning parameters
together.  Binning follows the 700-channel / 100-timestep scheme: floor
division of the channel index by the channel factor and of the event time
by the bin width; events at or after T * bin_width are dropped; multiple
events per cell accumulate as counts (use binarize=True to saturate at 1).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

EVENT_MAGIC = "#snnevt v1"
SNNB_MAGIC = b"SNNB"
SNNB_VERSION = 1


@dataclass
class EventRecord:
    sample_id: int
    label: int
    channel: int
    time: float


@dataclass
class EventFile:
    raw_channels: int
    num_classes: int
    records: list


@dataclass
class DatasetManifest:
    """Paths and binning parameters for one dataset."""

    train: str
    valid: str | None = None
    test: str | None = None
    num_classes: int = 20
    raw_channels: int = 700
    channel_factor: int = 5
    bin_width: float = 0.01
    timesteps: int = 100

    @property
    def channels(self) -> int:
        if self.raw_channels % self.channel_factor:
            raise ValueError("channel_factor must divide raw_channels")
        return self.raw_channels // self.channel_factor


class DataFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Event files
# ---------------------------------------------------------------------------

def parse_events(path: str) -> EventFile:
    """Strictly parse an event file; errors carry the offending line number."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        fields = header.split()
        if fields[:2] != EVENT_MAGIC.split() or len(fields) != 4:
            raise DataFormatError(f"{path}:1: bad header {header!r}")
        try:
            meta = dict(kv.split("=") for kv in fields[2:])
            raw_channels = int(meta["raw_channels"])
            num_classes = int(meta["classes"])
        except (ValueError, KeyError) as exc:
            raise DataFormatError(f"{path}:1: bad header fields: {exc}") from exc

        records = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise DataFormatError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                rec = EventRecord(int(parts[0]), int(parts[1]), int(parts[2]),
                                  float(parts[3]))
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
            if not (0 <= rec.channel < raw_channels):
                raise DataFormatError(f"{path}:{lineno}: channel {rec.channel} "
                                      f"outside [0, {raw_channels})")
            if not (0 <= rec.label < num_classes):
                raise DataFormatError(f"{path}:{lineno}: label {rec.label} "
                                      f"outside [0, {num_classes})")
            if rec.time < 0:
                raise DataFormatError(f"{path}:{lineno}: negative time")
            records.append(rec)
    return EventFile(raw_channels, num_classes, records)


def write_events(path: str, events: EventFile) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{EVENT_MAGIC} raw_channels={events.raw_channels} "
                 f"classes={events.num_classes}\n")
        for r in events.records:
            fh.write(f"{r.sample_id},{r.label},{r.channel},{r.time!r}\n")


def bin_sample(records: list, manifest: DatasetManifest,
               binarize: bool = False) -> np.ndarray:
    """Accumulate one sample's events into a (T, channels) count grid."""
    grid = np.zeros((manifest.timesteps, manifest.channels))
    horizon = manifest.timesteps * manifest.bin_width
    for r in records:
        if r.time >= horizon:
            continue
        grid[int(r.time // manifest.bin_width), r.channel // manifest.channel_factor] += 1.0
    if binarize:
        grid = np.minimum(grid, 1.0)
    return grid


def bin_events(events: EventFile, manifest: DatasetManifest,
               binarize: bool = False):
    """Bin a whole event file; returns (values (N, T, C), labels (N,)).

    Samples are ordered by sample_id; each sample's events must agree on
    the label.
    """
    by_sample: dict = {}
    labels: dict = {}
    for r in events.records:
        by_sample.setdefault(r.sample_id, []).append(r)
        if labels.setdefault(r.sample_id, r.label) != r.label:
            raise DataFormatError(f"sample {r.sample_id} has conflicting labels")
    ids = sorted(by_sample)
    values = np.stack([bin_sample(by_sample[i], manifest, binarize) for i in ids]) \
        if ids else np.zeros((0, manifest.timesteps, manifest.channels))
    return values, np.array([labels[i] for i in ids], dtype=int)


# ---------------------------------------------------------------------------
# Binned tensor files
# ---------------------------------------------------------------------------

def save_binned(path: str, values: np.ndarray, labels: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.uint32)
    n, t, c = values.shape
    with open(path, "wb") as fh:
        fh.write(SNNB_MAGIC)
        fh.write(struct.pack("<IIII", SNNB_VERSION, n, t, c))
        for i in range(n):
            fh.write(struct.pack("<I", int(labels[i])))
            fh.write(values[i].astype("<f4").tobytes())


def load_binned(path: str):
    """Load a binned tensor file; returns (values (N, T, C) float64, labels)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNNB_MAGIC:
            raise DataFormatError(f"{path}: not a binned tensor file")
        version, n, t, c = struct.unpack("<IIII", fh.read(16))
        if version != SNNB_VERSION:
            raise DataFormatError(f"{path}: unsupported version {version}")
        values = np.empty((n, t, c))
        labels = np.empty(n, dtype=int)
        for i in range(n):
            raw = fh.read(4)
            if len(raw) < 4:
                raise DataFormatError(f"{path}: truncated at sample {i}")
            labels[i] = struct.unpack("<I", raw)[0]
            buf = fh.read(4 * t * c)
            if len(buf) < 4 * t * c:
                raise DataFormatError(f"{path}: truncated at sample {i}")
            values[i] = np.frombuffer(buf, dtype="<f4").reshape(t, c)
    return values, labels


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

_MANIFEST_FIELDS = {"train", "valid", "test", "num_classes", "raw_channels",
                    "channel_factor", "bin_width", "timesteps"}


def load_manifest(path: str) -> DatasetManifest:
    kwargs = {}
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataFormatError(f"{path}:{lineno}: expected key=value")
            key, value = (x.strip() for x in line.split("=", 1))
            if key not in _MANIFEST_FIELDS:
                raise DataFormatError(f"{path}:{lineno}: unknown key {key!r}")
            if key in ("train", "valid", "test"):
                kwargs[key] = value if os.path.isabs(value) else os.path.join(base, value)
            elif key == "bin_width":
                kwargs[key] = float(value)
            else:
                kwargs[key] = int(value)
    if "train" not in kwargs:
        raise DataFormatError(f"{path}: manifest is missing 'train'")
    return DatasetManifest(**kwargs)


def load_split(manifest: DatasetManifest, split: str):
    """Load one split ('train'/'valid'/'test') as (values, labels).

    Event files (.evt or snnevt header) are binned on the fly; .snnb files
    are loaded directly.
    """
    path = getattr(manifest, split)
    if path is None:
        raise ValueError(f"manifest has no {split!r} split")
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == SNNB_MAGIC:
        return load_binned(path)
    return bin_events(parse_events(path), manifest)


# ---------------------------------------------------------------------------
# Batching and splits
# ---------------------------------------------------------------------------

def make_batches(values: np.ndarray, labels: np.ndarray, batch_size: int,
                 shuffle_seed=None):
    """Deterministic mini-batches; the last partial batch is kept.

    shuffle_seed None preserves input order.
    """
    n = len(values)
    order = np.arange(n)
    if shuffle_seed is not None:
        rng = np.random.default_rng(shuffle_seed) \
            if not isinstance(shuffle_seed, np.random.Generator) else shuffle_seed
        order = rng.permutation(n)
    return [(values[order[i:i + batch_size]], labels[order[i:i + batch_size]])
            for i in range(0, n, batch_size)]


def split_validation(values: np.ndarray, labels: np.ndarray, fraction: float,
                     seed):
    """Disjoint, exhaustive, deterministic train/valid split."""
    if not (0.0 < fraction < 1.0):
        raise ValueError("fraction must be in (0, 1)")
    n = len(values)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_valid = int(round(n * fraction))
    valid_idx = np.sort(order[:n_valid])
    train_idx = np.sort(order[n_valid:])
    return ((values[train_idx], labels[train_idx]),
            (values[valid_idx], labels[valid_idx]))
