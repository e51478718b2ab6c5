"""Dataset manifests, stratified splits, class weighting, the weighted
with-replacement sampler, and the binary feature-file codec.

The feature file is the single cross-tool contract (the external feature
extractor writes it, this package reads it):

    magic  b"QCNF"
    u16    version = 1
    u32    record count
    u32    feature dim
    per record: u16 id length, id bytes (UTF-8), u8 label, dim * f32

All integers and floats little-endian.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError

LABELS = ("Normal", "Cyst", "Stone", "Tumor")
LABEL_TO_CODE = {name: i for i, name in enumerate(LABELS)}
N_CLASSES = 4

MAGIC = b"QCNF"
VERSION = 1


@dataclass(frozen=True)
class ManifestRecord:
    sample_id: str
    path: str
    label: str

    @property
    def label_code(self) -> int:
        return LABEL_TO_CODE[self.label]


def read_manifest(path) -> list:
    """CSV with header `id,path,label`; ids unique, labels case-sensitive."""
    records = []
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["id", "path", "label"]:
            raise FormatError(f"manifest {path}: expected header 'id,path,label', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise FormatError(f"manifest {path}:{lineno}: expected 3 fields, got {len(row)}")
            sid, p, label = row
            if label not in LABEL_TO_CODE:
                raise FormatError(f"manifest {path}:{lineno}: unknown label {label!r}")
            if sid in seen:
                raise FormatError(f"manifest {path}:{lineno}: duplicate id {sid!r}")
            seen.add(sid)
            records.append(ManifestRecord(sid, p, label))
    return records


def write_manifest(path, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "path", "label"])
        for r in records:
            writer.writerow([r.sample_id, r.path, r.label])


def split(records, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Per-class stratified split: floor(r_train*n) train, floor(r_val*n)
    val, remainder test. Deterministic under the seed and invariant to
    record order (records are sorted by id before shuffling)."""
    if abs(sum(ratios) - 1.0) > 1e-12:
        raise ConfigurationError(f"split ratios must sum to 1, got {ratios}")
    by_class = {name: [] for name in LABELS}
    for r in records:
        by_class[r.label].append(r)
    train, val, test = [], [], []
    for code, name in enumerate(LABELS):
        group = sorted(by_class[name], key=lambda r: r.sample_id)
        if not group:
            raise ConfigurationError(f"class {name!r} has no samples")
        rng = np.random.default_rng([seed, code])
        order = rng.permutation(len(group))
        group = [group[i] for i in order]
        n = len(group)
        n_train = int(ratios[0] * n)
        n_val = int(ratios[1] * n)
        train += group[:n_train]
        val += group[n_train:n_train + n_val]
        test += group[n_train + n_val:]
    return train, val, test


def class_weights(records) -> np.ndarray:
    """Inverse-frequency weights normalized to frequency-weighted mean 1:
    w_c = (N / 4) / n_c."""
    counts = np.zeros(N_CLASSES)
    for r in records:
        counts[r.label_code] += 1
    if np.any(counts == 0):
        missing = [LABELS[i] for i in np.flatnonzero(counts == 0)]
        raise ConfigurationError(f"missing classes in training manifest: {missing}")
    return (counts.sum() / N_CLASSES) / counts


@dataclass(frozen=True)
class SamplerPlan:
    """Per-epoch with-replacement sampling: n_max * 4 draws, per-sample
    probability inversely proportional to its class frequency."""

    n_max: int
    seed: int = 0

    @property
    def draws(self) -> int:
        return self.n_max * N_CLASSES


def weighted_sample(labels: np.ndarray, n_max: int, rng) -> np.ndarray:
    """Draw n_max*4 indices i.i.d. with replacement, p_i proportional to
    1/n_{class(i)}; expected per-class count is n_max."""
    labels = np.asarray(labels)
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    counts = np.bincount(labels, minlength=N_CLASSES).astype(float)
    present = counts > 0
    inv = np.zeros(N_CLASSES)
    inv[present] = 1.0 / counts[present]
    p = inv[labels]
    p = p / p.sum()
    return rng.choice(labels.size, size=n_max * N_CLASSES, replace=True, p=p)


# ---------------------------------------------------------------------------
# Feature-file codec
# ---------------------------------------------------------------------------

@dataclass
class FeatureRecord:
    sample_id: str
    label: int
    vector: np.ndarray  # float32

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float32)
        if self.vector.ndim != 1:
            raise ConfigurationError("feature vector must be 1-D")
        if not np.all(np.isfinite(self.vector)):
            raise ConfigurationError(f"non-finite feature vector for {self.sample_id!r}")
        if not 0 <= self.label < N_CLASSES:
            raise ConfigurationError(f"label code {self.label} out of range")


def write_features(path, records, dim: int = None) -> None:
    """Write the binary feature file; bit-exact round trip with read_features."""
    records = list(records)
    if dim is None:
        dim = records[0].vector.size if records else 0
    for r in records:
        if r.vector.size != dim:
            raise ConfigurationError(
                f"record {r.sample_id!r} has dim {r.vector.size}, expected {dim}"
            )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HII", VERSION, len(records), dim))
        for r in records:
            ident = r.sample_id.encode("utf-8")
            if len(ident) > 0xFFFF:
                raise ConfigurationError(f"sample id too long: {r.sample_id!r}")
            fh.write(struct.pack("<H", len(ident)))
            fh.write(ident)
            fh.write(struct.pack("<B", r.label))
            fh.write(r.vector.astype("<f4", copy=False).tobytes())


def _read_exact(fh, count: int, what: str):
    data = fh.read(count)
    if len(data) != count:
        offset = fh.tell() - len(data)
        raise FormatError(
            f"truncated feature file while reading {what}: expected {count} bytes "
            f"at offset {offset}, got {len(data)}"
        )
    return data


def read_features(path) -> list:
    """Read a feature file; rejects any header inconsistency with a
    positioned error."""
    records = []
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
        version, count, dim = struct.unpack("<HII", _read_exact(fh, 10, "header"))
        if version != VERSION:
            raise FormatError(f"unsupported feature-file version {version} at offset 4")
        for i in range(count):
            (id_len,) = struct.unpack("<H", _read_exact(fh, 2, f"record {i} id length"))
            ident = _read_exact(fh, id_len, f"record {i} id").decode("utf-8")
            (label,) = struct.unpack("<B", _read_exact(fh, 1, f"record {i} label"))
            if label >= N_CLASSES:
                raise FormatError(
                    f"record {i} ({ident!r}): label code {label} out of range "
                    f"at offset {fh.tell() - 1}"
                )
            vec = np.frombuffer(
                _read_exact(fh, 4 * dim, f"record {i} vector"), dtype="<f4"
            ).copy()
            records.append(FeatureRecord(ident, int(label), vec))
        trailing = fh.read(1)
        if trailing:
            raise FormatError(
                f"trailing bytes after {count} records at offset {fh.tell() - 1}"
            )
    return records


def features_to_arrays(records):
    """Stack records into (features float32 (N, dim), labels int64 (N,), ids)."""
    if not records:
        raise ConfigurationError("empty feature record set")
    feats = np.stack([r.vector for r in records]).astype(np.float32)
    labels = np.array([r.label for r in records], dtype=np.int64)
    ids = [r.sample_id for r in records]
    return feats, labels, ids
