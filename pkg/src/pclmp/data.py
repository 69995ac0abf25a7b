"""Two-modality feature datasets: synthetic generation, file I/O and P x K sampling."""
from __future__ import annotations

import csv
import enum
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Optional

import numpy as np

from .errors import DimMismatch, InsufficientClusters, InvalidConfig, ParseError

NOISE = -1
UNKNOWN_ID = -1
XPCL_MAGIC = b"XPCL"


class Modality(enum.IntEnum):
    VISIBLE = 0
    INFRARED = 1

    @property
    def code(self) -> str:
        return "V" if self is Modality.VISIBLE else "R"

    @classmethod
    def from_code(cls, code: str) -> "Modality":
        try:
            return {"V": cls.VISIBLE, "R": cls.INFRARED}[code.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown modality {code!r}") from None


@dataclass
class FeatureRecord:
    raw: np.ndarray
    modality: Modality
    true_id: Optional[int] = None
    pseudo_label: int = NOISE


@dataclass
class FeatureSet:
    """Column-oriented storage for a sequence of records.

    ``true_id`` uses -1 for "unknown". Pseudo-labels are per-epoch state and
    live with the trainer, not here.
    """

    raw: np.ndarray
    modality: np.ndarray
    true_id: np.ndarray

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=np.float64)
        self.modality = np.asarray(self.modality, dtype=np.int8)
        self.true_id = np.asarray(self.true_id, dtype=np.int64)
        if self.raw.ndim != 2:
            raise DimMismatch("raw features must be a 2-D array")
        n = self.raw.shape[0]
        if self.modality.shape != (n,) or self.true_id.shape != (n,):
            raise DimMismatch("modality/true_id length differs from feature count")

    def __len__(self) -> int:
        return self.raw.shape[0]

    @property
    def dim(self) -> int:
        return self.raw.shape[1]

    def indices(self, modality: Modality) -> np.ndarray:
        return np.flatnonzero(self.modality == int(modality))

    def has_ground_truth(self) -> bool:
        return bool(np.all(self.true_id != UNKNOWN_ID))

    def without_ground_truth(self) -> "FeatureSet":
        return FeatureSet(self.raw.copy(), self.modality.copy(), np.full(len(self), UNKNOWN_ID))

    def records(self) -> Iterator[FeatureRecord]:
        for x, m, t in zip(self.raw, self.modality, self.true_id):
            yield FeatureRecord(x.copy(), Modality(int(m)), None if t == UNKNOWN_ID else int(t))

    @classmethod
    def from_records(cls, records) -> "FeatureSet":
        records = list(records)
        if not records:
            return cls(np.zeros((0, 1)), np.zeros(0), np.zeros(0))
        dims = {np.asarray(r.raw).shape for r in records}
        if len(dims) != 1:
            raise DimMismatch(f"records have differing shapes {sorted(dims)}")
        return cls(
            np.stack([np.asarray(r.raw, dtype=np.float64) for r in records]),
            np.array([int(r.modality) for r in records]),
            np.array([UNKNOWN_ID if r.true_id is None else r.true_id for r in records]),
        )


@dataclass(frozen=True)
class SynthConfig:
    n_identities: int = 50
    d_in: int = 32
    samples_per_id_per_modality: int = 16
    intra_id_spread: float = 0.05
    modality_shift: float = 0.5
    noise_fraction: float = 0.0
    seed: int = 7

    def validate(self) -> None:
        if self.n_identities < 2:
            raise InvalidConfig("n_identities must be >= 2")
        if self.d_in < 1:
            raise InvalidConfig("d_in must be >= 1")
        if self.samples_per_id_per_modality < 1:
            raise InvalidConfig("samples_per_id_per_modality must be >= 1")
        if not self.intra_id_spread > 0:
            raise InvalidConfig("intra_id_spread must be > 0")
        if not 0.0 <= self.noise_fraction < 1.0:
            raise InvalidConfig("noise_fraction must lie in [0, 1)")
        if not np.isfinite(self.modality_shift) or self.modality_shift < 0:
            raise InvalidConfig("modality_shift must be a finite non-negative number")


def _random_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def generate_synthetic(cfg: SynthConfig) -> FeatureSet:
    """Identity anchors on the unit sphere; infrared views pass through a fixed
    transform ``x -> (1 - s) x + s (Q x + o)`` with ``Q`` orthogonal, ``o`` a unit
    offset and ``s = modality_shift``. Records are ordered visible-first, then
    identity-major within each modality.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n, d, s = cfg.n_identities, cfg.d_in, cfg.samples_per_id_per_modality
    anchors = _unit_rows(rng, n, d)
    rot = _random_orthogonal(rng, d)
    offset = _unit_rows(rng, 1, d)[0]
    shift = cfg.modality_shift

    def to_infrared(x):
        return (1.0 - shift) * x + shift * (x @ rot.T + offset)

    ids = np.repeat(np.arange(n), s)
    raws = []
    for modality in (Modality.VISIBLE, Modality.INFRARED):
        base = anchors[ids].copy()
        distractor = rng.random(n * s) < cfg.noise_fraction
        base[distractor] = _unit_rows(rng, int(distractor.sum()), d)
        if modality is Modality.INFRARED:
            base = to_infrared(base)
        raws.append(base + cfg.intra_id_spread * rng.standard_normal((n * s, d)))
    return FeatureSet(
        np.concatenate(raws),
        np.repeat([int(Modality.VISIBLE), int(Modality.INFRARED)], n * s),
        np.concatenate([ids, ids]),
    )


# --- file formats -----------------------------------------------------------

def _xpcl_dtype(d: int) -> np.dtype:
    return np.dtype([("modality", "u1"), ("true_id", "<i4"), ("x", "<f4", (d,))])


def save_xpcl(path, fs: FeatureSet) -> None:
    rec = np.zeros(len(fs), dtype=_xpcl_dtype(fs.dim))
    rec["modality"] = fs.modality
    rec["true_id"] = fs.true_id
    rec["x"] = fs.raw
    with open(path, "wb") as fh:
        fh.write(XPCL_MAGIC + struct.pack("<II", len(fs), fs.dim))
        fh.write(rec.tobytes())


def load_xpcl(path) -> FeatureSet:
    blob = Path(path).read_bytes()
    if len(blob) < 12:
        raise ParseError(f"{path}: truncated header ({len(blob)} bytes, offset 0)")
    if blob[:4] != XPCL_MAGIC:
        raise ParseError(f"{path}: bad magic {blob[:4]!r} at offset 0")
    count, d = struct.unpack_from("<II", blob, 4)
    if d < 1:
        raise ParseError(f"{path}: dimension must be >= 1 (offset 8)")
    dt = _xpcl_dtype(d)
    need = 12 + count * dt.itemsize
    if len(blob) != need:
        raise ParseError(f"{path}: expected {need} bytes for {count} records, got {len(blob)} (offset {min(len(blob), need)})")
    rec = np.frombuffer(blob, dtype=dt, count=count, offset=12)
    if np.any(rec["modality"] > 1):
        bad = int(np.flatnonzero(rec["modality"] > 1)[0])
        raise ParseError(f"{path}: invalid modality byte in record {bad} (offset {12 + bad * dt.itemsize})")
    return FeatureSet(rec["x"].astype(np.float64), rec["modality"], rec["true_id"])


def save_csv(path, fs: FeatureSet) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "modality"] + [f"f{j}" for j in range(fs.dim)])
        for x, m, t in zip(fs.raw, fs.modality, fs.true_id):
            w.writerow([int(t), Modality(int(m)).code] + [f"{float(np.float32(v))!r}" for v in x])


def load_csv(path) -> FeatureSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file (line 1)")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["id", "modality"] or len(header) < 3:
        raise ParseError(f"{path}: line 1: header must start with id,modality,f0")
    d = len(header) - 2
    if header[2:] != [f"f{j}" for j in range(d)]:
        raise ParseError(f"{path}: line 1: feature columns must be f0..f{d - 1}")
    raw, mods, ids = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != d + 2:
            raise DimMismatch(f"{path}: line {lineno}: expected {d + 2} fields, got {len(row)}")
        try:
            ids.append(int(row[0]))
            mods.append(int(Modality.from_code(row[1])))
            raw.append([float(v) for v in row[2:]])
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from None
    return FeatureSet(np.array(raw, dtype=np.float64).reshape(-1, d), mods, ids)


def load_features(path, format: Optional[str] = None) -> FeatureSet:
    """Load ``csv`` or ``xpcl`` (binary) features; format defaults from the suffix."""
    if format is None:
        format = "csv" if str(path).lower().endswith(".csv") else "xpcl"
    if format == "csv":
        return load_csv(path)
    if format in ("xpcl", "xpcl-binary"):
        return load_xpcl(path)
    raise ValueError(f"unknown feature format {format!r}")


# --- P x K sampling -----------------------------------------------------------

@dataclass(frozen=True)
class BatchSpec:
    P: int = 16
    K: int = 16

    def __post_init__(self):
        if self.P < 2 or self.K < 1:
            raise InvalidConfig(f"BatchSpec needs P >= 2 and K >= 1, got P={self.P}, K={self.K}")


def pk_sample_one(labels, spec: BatchSpec, rng: np.random.Generator) -> np.ndarray:
    """P clusters x K members from one modality's pseudo-labels, cluster-major."""
    labels = np.asarray(labels)
    valid = np.unique(labels[labels != NOISE])
    if valid.size < spec.P:
        raise InsufficientClusters(f"need {spec.P} clusters, have {valid.size}")
    chosen = rng.choice(valid, size=spec.P, replace=False)
    out = []
    for c in chosen:
        members = np.flatnonzero(labels == c)
        out.append(rng.choice(members, size=spec.K, replace=members.size < spec.K))
    return np.concatenate(out)


def pk_sample(labels: Mapping[Modality, np.ndarray], spec: BatchSpec, seed: int, epoch: int, step: int) -> dict:
    """Independent P x K draws per modality, keyed on (seed, epoch, step).

    Returned indices point into each modality's own label array.
    """
    return {
        m: pk_sample_one(labels[m], spec, np.random.default_rng([seed, epoch, step, int(m), 0x5A]))
        for m in sorted(labels)
    }
