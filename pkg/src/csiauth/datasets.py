"""Dataset construction: master, train/test split, and the two attack scenarios.

The master dataset adds measurement noise to a single enrolled CSI matrix
across an SNR grid. The accidental-authentication test set mixes in five
unrelated transmitters; the nefarious-users test set mixes in five spoofed
transmitters whose reference is the enrolled matrix shifted by a complex
offset. Files are CSV with a JSON manifest sidecar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import NoiseModel, flatten_csi, measurement_batch, sample_csi, unflatten_csi
from .rng import RngStream

LEGITIMATE = "legitimate"
ILLEGITIMATE = "illegitimate"
ENROLLED_ID = "legit"

KIND_MASTER = "master"
KIND_TRAIN = "train"
KIND_TEST = "test"
KIND_ACCIDENTAL = "test_accidental"
KIND_NEFARIOUS = "test_nefarious"
_KINDS = (KIND_MASTER, KIND_TRAIN, KIND_TEST, KIND_ACCIDENTAL, KIND_NEFARIOUS)

DEFAULT_SNR_GRID = tuple(float(s) for s in range(0, 31, 2))
MASTER_SAMPLES_PER_SNR = 1000
TRAIN_FRACTION = 0.7
N_ATTACKERS = 5
SAMPLES_PER_ATTACKER = 80


class DatasetFormatError(ValueError):
    """Raised when a dataset file or manifest does not match the schema."""


@dataclass(frozen=True)
class Sample:
    csi: np.ndarray
    snr_db: float
    label: str
    source_id: str


@dataclass
class DatasetManifest:
    seed: int
    kind: str
    snr_grid: list[float]
    counts: dict[tuple[float, str], int]
    h_true: np.ndarray
    offsets: list[complex] | None = None


@dataclass
class Dataset:
    manifest: DatasetManifest
    samples: list[Sample] = field(default_factory=list)


@dataclass(frozen=True)
class NefariousOffsets:
    """Five distinct nonzero complex offsets, one per spoofing user."""

    offsets: tuple[complex, ...]

    def __post_init__(self):
        if len(self.offsets) != N_ATTACKERS:
            raise ValueError(f"expected {N_ATTACKERS} offsets, got {len(self.offsets)}")
        if len(set(self.offsets)) != len(self.offsets):
            raise ValueError("offsets must be distinct")
        if any(o == 0 for o in self.offsets):
            raise ValueError("zero offset would duplicate the legitimate cloud")


def default_nefarious_offsets() -> NefariousOffsets:
    """Magnitudes 0.1..0.5 spread over five phases; spans below- to above-noise."""
    offs = tuple(
        complex(0.1 * (i + 1) * np.exp(1j * 2.0 * np.pi * i / N_ATTACKERS))
        for i in range(N_ATTACKERS)
    )
    return NefariousOffsets(offs)


def build_master(
    rng: RngStream,
    n_rx: int = 4,
    m_tx: int = 4,
    snr_grid: tuple[float, ...] = DEFAULT_SNR_GRID,
    samples_per_snr: int = MASTER_SAMPLES_PER_SNR,
) -> Dataset:
    """One enrolled CSI matrix; `samples_per_snr` noisy measurements per SNR."""
    h_true = sample_csi(n_rx, m_tx, rng.substream("master-h"))
    samples = []
    counts = {}
    for snr in snr_grid:
        batch = measurement_batch(
            h_true, NoiseModel(snr), samples_per_snr, rng.substream("master", snr)
        )
        samples.extend(
            Sample(csi=batch[i], snr_db=snr, label=LEGITIMATE, source_id=ENROLLED_ID)
            for i in range(samples_per_snr)
        )
        counts[(snr, LEGITIMATE)] = samples_per_snr
    manifest = DatasetManifest(
        seed=rng.seed, kind=KIND_MASTER, snr_grid=list(snr_grid), counts=counts, h_true=h_true
    )
    return Dataset(manifest, samples)


def split_train_test(
    master: Dataset,
    train_fraction: float = TRAIN_FRACTION,
    shuffle: bool = False,
    rng: RngStream | None = None,
) -> tuple[Dataset, Dataset]:
    """Per-SNR split with identical proportions at every SNR.

    Deterministic by sample index unless `shuffle` is set, in which case a
    seeded permutation is applied within each SNR slice.
    """
    if master.manifest.kind != KIND_MASTER:
        raise ValueError(f"expected a master dataset, got kind {master.manifest.kind!r}")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if shuffle and rng is None:
        raise ValueError("shuffle requires an RngStream")
    train_samples, test_samples = [], []
    train_counts, test_counts = {}, {}
    for snr in master.manifest.snr_grid:
        chunk = [s for s in master.samples if s.snr_db == snr]
        if not chunk:
            raise ValueError(f"master dataset has no samples at SNR {snr}")
        if shuffle:
            g = rng.substream("split", snr).generator()
            chunk = [chunk[i] for i in g.permutation(len(chunk))]
        n_train = round(train_fraction * len(chunk))
        train_samples.extend(chunk[:n_train])
        test_samples.extend(chunk[n_train:])
        train_counts[(snr, LEGITIMATE)] = n_train
        test_counts[(snr, LEGITIMATE)] = len(chunk) - n_train
    mf = master.manifest
    train = Dataset(
        DatasetManifest(mf.seed, KIND_TRAIN, list(mf.snr_grid), train_counts, mf.h_true),
        train_samples,
    )
    test = Dataset(
        DatasetManifest(mf.seed, KIND_TEST, list(mf.snr_grid), test_counts, mf.h_true),
        test_samples,
    )
    return train, test


def build_accidental(test_legit: Dataset, rng: RngStream) -> Dataset:
    """Add five unrelated CN(0,1) transmitters, 80 noisy samples each per SNR."""
    _check_legit_test(test_legit)
    mf = test_legit.manifest
    n_rx, m_tx = mf.h_true.shape
    refs = [
        sample_csi(n_rx, m_tx, rng.substream("accidental-ref", i)) for i in range(N_ATTACKERS)
    ]
    return _mix_attackers(test_legit, refs, "imp", "accidental", rng, KIND_ACCIDENTAL)


def build_nefarious(
    test_legit: Dataset, offsets: NefariousOffsets, rng: RngStream
) -> Dataset:
    """Five spoofing users, each the enrolled matrix shifted by one offset."""
    _check_legit_test(test_legit)
    refs = [test_legit.manifest.h_true + off for off in offsets.offsets]
    ds = _mix_attackers(test_legit, refs, "nef", "nefarious", rng, KIND_NEFARIOUS)
    ds.manifest.offsets = list(offsets.offsets)
    return ds


def _mix_attackers(test_legit, refs, id_prefix, purpose, rng, kind) -> Dataset:
    mf = test_legit.manifest
    samples = []
    counts = {}
    for snr in mf.snr_grid:
        legit = [s for s in test_legit.samples if s.snr_db == snr]
        samples.extend(legit)
        counts[(snr, LEGITIMATE)] = len(legit)
        n_illegit = 0
        for i, ref in enumerate(refs):
            batch = measurement_batch(
                ref, NoiseModel(snr), SAMPLES_PER_ATTACKER, rng.substream(purpose, snr, i)
            )
            sid = f"{id_prefix}{i + 1}"
            samples.extend(
                Sample(csi=batch[k], snr_db=snr, label=ILLEGITIMATE, source_id=sid)
                for k in range(SAMPLES_PER_ATTACKER)
            )
            n_illegit += SAMPLES_PER_ATTACKER
        counts[(snr, ILLEGITIMATE)] = n_illegit
    manifest = DatasetManifest(mf.seed, kind, list(mf.snr_grid), counts, mf.h_true)
    return Dataset(manifest, samples)


def _check_legit_test(ds: Dataset) -> None:
    if any(s.label != LEGITIMATE for s in ds.samples):
        raise ValueError("test split must contain only legitimate samples")
    per_snr = {snr: ds.manifest.counts.get((snr, LEGITIMATE), 0) for snr in ds.manifest.snr_grid}
    if len(set(per_snr.values())) != 1 or 0 in per_snr.values():
        raise ValueError(f"uneven legitimate counts across SNRs: {per_snr}")


# ---------------------------------------------------------------------------
# Feature access

def slice_snr(samples: list[Sample], snr_db: float) -> list[Sample]:
    return [s for s in samples if s.snr_db == snr_db]


def features(samples: list[Sample]) -> np.ndarray:
    """Stack flattened CSI features, shape (n_samples, 2 * n_rx * m_tx)."""
    return np.array([flatten_csi(s.csi) for s in samples])


def is_legit(samples: list[Sample]) -> np.ndarray:
    return np.array([s.label == LEGITIMATE for s in samples], dtype=bool)


# ---------------------------------------------------------------------------
# Persistence

def write_dataset(path, dataset: Dataset) -> None:
    """CSV of samples plus a `<name>.manifest.json` sidecar; lossless round trip."""
    path = Path(path)
    mf = dataset.manifest
    n_rx, m_tx = mf.h_true.shape
    header = ["snr_db", "label", "source_id"]
    for n in range(n_rx):
        for m in range(m_tx):
            header += [f"re_{n}_{m}", f"im_{n}_{m}"]
    lines = [",".join(header)]
    for s in dataset.samples:
        row = [format(s.snr_db, ".17g"), s.label, s.source_id]
        row += [format(v, ".17g") for v in flatten_csi(s.csi)]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")
    _manifest_path(path).write_text(_manifest_to_json(mf))


def read_dataset(path) -> Dataset:
    path = Path(path)
    mpath = _manifest_path(path)
    if not mpath.exists():
        raise DatasetFormatError(f"missing manifest sidecar: {mpath}")
    try:
        manifest = _manifest_from_json(mpath.read_text())
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetFormatError(f"malformed manifest {mpath}: {exc}") from exc
    n_rx, m_tx = manifest.h_true.shape
    expected_header = ["snr_db", "label", "source_id"]
    for n in range(n_rx):
        for m in range(m_tx):
            expected_header += [f"re_{n}_{m}", f"im_{n}_{m}"]
    text = path.read_text()
    lines = text.splitlines()
    if not lines or lines[0].split(",") != expected_header:
        raise DatasetFormatError(
            f"{path}: header does not match the {n_rx}x{m_tx} dataset schema"
        )
    samples = []
    for ln, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(expected_header):
            raise DatasetFormatError(f"{path}:{ln}: expected {len(expected_header)} cells")
        try:
            snr = float(cells[0])
            vals = np.array([float(c) for c in cells[3:]])
        except ValueError as exc:
            raise DatasetFormatError(f"{path}:{ln}: {exc}") from exc
        label = cells[1]
        if label not in (LEGITIMATE, ILLEGITIMATE):
            raise DatasetFormatError(f"{path}:{ln}: unknown label {label!r}")
        samples.append(
            Sample(csi=unflatten_csi(vals, n_rx, m_tx), snr_db=snr, label=label, source_id=cells[2])
        )
    ds = Dataset(manifest, samples)
    verify_counts(ds)
    return ds


def verify_counts(dataset: Dataset) -> None:
    """Raise DatasetFormatError unless sample tallies match the manifest exactly."""
    actual: dict[tuple[float, str], int] = {}
    for s in dataset.samples:
        key = (s.snr_db, s.label)
        actual[key] = actual.get(key, 0) + 1
    if actual != dataset.manifest.counts:
        missing = set(dataset.manifest.counts) ^ set(actual)
        raise DatasetFormatError(
            f"sample counts disagree with manifest (differing keys: {sorted(missing) or 'values'})"
        )


def _manifest_path(path: Path) -> Path:
    return path.with_suffix(".manifest.json")


def _manifest_to_json(mf: DatasetManifest) -> str:
    if mf.kind not in _KINDS:
        raise ValueError(f"unknown dataset kind {mf.kind!r}")
    n_rx, m_tx = mf.h_true.shape
    doc = {
        "seed": mf.seed,
        "kind": mf.kind,
        "n_rx": n_rx,
        "m_tx": m_tx,
        "snr_grid": mf.snr_grid,
        "counts": {
            format(snr, "g"): {
                label: mf.counts[(snr, label)]
                for label in (LEGITIMATE, ILLEGITIMATE)
                if (snr, label) in mf.counts
            }
            for snr in mf.snr_grid
        },
        "h_true": [float(v) for v in flatten_csi(mf.h_true)],
    }
    if mf.offsets is not None:
        doc["offsets"] = [[o.real, o.imag] for o in mf.offsets]
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _manifest_from_json(text: str) -> DatasetManifest:
    doc = json.loads(text)
    kind = doc["kind"]
    if kind not in _KINDS:
        raise DatasetFormatError(f"unknown dataset kind {kind!r}")
    n_rx, m_tx = int(doc["n_rx"]), int(doc["m_tx"])
    h_true = unflatten_csi(np.array(doc["h_true"], dtype=float), n_rx, m_tx)
    snr_grid = [float(s) for s in doc["snr_grid"]]
    counts = {}
    for snr_key, by_label in doc["counts"].items():
        for label, count in by_label.items():
            counts[(float(snr_key), label)] = int(count)
    offsets = None
    if "offsets" in doc:
        offsets = [complex(re, im) for re, im in doc["offsets"]]
    return DatasetManifest(
        seed=int(doc["seed"]), kind=kind, snr_grid=snr_grid, counts=counts,
        h_true=h_true, offsets=offsets,
    )
