"""Domain types, downsampling, stratified splitting, and the dataset format.

A swallow is a 36-channel x 240-sample pressure grid covering 24 s at 10 Hz
from swallow onset. A study is 10 supine swallows followed by 5 upright
swallows plus an eight-class diagnosis. The on-disk format ("hrmds-1") is a
JSON manifest plus one raw little-endian float32 blob per swallow.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ChannelMismatch,
    ClassTooSmall,
    ConfigError,
    DataError,
    FormatError,
    InsufficientWindow,
    ManifestError,
)
from .labels import POSITIONS, SUPINE, UPRIGHT, PressurizationType, StudyDiagnosis, SwallowType

CHANNELS = 36
WINDOW_COLUMNS = 240
RAW_RATE_HZ = 100
GRID_RATE_HZ = 10
DECIMATION = RAW_RATE_HZ // GRID_RATE_HZ
RAW_WINDOW = WINDOW_COLUMNS * DECIMATION  # 2400 raw samples per swallow

PRESSURE_MIN = -50.0
PRESSURE_MAX = 500.0

BLOB_BYTES = CHANNELS * WINDOW_COLUMNS * 4  # float32, row-major
DATASET_FORMAT = "hrmds-1"
UNASSIGNED = "unassigned"


@dataclass(frozen=True)
class PressureMatrix:
    """Immutable 36x240 pressure grid in mmHg (channels proximal to distal)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float32)
        if arr.shape != (CHANNELS, WINDOW_COLUMNS):
            raise DataError(f"pressure grid must be {CHANNELS}x{WINDOW_COLUMNS}, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise DataError("pressure grid contains non-finite values")
        if arr.min() < PRESSURE_MIN or arr.max() > PRESSURE_MAX:
            raise DataError(
                f"pressure outside sanity bounds [{PRESSURE_MIN}, {PRESSURE_MAX}] mmHg"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class SwallowRecord:
    """One labeled swallow: pressure grid, body position, and three labels."""

    matrix: PressureMatrix
    position: str
    type_label: SwallowType
    pressurization_label: PressurizationType
    irp_label: float

    def __post_init__(self):
        if self.position not in POSITIONS:
            raise DataError(f"position must be one of {POSITIONS}, got {self.position!r}")
        irp = float(self.irp_label)
        if not math.isfinite(irp) or irp < 0.0:
            raise DataError(f"irp_label must be finite and non-negative, got {irp}")
        object.__setattr__(self, "irp_label", irp)
        object.__setattr__(self, "type_label", SwallowType(self.type_label))
        object.__setattr__(
            self, "pressurization_label", PressurizationType(self.pressurization_label)
        )


@dataclass(frozen=True)
class StudyRecord:
    """A full manometry study: 10 supine then 5 upright swallows plus diagnosis."""

    study_id: str
    swallows: tuple
    diagnosis: StudyDiagnosis

    def __post_init__(self):
        swallows = tuple(self.swallows)
        positions = [s.position for s in swallows]
        if positions != [SUPINE] * 10 + [UPRIGHT] * 5:
            raise DataError(
                f"study {self.study_id!r} must contain exactly 10 supine followed by "
                f"5 upright swallows"
            )
        object.__setattr__(self, "swallows", swallows)
        object.__setattr__(self, "diagnosis", StudyDiagnosis(self.diagnosis))

    @property
    def supine(self) -> tuple:
        return self.swallows[:10]

    @property
    def upright(self) -> tuple:
        return self.swallows[10:]


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/validation/test partitions of study ids."""

    train: tuple = field(default_factory=tuple)
    validation: tuple = field(default_factory=tuple)
    test: tuple = field(default_factory=tuple)

    def __post_init__(self):
        parts = (tuple(self.train), tuple(self.validation), tuple(self.test))
        seen = set()
        for name, ids in zip(("train", "validation", "test"), parts):
            overlap = seen.intersection(ids)
            if overlap:
                raise DataError(f"study ids {sorted(overlap)} appear in more than one partition")
            if len(set(ids)) != len(ids):
                raise DataError(f"duplicate study ids inside {name} partition")
            seen.update(ids)
        object.__setattr__(self, "train", parts[0])
        object.__setattr__(self, "validation", parts[1])
        object.__setattr__(self, "test", parts[2])

    def partition_of(self, study_id: str) -> str:
        for name in ("train", "validation", "test"):
            if study_id in set(getattr(self, name)):
                return name
        raise KeyError(study_id)

    def as_dict(self) -> dict:
        return {
            "train": list(self.train),
            "validation": list(self.validation),
            "test": list(self.test),
        }


def downsample(raw: np.ndarray, onset_index: int = 0) -> PressureMatrix:
    """Reduce a 36xT raw 100 Hz recording to the 10 Hz swallow grid.

    Each output column is the arithmetic mean of the 10 raw samples it
    covers (block-mean decimation), starting at ``onset_index``.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] != CHANNELS:
        raise ChannelMismatch(f"expected {CHANNELS} channels, got shape {raw.shape}")
    if onset_index < 0 or raw.shape[1] - onset_index < RAW_WINDOW:
        raise InsufficientWindow(
            f"need {RAW_WINDOW} samples from onset, have {raw.shape[1] - onset_index}"
        )
    window = raw[:, onset_index : onset_index + RAW_WINDOW]
    blocks = window.reshape(CHANNELS, WINDOW_COLUMNS, DECIMATION)
    return PressureMatrix(blocks.mean(axis=2))


def _largest_remainder(n: int, fractions) -> list:
    """Allocate n items to len(fractions) bins; ties go to the earlier bin."""
    quotas = [n * f for f in fractions]
    counts = [int(math.floor(q)) for q in quotas]
    leftover = n - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def stratified_split(
    studies, fractions=(0.70, 0.15, 0.15), seed: int = 0
) -> DatasetSplit:
    """Split studies into train/validation/test, stratified by diagnosis.

    Within each diagnosis class the partition sizes follow the
    largest-remainder allocation of the class size to ``fractions``, and
    membership is a seed-deterministic shuffle. Swallows inherit their
    study's partition, so there is no study-level leakage by construction.
    """
    if len(fractions) != 3:
        raise ConfigError("fractions must have exactly three entries")
    if abs(sum(fractions) - 1.0) > 1e-9 or any(f < 0 for f in fractions):
        raise ConfigError(f"fractions must be non-negative and sum to 1, got {fractions}")

    by_class: dict = {}
    for study in studies:
        by_class.setdefault(StudyDiagnosis(study.diagnosis), []).append(study.study_id)

    for diag, ids in sorted(by_class.items()):
        if len(ids) < 3:
            raise ClassTooSmall(f"class {diag.name} has only {len(ids)} studies (need >= 3)")

    train, valid, test = [], [], []
    for diag, ids in sorted(by_class.items()):
        ids = sorted(ids)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(diag.value,)))
        perm = rng.permutation(len(ids))
        shuffled = [ids[i] for i in perm]
        n_train, n_valid, _ = _largest_remainder(len(ids), fractions)
        train.extend(shuffled[:n_train])
        valid.extend(shuffled[n_train : n_train + n_valid])
        test.extend(shuffled[n_train + n_valid :])
    return DatasetSplit(tuple(train), tuple(valid), tuple(test))


# ---------------------------------------------------------------------------
# On-disk dataset format ("hrmds-1")
# ---------------------------------------------------------------------------


def save_dataset(studies, split: DatasetSplit | None, directory) -> Path:
    """Write studies to ``directory`` and return the manifest path.

    Round trips are bit-exact: each swallow grid is a raw little-endian
    float32 blob (36x240 row-major, 34560 bytes) and every label is stored
    by name in ``manifest.json``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for study in studies:
        part = UNASSIGNED
        if split is not None:
            part = split.partition_of(study.study_id)
        swallow_entries = []
        for i, swallow in enumerate(study.swallows):
            blob_name = f"{study.study_id}_{i:02d}.f32"
            blob = swallow.matrix.values.astype("<f4").tobytes(order="C")
            (directory / blob_name).write_bytes(blob)
            swallow_entries.append(
                {
                    "file": blob_name,
                    "position": swallow.position,
                    "type": swallow.type_label.name,
                    "pressurization": swallow.pressurization_label.name,
                    "irp": swallow.irp_label,
                }
            )
        entries.append(
            {
                "study_id": study.study_id,
                "diagnosis": study.diagnosis.name,
                "split": part,
                "swallows": swallow_entries,
            }
        )
    manifest = {"format": DATASET_FORMAT, "studies": entries}
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def load_dataset(directory):
    """Load a dataset directory; returns (studies, split or None)."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise ManifestError(f"no manifest.json in {directory}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}") from exc
    if manifest.get("format") != DATASET_FORMAT:
        raise FormatError(f"unsupported dataset format {manifest.get('format')!r}")

    studies = []
    parts = {"train": [], "validation": [], "test": []}
    any_assigned = False
    for entry in manifest["studies"]:
        swallows = []
        for item in entry["swallows"]:
            blob_path = directory / item["file"]
            if not blob_path.exists():
                raise ManifestError(f"manifest references missing blob {item['file']}")
            blob = blob_path.read_bytes()
            if len(blob) != BLOB_BYTES:
                raise FormatError(
                    f"{item['file']}: expected {BLOB_BYTES} bytes, got {len(blob)}"
                )
            values = np.frombuffer(blob, dtype="<f4").reshape(CHANNELS, WINDOW_COLUMNS)
            swallows.append(
                SwallowRecord(
                    matrix=PressureMatrix(values),
                    position=item["position"],
                    type_label=SwallowType[item["type"]],
                    pressurization_label=PressurizationType[item["pressurization"]],
                    irp_label=item["irp"],
                )
            )
        try:
            diagnosis = StudyDiagnosis[entry["diagnosis"]]
        except KeyError as exc:
            raise FormatError(f"unknown diagnosis label {entry['diagnosis']!r}") from exc
        studies.append(StudyRecord(entry["study_id"], tuple(swallows), diagnosis))
        part = entry.get("split", UNASSIGNED)
        if part != UNASSIGNED:
            if part not in parts:
                raise ManifestError(f"unknown split partition {part!r}")
            parts[part].append(entry["study_id"])
            any_assigned = True

    split = None
    if any_assigned:
        assigned = {sid for ids in parts.values() for sid in ids}
        missing = [s.study_id for s in studies if s.study_id not in assigned]
        if missing:
            raise ManifestError(f"studies without split assignment: {missing}")
        split = DatasetSplit(tuple(parts["train"]), tuple(parts["validation"]), tuple(parts["test"]))
    return studies, split


def swallow_arrays(studies, split: DatasetSplit | None = None, partition: str | None = None):
    """Stack swallow grids and labels into arrays for model training.

    Returns a dict with keys ``x`` (n, 36, 240, 1 float32 mmHg), ``type``,
    ``pressurization`` (int labels), ``irp`` (float64 mmHg), ``study_id``
    and ``position``. When ``partition`` is given, only swallows whose
    study belongs to that partition of ``split`` are included.
    """
    keep = None
    if partition is not None:
        if split is None:
            raise ConfigError("partition filter requires a split")
        keep = set(getattr(split, partition))
    xs, types, press, irps, sids, positions = [], [], [], [], [], []
    for study in studies:
        if keep is not None and study.study_id not in keep:
            continue
        for swallow in study.swallows:
            xs.append(swallow.matrix.values)
            types.append(int(swallow.type_label))
            press.append(int(swallow.pressurization_label))
            irps.append(swallow.irp_label)
            sids.append(study.study_id)
            positions.append(swallow.position)
    if not xs:
        return {
            "x": np.zeros((0, CHANNELS, WINDOW_COLUMNS, 1), dtype=np.float32),
            "type": np.zeros(0, dtype=np.int64),
            "pressurization": np.zeros(0, dtype=np.int64),
            "irp": np.zeros(0, dtype=np.float64),
            "study_id": [],
            "position": [],
        }
    x = np.stack(xs).astype(np.float32)[..., None]
    return {
        "x": x,
        "type": np.asarray(types, dtype=np.int64),
        "pressurization": np.asarray(press, dtype=np.int64),
        "irp": np.asarray(irps, dtype=np.float64),
        "study_id": sids,
        "position": positions,
    }
