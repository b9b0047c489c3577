"""Dataset manifests: records, labels, splits, loading and canonical serialization.

A manifest is a UTF-8 comma-separated table with a header row, one row per
image:

    image_id,path,label,patient_id,modality,width,height,bit_depth,split

``path`` is relative to the manifest's directory (or an explicit root).
``split`` may be empty for unassigned records.  The canonical serialized form
sorts rows by ``image_id`` and uses LF line endings, so loading and
re-serializing a manifest is byte-stable.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional

from PIL import Image, UnidentifiedImageError

from .errors import DuplicateId, MissingFile, UndecodableImage, UnknownLabel


class Label(Enum):
    COVID19 = "covid19"
    OTHER_PNEUMONIA = "other_pneumonia"
    NORMAL = "normal"


class Modality(Enum):
    CT = "ct"
    CXR = "cxr"


class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


#: Canonical output/class ordering used by model heads and one-hot targets.
CLASS_ORDER = (Label.COVID19, Label.OTHER_PNEUMONIA, Label.NORMAL)

# CT-COV19 image-quality bounds enforced by strict validation.
MIN_SIDE = 484
MAX_SIDE = 1024
REQUIRED_BIT_DEPTH = 24

_HEADER = ["image_id", "path", "label", "patient_id", "modality",
           "width", "height", "bit_depth", "split"]


@dataclass(frozen=True)
class ImageRecord:
    """One radiograph: identity, location, label and basic metadata."""

    image_id: str
    path: str
    label: Label
    patient_id: str
    modality: Modality
    width: int = 0
    height: int = 0
    bit_depth: int = 0


@dataclass
class DatasetManifest:
    """A validated set of records plus their split assignment."""

    records: list[ImageRecord]
    splits: dict[str, Split] = field(default_factory=dict)
    root: Optional[Path] = None

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for rec in self.records:
            if rec.image_id in seen:
                raise DuplicateId(f"duplicate image_id {rec.image_id!r}")
            seen.add(rec.image_id)
        for image_id in self.splits:
            if image_id not in seen:
                raise MissingFile(f"split assignment for unknown image_id {image_id!r}")

    def __len__(self) -> int:
        return len(self.records)

    def record(self, image_id: str) -> ImageRecord:
        for rec in self.records:
            if rec.image_id == image_id:
                return rec
        raise KeyError(image_id)

    def for_split(self, split: Split) -> list[ImageRecord]:
        return [r for r in self.records if self.splits.get(r.image_id) is split]

    def split_totals(self) -> dict[Split, int]:
        totals = {s: 0 for s in Split}
        for assigned in self.splits.values():
            totals[assigned] += 1
        return totals

    def class_counts(self) -> dict[Label, int]:
        counts = {label: 0 for label in Label}
        for rec in self.records:
            counts[rec.label] += 1
        return counts

    def resolve_path(self, rec: ImageRecord) -> Path:
        base = self.root if self.root is not None else Path(".")
        return base / rec.path

    def with_splits(self, splits: Mapping[str, Split]) -> "DatasetManifest":
        return DatasetManifest(list(self.records), dict(splits), self.root)


def _parse_record(row: dict[str, str], line_no: int) -> tuple[ImageRecord, Optional[Split]]:
    try:
        label = Label(row["label"].strip().lower())
    except ValueError:
        raise UnknownLabel(f"line {line_no}: unknown label {row['label']!r}") from None
    try:
        modality = Modality(row["modality"].strip().lower())
    except ValueError:
        raise UnknownLabel(f"line {line_no}: unknown modality {row['modality']!r}") from None
    split_text = (row.get("split") or "").strip().lower()
    split = Split(split_text) if split_text else None
    rec = ImageRecord(
        image_id=row["image_id"].strip(),
        path=row["path"].strip(),
        label=label,
        patient_id=row["patient_id"].strip(),
        modality=modality,
        width=int(row["width"] or 0),
        height=int(row["height"] or 0),
        bit_depth=int(row["bit_depth"] or 0),
    )
    return rec, split


def load_manifest(path: str | Path, *, root: str | Path | None = None,
                  verify_files: bool = True) -> DatasetManifest:
    """Parse and validate a manifest file.

    ``root`` overrides the directory image paths are resolved against
    (default: the manifest's own directory).  ``verify_files=False`` skips the
    existence check, for metadata-only manifests.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"manifest not found: {path}")
    base = Path(root) if root is not None else path.parent

    records: list[ImageRecord] = []
    splits: dict[str, Split] = {}
    text = path.read_text(encoding="utf-8")
    if text.strip():
        reader = csv.DictReader(io.StringIO(text))
        missing = set(_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise UnknownLabel(f"manifest header missing columns: {sorted(missing)}")
        for line_no, row in enumerate(reader, start=2):
            rec, split = _parse_record(row, line_no)
            records.append(rec)
            if split is not None:
                splits[rec.image_id] = split

    manifest = DatasetManifest(records, splits, root=base)
    if verify_files:
        for rec in records:
            if not manifest.resolve_path(rec).exists():
                raise MissingFile(f"image file missing: {manifest.resolve_path(rec)}")
    return manifest


def serialize_manifest(manifest: DatasetManifest) -> str:
    """Render the canonical form: header, rows sorted by image_id, LF endings."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_HEADER)
    for rec in sorted(manifest.records, key=lambda r: r.image_id):
        split = manifest.splits.get(rec.image_id)
        writer.writerow([
            rec.image_id, rec.path, rec.label.value, rec.patient_id,
            rec.modality.value, rec.width, rec.height, rec.bit_depth,
            split.value if split is not None else "",
        ])
    return out.getvalue()


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    Path(path).write_text(serialize_manifest(manifest), encoding="utf-8")


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    reasons: tuple[str, ...] = ()


def validate_image(record: ImageRecord, *, strict: bool = True,
                   root: str | Path | None = None) -> ValidationResult:
    """Check one image file against the dataset quality contract.

    Strict mode enforces the CT-COV19 bounds (side lengths within
    [484, 1024], 24 bits per pixel); lenient mode only requires that the file
    decodes, which is the right bar for heterogeneous external collections.

    Raises UndecodableImage when the file cannot be read as an image at all.
    """
    full = (Path(root) if root is not None else Path(".")) / record.path
    if not full.exists():
        raise MissingFile(f"image file missing: {full}")
    try:
        with Image.open(full) as img:
            img.load()
            width, height = img.size
            bits_per_channel = 8 if img.mode != "I;16" else 16
            channels = len(img.getbands())
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise UndecodableImage(f"cannot decode {full}: {exc}") from exc

    if not strict:
        return ValidationResult(True)

    reasons = []
    if not (MIN_SIDE <= width <= MAX_SIDE and MIN_SIDE <= height <= MAX_SIDE):
        reasons.append(
            f"size {width}x{height} outside [{MIN_SIDE}, {MAX_SIDE}]")
    if channels * bits_per_channel != REQUIRED_BIT_DEPTH:
        reasons.append(
            f"bit depth {channels * bits_per_channel} != {REQUIRED_BIT_DEPTH}")
    return ValidationResult(not reasons, tuple(reasons))


def scan_dataset_root(root: str | Path, modality: Modality,
                      patient_from_stem: bool = False) -> DatasetManifest:
    """Build a manifest from the ``<root>/<class>/<image>`` directory layout.

    Class directories are matched case-insensitively against the label
    vocabulary (``covid19``, ``other_pneumonia``, ``normal``).  When
    ``patient_from_stem`` is set the patient id is the filename stem up to the
    first underscore; otherwise each image is its own patient.
    """
    root = Path(root)
    if not root.is_dir():
        raise MissingFile(f"dataset root not found: {root}")
    records = []
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        try:
            label = Label(class_dir.name.lower().replace("-", "_"))
        except ValueError:
            raise UnknownLabel(f"class directory {class_dir.name!r} is not a known label")
        for img_path in sorted(class_dir.iterdir()):
            if not img_path.is_file():
                continue
            stem = img_path.stem
            patient = stem.split("_", 1)[0] if patient_from_stem else stem
            records.append(ImageRecord(
                image_id=f"{label.value}/{stem}",
                path=str(img_path.relative_to(root)),
                label=label,
                patient_id=patient,
                modality=modality,
            ))
    return DatasetManifest(records, {}, root=root)


def fill_image_metadata(manifest: DatasetManifest) -> DatasetManifest:
    """Populate width/height/bit_depth by decoding each referenced file."""
    updated = []
    for rec in manifest.records:
        full = manifest.resolve_path(rec)
        try:
            with Image.open(full) as img:
                width, height = img.size
                depth = 8 * len(img.getbands())
        except (UnidentifiedImageError, OSError) as exc:
            raise UndecodableImage(f"cannot decode {full}: {exc}") from exc
        updated.append(replace(rec, width=width, height=height, bit_depth=depth))
    return DatasetManifest(updated, dict(manifest.splits), manifest.root)
