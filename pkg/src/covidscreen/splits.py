"""Deterministic stratified train/val/test splitting, optionally patient-grouped."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientRecords
from .manifest import ImageRecord, Label, Split

_SPLIT_ORDER = (Split.TRAIN, Split.VAL, Split.TEST)


@dataclass
class SplitAssignment:
    """Mapping image_id -> split, plus per-class per-split counts."""

    assignments: dict[str, Split]
    counts: dict[Label, dict[Split, int]] = field(default_factory=dict)

    def totals(self) -> dict[Split, int]:
        out = {s: 0 for s in _SPLIT_ORDER}
        for split in self.assignments.values():
            out[split] += 1
        return out

    def class_total(self, label: Label) -> int:
        return sum(self.counts.get(label, {}).values())


def _check_ratios(ratios: Sequence[float]) -> tuple[float, float, float]:
    if len(ratios) != 3:
        raise ValueError("ratios must be (train, val, test)")
    if any(r < 0 for r in ratios):
        raise ValueError(f"ratios must be non-negative, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1 within 1e-9, got {ratios}")
    return tuple(float(r) for r in ratios)  # type: ignore[return-value]


def _largest_remainder(total: int, ratios: Sequence[float]) -> list[int]:
    """Integer allocation with |count - ratio*total| < 1 per bucket."""
    raw = [total * r for r in ratios]
    counts = [math.floor(x) for x in raw]
    leftovers = total - sum(counts)
    by_frac = sorted(range(len(ratios)), key=lambda i: (counts[i] - raw[i], i))
    for i in range(leftovers):
        counts[by_frac[i]] += 1
    return counts


def stratified_split(records: Iterable[ImageRecord],
                     ratios: Sequence[float],
                     seed: int,
                     group_by_patient: bool = False) -> SplitAssignment:
    """Assign records to train/val/test, stratified per class.

    Pure in (records, ratios, seed, group_by_patient): records are sorted by
    image_id before the seeded shuffle, so input order is irrelevant.  Without
    grouping, per-class counts match the ratios to within one record (largest
    remainder allocation).  With grouping, whole patients move together (no
    patient_id ever spans two splits) and the counts are matched as closely as
    whole-patient granularity allows; a patient appearing under several labels
    is stratified by its most frequent one.

    Raises InsufficientRecords when a class has fewer members (records, or
    patients under grouping) than the number of strictly positive ratios.
    """
    ratios = _check_ratios(ratios)
    records = sorted(records, key=lambda r: r.image_id)
    wanted_splits = sum(1 for r in ratios if r > 0)

    by_class: dict[Label, list[ImageRecord]] = {}
    for rec in records:
        by_class.setdefault(rec.label, []).append(rec)

    assignments: dict[str, Split] = {}
    counts: dict[Label, dict[Split, int]] = {}

    for class_index, label in enumerate(sorted(by_class, key=lambda l: l.value)):
        class_records = by_class[label]
        rng = np.random.default_rng([seed, class_index])
        class_counts = {s: 0 for s in _SPLIT_ORDER}

        if group_by_patient:
            patients: dict[str, list[ImageRecord]] = {}
            for rec in class_records:
                patients.setdefault(rec.patient_id, []).append(rec)
            # A patient with records under several labels is handled once, by
            # its dominant label, to keep splits patient-disjoint.
            patient_ids = [pid for pid in sorted(patients)
                           if _dominant_label(records, pid) == label]
            if 0 < len(patient_ids) < wanted_splits:
                raise InsufficientRecords(
                    f"class {label.value}: {len(patient_ids)} patients for "
                    f"{wanted_splits} splits")
            order = rng.permutation(len(patient_ids))
            total = sum(len(patients[patient_ids[i]]) for i in order)
            targets = [total * r for r in ratios]
            filled = [0.0, 0.0, 0.0]
            for i in order:
                group = patients[patient_ids[i]]
                # Greedy: place the whole patient where the deficit is largest.
                deficits = [targets[j] - filled[j] if ratios[j] > 0 else -math.inf
                            for j in range(3)]
                j = max(range(3), key=lambda k: (deficits[k], -k))
                for rec in group:
                    assignments[rec.image_id] = _SPLIT_ORDER[j]
                    class_counts[_SPLIT_ORDER[j]] += 1
                filled[j] += len(group)
        else:
            if len(class_records) < wanted_splits:
                raise InsufficientRecords(
                    f"class {label.value}: {len(class_records)} records for "
                    f"{wanted_splits} splits")
            order = rng.permutation(len(class_records))
            alloc = _largest_remainder(len(class_records), ratios)
            cursor = 0
            for split, n in zip(_SPLIT_ORDER, alloc):
                for i in order[cursor:cursor + n]:
                    assignments[class_records[i].image_id] = split
                    class_counts[split] += 1
                cursor += n

        counts[label] = class_counts

    return SplitAssignment(assignments, counts)


def _dominant_label(records: Sequence[ImageRecord], patient_id: str) -> Label:
    tally: dict[Label, int] = {}
    for rec in records:
        if rec.patient_id == patient_id:
            tally[rec.label] = tally.get(rec.label, 0) + 1
    return max(tally, key=lambda l: (tally[l], l.value))


def append_to_split(assignment: SplitAssignment,
                    records: Iterable[ImageRecord],
                    split: Split) -> SplitAssignment:
    """Force extra records into one split (e.g. added test-only subgroups)."""
    assignments = dict(assignment.assignments)
    counts = {label: dict(per) for label, per in assignment.counts.items()}
    for rec in records:
        assignments[rec.image_id] = split
        counts.setdefault(rec.label, {s: 0 for s in _SPLIT_ORDER})
        counts[rec.label][split] = counts[rec.label].get(split, 0) + 1
    return SplitAssignment(assignments, counts)


def cxr_protocol_split(records: Iterable[ImageRecord],
                       extra_pneumonia: Iterable[ImageRecord],
                       seed: int) -> SplitAssignment:
    """The CXR evaluation protocol: 70/30 train/test on the base collection,
    then an extra batch of other-pneumonia records appended to TEST only, for
    false-positive analysis."""
    base = stratified_split(records, (0.7, 0.0, 0.3), seed)
    return append_to_split(base, extra_pneumonia, Split.TEST)
