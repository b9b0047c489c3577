"""Persistent case store: sqlite in WAL mode plus content-addressed blobs.

Layout under the store root:

    cases.db        sqlite database (WAL journaling)
    blobs/<sha256>  original upload bytes, deduplicated by content hash
    cams/<key>.png  rendered overlays, keyed by (case, class, alpha, version)
"""

from __future__ import annotations

import hashlib
import sqlite3
import threading
import time
import uuid
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional


class Triage(Enum):
    UNREVIEWED = "UNREVIEWED"
    CONFIRM_POSITIVE = "CONFIRM_POSITIVE"
    CONFIRM_NEGATIVE = "CONFIRM_NEGATIVE"
    NEEDS_REVIEW = "NEEDS_REVIEW"


@dataclass
class Case:
    case_id: str
    image_sha: str
    modality: str
    probabilities: dict[str, float]
    predicted_label: str
    model_version: str
    triage: str = Triage.UNREVIEWED.value
    note: str = ""
    created_at: float = 0.0
    updated_at: float = 0.0

    def to_json(self) -> dict:
        return {
            "case_id": self.case_id,
            "modality": self.modality,
            "probabilities": self.probabilities,
            "predicted_label": self.predicted_label,
            "model_version": self.model_version,
            "triage": self.triage,
            "note": self.note,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }


_SCHEMA = """
CREATE TABLE IF NOT EXISTS cases (
    case_id TEXT PRIMARY KEY,
    image_sha TEXT NOT NULL,
    modality TEXT NOT NULL,
    probabilities TEXT NOT NULL,
    predicted_label TEXT NOT NULL,
    model_version TEXT NOT NULL,
    triage TEXT NOT NULL,
    note TEXT NOT NULL DEFAULT '',
    created_at REAL NOT NULL,
    updated_at REAL NOT NULL
)
"""


class CaseStore:
    """Thread-safe store; writes are serialized on one connection."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "blobs").mkdir(exist_ok=True)
        (self.root / "cams").mkdir(exist_ok=True)
        self._lock = threading.Lock()
        self._db = sqlite3.connect(self.root / "cases.db", check_same_thread=False)
        self._db.execute("PRAGMA journal_mode=WAL")
        self._db.execute(_SCHEMA)
        self._db.commit()

    def close(self) -> None:
        self._db.close()

    # --- blobs ---

    def store_blob(self, data: bytes) -> str:
        sha = hashlib.sha256(data).hexdigest()
        path = self.root / "blobs" / sha
        if not path.exists():
            path.write_bytes(data)
        return sha

    def blob_bytes(self, sha: str) -> bytes:
        return (self.root / "blobs" / sha).read_bytes()

    # --- cases ---

    def new_case(self, image_sha: str, modality: str,
                 probabilities: dict[str, float], predicted_label: str,
                 model_version: str) -> Case:
        import json

        now = time.time()
        case = Case(uuid.uuid4().hex, image_sha, modality, probabilities,
                    predicted_label, model_version,
                    created_at=now, updated_at=now)
        with self._lock:
            self._db.execute(
                "INSERT INTO cases VALUES (?,?,?,?,?,?,?,?,?,?)",
                (case.case_id, case.image_sha, case.modality,
                 json.dumps(case.probabilities), case.predicted_label,
                 case.model_version, case.triage, case.note,
                 case.created_at, case.updated_at))
            self._db.commit()
        return case

    def _row_to_case(self, row) -> Case:
        import json

        return Case(case_id=row[0], image_sha=row[1], modality=row[2],
                    probabilities=json.loads(row[3]), predicted_label=row[4],
                    model_version=row[5], triage=row[6], note=row[7],
                    created_at=row[8], updated_at=row[9])

    def get_case(self, case_id: str) -> Optional[Case]:
        cursor = self._db.execute("SELECT * FROM cases WHERE case_id = ?", (case_id,))
        row = cursor.fetchone()
        return self._row_to_case(row) if row else None

    def list_cases(self, triage: Optional[str] = None, limit: int = 50,
                   offset: int = 0) -> list[Case]:
        """Newest first, optionally filtered by triage state."""
        if triage is not None:
            cursor = self._db.execute(
                "SELECT * FROM cases WHERE triage = ? "
                "ORDER BY created_at DESC, case_id DESC LIMIT ? OFFSET ?",
                (triage, limit, offset))
        else:
            cursor = self._db.execute(
                "SELECT * FROM cases ORDER BY created_at DESC, case_id DESC "
                "LIMIT ? OFFSET ?", (limit, offset))
        return [self._row_to_case(row) for row in cursor.fetchall()]

    def set_triage(self, case_id: str, decision: str, note: str = "") -> Optional[Case]:
        with self._lock:
            cursor = self._db.execute(
                "UPDATE cases SET triage = ?, note = ?, updated_at = ? "
                "WHERE case_id = ?",
                (decision, note, time.time(), case_id))
            self._db.commit()
        if cursor.rowcount == 0:
            return None
        return self.get_case(case_id)

    # --- overlay cache ---

    def cam_cache_path(self, case_id: str, class_name: str, alpha: float,
                       model_version: str) -> Path:
        key = f"{case_id}_{class_name}_{alpha:.4f}_{model_version}"
        return self.root / "cams" / f"{key}.png"
