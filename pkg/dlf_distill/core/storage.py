"""Deterministic JSON persistence for artifact records.

Records are dumped with sorted keys and fixed indentation; floats use
Python's shortest round-tripping repr, so load followed by dump
reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import TypeVar

from pydantic import BaseModel, ValidationError

from dlf_distill.core.errors import DistillError
from dlf_distill.core.logging import get_logger
from dlf_distill.models.artifacts import ARTIFACT_VERSION

logger = get_logger(__name__)

RecordT = TypeVar("RecordT", bound=BaseModel)


class ArtifactError(DistillError):
    """An artifact file is unreadable, of the wrong kind, or of an unknown version."""

    pass


def dumps(record: BaseModel) -> str:
    """Serialize a record to its canonical JSON text."""
    return json.dumps(record.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def content_hash(record: BaseModel) -> str:
    """SHA-256 of the canonical serialization."""
    return hashlib.sha256(dumps(record).encode("utf-8")).hexdigest()


def save_artifact(record: BaseModel, path: Path) -> str:
    """Write ``record`` to ``path`` and return its content hash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = dumps(record)
    path.write_text(text, encoding="utf-8")
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    logger.info(
        "Artifact written",
        path=str(path),
        kind=getattr(record, "kind", type(record).__name__),
        sha256=digest,
    )
    return digest


def load_artifact(path: Path, record_type: type[RecordT]) -> RecordT:
    """Read and validate a record, checking its ``kind`` and ``version`` tags."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"cannot read artifact {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ArtifactError(f"artifact {path} is not a JSON object")

    expected_kind = record_type.model_fields["kind"].default
    if payload.get("kind") != expected_kind:
        raise ArtifactError(
            f"artifact {path} has kind {payload.get('kind')!r}, expected {expected_kind!r}"
        )
    if payload.get("version") != ARTIFACT_VERSION:
        raise ArtifactError(
            f"artifact {path} has version {payload.get('version')!r}, "
            f"expected {ARTIFACT_VERSION}"
        )
    try:
        return record_type.model_validate(payload)
    except ValidationError as exc:
        raise ArtifactError(f"artifact {path} is malformed: {exc}") from exc


def file_hash(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def peek_kind(path: Path) -> str:
    """The ``kind`` tag of an artifact file, without validating the rest."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"cannot read artifact {path}: {exc}") from exc
    kind = payload.get("kind") if isinstance(payload, dict) else None
    if not isinstance(kind, str):
        raise ArtifactError(f"artifact {path} has no kind tag")
    return kind
