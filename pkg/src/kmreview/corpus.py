"""Load, validate, resample, and summarize defect-detection datasets.

Datasets are UTF-8 JSONL files, one record per line, with a required
``func`` (source text) and ``target`` (0 = clean, 1 = buggy) field and an
optional integer ``idx``. Unknown fields are carried through untouched so
that variant exports of the same benchmark survive a round-trip.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import CannotBalanceError, DatasetParseError, DatasetValidationError

logger = logging.getLogger(__name__)

_KNOWN_KEYS = {"func", "target", "idx", "language"}
DEFAULT_LANGUAGE = "python"


class Label(Enum):
    """Binary sample label; buggy is the positive class everywhere."""

    CLEAN = "clean"
    BUGGY = "buggy"

    @classmethod
    def from_target(cls, value: int) -> "Label":
        if value == 0:
            return cls.CLEAN
        if value == 1:
            return cls.BUGGY
        raise DatasetValidationError(f"target must be 0 or 1, got {value!r}")

    def to_target(self) -> int:
        return 1 if self is Label.BUGGY else 0

    def opposite(self) -> "Label":
        return Label.CLEAN if self is Label.BUGGY else Label.BUGGY


@dataclass(frozen=True)
class CodeSample:
    """One labeled snippet from a dataset."""

    id: int
    source: str
    label: Label
    language_tag: str = DEFAULT_LANGUAGE
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.source.strip():
            raise DatasetValidationError(f"sample {self.id}: source is empty")


@dataclass(frozen=True)
class DatasetStats:
    total: int
    clean_count: int
    buggy_count: int
    buggy_ratio: float


def load_dataset(
    path: str | Path,
    limit: int | None = None,
    *,
    invert_labels: bool = False,
) -> list[CodeSample]:
    """Read samples in file order.

    Ids come from each record's ``idx`` when present, otherwise from the
    record's position. ``invert_labels`` flips the 0/1 convention for
    datasets with opposite polarity.
    """
    path = Path(path)
    samples: list[CodeSample] = []
    seen_ids: set[int] = set()
    position = 0
    with path.open("r", encoding="utf-8") as stream:
        for line_number, line in enumerate(stream, start=1):
            if not line.strip():
                continue
            if limit is not None and len(samples) >= limit:
                break
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(
                    f"{path}: line {line_number}: invalid JSON: {exc.msg}",
                    line_number=line_number,
                ) from exc
            if not isinstance(record, dict):
                raise DatasetParseError(
                    f"{path}: line {line_number}: record is not an object",
                    line_number=line_number,
                )
            samples.append(
                _sample_from_record(record, line_number, position, path, invert_labels)
            )
            sample_id = samples[-1].id
            if sample_id in seen_ids:
                raise DatasetValidationError(
                    f"{path}: line {line_number}: duplicate sample id {sample_id}"
                )
            seen_ids.add(sample_id)
            position += 1
    return samples


def _sample_from_record(
    record: dict,
    line_number: int,
    position: int,
    path: Path,
    invert_labels: bool,
) -> CodeSample:
    def fail(message: str):
        raise DatasetValidationError(f"{path}: line {line_number}: {message}")

    source = record.get("func")
    if not isinstance(source, str):
        fail("missing or non-string 'func' field")
    target = record.get("target")
    if isinstance(target, bool) or not isinstance(target, int):
        fail("missing or non-integer 'target' field")
    if target not in (0, 1):
        fail(f"target must be 0 or 1, got {target}")
    if invert_labels:
        target = 1 - target
    sample_id = record.get("idx", position)
    if isinstance(sample_id, bool) or not isinstance(sample_id, int):
        fail("'idx' field must be an integer")
    language = record.get("language", DEFAULT_LANGUAGE)
    if not isinstance(language, str) or not language:
        fail("'language' field must be a non-empty string")
    extra = {key: value for key, value in record.items() if key not in _KNOWN_KEYS}
    try:
        return CodeSample(
            id=sample_id,
            source=source,
            label=Label.from_target(target),
            language_tag=language,
            extra=extra,
        )
    except DatasetValidationError as exc:
        fail(str(exc))
        raise AssertionError("unreachable")  # fail always raises


def record_for_sample(sample: CodeSample) -> dict:
    """Canonical JSONL record for a sample; inverse of loading."""
    record: dict[str, Any] = {
        "func": sample.source,
        "target": sample.label.to_target(),
        "idx": sample.id,
    }
    if sample.language_tag != DEFAULT_LANGUAGE:
        record["language"] = sample.language_tag
    record.update(sample.extra)
    return record


def write_dataset(samples: Iterable[CodeSample], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as stream:
        for sample in samples:
            stream.write(json.dumps(record_for_sample(sample), ensure_ascii=False))
            stream.write("\n")


def dataset_digest(samples: Iterable[CodeSample]) -> str:
    """Content digest used to refuse comparisons across different data."""
    digest = hashlib.sha256()
    for sample in samples:
        canonical = json.dumps(
            record_for_sample(sample), ensure_ascii=False, sort_keys=True
        )
        digest.update(canonical.encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


def stats(samples: Sequence[CodeSample]) -> DatasetStats:
    buggy = sum(1 for sample in samples if sample.label is Label.BUGGY)
    total = len(samples)
    return DatasetStats(
        total=total,
        clean_count=total - buggy,
        buggy_count=buggy,
        buggy_ratio=buggy / total if total else 0.0,
    )


def oversample(samples: Sequence[CodeSample], seed: int) -> list[CodeSample]:
    """Duplicate minority-class samples (with replacement) to exact parity.

    Originals keep their order and come first; duplicates keep their source
    id and are only marked as copies in the log.
    """
    buggy = [sample for sample in samples if sample.label is Label.BUGGY]
    clean = [sample for sample in samples if sample.label is Label.CLEAN]
    if not buggy or not clean:
        raise CannotBalanceError(
            "oversampling needs at least one sample of each class "
            f"(clean={len(clean)}, buggy={len(buggy)})"
        )
    if len(buggy) == len(clean):
        return list(samples)
    minority = buggy if len(buggy) < len(clean) else clean
    need = abs(len(buggy) - len(clean))
    rng = random.Random(seed)
    duplicates = [minority[rng.randrange(len(minority))] for _ in range(need)]
    logger.info(
        "oversampled %s class: %d duplicate(s) appended (seed=%d)",
        minority[0].label.value,
        need,
        seed,
    )
    for duplicate in duplicates:
        logger.debug("oversample copy of sample id=%d", duplicate.id)
    return list(samples) + duplicates


def split(
    samples: Sequence[CodeSample], train_fraction: float, seed: int
) -> tuple[list[CodeSample], list[CodeSample]]:
    """Seeded shuffle followed by a train/eval partition."""
    if not 0.0 < train_fraction < 1.0:
        raise DatasetValidationError(
            f"train_fraction must be strictly between 0 and 1, got {train_fraction}"
        )
    shuffled = list(samples)
    random.Random(seed).shuffle(shuffled)
    cut = int(len(shuffled) * train_fraction)
    return shuffled[:cut], shuffled[cut:]
