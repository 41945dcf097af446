"""Scenario runs, metrics, run records, and comparison-table arithmetic.

Buggy is the positive class throughout. Unparseable verdicts are counted
separately and scored as wrong rather than dropped, so they can never
inflate a score.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Sequence

from .analyzer import analyze
from .backend import Backend, FineTuneProfile, ParseMode, classify
from .corpus import CodeSample, Label, dataset_digest
from .errors import (
    BackendUnavailableError,
    EmptyRunError,
    IncomparableRunsError,
    RunAbortedError,
    UndefinedBaselineError,
    VerdictParseError,
)
from .knowledge_map import KnowledgeMap
from .promptkit import ScenarioConfig, build_prompt

logger = logging.getLogger(__name__)

F1_CONSISTENCY_TOLERANCE = 0.01


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with buggy as the positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion matrix counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass(frozen=True)
class EvalMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    unparsed_count: int = 0

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "accuracy": self.accuracy,
            "unparsed_count": self.unparsed_count,
        }


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def compute_metrics(cm: ConfusionMatrix, unparsed_count: int = 0) -> EvalMetrics:
    """Precision, recall, F1, accuracy; zero denominators define to 0."""
    if cm.total == 0:
        raise EmptyRunError("metrics over zero samples are undefined")
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    return EvalMetrics(
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        accuracy=(cm.tp + cm.tn) / cm.total,
        unparsed_count=unparsed_count,
    )


def relative_improvement(base: float, new: float) -> float:
    """Percentage change of ``new`` over ``base``."""
    if base <= 0:
        raise UndefinedBaselineError("relative improvement needs a positive baseline")
    return 100.0 * (new - base) / base


@dataclass(frozen=True)
class SampleRow:
    sample_id: int
    gold: Label
    predicted: Label | None
    parse_mode: str
    latency_ms: float

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "gold": self.gold.value,
            "predicted": self.predicted.value if self.predicted else None,
            "parse_mode": self.parse_mode,
            "latency_ms": self.latency_ms,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SampleRow":
        return cls(
            sample_id=payload["sample_id"],
            gold=Label(payload["gold"]),
            predicted=Label(payload["predicted"]) if payload["predicted"] else None,
            parse_mode=payload["parse_mode"],
            latency_ms=payload["latency_ms"],
        )


def matrix_from_rows(rows: Sequence[SampleRow]) -> ConfusionMatrix:
    """Aggregate rows; an unparsed prediction scores as the wrong label."""
    tp = fp = fn = tn = 0
    for row in rows:
        effective = row.predicted if row.predicted is not None else row.gold.opposite()
        if row.gold is Label.BUGGY:
            if effective is Label.BUGGY:
                tp += 1
            else:
                fn += 1
        else:
            if effective is Label.BUGGY:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


@dataclass
class RunRecord:
    run_id: str
    scenario: ScenarioConfig
    backend_descriptor: dict
    dataset_path: str | None
    dataset_digest: str
    seed: int
    started: str
    finished: str
    rows: list[SampleRow]
    matrix: ConfusionMatrix
    metrics: EvalMetrics | None
    profile: FineTuneProfile | None = None
    incomplete: bool = False

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "scenario": self.scenario.to_dict(),
            "backend": self.backend_descriptor,
            "dataset_path": self.dataset_path,
            "dataset_digest": self.dataset_digest,
            "seed": self.seed,
            "started": self.started,
            "finished": self.finished,
            "sample_count": len(self.rows),
            "confusion_matrix": self.matrix.to_dict(),
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "profile": self.profile.to_dict() if self.profile else None,
            "incomplete": self.incomplete,
        }

    def save(self, runs_dir: str | Path) -> Path:
        """Write ``<run-id>.json`` plus the per-sample JSONL sidecar."""
        runs_dir = Path(runs_dir)
        runs_dir.mkdir(parents=True, exist_ok=True)
        record_path = runs_dir / f"{self.run_id}.json"
        record_path.write_text(
            json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        sidecar = runs_dir / f"{self.run_id}.samples.jsonl"
        with sidecar.open("w", encoding="utf-8") as stream:
            for row in self.rows:
                stream.write(json.dumps(row.to_dict()) + "\n")
        return record_path

    @classmethod
    def load(cls, record_path: str | Path) -> "RunRecord":
        record_path = Path(record_path)
        payload = json.loads(record_path.read_text(encoding="utf-8"))
        sidecar = record_path.parent / (record_path.stem + ".samples.jsonl")
        rows = []
        if sidecar.exists():
            for line in sidecar.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    rows.append(SampleRow.from_dict(json.loads(line)))
        matrix = ConfusionMatrix(**payload["confusion_matrix"])
        metrics = EvalMetrics(**payload["metrics"]) if payload.get("metrics") else None
        return cls(
            run_id=payload["run_id"],
            scenario=ScenarioConfig.from_dict(payload["scenario"]),
            backend_descriptor=payload["backend"],
            dataset_path=payload.get("dataset_path"),
            dataset_digest=payload["dataset_digest"],
            seed=payload["seed"],
            started=payload["started"],
            finished=payload["finished"],
            rows=rows,
            matrix=matrix,
            metrics=metrics,
            profile=FineTuneProfile.from_dict(payload["profile"])
            if payload.get("profile")
            else None,
            incomplete=payload.get("incomplete", False),
        )

    def verify_reconciliation(self) -> bool:
        return matrix_from_rows(self.rows) == self.matrix


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _new_run_id() -> str:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
    return f"{stamp}-{uuid.uuid4().hex[:8]}"


def run_scenario(
    samples: Sequence[CodeSample],
    scenario: ScenarioConfig,
    backend: Backend,
    kmap: KnowledgeMap,
    seed: int,
    *,
    dataset_path: str | Path | None = None,
    runs_dir: str | Path | None = None,
    profile: FineTuneProfile | None = None,
) -> RunRecord:
    """Classify every sample under one scenario and aggregate the results.

    Per-sample work may run in parallel up to the backend's bound; rows are
    collected in dataset order so results never depend on completion order.
    A backend outage mid-run persists a partial record marked incomplete and
    raises :class:`RunAbortedError`.
    """
    samples = list(samples)
    if not samples:
        raise EmptyRunError("cannot run a scenario over an empty dataset")
    scenario = scenario.with_seed(seed)

    findings_by_id = {}
    if scenario.include_findings or backend.needs_analysis:
        for sample in samples:
            if sample.language_tag == "python":
                findings_by_id[sample.id] = analyze(sample.source, kmap)
            else:
                logger.debug(
                    "sample %d tagged %s: symbolic analysis skipped",
                    sample.id,
                    sample.language_tag,
                )
                findings_by_id[sample.id] = []
    defect_rules = kmap.defect_rule_ids()
    defect_ids = {
        sample_id
        for sample_id, findings in findings_by_id.items()
        if any(finding.rule_id in defect_rules for finding in findings)
    }
    backend.bind_run(
        gold_by_id={sample.id: sample.label for sample in samples},
        defect_ids=defect_ids,
    )

    def score_one(sample: CodeSample) -> SampleRow:
        findings = findings_by_id.get(sample.id) if scenario.include_findings else None
        bundle = build_prompt(
            sample, scenario, pool=samples, kmap=kmap, findings=findings
        )
        try:
            verdict = classify(bundle, backend)
        except VerdictParseError:
            return SampleRow(sample.id, sample.label, None, ParseMode.FALLBACK.value, 0.0)
        return SampleRow(
            sample.id,
            sample.label,
            verdict.label,
            verdict.parse_mode.value,
            verdict.latency_ms,
        )

    started = _utc_now()
    rows: list[SampleRow] = []
    aborted: BackendUnavailableError | None = None
    if backend.max_parallel > 1:
        with ThreadPoolExecutor(max_workers=backend.max_parallel) as pool:
            futures = [pool.submit(score_one, sample) for sample in samples]
            for future in futures:
                try:
                    rows.append(future.result())
                except BackendUnavailableError as exc:
                    aborted = exc
                    for remaining in futures:
                        remaining.cancel()
                    break
    else:
        for sample in samples:
            try:
                rows.append(score_one(sample))
            except BackendUnavailableError as exc:
                aborted = exc
                break

    finished = _utc_now()
    matrix = matrix_from_rows(rows) if rows else ConfusionMatrix(0, 0, 0, 0)
    unparsed = sum(1 for row in rows if row.predicted is None)
    metrics = compute_metrics(matrix, unparsed_count=unparsed) if rows else None
    record = RunRecord(
        run_id=_new_run_id(),
        scenario=scenario,
        backend_descriptor=backend.descriptor(),
        dataset_path=str(dataset_path) if dataset_path else None,
        dataset_digest=dataset_digest(samples),
        seed=seed,
        started=started,
        finished=finished,
        rows=rows,
        matrix=matrix,
        metrics=metrics,
        profile=profile,
        incomplete=aborted is not None,
    )
    if runs_dir is not None:
        record.save(runs_dir)
    if aborted is not None:
        raise RunAbortedError(
            f"run {record.run_id} aborted after {len(rows)}/{len(samples)} samples: {aborted}",
            record=record,
        )
    return record


# --- comparisons -------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    run_id: str
    scenario: str
    backend: str
    precision: float
    recall: float
    f1: float
    accuracy: float
    improvement_pct: float


@dataclass(frozen=True)
class RunComparison:
    baseline_id: str
    rows: tuple[ComparisonRow, ...]
    mean_improvement_pct: float | None

    def to_text(self) -> str:
        header = (
            f"{'run':<28} {'scenario':<12} {'backend':<16} "
            f"{'P':>6} {'R':>6} {'F1':>6} {'Acc':>6} {'vs base':>9}"
        )
        lines = [header, "-" * len(header)]
        for row in self.rows:
            tag = " (baseline)" if row.run_id == self.baseline_id else ""
            lines.append(
                f"{row.run_id:<28} {row.scenario:<12} {row.backend:<16} "
                f"{row.precision:>6.3f} {row.recall:>6.3f} {row.f1:>6.3f} "
                f"{row.accuracy:>6.3f} {row.improvement_pct:>+8.2f}%{tag}"
            )
        if self.mean_improvement_pct is not None:
            lines.append(
                f"mean accuracy improvement over baseline: {self.mean_improvement_pct:+.2f}%"
            )
        return "\n".join(lines)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(
            ["run_id", "scenario", "backend", "precision", "recall", "f1", "accuracy", "improvement_pct"]
        )
        for row in self.rows:
            writer.writerow(
                [
                    row.run_id,
                    row.scenario,
                    row.backend,
                    f"{row.precision:.3f}",
                    f"{row.recall:.3f}",
                    f"{row.f1:.3f}",
                    f"{row.accuracy:.3f}",
                    f"{row.improvement_pct:.2f}",
                ]
            )
        return buffer.getvalue()


def compare_runs(records: Sequence[RunRecord], baseline_id: str) -> RunComparison:
    """Tabulate runs against a baseline run over the same dataset."""
    if not records:
        raise IncomparableRunsError("no run records to compare")
    by_id = {record.run_id: record for record in records}
    if baseline_id not in by_id:
        raise IncomparableRunsError(f"baseline run {baseline_id!r} is not among the records")
    digests = {record.dataset_digest for record in records}
    if len(digests) > 1:
        raise IncomparableRunsError(
            "run records cover different dataset digests and cannot be compared"
        )
    baseline = by_id[baseline_id]
    if baseline.metrics is None:
        raise IncomparableRunsError("baseline record has no metrics")
    base_accuracy = baseline.metrics.accuracy
    rows = []
    improvements = []
    for record in records:
        if record.metrics is None:
            raise IncomparableRunsError(f"record {record.run_id} has no metrics")
        improvement = relative_improvement(base_accuracy, record.metrics.accuracy)
        backend_desc = record.backend_descriptor
        backend_name = backend_desc.get("mode") or backend_desc.get("endpoint", "?")
        rows.append(
            ComparisonRow(
                run_id=record.run_id,
                scenario=record.scenario.kind.value,
                backend=backend_name,
                precision=record.metrics.precision,
                recall=record.metrics.recall,
                f1=record.metrics.f1,
                accuracy=record.metrics.accuracy,
                improvement_pct=improvement,
            )
        )
        if record.run_id != baseline_id:
            improvements.append(improvement)
    mean = sum(improvements) / len(improvements) if improvements else None
    return RunComparison(baseline_id=baseline_id, rows=tuple(rows), mean_improvement_pct=mean)


# --- reported-table consistency ----------------------------------------------


@dataclass(frozen=True)
class F1Check:
    index: int
    precision: float
    recall: float
    reported_f1: float
    computed_f1: float
    delta: float
    flagged: bool


def table_consistency_check(
    rows: Sequence[tuple[float, float, float]],
    tolerance: float = F1_CONSISTENCY_TOLERANCE,
) -> list[F1Check]:
    """Recompute F1 from each (precision, recall, f1) row and flag mismatches."""
    checks = []
    for index, (precision, recall, reported) in enumerate(rows):
        computed = f1_score(precision, recall)
        delta = abs(computed - reported)
        checks.append(
            F1Check(
                index=index,
                precision=precision,
                recall=recall,
                reported_f1=reported,
                computed_f1=computed,
                delta=delta,
                flagged=delta > tolerance,
            )
        )
    return checks


@dataclass(frozen=True)
class ReferenceRow:
    setup: str
    model: str
    precision: float
    recall: float
    f1: float
    accuracy: float | None = None


def _data_path(name: str):
    return resources.files("kmreview").joinpath("data", name)


def load_reference_tables(path: str | Path | None = None) -> list[ReferenceRow]:
    """Bundled (or user-provided) reported results as CSV rows.

    Required columns: precision, recall, f1. Optional: setup, model,
    accuracy; without them only F1 consistency can be checked.
    """
    if path is None:
        text = _data_path("reference_tables.csv").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    rows = []
    for entry in csv.DictReader(io.StringIO(text)):
        accuracy = entry.get("accuracy")
        rows.append(
            ReferenceRow(
                setup=entry.get("setup", ""),
                model=entry.get("model", ""),
                precision=float(entry["precision"]),
                recall=float(entry["recall"]),
                f1=float(entry["f1"]),
                accuracy=float(accuracy) if accuracy not in (None, "") else None,
            )
        )
    return rows


def load_reference_claims(path: str | Path | None = None) -> dict:
    """Reported improvement claims shipped alongside the reference tables."""
    if path is None:
        text = _data_path("reference_claims.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class ImprovementCheck:
    setup: str
    model: str
    base_accuracy: float
    accuracy: float
    computed_pct: float
    claimed_pct: float | None
    delta_pct: float | None


@dataclass(frozen=True)
class MeanImprovementCheck:
    setup: str
    computed_mean_pct: float
    claimed_mean_pct: float | None
    claimed_is_rounded: bool
    delta_pct: float | None


@dataclass(frozen=True)
class ReferenceReport:
    f1_checks: tuple[tuple[ReferenceRow, F1Check], ...]
    improvements: tuple[ImprovementCheck, ...]
    means: tuple[MeanImprovementCheck, ...]

    def flagged_rows(self) -> list[tuple[ReferenceRow, F1Check]]:
        return [(row, check) for row, check in self.f1_checks if check.flagged]

    def to_text(self) -> str:
        lines = [f"F1 consistency (tolerance {F1_CONSISTENCY_TOLERANCE:.3f}):"]
        for row, check in self.f1_checks:
            status = f"FLAG (diff={check.delta:.3f})" if check.flagged else "ok"
            label = f"{row.setup:<11} {row.model:<14}" if row.model else f"row {check.index}"
            lines.append(
                f"  {label} P={check.precision:.3f} R={check.recall:.3f} "
                f"F1={check.reported_f1:.3f} recomputed={check.computed_f1:.3f}  {status}"
            )
        if self.improvements:
            lines.append("")
            lines.append("Accuracy improvement vs the base setup:")
            for check in self.improvements:
                claim = ""
                if check.claimed_pct is not None:
                    claim = (
                        f"  (reported {check.claimed_pct:+.2f}%, "
                        f"diff={check.delta_pct:.2f}pp)"
                    )
                lines.append(
                    f"  {check.setup:<11} {check.model:<14} "
                    f"{check.base_accuracy:.3f} -> {check.accuracy:.3f}  "
                    f"{check.computed_pct:+.2f}%{claim}"
                )
        for mean in self.means:
            claim = ""
            if mean.claimed_mean_pct is not None:
                rounded = ", a rounded figure" if mean.claimed_is_rounded else ""
                claim = (
                    f"  (reported mean {mean.claimed_mean_pct:+.2f}%{rounded}; "
                    f"diff={mean.delta_pct:.2f}pp)"
                )
            lines.append(
                f"  {mean.setup:<11} mean improvement {mean.computed_mean_pct:+.2f}%{claim}"
            )
        return "\n".join(lines)


def build_reference_report(
    rows: Sequence[ReferenceRow] | None = None,
    claims: dict | None = None,
) -> ReferenceReport:
    """Recheck reported tables: F1 arithmetic plus improvement-vs-base claims."""
    if rows is None:
        rows = load_reference_tables()
    if claims is None:
        claims = load_reference_claims()
    checks = table_consistency_check([(r.precision, r.recall, r.f1) for r in rows])
    f1_checks = tuple(zip(rows, checks))

    baseline_setup = claims.get("baseline_setup", "base")
    base_accuracy = {
        row.model: row.accuracy
        for row in rows
        if row.setup == baseline_setup and row.accuracy is not None
    }
    claimed_pairs = {
        (entry["setup"], entry["model"]): entry["claimed_pct"]
        for entry in claims.get("improvements", [])
    }
    improvements: list[ImprovementCheck] = []
    by_setup: dict[str, list[float]] = {}
    for row in rows:
        if row.setup in ("", baseline_setup) or row.accuracy is None:
            continue
        base = base_accuracy.get(row.model)
        if base is None:
            continue
        computed = relative_improvement(base, row.accuracy)
        claimed = claimed_pairs.get((row.setup, row.model))
        improvements.append(
            ImprovementCheck(
                setup=row.setup,
                model=row.model,
                base_accuracy=base,
                accuracy=row.accuracy,
                computed_pct=computed,
                claimed_pct=claimed,
                delta_pct=abs(computed - claimed) if claimed is not None else None,
            )
        )
        by_setup.setdefault(row.setup, []).append(computed)

    claimed_means = {
        entry["setup"]: entry for entry in claims.get("mean_improvements", [])
    }
    means: list[MeanImprovementCheck] = []
    for setup, values in by_setup.items():
        computed_mean = sum(values) / len(values)
        claim = claimed_means.get(setup)
        means.append(
            MeanImprovementCheck(
                setup=setup,
                computed_mean_pct=computed_mean,
                claimed_mean_pct=claim["claimed_pct"] if claim else None,
                claimed_is_rounded=bool(claim.get("rounded", False)) if claim else False,
                delta_pct=abs(computed_mean - claim["claimed_pct"]) if claim else None,
            )
        )
    return ReferenceReport(
        f1_checks=f1_checks,
        improvements=tuple(improvements),
        means=tuple(means),
    )
