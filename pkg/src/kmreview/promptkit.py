"""Deterministic prompt assembly for the four review scenarios.

A prompt is laid out in a fixed order: task instruction, optional catalog
context, numbered labeled exemplars, optional findings for the target, the
fenced target code, and the answer cue. The fine-tuned-direct scenario
sends bare fenced code with the cue only.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

from .analyzer import Finding
from .corpus import CodeSample, Label
from .errors import ExemplarSelectionError, PromptBudgetError
from .knowledge_map import KnowledgeMap, render_context

ANSWER_CUE = "Label:"
TRUNCATION_MARKER = "...[truncated]"

INSTRUCTION = (
    "You are reviewing a Python code snippet for defects. "
    "Classify the code under review as buggy or clean. "
    "Answer with exactly one word: buggy or clean."
)


class ScenarioKind(Enum):
    BASE_ONE_SHOT = "base"
    FEW_SHOT = "few-shot"
    FINE_TUNED_DIRECT = "fine-tuned"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class PromptBudget:
    max_chars: int = 8000
    exemplar_max_chars: int = 1200

    def __post_init__(self):
        if not self.max_chars > self.exemplar_max_chars > 0:
            raise ValueError(
                "budget requires max_chars > exemplar_max_chars > 0, got "
                f"max_chars={self.max_chars}, exemplar_max_chars={self.exemplar_max_chars}"
            )


@dataclass(frozen=True)
class ScenarioConfig:
    kind: ScenarioKind
    shots: int
    include_catalog: bool
    include_findings: bool
    seed: int = 0
    budget: PromptBudget = field(default_factory=PromptBudget)

    def __post_init__(self):
        if self.shots < 0:
            raise ValueError("shots must be non-negative")
        if self.kind is ScenarioKind.BASE_ONE_SHOT:
            if self.shots != 1 or self.include_catalog or self.include_findings:
                raise ValueError(
                    "base scenario takes exactly one exemplar and no catalog or findings"
                )
        elif self.kind is ScenarioKind.FINE_TUNED_DIRECT:
            if self.shots != 0 or self.include_catalog or self.include_findings:
                raise ValueError(
                    "fine-tuned scenario sends bare code: no exemplars, catalog, or findings"
                )
        elif self.kind is ScenarioKind.HYBRID:
            if not self.include_catalog:
                raise ValueError("hybrid scenario always includes the catalog")

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "shots": self.shots,
            "include_catalog": self.include_catalog,
            "include_findings": self.include_findings,
            "seed": self.seed,
            "budget": {
                "max_chars": self.budget.max_chars,
                "exemplar_max_chars": self.budget.exemplar_max_chars,
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ScenarioConfig":
        budget = payload.get("budget", {})
        return cls(
            kind=ScenarioKind(payload["kind"]),
            shots=payload["shots"],
            include_catalog=payload["include_catalog"],
            include_findings=payload["include_findings"],
            seed=payload.get("seed", 0),
            budget=PromptBudget(
                max_chars=budget.get("max_chars", 8000),
                exemplar_max_chars=budget.get("exemplar_max_chars", 1200),
            ),
        )

    @classmethod
    def for_kind(
        cls,
        kind: ScenarioKind | str,
        *,
        shots: int | None = None,
        include_findings: bool | None = None,
        seed: int = 0,
        budget: PromptBudget | None = None,
    ) -> "ScenarioConfig":
        """Canonical configuration for a scenario, with the documented defaults."""
        kind = ScenarioKind(kind) if isinstance(kind, str) else kind
        budget = budget or PromptBudget()
        if kind is ScenarioKind.BASE_ONE_SHOT:
            if shots not in (None, 1):
                raise ValueError("base scenario is one-shot; --shots conflicts")
            if include_findings:
                raise ValueError("base scenario cannot include findings")
            return cls(kind, 1, False, False, seed, budget)
        if kind is ScenarioKind.FINE_TUNED_DIRECT:
            if shots not in (None, 0):
                raise ValueError("fine-tuned scenario takes no exemplars")
            if include_findings:
                raise ValueError("fine-tuned scenario cannot include findings")
            return cls(kind, 0, False, False, seed, budget)
        if kind is ScenarioKind.FEW_SHOT:
            return cls(
                kind,
                4 if shots is None else shots,
                False,
                False if include_findings is None else include_findings,
                seed,
                budget,
            )
        return cls(
            kind,
            4 if shots is None else shots,
            True,
            True if include_findings is None else include_findings,
            seed,
            budget,
        )


@dataclass(frozen=True)
class PromptBundle:
    scenario: ScenarioConfig
    sample_id: int
    text: str
    exemplar_ids: tuple[int, ...]

    def __post_init__(self):
        if self.sample_id in self.exemplar_ids:
            raise ValueError("target sample leaked into its own exemplars")


def select_exemplars(
    pool: Sequence[CodeSample],
    k: int,
    seed: int,
    exclude: int | None = None,
) -> list[CodeSample]:
    """Label-balanced seeded draw: ceil(k/2) buggy then floor(k/2) clean,
    interleaved buggy-first, never including the excluded sample id."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        return []
    candidates = [sample for sample in pool if sample.id != exclude]
    buggy = [sample for sample in candidates if sample.label is Label.BUGGY]
    clean = [sample for sample in candidates if sample.label is Label.CLEAN]
    need_buggy = (k + 1) // 2
    need_clean = k // 2
    if len(buggy) < need_buggy or len(clean) < need_clean:
        raise ExemplarSelectionError(
            f"pool cannot supply {need_buggy} buggy + {need_clean} clean exemplars "
            f"(have {len(buggy)} buggy, {len(clean)} clean after exclusion)"
        )
    rng = random.Random(seed)
    picked_buggy = rng.sample(buggy, need_buggy)
    picked_clean = rng.sample(clean, need_clean)
    interleaved: list[CodeSample] = []
    for position in range(need_buggy):
        interleaved.append(picked_buggy[position])
        if position < need_clean:
            interleaved.append(picked_clean[position])
    return interleaved


def exemplar_seed(scenario_seed: int, sample_id: int) -> int:
    """Per-sample exemplar stream derived from the scenario seed."""
    return scenario_seed * 1_000_003 + sample_id + 1


def _fence(code: str) -> str:
    body = code if code.endswith("\n") else code + "\n"
    return f"```python\n{body}```"


def _exemplar_block(number: int, sample: CodeSample, limit: int) -> str:
    code = sample.source
    if len(code) > limit:
        code = code[:limit].rstrip("\n") + "\n" + TRUNCATION_MARKER
    return f"Example {number}:\n{_fence(code)}\n{ANSWER_CUE} {sample.label.value}"


def _findings_block(findings: Sequence[Finding]) -> str:
    lines = ["Static analysis findings for the code under review:"]
    if findings:
        for finding in findings:
            lines.append(f"- line {finding.line}, {finding.rule_id}: {finding.message}")
    else:
        lines.append("- none")
    return "\n".join(lines)


def build_prompt(
    sample: CodeSample,
    scenario: ScenarioConfig,
    pool: Sequence[CodeSample] = (),
    kmap: KnowledgeMap | None = None,
    findings: Sequence[Finding] | None = None,
) -> PromptBundle:
    """Assemble the scenario prompt for one sample.

    Exemplars that exceed the per-exemplar budget are truncated with a
    marker; if the whole prompt exceeds ``max_chars``, exemplars are dropped
    from the end (the catalog and the target are never dropped).
    """
    if (findings is not None) != scenario.include_findings:
        raise ValueError("findings must be passed exactly when the scenario includes them")
    if scenario.include_catalog and kmap is None:
        raise ValueError("scenario includes the catalog but no knowledge map was given")

    if scenario.kind is ScenarioKind.FINE_TUNED_DIRECT:
        text = f"{_fence(sample.source)}\n{ANSWER_CUE}"
        if len(text) > scenario.budget.max_chars:
            raise PromptBudgetError(
                f"target code alone exceeds the {scenario.budget.max_chars}-char budget"
            )
        return PromptBundle(scenario, sample.id, text, ())

    exemplars = select_exemplars(
        pool,
        scenario.shots,
        exemplar_seed(scenario.seed, sample.id),
        exclude=sample.id,
    )

    def assemble(shown: Sequence[CodeSample]) -> str:
        sections = [INSTRUCTION]
        if scenario.include_catalog:
            sections.append(render_context(kmap))
        for number, exemplar in enumerate(shown, start=1):
            sections.append(
                _exemplar_block(number, exemplar, scenario.budget.exemplar_max_chars)
            )
        if scenario.include_findings:
            sections.append(_findings_block(findings or ()))
        sections.append(f"Code under review:\n{_fence(sample.source)}")
        return "\n\n".join(sections) + f"\n{ANSWER_CUE}"

    shown = list(exemplars)
    text = assemble(shown)
    while len(text) > scenario.budget.max_chars:
        if not shown:
            raise PromptBudgetError(
                f"prompt exceeds the {scenario.budget.max_chars}-char budget even "
                "with no exemplars"
            )
        shown.pop()
        text = assemble(shown)
    return PromptBundle(
        scenario, sample.id, text, tuple(exemplar.id for exemplar in shown)
    )


def target_from_source(source: str, sample_id: int = -1) -> CodeSample:
    """Wrap loose source (e.g. a file under review) as a prompt target.

    The placeholder label is never rendered into prompts; gold-echoing mocks
    reject such targets because no real label exists.
    """
    return CodeSample(id=sample_id, source=source, label=Label.CLEAN)
