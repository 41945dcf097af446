"""The bug-pattern catalog and its prompt-facing rendering.

The default catalog has exactly 20 entries. Five of them are backed by
syntax-tree detectors in :mod:`kmreview.analyzer`; the rest are
catalog-only guidance that is rendered into prompts but never produces
findings.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

from .errors import CatalogError

logger = logging.getLogger(__name__)

CATALOG_VERSION = "1.0"
DEFAULT_CATALOG_SIZE = 20
DETECTOR_RULE_IDS = ("KM-01", "KM-02", "KM-03", "KM-04", "KM-05")


class Category(Enum):
    NAMING = "Naming"
    CONTROL_FLOW = "ControlFlow"
    ERROR_HANDLING = "ErrorHandling"
    RESOURCES = "Resources"
    SEMANTICS = "Semantics"
    STYLE = "Style"


class Severity(Enum):
    ADVICE = "Advice"
    WARNING = "Warning"
    DEFECT = "Defect"


@dataclass(frozen=True)
class Rule:
    """One catalog entry; ``description`` is embedded verbatim in prompts."""

    rule_id: str
    name: str
    category: Category
    description: str
    severity: Severity
    has_detector: bool = False


@dataclass(frozen=True)
class KnowledgeMap:
    rules: tuple[Rule, ...]
    version: str = CATALOG_VERSION

    def get(self, rule_id: str) -> Rule:
        for rule in self.rules:
            if rule.rule_id == rule_id:
                return rule
        raise KeyError(rule_id)

    def rule_ids(self) -> tuple[str, ...]:
        return tuple(rule.rule_id for rule in self.rules)

    def severity_of(self, rule_id: str) -> Severity:
        return self.get(rule_id).severity

    def defect_rule_ids(self) -> frozenset[str]:
        return frozenset(
            rule.rule_id for rule in self.rules if rule.severity is Severity.DEFECT
        )


def _rule(rule_id, name, category, description, severity, has_detector=False):
    return Rule(rule_id, name, category, description, severity, has_detector)


_DEFAULT_RULES: tuple[Rule, ...] = (
    _rule(
        "KM-01",
        "Ambiguous names",
        Category.NAMING,
        "Single-letter variables and overused placeholders such as data or temp disguise what a value means and can mask logic mistakes.",
        Severity.WARNING,
        has_detector=True,
    ),
    _rule(
        "KM-02",
        "Unreachable code",
        Category.CONTROL_FLOW,
        "Statements after a return or raise, or after an infinite loop with no break, can never execute.",
        Severity.DEFECT,
        has_detector=True,
    ),
    _rule(
        "KM-03",
        "Risky exception handling",
        Category.ERROR_HANDLING,
        "Bare except clauses, handlers whose body is only pass, and overbroad except Exception catches hide real failures.",
        Severity.DEFECT,
        has_detector=True,
    ),
    _rule(
        "KM-04",
        "Leaked resources",
        Category.RESOURCES,
        "A file, socket, or connection opened without a matching close call or a with block stays open on every path.",
        Severity.DEFECT,
        has_detector=True,
    ),
    _rule(
        "KM-05",
        "Mutable default argument",
        Category.SEMANTICS,
        "A mutable default such as def f(x=[]) is created once and shared across calls, so state leaks between invocations.",
        Severity.DEFECT,
        has_detector=True,
    ),
    _rule(
        "KM-06",
        "Shadowed builtin",
        Category.NAMING,
        "Rebinding builtin names like list, dict, or id makes later calls to the builtin fail in confusing ways.",
        Severity.WARNING,
    ),
    _rule(
        "KM-07",
        "Wildcard import",
        Category.STYLE,
        "from module import * obscures where names come from and invites silent collisions.",
        Severity.ADVICE,
    ),
    _rule(
        "KM-08",
        "Identity comparison with literals",
        Category.SEMANTICS,
        "Comparing strings or numbers with is depends on interning and breaks unpredictably; use == for values.",
        Severity.WARNING,
    ),
    _rule(
        "KM-09",
        "String concatenation in loops",
        Category.STYLE,
        "Growing a string with += inside a loop is quadratic; collect parts and join once.",
        Severity.ADVICE,
    ),
    _rule(
        "KM-10",
        "__init__ returns a value",
        Category.SEMANTICS,
        "Returning a non-None value from __init__ raises a TypeError the moment the class is instantiated.",
        Severity.DEFECT,
    ),
    _rule(
        "KM-11",
        "Deep nesting",
        Category.STYLE,
        "Logic nested more than three or four levels deep is hard to follow; extract helpers or invert conditions.",
        Severity.ADVICE,
    ),
    _rule(
        "KM-12",
        "Magic numbers",
        Category.STYLE,
        "Unexplained numeric literals buried in logic belong in named constants.",
        Severity.ADVICE,
    ),
    _rule(
        "KM-13",
        "Unused variables and imports",
        Category.STYLE,
        "Bindings that are never read usually point at dead or unfinished code.",
        Severity.WARNING,
    ),
    _rule(
        "KM-14",
        "assert used for control flow",
        Category.ERROR_HANDLING,
        "assert statements disappear under python -O, so they must not guard required runtime behavior.",
        Severity.WARNING,
    ),
    _rule(
        "KM-15",
        "Global mutable state",
        Category.SEMANTICS,
        "Module-level mutable objects shared across functions make behavior order-dependent and hard to test.",
        Severity.WARNING,
    ),
    _rule(
        "KM-16",
        "Float equality comparison",
        Category.SEMANTICS,
        "Comparing floats with == ignores rounding error; compare against a tolerance instead.",
        Severity.WARNING,
    ),
    _rule(
        "KM-17",
        "TODO-marked dead branch",
        Category.CONTROL_FLOW,
        "Branches stubbed out with a TODO ship unfinished logic that callers cannot detect.",
        Severity.ADVICE,
    ),
    _rule(
        "KM-18",
        "Mixed return types",
        Category.SEMANTICS,
        "Returning unrelated types from different paths of one function pushes type checks onto every caller.",
        Severity.WARNING,
    ),
    _rule(
        "KM-19",
        "Shadowed loop variable",
        Category.CONTROL_FLOW,
        "Reusing an enclosing loop's variable name in a nested loop silently clobbers the outer value.",
        Severity.WARNING,
    ),
    _rule(
        "KM-20",
        "open() without encoding",
        Category.RESOURCES,
        "Text-mode open without an explicit encoding depends on the platform locale and breaks portability.",
        Severity.ADVICE,
    ),
)


def default_map() -> KnowledgeMap:
    """The built-in 20-entry catalog."""
    return KnowledgeMap(rules=_DEFAULT_RULES, version=CATALOG_VERSION)


def _validate_rules(rules: Iterable[Rule]) -> tuple[Rule, ...]:
    rules = tuple(rules)
    seen: set[str] = set()
    for rule in rules:
        if rule.rule_id in seen:
            raise CatalogError(f"duplicate rule_id {rule.rule_id!r}")
        seen.add(rule.rule_id)
        if not rule.description.strip():
            raise CatalogError(f"rule {rule.rule_id}: empty description")
        if "\n" in rule.description:
            raise CatalogError(f"rule {rule.rule_id}: description must be single-line")
    return rules


def load_map(path: str | Path) -> KnowledgeMap:
    """Load a user catalog (JSON array of rule objects), replacing the default."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CatalogError(f"{path}: invalid JSON: {exc.msg}") from exc
    if not isinstance(payload, list):
        raise CatalogError(f"{path}: catalog must be a JSON array of rule objects")
    rules = []
    for position, entry in enumerate(payload):
        if not isinstance(entry, dict):
            raise CatalogError(f"{path}: entry {position} is not an object")
        try:
            rules.append(
                Rule(
                    rule_id=entry["rule_id"],
                    name=entry["name"],
                    category=Category(entry["category"]),
                    description=entry["description"],
                    severity=Severity(entry["severity"]),
                    has_detector=bool(entry.get("has_detector", False)),
                )
            )
        except (KeyError, ValueError) as exc:
            raise CatalogError(f"{path}: entry {position}: {exc}") from exc
    validated = _validate_rules(rules)
    if len(validated) != DEFAULT_CATALOG_SIZE:
        logger.warning(
            "catalog %s has %d rules (the default catalog has %d)",
            path,
            len(validated),
            DEFAULT_CATALOG_SIZE,
        )
    return KnowledgeMap(rules=validated, version=f"custom:{path.name}")


def save_map(kmap: KnowledgeMap, path: str | Path) -> None:
    payload = [
        {
            "rule_id": rule.rule_id,
            "name": rule.name,
            "category": rule.category.value,
            "description": rule.description,
            "severity": rule.severity.value,
            "has_detector": rule.has_detector,
        }
        for rule in kmap.rules
    ]
    Path(path).write_text(
        json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def render_context(
    kmap: KnowledgeMap, categories: Iterable[Category | str] | None = None
) -> str:
    """Deterministic text block: a header plus one numbered line per rule."""
    if categories is not None:
        wanted = {Category(c) if isinstance(c, str) else c for c in categories}
        rules = [rule for rule in kmap.rules if rule.category in wanted]
    else:
        rules = list(kmap.rules)
    lines = [
        f"Known Python bug patterns and best practices (catalog v{kmap.version}, {len(rules)} entries):"
    ]
    for number, rule in enumerate(rules, start=1):
        lines.append(
            f"{number}. {rule.rule_id} ({rule.severity.value}): {rule.description}"
        )
    return "\n".join(lines)
