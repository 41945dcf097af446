"""Syntax-tree parsing and the five detector-backed catalog rules.

Parsing is tolerant by default: dataset snippets are often fragments, so
regions that fail to parse become opaque segments that simply produce no
findings. Only input that cannot be tokenized at all is rejected.
"""

from __future__ import annotations

import ast
import io
import logging
import tokenize
from dataclasses import dataclass, field
from typing import Callable, Iterator

from .errors import SourceParseError
from .knowledge_map import KnowledgeMap

logger = logging.getLogger(__name__)

EXCERPT_MAX_CHARS = 120

# KM-01 constants: fixed allow/deny lists shipped with the catalog.
SINGLE_LETTER_ALLOWED = frozenset({"i", "j", "k", "n", "_"})
EXCEPT_BINDER_ALLOWED = frozenset({"e"})
PLACEHOLDER_NAMES = frozenset({"data", "temp", "tmp", "val", "obj"})

# KM-04: call names (last dotted component) treated as resource constructors.
RESOURCE_CALL_NAMES = frozenset({"open", "connect", "socket"})

# Cap on recovery parse attempts so pathological input stays bounded.
_MAX_RECOVERY_ATTEMPTS = 5000

_FUNCTION_NODES = (ast.FunctionDef, ast.AsyncFunctionDef)
_LOOP_NODES = (ast.For, ast.AsyncFor, ast.While)

_KIND_BY_TYPE = {
    ast.FunctionDef: "function-def",
    ast.AsyncFunctionDef: "function-def",
    ast.Try: "try-block",
    ast.ExceptHandler: "except-handler",
    ast.Call: "call",
    ast.With: "with-block",
    ast.AsyncWith: "with-block",
    ast.Return: "return",
    ast.Raise: "raise",
    ast.For: "loop",
    ast.AsyncFor: "loop",
    ast.While: "loop",
    ast.Assign: "assignment",
    ast.AugAssign: "assignment",
    ast.AnnAssign: "assignment",
    ast.Name: "identifier",
}


@dataclass(frozen=True)
class Finding:
    """One rule violation at a source location."""

    rule_id: str
    line: int
    excerpt: str
    message: str

    def to_dict(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "line": self.line,
            "excerpt": self.excerpt,
            "message": self.message,
        }


@dataclass
class Node:
    """Structural view of one syntax-tree node (1-based line, 0-based column)."""

    kind: str
    line: int
    col: int
    end_line: int
    end_col: int
    name: str | None = None
    children: list["Node"] = field(default_factory=list)


@dataclass
class Segment:
    kind: str  # "code" | "opaque"
    line_offset: int  # 0-based line of the segment start in the full source
    text: str
    module: ast.Module | None = None


@dataclass
class SyntaxTree:
    source: str
    segments: list[Segment]

    def modules(self) -> Iterator[ast.Module]:
        for segment in self.segments:
            if segment.module is not None:
                yield segment.module

    @property
    def has_opaque(self) -> bool:
        return any(segment.kind == "opaque" for segment in self.segments)

    def nodes(self) -> list[Node]:
        """Top-level structural nodes, nested; spans are absolute."""
        roots: list[Node] = []
        for segment in self.segments:
            if segment.module is None:
                line_count = max(1, len(segment.text.splitlines()))
                roots.append(
                    Node(
                        kind="opaque",
                        line=segment.line_offset + 1,
                        col=0,
                        end_line=segment.line_offset + line_count,
                        end_col=0,
                    )
                )
                continue
            for stmt in segment.module.body:
                roots.extend(_structural_nodes(stmt))
        return roots

    def walk_nodes(self) -> Iterator[Node]:
        stack = list(self.nodes())
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children)


def _node_span(node: ast.AST) -> tuple[int, int, int, int]:
    line = node.lineno
    col = node.col_offset
    decorators = getattr(node, "decorator_list", None) or []
    for decorator in decorators:
        if decorator.lineno < line:
            line, col = decorator.lineno, decorator.col_offset
    return line, col, node.end_lineno or line, node.end_col_offset or col


def _structural_nodes(node: ast.AST) -> list[Node]:
    """Map one ast node (and its subtree) to structural Node trees."""
    kind = _KIND_BY_TYPE.get(type(node))
    children: list[Node] = []
    for child in ast.iter_child_nodes(node):
        children.extend(_structural_nodes(child))
    if kind is None:
        return children
    line, col, end_line, end_col = _node_span(node)
    name = None
    if isinstance(node, _FUNCTION_NODES):
        name = node.name
        for arg, default in _default_pairs(node.args):
            children.append(
                Node(
                    kind="parameter-with-default",
                    line=arg.lineno,
                    col=arg.col_offset,
                    end_line=default.end_lineno or default.lineno,
                    end_col=default.end_col_offset or default.col_offset,
                    name=arg.arg,
                )
            )
    elif isinstance(node, ast.Name):
        name = node.id
    elif isinstance(node, ast.Call):
        name = _call_name(node)
    return [Node(kind, line, col, end_line, end_col, name, children)]


def parse(source: str, strict: bool = False) -> SyntaxTree:
    """Parse source into segments; tolerant of unparseable regions by default."""
    if "\x00" in source:
        raise SourceParseError("source contains null bytes")
    if not source.strip():
        return SyntaxTree(source=source, segments=[])
    try:
        module = ast.parse(source)
        return SyntaxTree(source=source, segments=[Segment("code", 0, source, module)])
    except SyntaxError as exc:
        if strict:
            raise SourceParseError(f"line {exc.lineno}: {exc.msg}") from exc
    except ValueError as exc:
        raise SourceParseError(str(exc)) from exc
    _require_tokenizable(source)
    return SyntaxTree(source=source, segments=_recover_segments(source))


_REAL_TOKEN_TYPES = frozenset(
    {tokenize.NAME, tokenize.NUMBER, tokenize.STRING, tokenize.OP}
)


def _require_tokenizable(source: str) -> None:
    """Reject input whose top level yields no meaningful token at all."""
    reader = io.StringIO(source).readline
    try:
        for token in tokenize.generate_tokens(reader):
            if token.type in _REAL_TOKEN_TYPES:
                return
    except (tokenize.TokenError, IndentationError, SyntaxError):
        pass
    raise SourceParseError("source cannot be tokenized as Python")


def _recover_segments(source: str) -> list[Segment]:
    lines = source.splitlines(keepends=True)
    segments: list[Segment] = []
    opaque_start: int | None = None
    attempts = 0
    index = 0

    def flush_opaque(end: int) -> None:
        nonlocal opaque_start
        if opaque_start is not None:
            text = "".join(lines[opaque_start:end])
            if text.strip():
                segments.append(Segment("opaque", opaque_start, text))
            opaque_start = None

    while index < len(lines):
        parsed = None
        for end in range(len(lines), index, -1):
            chunk = "".join(lines[index:end])
            if not chunk.strip():
                break
            attempts += 1
            if attempts > _MAX_RECOVERY_ATTEMPTS:
                flush_opaque(index)
                segments.append(Segment("opaque", index, "".join(lines[index:])))
                return segments
            try:
                module = ast.parse(chunk)
            except (SyntaxError, ValueError):
                continue
            parsed = (end, chunk, module)
            break
        if parsed is None:
            if lines[index].strip() and opaque_start is None:
                opaque_start = index
            elif not lines[index].strip():
                flush_opaque(index)
            index += 1
            continue
        flush_opaque(index)
        end, chunk, module = parsed
        ast.increment_lineno(module, index)
        segments.append(Segment("code", index, chunk, module))
        index = end
    flush_opaque(len(lines))
    return segments


def _excerpt(source: str, line: int) -> str:
    lines = source.splitlines()
    if 1 <= line <= len(lines):
        return lines[line - 1].strip()[:EXCERPT_MAX_CHARS]
    return ""


def _call_name(call: ast.Call) -> str | None:
    func = call.func
    if isinstance(func, ast.Name):
        return func.id
    if isinstance(func, ast.Attribute):
        return func.attr
    return None


def _default_pairs(args: ast.arguments) -> list[tuple[ast.arg, ast.expr]]:
    positional = list(args.posonlyargs) + list(args.args)
    pairs: list[tuple[ast.arg, ast.expr]] = []
    defaults = list(args.defaults)
    if defaults:
        for arg, default in zip(positional[-len(defaults):], defaults):
            pairs.append((arg, default))
    for arg, default in zip(args.kwonlyargs, args.kw_defaults):
        if default is not None:
            pairs.append((arg, default))
    return pairs


def _scopes(tree: SyntaxTree) -> Iterator[tuple[ast.AST, list[ast.stmt]]]:
    """Module and function scopes across all parsed segments."""
    for module in tree.modules():
        yield module, module.body
        for node in ast.walk(module):
            if isinstance(node, _FUNCTION_NODES):
                yield node, node.body


def _walk_scope(body: list[ast.stmt]) -> Iterator[ast.AST]:
    """Walk statements of one scope without descending into nested functions."""
    stack: list[ast.AST] = list(body)
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, _FUNCTION_NODES) or isinstance(node, ast.Lambda):
            continue
        stack.extend(ast.iter_child_nodes(node))


# --- KM-01 ------------------------------------------------------------------


def detect_naming(tree: SyntaxTree) -> list[Finding]:
    """Single-letter bindings outside the allow-list; reused placeholder names.

    Bindings are parameters, assignment targets, loop targets, and except
    binders (where only ``e`` is allowed). Placeholder names from the deny
    list fire once per scope when they occur more than once.
    """
    findings = []
    for scope, body in _scopes(tree):
        bindings: list[tuple[str, int, str]] = []  # (name, line, binder kind)
        occurrences: dict[str, list[int]] = {}

        def saw(name: str, line: int) -> None:
            occurrences.setdefault(name, []).append(line)

        if isinstance(scope, _FUNCTION_NODES):
            arguments = scope.args
            for arg in (
                list(arguments.posonlyargs)
                + list(arguments.args)
                + list(arguments.kwonlyargs)
                + ([arguments.vararg] if arguments.vararg else [])
                + ([arguments.kwarg] if arguments.kwarg else [])
            ):
                bindings.append((arg.arg, arg.lineno, "parameter"))
                saw(arg.arg, arg.lineno)

        for node in _walk_scope(body):
            if isinstance(node, ast.Name):
                saw(node.id, node.lineno)
                if isinstance(node.ctx, ast.Store):
                    bindings.append((node.id, node.lineno, "variable"))
            elif isinstance(node, ast.ExceptHandler) and node.name:
                bindings.append((node.name, node.lineno, "except binder"))
                saw(node.name, node.lineno)

        reported: set[str] = set()
        for name, line, binder in sorted(bindings, key=lambda item: item[1]):
            if len(name) != 1 or name in SINGLE_LETTER_ALLOWED or name in reported:
                continue
            if binder == "except binder" and name in EXCEPT_BINDER_ALLOWED:
                continue
            reported.add(name)
            findings.append(
                Finding(
                    "KM-01",
                    line,
                    _excerpt(tree.source, line),
                    f"single-letter {binder} name '{name}' obscures what the value means",
                )
            )
        for name in sorted(PLACEHOLDER_NAMES):
            lines = occurrences.get(name, [])
            if len(lines) > 1:
                first = min(lines)
                findings.append(
                    Finding(
                        "KM-01",
                        first,
                        _excerpt(tree.source, first),
                        f"placeholder name '{name}' is used {len(lines)} times; pick a descriptive name",
                    )
                )
    return findings


# --- KM-02 ------------------------------------------------------------------


def detect_unreachable(tree: SyntaxTree) -> list[Finding]:
    """Statements after a return/raise, or after an infinite loop with no break."""
    findings = []
    seen: set[int] = set()

    def flag(stmt: ast.stmt, reason: str) -> None:
        if id(stmt) in seen:
            return
        seen.add(id(stmt))
        findings.append(
            Finding(
                "KM-02",
                stmt.lineno,
                _excerpt(tree.source, stmt.lineno),
                f"statement can never execute ({reason})",
            )
        )

    for stmts in _statement_lists(tree):
        terminator = None
        for position, stmt in enumerate(stmts):
            if isinstance(stmt, (ast.Return, ast.Raise)):
                terminator = position
                break
        if terminator is not None:
            reason = (
                "follows a return"
                if isinstance(stmts[terminator], ast.Return)
                else "follows a raise"
            )
            for stmt in stmts[terminator + 1 :]:
                flag(stmt, reason)
        for position, stmt in enumerate(stmts):
            if (
                isinstance(stmt, ast.While)
                and _is_truthy_const(stmt.test)
                and not _loop_has_break(stmt)
            ):
                for later in stmts[position + 1 :]:
                    flag(later, "follows an infinite loop with no break")
                break
    return findings


def _statement_lists(tree: SyntaxTree) -> Iterator[list[ast.stmt]]:
    for module in tree.modules():
        for node in ast.walk(module):
            for field_name, value in ast.iter_fields(node):
                if (
                    isinstance(value, list)
                    and value
                    and all(isinstance(item, ast.stmt) for item in value)
                ):
                    yield value


def _is_truthy_const(test: ast.expr) -> bool:
    return (
        isinstance(test, ast.Constant)
        and isinstance(test.value, (bool, int))
        and bool(test.value)
    )


def _loop_has_break(loop: ast.While) -> bool:
    stack: list[ast.AST] = list(loop.body)
    while stack:
        node = stack.pop()
        if isinstance(node, ast.Break):
            return True
        for child in ast.iter_child_nodes(node):
            # a break inside a nested loop exits that loop, not this one
            if isinstance(child, _LOOP_NODES) or isinstance(child, _FUNCTION_NODES):
                continue
            stack.append(child)
    return False


# --- KM-03 ------------------------------------------------------------------


def detect_error_handling(tree: SyntaxTree) -> list[Finding]:
    """Bare except, pass-only handlers, and pass-only ``except Exception``."""
    findings = []
    for module in tree.modules():
        for node in ast.walk(module):
            if not isinstance(node, ast.ExceptHandler):
                continue
            line = node.lineno
            excerpt = _excerpt(tree.source, line)
            swallows = bool(node.body) and all(
                isinstance(stmt, ast.Pass) for stmt in node.body
            )
            if node.type is None:
                findings.append(
                    Finding(
                        "KM-03",
                        line,
                        excerpt,
                        "bare except catches every exception, including exits and interrupts",
                    )
                )
            if swallows:
                findings.append(
                    Finding(
                        "KM-03",
                        line,
                        excerpt,
                        "handler body is only pass, so the error is silently swallowed",
                    )
                )
            if (
                swallows
                and isinstance(node.type, ast.Name)
                and node.type.id == "Exception"
            ):
                findings.append(
                    Finding(
                        "KM-03",
                        line,
                        excerpt,
                        "catching Exception and ignoring it is an overbroad catch",
                    )
                )
    return findings


# --- KM-04 ------------------------------------------------------------------


def detect_resource_leak(tree: SyntaxTree) -> list[Finding]:
    """Resource constructor results bound to a name but never closed.

    Per-scope and flow-insensitive: any ``name.close()`` call in the same
    scope counts, and assignments inside a with block are treated as managed.
    """
    findings = []
    for scope, body in _scopes(tree):
        opened: list[tuple[str, int]] = []
        closed: set[str] = set()
        _collect_resources(body, inside_with=False, opened=opened, closed=closed)
        for name, line in opened:
            if name in closed:
                continue
            findings.append(
                Finding(
                    "KM-04",
                    line,
                    _excerpt(tree.source, line),
                    f"'{name}' holds an open resource that is never closed in this scope",
                )
            )
    return findings


def _collect_resources(
    nodes: list[ast.stmt] | list[ast.AST],
    inside_with: bool,
    opened: list[tuple[str, int]],
    closed: set[str],
) -> None:
    for node in nodes:
        if isinstance(node, _FUNCTION_NODES) or isinstance(node, ast.Lambda):
            continue
        if isinstance(node, (ast.Assign, ast.AnnAssign)) and not inside_with:
            value = node.value
            if isinstance(value, ast.Call) and _call_name(value) in RESOURCE_CALL_NAMES:
                targets = node.targets if isinstance(node, ast.Assign) else [node.target]
                for target in targets:
                    if isinstance(target, ast.Name):
                        opened.append((target.id, node.lineno))
        if isinstance(node, ast.Call):
            func = node.func
            if (
                isinstance(func, ast.Attribute)
                and func.attr == "close"
                and isinstance(func.value, ast.Name)
            ):
                closed.add(func.value.id)
        entering_with = inside_with or isinstance(node, (ast.With, ast.AsyncWith))
        _collect_resources(
            list(ast.iter_child_nodes(node)), entering_with, opened, closed
        )


# --- KM-05 ------------------------------------------------------------------


def detect_mutable_default(tree: SyntaxTree) -> list[Finding]:
    """Parameter defaults that are list/dict/set displays or constructor calls."""
    findings = []
    for module in tree.modules():
        for node in ast.walk(module):
            if not isinstance(node, _FUNCTION_NODES):
                continue
            for arg, default in _default_pairs(node.args):
                if _is_mutable_default(default):
                    findings.append(
                        Finding(
                            "KM-05",
                            default.lineno,
                            _excerpt(tree.source, default.lineno),
                            f"parameter '{arg.arg}' has a mutable default that is shared across calls",
                        )
                    )
    return findings


def _is_mutable_default(default: ast.expr) -> bool:
    if isinstance(default, (ast.List, ast.Dict, ast.Set)):
        return True
    return isinstance(default, ast.Call) and (
        isinstance(default.func, ast.Name) and default.func.id in {"list", "dict", "set"}
    )


# --- driver -----------------------------------------------------------------

DETECTORS: dict[str, Callable[[SyntaxTree], list[Finding]]] = {
    "KM-01": detect_naming,
    "KM-02": detect_unreachable,
    "KM-03": detect_error_handling,
    "KM-04": detect_resource_leak,
    "KM-05": detect_mutable_default,
}


def analyze(source: str, kmap: KnowledgeMap, strict: bool = False) -> list[Finding]:
    """Run every detector-backed rule of the catalog over the source.

    Findings are sorted by (line, rule_id, message) and the result is a pure
    function of (source, catalog).
    """
    tree = parse(source, strict=strict)
    if tree.has_opaque:
        logger.debug("analysis skipped opaque region(s) in input")
    findings: list[Finding] = []
    for rule in kmap.rules:
        if not rule.has_detector:
            continue
        detector = DETECTORS.get(rule.rule_id)
        if detector is None:
            logger.warning(
                "rule %s claims a detector but none is registered; skipped",
                rule.rule_id,
            )
            continue
        findings.extend(detector(tree))
    findings.sort(key=lambda f: (f.line, f.rule_id, f.message))
    return findings


def findings_to_json(findings: list[Finding]) -> list[dict]:
    return [finding.to_dict() for finding in findings]
