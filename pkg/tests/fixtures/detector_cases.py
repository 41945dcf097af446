"""Hand-labeled detector fixtures.

Every case was labeled by reading the snippet against the rule definitions,
not by running the analyzer. `expected` is the complete multiset of
(line, rule_id) pairs the analyzer must produce for the snippet with the
default catalog; per-detector tests filter by rule_id. Do not regenerate
these from tool output.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class DetectorCase:
    case_id: str
    source: str
    expected: tuple[tuple[int, str], ...]


def _case(case_id: str, source: str, *expected: tuple[int, str]) -> DetectorCase:
    return DetectorCase(case_id, source, tuple(sorted(expected)))


NAMING_CASES = [
    _case(
        "naming-pos-params",
        'def calc(d, t):\n    return d\n',
        (1, "KM-01"),
        (1, "KM-01"),
    ),
    _case(
        "naming-pos-placeholder-reuse",
        'temp = 1\nprint(temp)\n',
        (1, "KM-01"),
    ),
    _case(
        "naming-pos-mixed-params",
        'def move(x, y):\n    dx = x\n    return dx\n',
        (1, "KM-01"),
        (1, "KM-01"),
    ),
    _case(
        "naming-pos-assigned-letter",
        'def total_of(values):\n    s = sum(values)\n    return s\n',
        (2, "KM-01"),
    ),
    _case(
        "naming-neg-loop-allowlist",
        'for i in range(3):\n    pass\n',
    ),
    _case(
        "naming-neg-descriptive",
        'def shift(offset, limit):\n    return offset + limit\n',
    ),
    _case(
        "naming-neg-except-binder",
        'def risky(action):\n'
        '    try:\n'
        '        return action()\n'
        '    except ValueError as e:\n'
        '        raise RuntimeError("failed") from e\n',
    ),
    _case(
        "naming-neg-placeholder-single-use",
        'def setup(loader):\n    tmp = loader()\n    return 1\n',
    ),
]

UNREACHABLE_CASES = [
    _case(
        "unreachable-pos-after-return",
        'def done():\n    return 1\n    total = 2\n',
        (3, "KM-02"),
    ),
    _case(
        "unreachable-pos-after-raise",
        'def guard(flag):\n    raise ValueError(flag)\n    print(flag)\n',
        (3, "KM-02"),
    ),
    _case(
        "unreachable-pos-infinite-loop",
        'def spin(queue):\n'
        '    while True:\n'
        '        queue.get()\n'
        '    print("end")\n',
        (4, "KM-02"),
    ),
    _case(
        "unreachable-pos-two-trailing",
        'def halt():\n    return 0\n    first = 1\n    second = 2\n',
        (3, "KM-02"),
        (4, "KM-02"),
    ),
    _case(
        "unreachable-neg-single-return",
        'def ok():\n    return 1\n',
    ),
    _case(
        "unreachable-neg-conditional-return",
        'def cond(flag):\n    if flag:\n        return 1\n    return 2\n',
    ),
    _case(
        "unreachable-neg-loop-with-break",
        'def wait_first(queue):\n'
        '    while True:\n'
        '        item = queue.get()\n'
        '        if item:\n'
        '            break\n'
        '    return item\n',
    ),
    _case(
        "unreachable-neg-trailing-raise",
        'def boom():\n    raise RuntimeError("x")\n',
    ),
]

ERROR_HANDLING_CASES = [
    _case(
        "except-pos-bare-pass",
        'def run_quietly(action):\n'
        '    try:\n'
        '        action()\n'
        '    except:\n'
        '        pass\n',
        (4, "KM-03"),
        (4, "KM-03"),
    ),
    _case(
        "except-pos-broad-pass",
        'def run_broad(action):\n'
        '    try:\n'
        '        action()\n'
        '    except Exception:\n'
        '        pass\n',
        (4, "KM-03"),
        (4, "KM-03"),
    ),
    _case(
        "except-pos-bare-with-body",
        'def run_logged(action, log):\n'
        '    try:\n'
        '        action()\n'
        '    except:\n'
        '        log.warning("failed")\n',
        (4, "KM-03"),
    ),
    _case(
        "except-pos-typed-swallow",
        'def run_typed(action):\n'
        '    try:\n'
        '        action()\n'
        '    except ValueError:\n'
        '        pass\n',
        (4, "KM-03"),
    ),
    _case(
        "except-neg-typed-reraise",
        'def forward(action):\n'
        '    try:\n'
        '        return action()\n'
        '    except ValueError as e:\n'
        '        raise\n',
    ),
    _case(
        "except-neg-broad-handled",
        'def report(action, log):\n'
        '    try:\n'
        '        return action()\n'
        '    except Exception as error:\n'
        '        log.exception(error)\n'
        '        return None\n',
    ),
    _case(
        "except-neg-finally-only",
        'def locked(lock, action):\n'
        '    lock.acquire()\n'
        '    try:\n'
        '        return action()\n'
        '    finally:\n'
        '        lock.release()\n',
    ),
    _case(
        "except-neg-no-try",
        'def plain(action):\n    return action()\n',
    ),
]

RESOURCE_CASES = [
    _case(
        "resource-pos-open-no-close",
        'def read_all(path):\n    handle = open(path)\n    return handle.read()\n',
        (2, "KM-04"),
    ),
    _case(
        "resource-pos-one-of-two-closed",
        'def copy_file(src, dst):\n'
        '    input_stream = open(src)\n'
        '    output_stream = open(dst, "w")\n'
        '    output_stream.write(input_stream.read())\n'
        '    output_stream.close()\n',
        (2, "KM-04"),
    ),
    _case(
        "resource-pos-socket",
        'def probe(url, port):\n'
        '    import socket\n'
        '    link = socket.socket()\n'
        '    link.connect((url, port))\n'
        '    return link\n',
        (3, "KM-04"),
    ),
    _case(
        "resource-neg-closed",
        'def read_closed(path):\n'
        '    handle = open(path)\n'
        '    text = handle.read()\n'
        '    handle.close()\n'
        '    return text\n',
    ),
    _case(
        "resource-neg-with-block",
        'def read_managed(path):\n'
        '    with open(path) as handle:\n'
        '        return handle.read()\n',
    ),
    _case(
        "resource-neg-conditional-close",
        'def maybe_close(path, keep):\n'
        '    handle = open(path)\n'
        '    if not keep:\n'
        '        handle.close()\n'
        '    return handle\n',
    ),
    _case(
        "resource-neg-unbound-result",
        'def show(path):\n    print(open(path).read())\n',
    ),
]

MUTABLE_DEFAULT_CASES = [
    _case(
        "default-pos-list-and-set",
        'def g(a, b={}, c=set()):\n    pass\n',
        (1, "KM-01"),
        (1, "KM-01"),
        (1, "KM-01"),
        (1, "KM-05"),
        (1, "KM-05"),
    ),
    _case(
        "default-pos-dict-display",
        'def make_config(name, options={}):\n'
        '    options["name"] = name\n'
        '    return options\n',
        (1, "KM-05"),
    ),
    _case(
        "default-pos-constructor-calls",
        'def collect(items, seen=set(), order=list()):\n    return items\n',
        (1, "KM-05"),
        (1, "KM-05"),
    ),
    _case(
        "default-pos-populated-dict",
        'def merge_defaults(overrides, defaults={"retries": 3}):\n'
        '    defaults.update(overrides)\n'
        '    return defaults\n',
        (1, "KM-05"),
    ),
    _case(
        "default-pos-keyword-only",
        'def push(item, *, stack=[]):\n    stack.append(item)\n    return stack\n',
        (1, "KM-05"),
    ),
    _case(
        "default-neg-tuple",
        'def wrap(items=()):\n    return items\n',
    ),
    _case(
        "default-neg-none",
        'def fetch(url, headers=None):\n    return url, headers\n',
    ),
    _case(
        "default-neg-scalars",
        'def greet(name="world", times=2):\n    return name * times\n',
    ),
]

ALL_CASES = (
    NAMING_CASES
    + UNREACHABLE_CASES
    + ERROR_HANDLING_CASES
    + RESOURCE_CASES
    + MUTABLE_DEFAULT_CASES
)

CASES_BY_RULE = {
    "KM-01": NAMING_CASES,
    "KM-02": UNREACHABLE_CASES,
    "KM-03": ERROR_HANDLING_CASES,
    "KM-04": RESOURCE_CASES,
    "KM-05": MUTABLE_DEFAULT_CASES,
}
