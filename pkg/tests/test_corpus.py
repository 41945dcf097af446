from __future__ import annotations

import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmreview import corpus
from kmreview.corpus import CodeSample, Label
from kmreview.errors import CannotBalanceError, DatasetParseError, DatasetValidationError


def make_sample(sample_id: int, label: Label) -> CodeSample:
    return CodeSample(
        id=sample_id,
        source=f"def item_{sample_id}():\n    return {sample_id}\n",
        label=label,
    )


def make_dataset(buggy: int, clean: int) -> list[CodeSample]:
    samples = [make_sample(i, Label.BUGGY) for i in range(buggy)]
    samples += [make_sample(buggy + i, Label.CLEAN) for i in range(clean)]
    return samples


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


# --- load_dataset -------------------------------------------------------------


def test_load_maps_record_fields(tmp_path):
    data = tmp_path / "data.jsonl"
    write_lines(
        data,
        [json.dumps({"func": "def f(x=[]):\n    return x", "target": 1, "idx": 7})],
    )
    samples = corpus.load_dataset(data)
    assert len(samples) == 1
    assert samples[0].id == 7
    assert samples[0].label is Label.BUGGY
    assert samples[0].language_tag == "python"


def test_load_empty_file(tmp_path):
    data = tmp_path / "empty.jsonl"
    data.write_text("", encoding="utf-8")
    assert corpus.load_dataset(data) == []


def test_load_rejects_target_out_of_domain(tmp_path):
    data = tmp_path / "bad.jsonl"
    write_lines(data, [json.dumps({"func": "pass", "target": 2})])
    with pytest.raises(DatasetValidationError, match="line 1"):
        corpus.load_dataset(data)


def test_load_rejects_malformed_line_with_line_number(tmp_path):
    data = tmp_path / "bad.jsonl"
    write_lines(data, [json.dumps({"func": "pass", "target": 0}), "{not json"])
    with pytest.raises(DatasetParseError, match="line 2") as excinfo:
        corpus.load_dataset(data)
    assert excinfo.value.line_number == 2


def test_load_rejects_missing_func(tmp_path):
    data = tmp_path / "bad.jsonl"
    write_lines(data, [json.dumps({"target": 0})])
    with pytest.raises(DatasetValidationError, match="func"):
        corpus.load_dataset(data)


def test_load_rejects_empty_source(tmp_path):
    data = tmp_path / "bad.jsonl"
    write_lines(data, [json.dumps({"func": "   \n", "target": 0})])
    with pytest.raises(DatasetValidationError):
        corpus.load_dataset(data)


def test_load_rejects_duplicate_ids(tmp_path):
    data = tmp_path / "dup.jsonl"
    write_lines(
        data,
        [
            json.dumps({"func": "a = 1", "target": 0, "idx": 3}),
            json.dumps({"func": "b = 2", "target": 0, "idx": 3}),
        ],
    )
    with pytest.raises(DatasetValidationError, match="duplicate"):
        corpus.load_dataset(data)


def test_load_assigns_sequential_ids_without_idx(tmp_path):
    data = tmp_path / "seq.jsonl"
    write_lines(
        data,
        [json.dumps({"func": f"x = {i}", "target": i % 2}) for i in range(3)],
    )
    samples = corpus.load_dataset(data)
    assert [s.id for s in samples] == [0, 1, 2]


def test_load_applies_limit(tmp_path):
    data = tmp_path / "big.jsonl"
    write_lines(
        data, [json.dumps({"func": f"x = {i}", "target": 0, "idx": i}) for i in range(10)]
    )
    assert len(corpus.load_dataset(data, limit=4)) == 4


def test_load_invert_labels(tmp_path):
    data = tmp_path / "inv.jsonl"
    write_lines(data, [json.dumps({"func": "x = 1", "target": 0, "idx": 0})])
    assert corpus.load_dataset(data)[0].label is Label.CLEAN
    assert corpus.load_dataset(data, invert_labels=True)[0].label is Label.BUGGY


def test_round_trip_preserves_unknown_fields(tmp_path):
    data = tmp_path / "extra.jsonl"
    write_lines(
        data,
        [
            json.dumps(
                {
                    "func": "x = 1\n",
                    "target": 0,
                    "idx": 3,
                    "language": "go",
                    "cwe": "CWE-79",
                }
            )
        ],
    )
    first = corpus.load_dataset(data)
    assert first[0].language_tag == "go"
    assert first[0].extra == {"cwe": "CWE-79"}
    out = tmp_path / "out.jsonl"
    corpus.write_dataset(first, out)
    assert corpus.load_dataset(out) == first


# --- stats ---------------------------------------------------------------------


def test_stats_counts():
    summary = corpus.stats(make_dataset(buggy=1, clean=3))
    assert summary.total == 4
    assert summary.clean_count == 3
    assert summary.buggy_count == 1
    assert summary.buggy_ratio == 0.25


def test_stats_empty():
    summary = corpus.stats([])
    assert summary.total == 0
    assert summary.buggy_ratio == 0.0


def test_stats_all_buggy():
    summary = corpus.stats(make_dataset(buggy=5, clean=0))
    assert summary.clean_count == 0
    assert summary.buggy_ratio == 1.0


# --- oversample ------------------------------------------------------------------


def test_oversample_reaches_parity():
    data = make_dataset(buggy=50, clean=100)
    balanced = corpus.oversample(data, seed=42)
    summary = corpus.stats(balanced)
    assert summary.buggy_count == summary.clean_count == 100
    assert balanced[: len(data)] == data  # originals first, untouched


def test_oversample_balanced_input_unchanged():
    data = make_dataset(buggy=5, clean=5)
    assert corpus.oversample(data, seed=1) == data


def test_oversample_single_class_fails():
    with pytest.raises(CannotBalanceError):
        corpus.oversample(make_dataset(buggy=0, clean=10), seed=1)


def test_oversample_deterministic():
    data = make_dataset(buggy=3, clean=11)
    assert corpus.oversample(data, seed=9) == corpus.oversample(data, seed=9)


@settings(max_examples=60, deadline=None)
@given(
    buggy=st.integers(min_value=1, max_value=25),
    clean=st.integers(min_value=1, max_value=25),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_oversample_properties(buggy, clean, seed):
    data = make_dataset(buggy=buggy, clean=clean)
    out = corpus.oversample(data, seed=seed)
    summary = corpus.stats(out)
    assert summary.buggy_count == summary.clean_count
    originals = Counter(s.id for s in data)
    result = Counter(s.id for s in out)
    assert all(result[key] >= count for key, count in originals.items())
    assert out == corpus.oversample(data, seed=seed)


# --- split -----------------------------------------------------------------------


def test_split_partitions():
    data = make_dataset(buggy=4, clean=6)
    train, evaluation = corpus.split(data, 0.8, seed=5)
    assert len(train) == 8 and len(evaluation) == 2
    assert {s.id for s in train}.isdisjoint({s.id for s in evaluation})
    assert {s.id for s in train} | {s.id for s in evaluation} == {s.id for s in data}


def test_split_deterministic():
    data = make_dataset(buggy=4, clean=6)
    assert corpus.split(data, 0.7, seed=2) == corpus.split(data, 0.7, seed=2)


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.5, 1.5])
def test_split_rejects_bad_fraction(fraction):
    with pytest.raises(DatasetValidationError):
        corpus.split(make_dataset(2, 2), fraction, seed=0)


# --- digest ----------------------------------------------------------------------


def test_digest_stable_and_label_sensitive():
    data = make_dataset(buggy=2, clean=2)
    assert corpus.dataset_digest(data) == corpus.dataset_digest(list(data))
    flipped = data[:3] + [
        CodeSample(id=data[3].id, source=data[3].source, label=Label.BUGGY)
    ]
    assert corpus.dataset_digest(flipped) != corpus.dataset_digest(data)
