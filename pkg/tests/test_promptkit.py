from __future__ import annotations

import pytest

from kmreview import analyze
from kmreview.corpus import Label
from kmreview.errors import ExemplarSelectionError, PromptBudgetError
from kmreview.knowledge_map import render_context
from kmreview.promptkit import (
    ANSWER_CUE,
    TRUNCATION_MARKER,
    PromptBudget,
    PromptBundle,
    ScenarioConfig,
    ScenarioKind,
    build_prompt,
    select_exemplars,
    target_from_source,
)


# --- scenario invariants --------------------------------------------------------


def test_base_scenario_is_one_shot():
    config = ScenarioConfig.for_kind("base")
    assert config.shots == 1
    assert not config.include_catalog and not config.include_findings


def test_base_scenario_rejects_shot_override():
    with pytest.raises(ValueError):
        ScenarioConfig.for_kind("base", shots=3)


def test_fine_tuned_scenario_is_bare():
    config = ScenarioConfig.for_kind("fine-tuned")
    assert config.shots == 0
    with pytest.raises(ValueError):
        ScenarioConfig(ScenarioKind.FINE_TUNED_DIRECT, 2, False, False)


def test_hybrid_requires_catalog():
    with pytest.raises(ValueError):
        ScenarioConfig(ScenarioKind.HYBRID, 4, False, True)


def test_budget_ordering_enforced():
    with pytest.raises(ValueError):
        PromptBudget(max_chars=100, exemplar_max_chars=200)


def test_bundle_rejects_leaked_target():
    config = ScenarioConfig.for_kind("few-shot")
    with pytest.raises(ValueError):
        PromptBundle(config, sample_id=3, text="x", exemplar_ids=(1, 3))


# --- select_exemplars -------------------------------------------------------------


def test_select_balanced_four(mini_samples):
    picked = select_exemplars(mini_samples, 4, seed=11, exclude=0)
    labels = [s.label for s in picked]
    assert labels.count(Label.BUGGY) == 2
    assert labels.count(Label.CLEAN) == 2
    assert picked == select_exemplars(mini_samples, 4, seed=11, exclude=0)


def test_select_single_shot_is_buggy(mini_samples):
    picked = select_exemplars(mini_samples, 1, seed=11)
    assert len(picked) == 1
    assert picked[0].label is Label.BUGGY


def test_select_excludes_target(mini_samples):
    for seed in range(25):
        picked = select_exemplars(mini_samples, 4, seed=seed, exclude=5)
        assert all(s.id != 5 for s in picked)


def test_select_unbalanced_pool_fails(mini_samples):
    clean_only = [s for s in mini_samples if s.label is Label.CLEAN]
    with pytest.raises(ExemplarSelectionError):
        select_exemplars(clean_only, 4, seed=0)


def test_select_zero_is_empty(mini_samples):
    assert select_exemplars(mini_samples, 0, seed=0) == []


# --- build_prompt ------------------------------------------------------------------


def test_base_prompt_has_one_exemplar_and_no_catalog(mini_samples, kmap):
    config = ScenarioConfig.for_kind("base", seed=3)
    bundle = build_prompt(mini_samples[0], config, pool=mini_samples, kmap=kmap)
    assert bundle.text.count("Example ") == 1
    assert "Known Python bug patterns" not in bundle.text
    assert len(bundle.exemplar_ids) == 1


def test_hybrid_prompt_contains_catalog_and_four_exemplars(mini_samples, kmap):
    config = ScenarioConfig.for_kind("hybrid", seed=3)
    target = mini_samples[0]
    findings = analyze(target.source, kmap)
    bundle = build_prompt(target, config, pool=mini_samples, kmap=kmap, findings=findings)
    assert render_context(kmap) in bundle.text
    assert bundle.text.count("Example ") == 4


def test_fine_tuned_prompt_is_bare_code_with_cue(mini_samples, kmap):
    config = ScenarioConfig.for_kind("fine-tuned")
    target = mini_samples[0]
    bundle = build_prompt(target, config)
    assert bundle.text == f"```python\n{target.source}```\n{ANSWER_CUE}"
    assert bundle.exemplar_ids == ()


def test_prompt_is_byte_deterministic(mini_samples, kmap):
    config = ScenarioConfig.for_kind("few-shot", seed=9)
    first = build_prompt(mini_samples[2], config, pool=mini_samples, kmap=kmap)
    second = build_prompt(mini_samples[2], config, pool=mini_samples, kmap=kmap)
    assert first.text == second.text
    assert first.exemplar_ids == second.exemplar_ids


def test_prompt_never_leaks_target(mini_samples, kmap):
    config = ScenarioConfig.for_kind("few-shot", seed=4)
    for sample in mini_samples[:10]:
        bundle = build_prompt(sample, config, pool=mini_samples, kmap=kmap)
        assert sample.id not in bundle.exemplar_ids


def test_findings_block_renders_lines_and_none(mini_samples, kmap):
    config = ScenarioConfig.for_kind("hybrid", seed=1)
    target = mini_samples[0]
    findings = analyze(target.source, kmap)
    assert findings
    bundle = build_prompt(target, config, pool=mini_samples, kmap=kmap, findings=findings)
    assert "Static analysis findings" in bundle.text
    assert f"- line {findings[0].line}, {findings[0].rule_id}:" in bundle.text
    empty = build_prompt(target, config, pool=mini_samples, kmap=kmap, findings=[])
    assert "- none" in empty.text


def test_findings_must_match_scenario(mini_samples, kmap):
    hybrid = ScenarioConfig.for_kind("hybrid", seed=1)
    with pytest.raises(ValueError):
        build_prompt(mini_samples[0], hybrid, pool=mini_samples, kmap=kmap, findings=None)
    few = ScenarioConfig.for_kind("few-shot", seed=1)
    with pytest.raises(ValueError):
        build_prompt(mini_samples[0], few, pool=mini_samples, kmap=kmap, findings=[])


def test_budget_drops_exemplars_before_target(mini_samples, kmap):
    roomy = ScenarioConfig.for_kind(
        "few-shot", seed=2, budget=PromptBudget(max_chars=8000, exemplar_max_chars=250)
    )
    full = build_prompt(mini_samples[1], roomy, pool=mini_samples, kmap=kmap)
    tight_budget = PromptBudget(max_chars=len(full.text) - 1, exemplar_max_chars=250)
    tight = ScenarioConfig.for_kind("few-shot", seed=2, budget=tight_budget)
    bundle = build_prompt(mini_samples[1], tight, pool=mini_samples, kmap=kmap)
    assert len(bundle.text) <= tight_budget.max_chars
    assert len(bundle.exemplar_ids) < 4
    assert "Code under review:" in bundle.text


def test_budget_error_when_target_alone_does_not_fit(mini_samples, kmap):
    config = ScenarioConfig.for_kind(
        "few-shot", seed=2, budget=PromptBudget(max_chars=60, exemplar_max_chars=10)
    )
    with pytest.raises(PromptBudgetError):
        build_prompt(mini_samples[1], config, pool=mini_samples, kmap=kmap)


def test_long_exemplars_truncated_with_marker(mini_samples, kmap):
    config = ScenarioConfig.for_kind(
        "base", seed=0, budget=PromptBudget(max_chars=8000, exemplar_max_chars=30)
    )
    bundle = build_prompt(mini_samples[0], config, pool=mini_samples, kmap=kmap)
    assert TRUNCATION_MARKER in bundle.text


def test_target_from_source_never_joins_pool(mini_samples, kmap):
    target = target_from_source("def lonely():\n    return 1\n")
    config = ScenarioConfig.for_kind("few-shot", seed=8)
    bundle = build_prompt(target, config, pool=mini_samples, kmap=kmap)
    assert bundle.sample_id == -1
    assert -1 not in bundle.exemplar_ids
