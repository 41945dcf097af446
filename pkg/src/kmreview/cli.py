"""Command-line entry point.

Exit codes are a stable contract: 0 means success (or a clean verdict /
no defect findings), 1 means the review or analysis found a problem, and
2 means the command itself failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from . import analyzer, backend as backend_mod, corpus, evalharness, knowledge_map, promptkit
from .errors import GoldUnavailableError, KmReviewError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_ERROR = 2


def bundled_mini_dataset() -> Path:
    """Path of the bundled offline fixture dataset."""
    return Path(str(resources.files("kmreview").joinpath("data", "mini.jsonl")))


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, dict):
        raise KmReviewError(f"{path}: config file must be a JSON object")
    return payload


def _budget_from_config(config: dict) -> promptkit.PromptBudget:
    budget = config.get("budget", {})
    return promptkit.PromptBudget(
        max_chars=budget.get("max_chars", 8000),
        exemplar_max_chars=budget.get("exemplar_max_chars", 1200),
    )


def _backend_config(args, config: dict) -> backend_mod.BackendConfig:
    section = dict(config.get("backend", {}))
    if getattr(args, "backend_url", None):
        section["endpoint"] = args.backend_url
    if "endpoint" not in section:
        raise KmReviewError("no backend endpoint configured; pass --backend-url or --mock")
    return backend_mod.BackendConfig(
        endpoint=section["endpoint"],
        token_env=section.get("token_env", backend_mod.DEFAULT_TOKEN_ENV),
        timeout_ms=section.get("timeout_ms", 30_000),
        max_retries=section.get("max_retries", 2),
        max_parallel_requests=section.get("max_parallel_requests", 1),
    )


def _make_backend(args, config: dict) -> backend_mod.Backend:
    if getattr(args, "mock", None):
        return backend_mod.mock_backend(args.mock, canned_path=getattr(args, "canned", None))
    return backend_mod.HttpBackend(_backend_config(args, config))


def _load_catalog(args) -> knowledge_map.KnowledgeMap:
    if getattr(args, "catalog", None):
        return knowledge_map.load_map(args.catalog)
    return knowledge_map.default_map()


def _scenario_from_args(args, config: dict, seed: int) -> promptkit.ScenarioConfig:
    defaults = config.get("scenario", {})
    shots = args.shots if args.shots is not None else defaults.get("shots")
    include_findings = defaults.get("include_findings")
    if getattr(args, "no_findings", False):
        include_findings = False
    return promptkit.ScenarioConfig.for_kind(
        args.scenario,
        shots=shots,
        include_findings=include_findings,
        seed=seed,
        budget=_budget_from_config(config),
    )


def _read_source(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


# --- analyze ------------------------------------------------------------------


def cmd_analyze(args, config: dict, seed: int) -> int:
    source = _read_source(args.path)
    kmap = _load_catalog(args)
    findings = analyzer.analyze(source, kmap, strict=args.strict)
    if args.format == "json":
        print(json.dumps(analyzer.findings_to_json(findings), indent=2))
    else:
        if not findings:
            print("no findings")
        for finding in findings:
            severity = kmap.severity_of(finding.rule_id).value
            print(f"{args.path}:{finding.line}: [{finding.rule_id}] ({severity}) {finding.message}")
            if finding.excerpt:
                print(f"    {finding.excerpt}")
    has_defect = any(
        kmap.severity_of(finding.rule_id) is knowledge_map.Severity.DEFECT
        for finding in findings
    )
    return EXIT_FINDINGS if has_defect else EXIT_OK


# --- review -------------------------------------------------------------------


def cmd_review(args, config: dict, seed: int) -> int:
    if args.mock in ("echo-gold", "invert-gold"):
        raise GoldUnavailableError(
            f"--mock {args.mock} needs gold labels and only works in 'eval run' "
            "over a labeled dataset"
        )
    source = _read_source(args.path)
    kmap = _load_catalog(args)
    scenario = _scenario_from_args(args, config, seed)
    target = promptkit.target_from_source(source)
    pool = corpus.load_dataset(args.pool) if args.pool else []
    if scenario.shots > 0 and not pool:
        raise KmReviewError(
            f"the {scenario.kind.value} scenario needs --pool <dataset> for exemplars"
        )
    findings = analyzer.analyze(source, kmap)
    prompt_findings = findings if scenario.include_findings else None
    bundle = promptkit.build_prompt(
        target, scenario, pool=pool, kmap=kmap, findings=prompt_findings
    )
    review_backend = _make_backend(args, config)
    review_backend.bind_run(
        defect_ids={target.id}
        if any(f.rule_id in kmap.defect_rule_ids() for f in findings)
        else set()
    )
    verdict = backend_mod.classify(bundle, review_backend)

    if args.format == "json":
        print(
            json.dumps(
                {
                    "verdict": verdict.label.value,
                    "parse_mode": verdict.parse_mode.value,
                    "findings": analyzer.findings_to_json(findings),
                    "prompt": {
                        "chars": len(bundle.text),
                        "exemplar_ids": list(bundle.exemplar_ids),
                        "scenario": scenario.to_dict(),
                    },
                },
                indent=2,
            )
        )
    else:
        print(f"verdict: {verdict.label.value} (parse mode: {verdict.parse_mode.value})")
        if findings:
            print("findings:")
            for finding in findings:
                print(f"  line {finding.line}: [{finding.rule_id}] {finding.message}")
        else:
            print("findings: none")
        print(
            f"prompt: {len(bundle.text)} chars, scenario {scenario.kind.value}, "
            f"exemplars {list(bundle.exemplar_ids) or 'none'}"
        )
    return EXIT_FINDINGS if verdict.label is corpus.Label.BUGGY else EXIT_OK


# --- prompt -------------------------------------------------------------------


def cmd_prompt_preview(args, config: dict, seed: int) -> int:
    kmap = _load_catalog(args)
    scenario = _scenario_from_args(args, config, seed)
    pool = corpus.load_dataset(args.pool) if args.pool else []
    if args.code:
        target = promptkit.target_from_source(_read_source(args.code))
    else:
        matches = [sample for sample in pool if sample.id == args.sample_id]
        if not matches:
            raise KmReviewError(f"sample id {args.sample_id} not found in --pool dataset")
        target = matches[0]
    findings = (
        analyzer.analyze(target.source, kmap) if scenario.include_findings else None
    )
    bundle = promptkit.build_prompt(
        target, scenario, pool=pool, kmap=kmap, findings=findings
    )
    sidecar = {
        "sample_id": bundle.sample_id,
        "exemplar_ids": list(bundle.exemplar_ids),
        "scenario": scenario.to_dict(),
        "chars": len(bundle.text),
    }
    if args.out:
        text_path = Path(args.out + ".txt")
        text_path.write_text(bundle.text, encoding="utf-8")
        json_path = Path(args.out + ".json")
        json_path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {text_path} and {json_path}")
    else:
        print(bundle.text)
        print(json.dumps(sidecar), file=sys.stderr)
    return EXIT_OK


# --- dataset ------------------------------------------------------------------


def cmd_dataset(args, config: dict, seed: int) -> int:
    samples = corpus.load_dataset(args.dataset, invert_labels=args.invert_labels)
    if args.dataset_command == "stats":
        summary = corpus.stats(samples)
        if args.format == "json":
            print(
                json.dumps(
                    {
                        "total": summary.total,
                        "clean_count": summary.clean_count,
                        "buggy_count": summary.buggy_count,
                        "buggy_ratio": summary.buggy_ratio,
                    }
                )
            )
        else:
            print(f"total: {summary.total}")
            print(f"clean: {summary.clean_count}")
            print(f"buggy: {summary.buggy_count}")
            print(f"buggy_ratio: {summary.buggy_ratio:.3f}")
        return EXIT_OK
    if args.dataset_command == "resample":
        balanced = corpus.oversample(samples, seed)
        corpus.write_dataset(balanced, args.out)
        summary = corpus.stats(balanced)
        print(
            f"wrote {args.out}: {summary.total} samples "
            f"({summary.buggy_count} buggy / {summary.clean_count} clean)"
        )
        return EXIT_OK
    train, evaluation = corpus.split(samples, args.fraction, seed)
    corpus.write_dataset(train, args.train_out)
    corpus.write_dataset(evaluation, args.eval_out)
    print(f"wrote {args.train_out} ({len(train)}) and {args.eval_out} ({len(evaluation)})")
    return EXIT_OK


# --- eval ---------------------------------------------------------------------


def cmd_eval_run(args, config: dict, seed: int) -> int:
    samples = corpus.load_dataset(args.dataset, limit=args.limit)
    kmap = _load_catalog(args)
    scenario = _scenario_from_args(args, config, seed)
    run_backend = _make_backend(args, config)
    profile = None
    if args.profile:
        profile = backend_mod.FineTuneProfile.from_dict(
            json.loads(Path(args.profile).read_text(encoding="utf-8"))
        )
    record = evalharness.run_scenario(
        samples,
        scenario,
        run_backend,
        kmap,
        seed,
        dataset_path=args.dataset,
        runs_dir=args.out,
        profile=profile,
    )
    metrics = record.metrics
    print(f"run {record.run_id} over {len(record.rows)} samples")
    print(f"precision: {metrics.precision:.3f}")
    print(f"recall:    {metrics.recall:.3f}")
    print(f"f1:        {metrics.f1:.3f}")
    print(f"accuracy:  {metrics.accuracy:.3f}")
    if metrics.unparsed_count:
        print(f"unparsed completions (scored as wrong): {metrics.unparsed_count}")
    print(f"record: {Path(args.out) / (record.run_id + '.json')}")
    return EXIT_OK


def cmd_eval_compare(args, config: dict, seed: int) -> int:
    records = [evalharness.RunRecord.load(path) for path in args.records]
    comparison = evalharness.compare_runs(records, args.baseline)
    print(comparison.to_text())
    if args.csv:
        Path(args.csv).write_text(comparison.to_csv(), encoding="utf-8")
        print(f"wrote {args.csv}")
    return EXIT_OK


def cmd_eval_check_tables(args, config: dict, seed: int) -> int:
    rows = evalharness.load_reference_tables(args.csv_path)
    claims = evalharness.load_reference_claims(args.claims)
    report = evalharness.build_reference_report(rows, claims)
    print(report.to_text())
    flagged = report.flagged_rows()
    if flagged:
        print(f"\n{len(flagged)} row(s) have inconsistent reported F1 scores.")
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kmreview",
        description=(
            "Hybrid code review: symbolic bug-pattern detection, scenario prompt "
            "assembly for a classification backend, and an evaluation harness."
        ),
    )
    parser.add_argument("--config", help="JSON file with backend/budget/scenario defaults")
    parser.add_argument("--seed", type=int, default=None, help="seed for all randomized steps")
    parser.add_argument("--verbose", action="store_true", help="enable debug logging")
    # the same globals are accepted after the subcommand; SUPPRESS keeps an
    # absent flag from clobbering the top-level value
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    shared.add_argument(
        "--seed", type=int, default=argparse.SUPPRESS, help=argparse.SUPPRESS
    )
    shared.add_argument(
        "--verbose", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS
    )
    commands = parser.add_subparsers(dest="command", required=True)

    scan = commands.add_parser(
        "analyze", parents=[shared], help="run the symbolic detectors over a file"
    )
    scan.add_argument("path", help="Python file, or - for stdin")
    scan.add_argument("--format", choices=("pretty", "json"), default="pretty")
    scan.add_argument("--catalog", help="custom rule catalog (JSON)")
    scan.add_argument("--strict", action="store_true", help="fail on any syntax error")
    scan.set_defaults(handler=cmd_analyze)

    review = commands.add_parser(
        "review", parents=[shared], help="classify one file via a backend"
    )
    review.add_argument("path", help="Python file, or - for stdin")
    review.add_argument("--scenario", default="hybrid", help="base|few-shot|fine-tuned|hybrid")
    group = review.add_mutually_exclusive_group()
    group.add_argument("--backend-url", help="endpoint speaking the classify protocol")
    group.add_argument("--mock", choices=backend_mod.MOCK_MODES, help="offline backend")
    review.add_argument("--canned", help="completions file for --mock canned")
    review.add_argument("--shots", type=int, default=None)
    review.add_argument("--pool", help="labeled dataset supplying exemplars")
    review.add_argument("--no-findings", action="store_true", help="catalog-only hybrid prompts")
    review.add_argument("--catalog", help="custom rule catalog (JSON)")
    review.add_argument("--format", choices=("pretty", "json"), default="pretty")
    review.set_defaults(handler=cmd_review)

    prompt = commands.add_parser("prompt", help="prompt utilities")
    prompt_sub = prompt.add_subparsers(dest="prompt_command", required=True)
    preview = prompt_sub.add_parser(
        "preview", parents=[shared], help="emit the assembled prompt for one sample"
    )
    target = preview.add_mutually_exclusive_group(required=True)
    target.add_argument("--code", help="file with the code under review")
    target.add_argument("--sample-id", type=int, help="sample id from --pool")
    preview.add_argument("--pool", help="labeled dataset supplying exemplars")
    preview.add_argument("--scenario", default="hybrid")
    preview.add_argument("--shots", type=int, default=None)
    preview.add_argument("--no-findings", action="store_true")
    preview.add_argument("--catalog", help="custom rule catalog (JSON)")
    preview.add_argument("--out", help="prefix for <out>.txt and the <out>.json sidecar")
    preview.set_defaults(handler=cmd_prompt_preview)

    dataset = commands.add_parser("dataset", help="dataset utilities")
    dataset_sub = dataset.add_subparsers(dest="dataset_command", required=True)
    for name, help_text in (
        ("stats", "class balance summary"),
        ("resample", "oversample the minority class to parity"),
        ("split", "seeded train/eval split"),
    ):
        sub = dataset_sub.add_parser(name, parents=[shared], help=help_text)
        sub.add_argument("dataset", help="JSONL dataset file")
        sub.add_argument(
            "--invert-labels",
            action="store_true",
            help="for datasets whose target polarity is 0=buggy",
        )
        if name == "stats":
            sub.add_argument("--format", choices=("pretty", "json"), default="pretty")
        if name == "resample":
            sub.add_argument("--out", required=True)
        if name == "split":
            sub.add_argument("--fraction", type=float, default=0.8)
            sub.add_argument("--train-out", required=True)
            sub.add_argument("--eval-out", required=True)
        sub.set_defaults(handler=cmd_dataset)

    evaluation = commands.add_parser("eval", help="run and compare scenario evaluations")
    eval_sub = evaluation.add_subparsers(dest="eval_command", required=True)

    run = eval_sub.add_parser(
        "run", parents=[shared], help="evaluate one scenario over a dataset"
    )
    run.add_argument("--dataset", required=True)
    run.add_argument("--scenario", required=True, help="base|few-shot|fine-tuned|hybrid")
    run_group = run.add_mutually_exclusive_group(required=True)
    run_group.add_argument("--backend-url")
    run_group.add_argument("--mock", choices=backend_mod.MOCK_MODES)
    run.add_argument("--canned", help="completions file for --mock canned")
    run.add_argument("--shots", type=int, default=None)
    run.add_argument("--no-findings", action="store_true")
    run.add_argument("--limit", type=int, default=None)
    run.add_argument("--catalog", help="custom rule catalog (JSON)")
    run.add_argument("--profile", help="JSON file with fine-tune metadata to attach")
    run.add_argument("--out", default="runs", help="directory for run records")
    run.set_defaults(handler=cmd_eval_run)

    compare = eval_sub.add_parser(
        "compare", parents=[shared], help="tabulate runs against a baseline"
    )
    compare.add_argument("records", nargs="+", help="run record JSON files")
    compare.add_argument("--baseline", required=True, help="run id of the baseline")
    compare.add_argument("--csv", help="also write the table as CSV")
    compare.set_defaults(handler=cmd_eval_compare)

    tables = eval_sub.add_parser(
        "check-tables",
        parents=[shared],
        help="recheck reported (P, R, F1) rows and improvement claims",
    )
    tables.add_argument(
        "csv_path",
        nargs="?",
        default=None,
        help="CSV of reported rows (default: bundled reference tables)",
    )
    tables.add_argument(
        "--claims", default=None, help="JSON with reported improvement claims"
    )
    tables.set_defaults(handler=cmd_eval_check_tables)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _load_config_file(args.config)
        seed = args.seed if args.seed is not None else config.get("seed", 0)
        return args.handler(args, config, seed)
    except KmReviewError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def run() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    run()
