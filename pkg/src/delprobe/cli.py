"""The ``probe`` command line: the deletion-task pipeline as subcommands.

Each subcommand reads JSONL/CSV artifacts, writes new artifacts into the
--out directory, and drops a provenance sidecar (<name>.manifest.json)
recording the command line, config snapshot, seed, and input/output hashes.
Artifacts themselves carry no timestamps, so identical inputs and seeds
reproduce them byte for byte; ``probe verify`` re-hashes both sides of any
sidecar.

Exit status: 0 on success, 1 on data errors (messages name the offending
file and, where known, the line), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from statistics import fmean

from delprobe import __version__
from delprobe import analysis
from delprobe import participants as pt
from delprobe import reconstruct as rc
from delprobe import stats as st
from delprobe import taskgen as tg
from delprobe import treebank as tb
from delprobe.errors import (
    EmptyPool,
    ManifestError,
    NoConstituentTests,
    ProbeError,
    SchemaError,
    TooFewSamples,
    UnknownSentence,
    UnknownTrial,
)
from delprobe.manifest import (
    hash_files,
    load_config,
    read_csv,
    read_jsonl,
    read_jsonl_numbered,
    verify_manifest,
    write_csv,
    write_json,
    write_jsonl,
    write_manifests,
)

BANK_NAME = "bank.jsonl"
TRIALS_NAME = "trials.jsonl"
RESPONSES_NAME = "responses.jsonl"
UNANSWERED_NAME = "unanswered.json"
DIAGNOSTICS_NAME = "diagnostics.json"
CLASSIFIED_NAME = "classified.jsonl"
METRICS_NAME = "metrics.csv"
RECONSTRUCTIONS_NAME = "reconstructions.jsonl"
SCORES_NAME = "scores.csv"
REPORT_NAME = "report.json"

STAT_METRICS = ("constituent_rate", "node_ratio", "parent_ratio",
                "explained_ratio", "f1", "balance")

# where --compare finds each metric in a previously written CSV
COMPARE_COLUMN = {
    "constituent_rate": "constituent_rate",
    "node_ratio": "node_ratio",
    "parent_ratio": "parent_ratio",
    "explained_ratio": "explained_ratio",
    "f1": "f1_vs_linguistic",
    "balance": "balance_factor_deletion",
}
COMPARE_KEY = {
    "constituent_rate": "run_id",
    "node_ratio": "run_id",
    "parent_ratio": "run_id",
    "explained_ratio": "sentence_id",
    "f1": "sentence_id",
    "balance": "sentence_id",
}


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _setting(args, config: dict, key: str, default):
    """Flag value if given, else config file value, else the default.

    A config file may scope keys per subcommand ({"respond": {...}}) or set
    them flat; the scoped value wins, so one file can configure the whole
    pipeline without key collisions (ingest and respond both have
    max_tokens, say).
    """
    value = getattr(args, key, None)
    if value is not None:
        return value
    section = config.get(getattr(args, "command", ""), {})
    if isinstance(section, dict) and key in section:
        return section[key]
    if key in config and not isinstance(config[key], dict):
        return config[key]
    return default


def _out_path(args, name: str) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _emit(args, command: str, snapshot: dict, inputs, outputs) -> None:
    write_manifests(command, ["probe", *args.argv],
                    getattr(args, "seed", None), snapshot, inputs, outputs)


# -- artifact loaders --------------------------------------------------------

def _rows_to(path, convert):
    out = []
    for line_no, row in read_jsonl_numbered(path):
        try:
            out.append(convert(row))
        except ProbeError as exc:
            raise SchemaError(f"{path}:{line_no}: {exc}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}:{line_no}: bad record: {exc!r}") \
                from exc
    return out


def _load_trials(path) -> list[tg.Trial]:
    return _rows_to(path, tg.trial_from_dict)


def _load_responses(path) -> list[pt.ResponseRecord]:
    return _rows_to(path, pt.response_from_dict)


def _load_classified(path) -> list[analysis.ClassifiedDeletion]:
    return _rows_to(path, analysis.classified_from_dict)


def _load_bank(path) -> list[tb.ConstituencyTree]:
    trees = []
    for line_no, row in read_jsonl_numbered(path):
        for key in ("sentence_id", "lang", "tree"):
            if key not in row:
                raise SchemaError(f"{path}:{line_no}: missing {key!r}")
        try:
            tree = tb.parse_bracketed(row["tree"], lang=row["lang"],
                                      sentence_id=row["sentence_id"])
        except ProbeError as exc:
            raise SchemaError(f"{path}:{line_no}: {exc}") from exc
        if "tokens" in row and list(row["tokens"]) != tree.token_surfaces():
            raise SchemaError(
                f"{path}:{line_no}: tokens do not match tree leaves")
        trees.append(tree)
    return trees


def _join_trials(classified, trials, source: str) -> dict[str, tg.Trial]:
    by_id = {t.trial_id: t for t in trials}
    for record in classified:
        if record.trial_id not in by_id:
            raise UnknownTrial(
                f"{source}: record for unknown trial {record.trial_id!r}")
    return by_id


# -- ingest ------------------------------------------------------------------

def cmd_ingest(args, config: dict) -> int:
    trees: list[tb.ConstituencyTree] = []
    parsed = 0
    for path in args.trees:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise SchemaError(f"cannot read {path}: {exc}") from exc
        for line_no, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            sid = f"{args.lang}-{parsed:04d}"
            try:
                trees.append(tb.parse_bracketed(line, lang=args.lang,
                                                sentence_id=sid))
            except ProbeError as exc:
                raise SchemaError(f"{path}:{line_no}: {exc}") from exc
            parsed += 1
    if args.no_filter:
        kept = trees
    else:
        kept = tb.filter_bank(
            trees,
            min_tokens=_setting(args, config, "min_tokens", 4),
            max_tokens=_setting(args, config, "max_tokens", 15),
            min_depth=_setting(args, config, "min_depth", 3),
            max_depth=_setting(args, config, "max_depth", 8))
    bank_path = _out_path(args, BANK_NAME)
    write_jsonl(bank_path, ({"sentence_id": t.sentence_id, "lang": t.lang,
                             "tokens": t.token_surfaces(),
                             "tree": tb.to_bracketed(t)} for t in kept))
    _emit(args, "ingest", {"lang": args.lang, "filtered": not args.no_filter},
          args.trees, [bank_path])
    _say(args, f"parsed {parsed} trees, kept {len(kept)}: {bank_path}")
    return 0


# -- gen ---------------------------------------------------------------------

def cmd_gen(args, config: dict) -> int:
    exp = args.experiment
    if exp in ("1a", "1b", "2", "3") and not args.bank:
        args.parser.error(f"--bank is required with --experiment {exp}")
    if exp == "4":
        if not args.ambiguous or not args.demos:
            args.parser.error(
                "--ambiguous and --demos are required with --experiment 4")
        if args.bank:
            args.parser.error("--bank is not used with --experiment 4")
        if args.trials_per_run != 24:
            args.parser.error(
                "--trials-per-run must be 24 with --experiment 4")
    if exp == "3" and args.runs != 1:
        args.parser.error("--runs is not used with --experiment 3")

    trials: list[tg.Trial] = []
    inputs: list[str] = []
    if exp in ("1a", "1b"):
        bank = _load_bank(args.bank)
        inputs = [args.bank]
        for run_id in range(args.runs):
            trials.extend(tg.gen_exp1(bank, args.trials_per_run, args.seed,
                                      variant=exp[1], run_id=run_id))
    elif exp == "2":
        bank = _load_bank(args.bank)
        inputs = [args.bank]
        for run_id in range(args.runs):
            trials.extend(tg.gen_exp2(
                bank, args.trials_per_run, args.seed, run_id=run_id,
                min_deletion_len=args.min_deletion_len))
    elif exp == "3":
        bank = _load_bank(args.bank)
        inputs = [args.bank]
        trials = tg.gen_exp3(bank, args.per_combo, args.seed,
                             combo_limit=args.combo_limit,
                             test_ids=args.test_ids)
    else:
        ambiguous_rows = read_jsonl(args.ambiguous)
        demo_rows = read_jsonl(args.demos)
        inputs = [args.ambiguous, args.demos]
        for run_id in range(args.runs):
            trials.extend(tg.gen_exp4(ambiguous_rows, demo_rows, args.seed,
                                      run_id=run_id))

    trials_path = _out_path(args, TRIALS_NAME)
    write_jsonl(trials_path, (tg.trial_to_dict(t) for t in trials))
    _emit(args, "gen", {"experiment": exp, "runs": args.runs,
                        "trials_per_run": args.trials_per_run},
          inputs, [trials_path])
    _say(args, f"generated {len(trials)} trials: {trials_path}")
    return 0


# -- respond -----------------------------------------------------------------

def cmd_respond(args, config: dict) -> int:
    backend = args.backend
    if backend != "llm" and not backend.startswith("sim:"):
        args.parser.error("--backend must be 'llm' or 'sim:<agent spec>'")
    trials = _load_trials(args.trials)
    snapshot = {"backend": backend,
                "template": _setting(args, config, "template", "default"),
                "parallel": _setting(args, config, "parallel", 1)}
    if backend == "llm":
        endpoint = _setting(args, config, "endpoint", None)
        model = _setting(args, config, "model", None)
        if not endpoint:
            args.parser.error("--endpoint is required with --backend llm")
        if not model:
            args.parser.error("--model is required with --backend llm")
        snapshot.update({
            "endpoint": endpoint, "model": model,
            "temperature": _setting(args, config, "temperature", 0.0),
            "max_tokens": _setting(args, config, "max_tokens", 200),
            "timeout": _setting(args, config, "timeout", 30.0),
            "max_retries": _setting(args, config, "max_retries", 3),
            "cache_dir": _setting(args, config, "cache_dir", None)})
        backend_config = pt.BackendConfig(
            kind="llm", endpoint_url=endpoint, model_name=model,
            temperature=snapshot["temperature"],
            max_tokens=snapshot["max_tokens"],
            request_timeout=snapshot["timeout"],
            max_retries=snapshot["max_retries"],
            cache_dir=snapshot["cache_dir"])
    else:
        backend_config = pt.BackendConfig(kind="sim",
                                          agent_spec=backend[len("sim:"):])
    records = pt.respond_all(trials, backend_config, seed=args.seed,
                             parallel=int(snapshot["parallel"]),
                             template_id=snapshot["template"])
    responses_path = _out_path(args, RESPONSES_NAME)
    write_jsonl(responses_path, (r.to_dict() for r in records))
    _emit(args, "respond", snapshot, [args.trials], [responses_path])
    _say(args, f"collected {len(records)} responses: {responses_path}")
    return 0


# -- import ------------------------------------------------------------------

def _session_diagnostics(records: list[pt.ResponseRecord]) -> dict:
    """Flag constant-answer sessions; exclusion stays a manual decision."""
    by_session: dict[str, list[str]] = {}
    for record in records:
        session_id = record.backend.split(":", 1)[1]
        by_session.setdefault(session_id, []).append(record.raw_text.strip())
    out = {}
    for session_id, texts in sorted(by_session.items()):
        out[session_id] = {
            "n_responses": len(texts),
            "distinct_answers": len(set(texts)),
            "constant_answer": len(texts) >= 2 and len(set(texts)) == 1,
        }
    return out


def cmd_import(args, config: dict) -> int:
    trials = _load_trials(args.trials)
    records, unanswered = pt.import_sessions(args.sessions, trials)
    responses_path = _out_path(args, RESPONSES_NAME)
    unanswered_path = _out_path(args, UNANSWERED_NAME)
    diagnostics_path = _out_path(args, DIAGNOSTICS_NAME)
    write_jsonl(responses_path, (r.to_dict() for r in records))
    write_json(unanswered_path, {"unanswered": unanswered})
    write_json(diagnostics_path, _session_diagnostics(records))
    _emit(args, "import", {}, [*args.sessions, args.trials],
          [responses_path, unanswered_path, diagnostics_path])
    _say(args, f"imported {len(records)} responses "
               f"({len(unanswered)} trials unanswered): {responses_path}")
    return 0


# -- classify ----------------------------------------------------------------

def cmd_classify(args, config: dict) -> int:
    trials = _load_trials(args.trials)
    responses = _load_responses(args.responses)
    by_id = {t.trial_id: t for t in trials}
    tree_cache: dict[str, tb.ConstituencyTree] = {}
    classified = []
    for record in responses:
        trial = by_id.get(record.trial_id)
        if trial is None:
            raise UnknownTrial(f"{args.responses}: response for unknown "
                               f"trial {record.trial_id!r}")
        sid = trial.test.sentence_id
        tree = tree_cache.get(sid)
        if tree is None:
            tree = tb.parse_bracketed(trial.test.tree, lang=trial.test.lang,
                                      sentence_id=sid)
            tree_cache[sid] = tree
        result = analysis.extract_deletion(trial.test.tokens, record.raw_text,
                                           trial.test.lang)
        classified.append(analysis.classify(result, tree,
                                            trial_id=record.trial_id))
    classified_path = _out_path(args, CLASSIFIED_NAME)
    write_jsonl(classified_path,
                (analysis.classified_to_dict(c) for c in classified))
    _emit(args, "classify", {}, [args.responses, args.trials],
          [classified_path])
    _say(args, f"classified {len(classified)} responses: {classified_path}")
    return 0


# -- analyze -----------------------------------------------------------------

def cmd_analyze(args, config: dict) -> int:
    trials = _load_trials(args.trials)
    classified = _load_classified(args.classified)
    by_id = _join_trials(classified, trials, args.classified)

    runs: dict[int, list[analysis.ClassifiedDeletion]] = {}
    for record in classified:
        runs.setdefault(by_id[record.trial_id].run_id, []).append(record)
    trials_by_run: dict[int, list[tg.Trial]] = {}
    for trial in trials:
        trials_by_run.setdefault(trial.run_id, []).append(trial)

    conditions = sorted({t.condition for t in trials if t.condition})
    header = ["run_id", "experiment", "constituent_rate",
              "nonconstituent_rate", "other_rate", "node_ratio",
              "parent_ratio", "node_ratio_dissociated",
              "parent_ratio_dissociated"]
    header += [f"rate_{cond}" for cond in conditions]

    rows = []
    for run_id in sorted(runs):
        records = runs[run_id]
        run_trials = trials_by_run[run_id]
        experiments = sorted({t.experiment for t in run_trials})
        rates = analysis.class_rates(records)
        ratios = analysis.rule_explained_ratios(run_trials, records)
        answered = {r.trial_id for r in records}
        exp4 = [t for t in run_trials
                if t.experiment == "4" and t.trial_id in answered]
        cond_rates = (analysis.target_string_rates(exp4, records)
                      if exp4 else {})
        row = [run_id, "+".join(experiments), rates["constituent"],
               rates["nonconstituent"], rates["other"],
               ratios["node_ratio"], ratios["parent_ratio"],
               ratios["node_ratio_dissociated"],
               ratios["parent_ratio_dissociated"]]
        row += [cond_rates.get(cond) for cond in conditions]
        rows.append(row)

    metrics_path = _out_path(args, METRICS_NAME)
    write_csv(metrics_path, header, rows)
    _emit(args, "analyze", {}, [args.classified, args.trials], [metrics_path])
    _say(args, f"analyzed {len(rows)} runs: {metrics_path}")
    return 0


# -- reconstruct -------------------------------------------------------------

def _pooled_reconstructions(trials, classified, source: str) -> list[dict]:
    """One CKY reconstruction per test sentence with poolable deletions."""
    by_id = _join_trials(classified, trials, source)
    groups: dict[str, dict] = {}
    for record in classified:
        trial = by_id[record.trial_id]
        sid = trial.test.sentence_id
        entry = groups.setdefault(sid, {"trial": trial, "records": []})
        entry["records"].append(record)
    out = []
    for sid in sorted(groups):
        entry = groups[sid]
        trial = entry["trial"]
        tokens = trial.test.tokens
        try:
            dist = rc.span_distribution(entry["records"], sid, len(tokens),
                                        tokens)
        except EmptyPool:
            continue
        linguistic = tb.parse_bracketed(trial.test.tree,
                                        lang=trial.test.lang,
                                        sentence_id=sid)
        out.append({"sentence_id": sid, "rec": rc.cky_reconstruct(dist),
                    "linguistic": linguistic, "count": dist.total})
    return out


def cmd_reconstruct(args, config: dict) -> int:
    trials = _load_trials(args.trials)
    classified = _load_classified(args.classified)
    entries = _pooled_reconstructions(trials, classified, args.classified)
    if not entries:
        raise EmptyPool(f"{args.classified}: no single-gap deletions to pool")

    score_rows = []
    for entry in entries:
        rec = entry["rec"]
        binarized = tb.binarize(entry["linguistic"])
        score_rows.append([
            entry["sentence_id"],
            rec.explained_ratio,
            rc.f1_score(rec.tree, binarized),
            tb.balance_factor(rec.tree),
            tb.balance_factor(tb.collapse_unary(binarized)),
        ])

    recon_path = _out_path(args, RECONSTRUCTIONS_NAME)
    scores_path = _out_path(args, SCORES_NAME)
    write_jsonl(recon_path,
                (rc.reconstruction_to_dict(e["rec"]) for e in entries))
    write_csv(scores_path,
              ["sentence_id", "explained_ratio", "f1_vs_linguistic",
               "balance_factor_deletion", "balance_factor_linguistic"],
              score_rows)
    _emit(args, "reconstruct", {}, [args.classified, args.trials],
          [recon_path, scores_path])
    _say(args, f"reconstructed {len(entries)} sentences: {recon_path}")
    return 0


# -- stats -------------------------------------------------------------------

def _class_metric_observations(metric: str, trials, classified) -> list[float]:
    """Per-response indicator vector whose mean is the observed metric."""
    if metric == "constituent_rate":
        return [1.0 if r.label == "constituent" else 0.0 for r in classified]
    vectors = analysis.rule_match_vectors(trials, classified)
    key = "node" if metric == "node_ratio" else "parent"
    flags = vectors[key]
    if not flags:
        raise NoConstituentTests(
            f"no constituent-class responses to compute {metric}")
    return [1.0 if f else 0.0 for f in flags]


def _run_metric_values(metric: str, trials, classified) -> dict[int, float]:
    """The metric evaluated once per run, for group comparisons."""
    by_id = {t.trial_id: t for t in trials}
    run_records: dict[int, list] = {}
    for record in classified:
        run_records.setdefault(by_id[record.trial_id].run_id, []).append(record)
    trials_by_run: dict[int, list] = {}
    for trial in trials:
        trials_by_run.setdefault(trial.run_id, []).append(trial)
    out = {}
    for run_id in sorted(run_records):
        try:
            vector = _class_metric_observations(
                metric, trials_by_run[run_id], run_records[run_id])
        except NoConstituentTests:
            continue
        out[run_id] = fmean(vector)
    return out


def _sentence_metric_values(metric: str, entries) -> dict[str, float]:
    out = {}
    for entry in entries:
        rec = entry["rec"]
        if metric == "explained_ratio":
            value = float(rec.explained_ratio)
        elif metric == "f1":
            value = float(rc.f1_score(rec.tree,
                                      tb.binarize(entry["linguistic"])))
        else:
            value = float(tb.balance_factor(rec.tree))
        out[entry["sentence_id"]] = value
    return out


def _compare_group(path: str, metric: str) -> dict[str, float]:
    """Read the comparison group's per-unit values from a metrics/scores CSV."""
    column = COMPARE_COLUMN[metric]
    key = COMPARE_KEY[metric]
    header, rows = read_csv(path)
    for name in (key, column):
        if name not in header:
            raise SchemaError(f"{path}: no column {name!r}")
    out = {}
    for row in rows:
        cell = row[column]
        if cell == "":
            continue
        try:
            out[row[key]] = float(cell)
        except ValueError as exc:
            raise SchemaError(
                f"{path}: bad {column!r} value {cell!r}") from exc
    return out


def _ci_or_none(vector, level, n_resamples, seed):
    if len(vector) < 2:
        return None, None
    return st.bootstrap_ci(vector, level=level, n_resamples=n_resamples,
                           seed=seed)


def cmd_stats(args, config: dict) -> int:
    from dataclasses import replace

    trials = _load_trials(args.trials)
    classified = _load_classified(args.classified)
    by_id = _join_trials(classified, trials, args.classified)
    n_sims = int(_setting(args, config, "n_sims", 1000))
    n_resamples = int(_setting(args, config, "n_resamples", 1000))
    level = float(_setting(args, config, "level", 0.95))
    metric = args.metric
    seed = args.seed
    tree_cache: dict[str, tb.ConstituencyTree] = {}

    def test_tree(trial: tg.Trial) -> tb.ConstituencyTree:
        sid = trial.test.sentence_id
        if sid not in tree_cache:
            tree_cache[sid] = tb.parse_bracketed(
                trial.test.tree, lang=trial.test.lang, sentence_id=sid)
        return tree_cache[sid]

    if metric in ("constituent_rate", "node_ratio", "parent_ratio"):
        vector = _class_metric_observations(metric, trials, classified)
        observed = fmean(vector)
        if metric == "constituent_rate":
            counts: dict[str, int] = {}
            sentence_trial: dict[str, tg.Trial] = {}
            for record in classified:
                trial = by_id[record.trial_id]
                sid = trial.test.sentence_id
                counts[sid] = counts.get(sid, 0) + 1
                sentence_trial.setdefault(sid, trial)
            trees_with_counts = [(test_tree(sentence_trial[sid]), counts[sid])
                                 for sid in sorted(counts)]
            model = st.chance_rate_model(trees_with_counts, seed=seed,
                                         n_sims=n_sims)
            report = st.monte_carlo_p(observed, model, metric_name=metric)
        else:
            report = st.StatReport(metric=metric, observed=observed,
                                   seed=seed)
        ci_low, ci_high = _ci_or_none(vector, level, n_resamples, seed)
        report = replace(report, ci_low=ci_low, ci_high=ci_high,
                         n_resamples=None if ci_low is None else n_resamples)
        group_a = {str(run_id): value for run_id, value in
                   _run_metric_values(metric, trials, classified).items()}
    else:
        entries = _pooled_reconstructions(trials, classified,
                                          args.classified)
        if not entries:
            raise EmptyPool(
                f"{args.classified}: no single-gap deletions to pool")
        values_by_key = _sentence_metric_values(metric, entries)
        vector = [values_by_key[k] for k in sorted(values_by_key)]
        observed = fmean(vector)
        refs_with_counts = [(tb.binarize(e["linguistic"]), e["count"])
                            for e in entries]
        model = st.chance_tree_model(refs_with_counts, seed=seed,
                                     metric=metric, n_sims=n_sims)
        report = st.monte_carlo_p(observed, model, metric_name=metric)
        ci_low, ci_high = _ci_or_none(vector, level, n_resamples, seed)
        report = replace(report, ci_low=ci_low, ci_high=ci_high,
                         n_resamples=None if ci_low is None else n_resamples)
        group_a = values_by_key

    reports = [report]
    inputs = [args.classified, args.trials]
    if args.compare:
        inputs.append(args.compare)
        group_b = _compare_group(args.compare, metric)
        if args.paired:
            keys = sorted(set(group_a) & set(group_b))
            if len(keys) < 2:
                raise TooFewSamples(
                    f"only {len(keys)} paired units shared with "
                    f"{args.compare}")
            a = [group_a[k] for k in keys]
            b = [group_b[k] for k in keys]
        else:
            a = [group_a[k] for k in sorted(group_a)]
            b = [group_b[k] for k in sorted(group_b)]
        reports.append(st.bootstrap_compare(
            a, b, paired=args.paired, n_resamples=n_resamples, seed=seed,
            metric_name=f"{metric}_diff"))

    with_p = [i for i, r in enumerate(reports) if r.p_raw is not None]
    if with_p:
        adjusted = st.with_fdr([reports[i] for i in with_p])
        for index, adjusted_report in zip(with_p, adjusted):
            reports[index] = adjusted_report

    # keyed by basename so the report is byte-stable across directories;
    # full paths live in the sidecar manifest
    named_hashes = {}
    for path, digest in hash_files(inputs).items():
        name = Path(path).name
        named_hashes[name if name not in named_hashes else path] = digest
    payload = {
        "reports": [r.to_dict() for r in reports],
        "manifest": {
            "seed": seed,
            "n_sims": n_sims,
            "n_resamples": n_resamples,
            "software_version": __version__,
            "input_file_hashes": named_hashes,
        },
    }
    report_path = _out_path(args, REPORT_NAME)
    write_json(report_path, payload)
    _emit(args, "stats", {"metric": metric, "n_sims": n_sims,
                          "n_resamples": n_resamples, "level": level},
          inputs, [report_path])
    _say(args, f"wrote {len(reports)} reports: {report_path}")
    return 0


# -- tree --------------------------------------------------------------------

def cmd_tree(args, config: dict) -> int:
    bank = _load_bank(args.bank)
    for tree in bank:
        if tree.sentence_id == args.sentence_id:
            print(tb.to_dot(tree))
            return 0
    raise UnknownSentence(f"{args.bank}: no sentence {args.sentence_id!r}")


# -- serve -------------------------------------------------------------------

def cmd_serve(args, config: dict) -> int:
    # imported lazily so batch commands never pay the web stack's import cost
    import uvicorn

    from delprobe.session import build_app

    host, _, port_text = args.listen.rpartition(":")
    if not host or not port_text.isdigit():
        args.parser.error("--listen must look like HOST:PORT")
    trials = _load_trials(args.trials)
    app = build_app(trials, out_dir=args.out, seed=args.seed,
                    session_size=args.session_size, ui_dir=args.ui_dir)
    uvicorn.run(app, host=host, port=int(port_text),
                log_level="warning" if args.quiet else "info")
    return 0


# -- verify ------------------------------------------------------------------

def cmd_verify(args, config: dict) -> int:
    manifests = [Path(p) for p in args.manifests]
    if not manifests:
        manifests = sorted(Path(args.out).glob("*.manifest.json"))
    if not manifests:
        raise ManifestError(f"no manifests found in {args.out}")
    failures = 0
    for path in manifests:
        problems = verify_manifest(path)
        if problems:
            failures += 1
            for problem in problems:
                print(f"FAIL {path}: {problem}")
        else:
            _say(args, f"ok {path}")
    if failures:
        print(f"{failures} of {len(manifests)} manifests failed",
              file=sys.stderr)
        return 1
    _say(args, f"verified {len(manifests)} manifests")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="root seed for anything randomized")
    common.add_argument("--out", default=".", metavar="DIR",
                        help="directory for artifacts (default: .)")
    common.add_argument("--config", metavar="FILE",
                        help="JSON file with default settings")
    common.add_argument("--quiet", action="store_true",
                        help="suppress progress messages")

    parser = argparse.ArgumentParser(
        prog="probe",
        description="One-shot word-deletion probing pipeline.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="COMMAND")

    p = sub.add_parser("ingest", parents=[common],
                       help="parse bracketed trees into a sentence bank")
    p.add_argument("--trees", nargs="+", required=True, metavar="FILE",
                   help="files with one bracketed tree per line")
    p.add_argument("--lang", choices=("en", "zh"), required=True)
    p.add_argument("--no-filter", action="store_true",
                   help="keep every sentence regardless of length or depth")
    p.add_argument("--min-tokens", type=int)
    p.add_argument("--max-tokens", type=int)
    p.add_argument("--min-depth", type=int)
    p.add_argument("--max-depth", type=int)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("gen", parents=[common],
                       help="generate one-shot deletion trials")
    p.add_argument("--experiment", choices=("1a", "1b", "2", "3", "4"),
                   required=True)
    p.add_argument("--bank", metavar="FILE")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--trials-per-run", type=int, default=24)
    p.add_argument("--min-deletion-len", type=int, default=1,
                   help="shortest demo deletion for experiment 2")
    p.add_argument("--per-combo", type=int, default=3,
                   help="demos per category combination (experiment 3)")
    p.add_argument("--combo-limit", type=int,
                   help="keep only the most frequent combinations")
    p.add_argument("--test-ids", nargs="+", metavar="ID",
                   help="restrict experiment 3 tests to these sentences")
    p.add_argument("--ambiguous", metavar="FILE",
                   help="ambiguous-sentence JSONL (experiment 4)")
    p.add_argument("--demos", metavar="FILE",
                   help="demonstration JSONL (experiment 4)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("respond", parents=[common],
                       help="answer trials with an LLM or simulated agent")
    p.add_argument("--backend", required=True,
                   help="'llm' or 'sim:<agent spec>', e.g. sim:node")
    p.add_argument("--trials", required=True, metavar="FILE")
    p.add_argument("--endpoint", help="chat-completions URL (llm)")
    p.add_argument("--model", help="model name (llm)")
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-tokens", type=int)
    p.add_argument("--timeout", type=float)
    p.add_argument("--max-retries", type=int)
    p.add_argument("--cache-dir", metavar="DIR")
    p.add_argument("--parallel", type=int)
    p.add_argument("--template", help="prompt template id or file")
    p.set_defaults(func=cmd_respond)

    p = sub.add_parser("import", parents=[common],
                       help="import human session exports as responses")
    p.add_argument("--sessions", nargs="+", required=True, metavar="FILE")
    p.add_argument("--trials", required=True, metavar="FILE")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("classify", parents=[common],
                       help="classify responses against the test trees")
    p.add_argument("--responses", required=True, metavar="FILE")
    p.add_argument("--trials", required=True, metavar="FILE")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("analyze", parents=[common],
                       help="per-run class rates and rule ratios as CSV")
    p.add_argument("--classified", required=True, metavar="FILE")
    p.add_argument("--trials", required=True, metavar="FILE")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("reconstruct", parents=[common],
                       help="rebuild latent trees from pooled deletions")
    p.add_argument("--classified", required=True, metavar="FILE")
    p.add_argument("--trials", required=True, metavar="FILE")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("stats", parents=[common],
                       help="chance comparisons, bootstrap CIs, group tests")
    p.add_argument("--metric", choices=STAT_METRICS, required=True)
    p.add_argument("--classified", required=True, metavar="FILE")
    p.add_argument("--trials", required=True, metavar="FILE")
    p.add_argument("--compare", metavar="FILE",
                   help="metrics/scores CSV for a second group")
    p.add_argument("--paired", action="store_true",
                   help="pair comparison units by run or sentence id")
    p.add_argument("--n-sims", type=int, dest="n_sims")
    p.add_argument("--n-resamples", type=int, dest="n_resamples")
    p.add_argument("--level", type=float, help="CI level (default 0.95)")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("tree", parents=[common],
                       help="export one bank tree for inspection")
    p.add_argument("action", choices=("dot",))
    p.add_argument("sentence_id")
    p.add_argument("--bank", required=True, metavar="FILE")
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("serve", parents=[common],
                       help="serve the human-participant session API")
    p.add_argument("--trials", required=True, metavar="FILE")
    p.add_argument("--listen", default="127.0.0.1:8000", metavar="HOST:PORT")
    p.add_argument("--session-size", type=int, default=None,
                   help="trials per session (default: all)")
    p.add_argument("--ui-dir", metavar="DIR",
                   help="static browser app to mount at /")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("verify", parents=[common],
                       help="re-hash manifest inputs and outputs")
    p.add_argument("manifests", nargs="*", metavar="MANIFEST")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    args.parser = parser
    try:
        config = load_config(args.config)
        return args.func(args, config)
    except ProbeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
