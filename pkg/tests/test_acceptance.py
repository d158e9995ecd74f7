"""Acceptance gate: one test per externally checkable guarantee.

Each test below pins one headline guarantee of the toolkit, so the -v
listing reads as a pass/fail checklist: the exact worked reconstruction
example, chart search against exhaustive enumeration, perfect recovery
from a tree-faithful agent, rule agents through the full pipeline,
chance consistency of the random-span agent, exactness of the statistics,
balance-factor identities, byte-level determinism of the command line
pipeline, an optional live-backend smoke test, and the scripted session
round trip.

Stochastic checks run under frozen seeds chosen a priori (the first seed
tried is the one frozen); the asserted margins hold by construction for
a typical seed, not by selection.
"""

from __future__ import annotations

import math
import os
import time
from fractions import Fraction
from functools import lru_cache

import numpy as np
import pytest
from scipy.stats import ttest_rel

from delprobe import analysis, reconstruct as rc, stats as ds
from delprobe import taskgen as tg, treebank as tb
from delprobe.taskgen import detokenize
from delprobe.cli import main as cli_main
from delprobe.participants import import_sessions, sim_respond
from delprobe.session import build_app

from conftest import FIXTURES, load_bank


def run_cli(*argv) -> int:
    return cli_main([str(a) for a in argv])


def make_trial(tree: tb.ConstituencyTree, trial_id: str) -> tg.Trial:
    """A minimal trial whose test item is the given sentence."""
    tokens = tuple(tree.token_surfaces())
    demo = tg.Demonstration(tree.sentence_id, tokens, (0, 1), "NP", "VP")
    return tg.Trial(trial_id=trial_id, run_id=0, experiment="1a", demo=demo,
                    test=tg.TestItem(tree.sentence_id, tokens,
                                     tb.to_bracketed(tree), tree.lang),
                    flags={})


def classify_with(tree: tb.ConstituencyTree, trial: tg.Trial,
                  agent: str, seed: int) -> analysis.ClassifiedDeletion:
    record = sim_respond(trial, agent, seed)
    result = analysis.extract_deletion(list(trial.test.tokens),
                                       record.raw_text, trial.test.lang)
    return analysis.classify(result, tree, trial_id=trial.trial_id)


def count_by_sentence(trials, classified) -> dict[str, int]:
    """Classified records per test sentence, joined through the trials."""
    sentence_of = {t.trial_id: t.test.sentence_id for t in trials}
    counts: dict[str, int] = {}
    for record in classified:
        sid = sentence_of[record.trial_id]
        counts[sid] = counts.get(sid, 0) + 1
    return counts


# 1. Worked example: three pooled spans over a four-token sentence. ---------

def test_worked_example_reconstruction():
    started = time.monotonic()
    # proportions 0.53 / 0.44 / 0.03 over "John found the cat"
    dist = rc.SpanDistribution(
        sentence_id="ex", n=4,
        counts={(2, 4): 53, (1, 4): 44, (0, 2): 3},
        tokens=("John", "found", "the", "cat"))
    rec = rc.cky_reconstruct(dist)
    assert rec.explained_ratio == Fraction(97, 100)
    # the recovered bracketing is [John [found [the cat]]]
    assert set(tb.node_spans(rec.tree)) == {
        (0, 1), (1, 2), (2, 3), (3, 4), (2, 4), (1, 4), (0, 4)}
    alternative = tb.parse_bracketed(
        "(X (X (X John) (X found)) (X (X the) (X cat)))", lang="en",
        sentence_id="alt")
    assert rc.tree_explained_ratio(alternative, dist) == Fraction(56, 100)
    assert time.monotonic() - started < 1.0


# 2. Chart search equals exhaustive enumeration over all binary trees. ------

@lru_cache(maxsize=None)
def _all_bracketings(i: int, j: int) -> tuple:
    """Internal span sets (including the full span) of every binary tree."""
    if j - i == 1:
        return (frozenset(),)
    out = []
    for k in range(i + 1, j):
        for left in _all_bracketings(i, k):
            for right in _all_bracketings(k, j):
                out.append(left | right | {(i, j)})
    return tuple(out)


def test_chart_search_matches_enumeration_oracle():
    started = time.monotonic()
    rng = np.random.default_rng(20260)
    for n in range(2, 9):
        bracketings = _all_bracketings(0, n)
        spans = [(i, j) for i in range(n) for j in range(i + 1, n + 1)]
        for _ in range(200):
            picks = rng.integers(0, len(spans),
                                 size=int(rng.integers(1, 10)))
            counts: dict[tuple[int, int], int] = {}
            for p in picks:
                extra = int(rng.integers(1, 20))
                counts[spans[p]] = counts.get(spans[p], 0) + extra
            dist = rc.SpanDistribution(sentence_id=f"n{n}", n=n,
                                       counts=counts)
            # chart and enumeration both score every node span, leaves too
            base = sum(counts.get((i, i + 1), 0) for i in range(n))
            best = max(base + sum(counts.get(s, 0) for s in bracketing)
                       for bracketing in bracketings)
            rec = rc.cky_reconstruct(dist)
            assert rec.explained_ratio == Fraction(best, dist.total)
            achieved = sum(counts.get(s, 0)
                           for s in tb.node_spans(rec.tree))
            assert achieved == best
    assert time.monotonic() - started < 30.0


# 3. A tree-faithful agent lets the pipeline recover every fixture tree. ----

def test_span_agent_perfect_recovery():
    started = time.monotonic()
    sentences = load_bank("en.trees", "en") + load_bank("zh.trees", "zh")
    assert len(sentences) >= 20
    assert {t.lang for t in sentences} == {"en", "zh"}
    for tree in sentences:
        trials = [make_trial(tree, f"ts-{tree.sentence_id}-{i:03d}")
                  for i in range(100)]
        classified = [classify_with(tree, trial, "tree-span", seed=0)
                      for trial in trials]
        dist = rc.span_distribution(classified, tree.sentence_id,
                                    tree.n_tokens, tree.token_surfaces())
        rec = rc.cky_reconstruct(dist)
        assert rc.f1_score(rec.tree, tb.binarize(tree)) == Fraction(1), \
            tree.sentence_id
    assert time.monotonic() - started < 60.0


# 4. Rule agents through the full generation/response/analysis pipeline. ----

def test_rule_agents_full_pipeline():
    bank = load_bank("en_large.trees", "en")
    trees = {t.sentence_id: t for t in bank}

    def pipeline(agent: str, seed: int, runs: int):
        all_trials, all_classified = [], []
        for run_id in range(runs):
            trials = tg.gen_exp1(bank, 24, seed, variant="a", run_id=run_id)
            for trial in trials:
                tree = trees[trial.test.sentence_id]
                all_classified.append(
                    classify_with(tree, trial, agent, seed))
            all_trials.extend(trials)
        return all_trials, all_classified

    # a pure node-rule agent is fully explained by the node rule
    trials, classified = pipeline("node", seed=201, runs=1)
    assert analysis.class_rates(classified)["constituent"] == Fraction(1)
    ratios = analysis.rule_explained_ratios(trials, classified)
    assert ratios["node_ratio"] == Fraction(1)

    # a pure parent-rule agent is fully explained by the parent rule;
    # no claim on its constituent rate, because a deleted span next to a
    # repeated word can align to a non-node gap under the max-prefix rule
    trials, classified = pipeline("parent", seed=202, runs=1)
    ratios = analysis.rule_explained_ratios(trials, classified)
    assert ratios["parent_ratio"] == Fraction(1)

    # a known mixture reproduces its own weights within 0.02
    trials, classified = pipeline(
        "mix(parent=0.8,random-span=0.15,other=0.05)", seed=203, runs=300)
    rates = analysis.class_rates(classified)
    chance = float(np.mean([
        float(ds.node_span_fraction(trees[t.test.sentence_id]))
        for t in trials]))
    assert abs(float(rates["constituent"]) - (0.8 + 0.15 * chance)) <= 0.02
    assert abs(float(rates["nonconstituent"]) - 0.15 * (1 - chance)) <= 0.02
    assert abs(float(rates["other"]) - 0.05) <= 0.02

    # and its constituent rate is far above the random-span chance level
    counts = count_by_sentence(trials, classified)
    model = ds.chance_rate_model(
        [(trees[sid], c) for sid, c in sorted(counts.items())],
        seed=203, n_sims=1999)
    report = ds.monte_carlo_p(float(rates["constituent"]), model,
                              metric_name="constituent_rate")
    assert report.p_raw < Fraction(1, 1000)


# 5. The random-span agent sits at the analytic chance level. ---------------

def test_random_span_chance_consistency():
    bank = load_bank("en.trees", "en")

    def one_batch(n_trials: int, seed: int, tag: str):
        trials, classified, expected = [], [], []
        for i in range(n_trials):
            tree = bank[i % len(bank)]
            trial = make_trial(tree, f"{tag}-{i:05d}")
            trials.append(trial)
            classified.append(
                classify_with(tree, trial, "random-span", seed))
            expected.append(float(ds.node_span_fraction(tree)))
        hits = sum(1 for r in classified if r.label == "constituent")
        return trials, classified, hits / n_trials, float(np.mean(expected))

    # 10,000 draws land within two standard errors of the exact chance
    _, _, observed, expected = one_batch(10000, seed=0, tag="rs")
    se = math.sqrt(expected * (1 - expected) / 10000)
    assert abs(observed - expected) <= 2 * se

    # and the chance test does not fire: p > 0.05 in >= 90 of 100 reps
    trees = {t.sentence_id: t for t in bank}
    calm = 0
    for rep in range(100):
        trials, classified, observed, _ = one_batch(100, seed=1000 + rep,
                                                    tag=f"rs{rep}")
        counts = count_by_sentence(trials, classified)
        model = ds.chance_rate_model(
            [(trees[sid], c) for sid, c in sorted(counts.items())],
            seed=rep, n_sims=199)
        report = ds.monte_carlo_p(observed, model,
                                  metric_name="constituent_rate")
        if report.p_raw > Fraction(1, 20):
            calm += 1
    assert calm >= 90


# 6. The statistics produce their exact textbook values. --------------------

def test_statistics_exactness():
    # Monte-Carlo edge case: nothing reaches the observed value
    tree = tb.parse_bracketed(
        "(S (NP (NNP John)) (VP (VBD found) (NP (DT the) (NN cat))))",
        lang="en", sentence_id="mc")
    model = ds.chance_rate_model([(tree, 200)], seed=5, n_sims=1000)
    report = ds.monte_carlo_p(1.0, model, metric_name="rate")
    assert report.p_raw == Fraction(1, 1001)

    # bootstrap edge case: every resampled difference is positive
    report = ds.bootstrap_compare([2.0, 3.0, 4.0, 5.0],
                                  [1.0, 1.0, 2.0, 2.0],
                                  paired=True, n_resamples=10000, seed=1)
    assert report.p_raw == Fraction(2, 10001)

    # step-up correction on an ascending triple flattens to the largest
    adjusted = ds.fdr_adjust([Fraction(1, 100), Fraction(2, 100),
                              Fraction(3, 100)])
    assert adjusted == [Fraction(3, 100)] * 3

    # worked repeated-measures example
    table = ds.rm_anova([[1, 2], [2, 2], [3, 5]])
    assert table["F"] == pytest.approx(3.0, abs=1e-12)
    assert (table["df1"], table["df2"]) == (1, 2)

    # two-condition F equals the square of the paired t statistic
    rng = np.random.default_rng(42)
    for _ in range(100):
        n = int(rng.integers(3, 12))
        matrix = rng.normal(size=(n, 2))
        f_stat = ds.rm_anova(matrix.tolist())["F"]
        t_stat = float(ttest_rel(matrix[:, 0], matrix[:, 1]).statistic)
        assert abs(f_stat - t_stat ** 2) <= 1e-9 * max(1.0, t_stat ** 2)


# 7. Balance factor: worked values and the mirror identity. -----------------

def _render(shape, leaves: list[str]) -> str:
    if shape is None:
        return f"(X {leaves.pop(0)})"
    left = _render(shape[0], leaves)
    right = _render(shape[1], leaves)
    return f"(X {left} {right})"


def _mirror(shape):
    if shape is None:
        return None
    return (_mirror(shape[1]), _mirror(shape[0]))


def _random_shape(rng, n: int):
    if n == 1:
        return None
    k = int(rng.integers(1, n))
    return (_random_shape(rng, k), _random_shape(rng, n - k))


def test_balance_factor_exactness():
    right = tb.parse_bracketed("(X (X a) (X (X b) (X c)))", lang="en",
                               sentence_id="r")
    left = tb.parse_bracketed("(X (X (X a) (X b)) (X c))", lang="en",
                              sentence_id="l")
    assert tb.balance_factor(right) == Fraction(2)
    assert tb.balance_factor(left) == Fraction(1, 2)

    rng = np.random.default_rng(7)
    for case in range(100):
        n = int(rng.integers(3, 13))
        shape = _random_shape(rng, n)
        words = [f"w{i}" for i in range(n)]
        tree = tb.parse_bracketed(_render(shape, list(words)), lang="en",
                                  sentence_id=f"t{case}")
        mirrored = tb.parse_bracketed(
            _render(_mirror(shape), list(reversed(words))), lang="en",
            sentence_id=f"m{case}")
        assert tb.balance_factor(mirrored) == 1 / tb.balance_factor(tree)


# 8. Identical seeds give byte-identical artifacts end to end. --------------

def test_end_to_end_determinism(tmp_path):
    def chain(root):
        run_cli("ingest", "--trees", FIXTURES / "en_large.trees",
                "--lang", "en", "--out", root, "--quiet")
        run_cli("gen", "--experiment", "1a", "--bank", root / "bank.jsonl",
                "--runs", "6", "--trials-per-run", "24", "--seed", "9",
                "--out", root, "--quiet")
        run_cli("respond", "--backend",
                "sim:mix(parent=0.8,random-span=0.15,other=0.05)",
                "--trials", root / "trials.jsonl", "--seed", "9",
                "--out", root, "--quiet")
        run_cli("classify", "--responses", root / "responses.jsonl",
                "--trials", root / "trials.jsonl", "--out", root, "--quiet")
        run_cli("analyze", "--classified", root / "classified.jsonl",
                "--trials", root / "trials.jsonl", "--out", root, "--quiet")
        run_cli("reconstruct", "--classified", root / "classified.jsonl",
                "--trials", root / "trials.jsonl", "--out", root, "--quiet")
        run_cli("stats", "--metric", "constituent_rate",
                "--classified", root / "classified.jsonl",
                "--trials", root / "trials.jsonl", "--seed", "9",
                "--n-sims", "99", "--n-resamples", "200",
                "--out", root, "--quiet")

    first, second = tmp_path / "a", tmp_path / "b"
    chain(first)
    chain(second)
    artifacts = ["classified.jsonl", "metrics.csv", "reconstructions.jsonl",
                 "scores.csv", "report.json"]
    for name in artifacts:
        assert (first / name).read_bytes() == (second / name).read_bytes(), \
            name


# 9. Optional live smoke test against a configured model endpoint. ----------

@pytest.mark.skipif(not os.environ.get("PROBE_SMOKE_ENDPOINT"),
                    reason="no live endpoint configured")
def test_live_backend_smoke(tmp_path):
    from delprobe.participants import BackendConfig, respond_all

    bank = load_bank("en_large.trees", "en")
    trials = tg.gen_exp2(bank, 24, seed=0)
    config = BackendConfig(
        kind="llm",
        endpoint_url=os.environ["PROBE_SMOKE_ENDPOINT"],
        model_name=os.environ.get("PROBE_SMOKE_MODEL", ""),
        request_timeout=60.0)
    records = respond_all(trials, config, seed=0)
    parseable = [r for r in records if r.raw_text.strip()]
    assert len(parseable) >= 0.9 * len(trials)

    trees = {t.sentence_id: t for t in bank}
    classified = []
    for trial, record in zip(trials, records):
        result = analysis.extract_deletion(list(trial.test.tokens),
                                           record.raw_text, "en")
        classified.append(analysis.classify(
            result, trees[trial.test.sentence_id], trial_id=trial.trial_id))
    observed = analysis.class_rates(classified)["constituent"]
    counts = count_by_sentence(trials, classified)
    model = ds.chance_rate_model(
        [(trees[sid], c) for sid, c in sorted(counts.items())],
        seed=0, n_sims=999)
    report = ds.monte_carlo_p(float(observed), model,
                              metric_name="constituent_rate")
    assert report.to_dict()["p_raw"] is not None


# 10. Scripted session round trip through the HTTP service. -----------------

def test_session_round_trip(tmp_path):
    from fastapi.testclient import TestClient

    bank = load_bank("en_large.trees", "en")
    trials = tg.gen_exp1(bank, 24, seed=77, variant="a")
    by_id = {t.trial_id: t for t in trials}
    app = build_app(trials, out_dir=tmp_path, seed=5)
    client = TestClient(app)

    sid = client.post("/api/session", json={"meta": {}}).json()["session_id"]
    first = client.get(f"/api/session/{sid}/next").json()
    wrong = next(t.trial_id for t in trials
                 if t.trial_id != first["trial_id"])
    out_of_order = client.post(f"/api/session/{sid}/response",
                               json={"trial_id": wrong, "text": "x"})
    assert out_of_order.status_code == 409

    answered = 0
    while True:
        step = client.get(f"/api/session/{sid}/next").json()
        if step["done"]:
            break
        trial = by_id[step["trial_id"]]
        text = detokenize(list(trial.test.tokens[1:]), trial.test.lang)
        posted = client.post(f"/api/session/{sid}/response",
                             json={"trial_id": step["trial_id"],
                                   "text": text})
        assert posted.status_code == 200
        answered += 1
    assert answered == 24

    export = tmp_path / "session.jsonl"
    export.write_text(client.get(f"/api/session/{sid}/export").text,
                      encoding="utf-8")
    records, unanswered = import_sessions([export], trials)
    assert len(records) == 24
    assert unanswered == []

    trees = {t.sentence_id: t for t in bank}
    classified = []
    for record in records:
        trial = by_id[record.trial_id]
        result = analysis.extract_deletion(list(trial.test.tokens),
                                           record.raw_text, "en")
        classified.append(analysis.classify(
            result, trees[trial.test.sentence_id], trial_id=trial.trial_id))
    assert len(classified) == 24
