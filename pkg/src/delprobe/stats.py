"""Inferential machinery for the deletion experiments.

Monte Carlo chance tests against matched random-deletion baselines,
bias-corrected accelerated bootstrap intervals and two-sided comparisons,
Benjamini-Hochberg FDR adjustment, and a one-way repeated-measures ANOVA.

Every procedure is deterministic given its seed. Random streams are keyed
per simulation or resample index, never per batch, so splitting the work
into chunks cannot change any result. Bootstrap streams are additionally
keyed by the content of the group being resampled, which makes the
comparison exactly antisymmetric in label order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.special import betainc, ndtr, ndtri

from .errors import (DegenerateError, EmptyGroup, FormatError, InvalidP,
                     ShapeError, SizeMismatch, TooFewSamples)
from .reconstruct import SpanDistribution, cky_reconstruct, f1_score
from .seeding import derive_rng, stable_hash
from .treebank import ConstituencyTree, Span, balance_factor, node_spans


# -- random spans ----------------------------------------------------------

def span_count(n: int, include_full: bool = True) -> int:
    total = n * (n + 1) // 2
    return total if include_full else total - 1


def random_span(n: int, rng, include_full: bool = True) -> Span:
    """Uniform draw over all contiguous spans of a length-n sentence."""
    if n < 1:
        raise FormatError("sentence must have at least one token")
    total = span_count(n, include_full)
    index = int(rng.integers(total))
    for s in range(n):
        block = n - s
        if s == 0 and not include_full:
            block -= 1
        if index < block:
            return (s, s + index + 1)
        index -= block
    raise AssertionError("unreachable")


def node_span_fraction(tree: ConstituencyTree,
                       include_full: bool = True) -> Fraction:
    """Probability that a uniform random span is a node of the tree."""
    n = tree.n_tokens
    spans = set(node_spans(tree))
    if not include_full:
        spans.discard((0, n))
    return Fraction(len(spans), span_count(n, include_full))


# -- chance models ---------------------------------------------------------

@dataclass(frozen=True)
class SentenceSpec:
    """Per-sentence ingredients for a chance simulation."""

    sentence_id: str
    n: int
    count: int
    node_count: int = 0
    span_total: int = 0
    reference: Optional[ConstituencyTree] = None


@dataclass(frozen=True)
class ChanceModel:
    """Random-deletion baseline matched to the real data's shape.

    kind random_span_rate simulates the constituent rate; kind
    random_span_tree redoes the full pool-and-reconstruct pipeline on
    random spans and scores the resulting tree with `metric`.
    """

    kind: str
    sentences: tuple[SentenceSpec, ...]
    seed: int
    n_sims: int = 1000
    include_full: bool = True
    metric: str = "rate"

    def __post_init__(self):
        if self.n_sims < 1:
            raise FormatError("n_sims must be at least 1")
        if not self.sentences:
            raise EmptyGroup("chance model needs at least one sentence")


def chance_rate_model(trees_with_counts: Sequence[tuple[ConstituencyTree,
                                                        int]],
                      seed: int, n_sims: int = 1000,
                      include_full: bool = True) -> ChanceModel:
    sentences = []
    for tree, count in trees_with_counts:
        n = tree.n_tokens
        spans = set(node_spans(tree))
        if not include_full:
            spans.discard((0, n))
        sentences.append(SentenceSpec(
            sentence_id=tree.sentence_id, n=n, count=count,
            node_count=len(spans),
            span_total=span_count(n, include_full)))
    return ChanceModel(kind="random_span_rate", sentences=tuple(sentences),
                       seed=seed, n_sims=n_sims, include_full=include_full)


def chance_tree_model(refs_with_counts: Sequence[tuple[ConstituencyTree,
                                                       int]],
                      seed: int, metric: str = "explained_ratio",
                      n_sims: int = 1000,
                      include_full: bool = True) -> ChanceModel:
    """Baseline for tree-level metrics; references must already be binary
    when metric is f1 or balance."""
    if metric not in ("explained_ratio", "f1", "balance"):
        raise FormatError(f"unknown chance metric {metric!r}")
    sentences = tuple(SentenceSpec(sentence_id=t.sentence_id, n=t.n_tokens,
                                   count=c, reference=t)
                      for t, c in refs_with_counts)
    return ChanceModel(kind="random_span_tree", sentences=sentences,
                       seed=seed, n_sims=n_sims, include_full=include_full,
                       metric=metric)


def expected_rate(model: ChanceModel) -> Fraction:
    """Exact expectation of the simulated constituent rate."""
    num = sum(Fraction(s.count * s.node_count, s.span_total)
              for s in model.sentences)
    return num / sum(s.count for s in model.sentences)


def simulate_chance(model: ChanceModel, rep: int) -> float:
    """One simulated metric value; self-contained per rep index."""
    rng = derive_rng(model.seed, "mc", model.kind, rep)
    if model.kind == "random_span_rate":
        hits = 0
        total = 0
        for spec in model.sentences:
            # each random span is a node with this probability, independently
            p = spec.node_count / spec.span_total
            hits += int(rng.binomial(spec.count, p))
            total += spec.count
        return hits / total
    if model.kind != "random_span_tree":
        raise FormatError(f"unknown chance model kind {model.kind!r}")
    values = []
    for spec in model.sentences:
        counts: dict[Span, int] = {}
        for _ in range(spec.count):
            span = random_span(spec.n, rng, model.include_full)
            counts[span] = counts.get(span, 0) + 1
        dist = SpanDistribution(sentence_id=spec.sentence_id, n=spec.n,
                                counts=counts)
        result = cky_reconstruct(dist)
        if model.metric == "explained_ratio":
            values.append(float(result.explained_ratio))
        elif model.metric == "f1":
            values.append(float(f1_score(result.tree, spec.reference)))
        else:
            values.append(float(balance_factor(result.tree)))
    return float(np.mean(values))


# -- reports ---------------------------------------------------------------

@dataclass(frozen=True)
class StatReport:
    metric: str
    observed: float
    seed: int
    p_raw: Optional[Fraction] = None
    p_fdr: Optional[float] = None
    chance_mean: Optional[float] = None
    chance_sd: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    n_sims: Optional[int] = None
    n_resamples: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "observed": self.observed,
            "seed": self.seed,
            "p_raw": None if self.p_raw is None else float(self.p_raw),
            "p_fdr": self.p_fdr,
            "chance_mean": self.chance_mean,
            "chance_sd": self.chance_sd,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_sims": self.n_sims,
            "n_resamples": self.n_resamples,
        }


def monte_carlo_p(observed, model: ChanceModel,
                  direction: str = "greater",
                  metric_name: str = "") -> StatReport:
    """Permutation-style p against the chance model: (A + 1) / (n + 1)."""
    if direction != "greater":
        raise FormatError("only the upper-tail direction is defined")
    values = [simulate_chance(model, rep) for rep in range(model.n_sims)]
    exceed = sum(1 for v in values if v >= observed)
    return StatReport(
        metric=metric_name or model.metric,
        observed=float(observed), seed=model.seed,
        p_raw=Fraction(exceed + 1, model.n_sims + 1),
        chance_mean=float(np.mean(values)),
        chance_sd=float(np.std(values, ddof=1)) if len(values) > 1 else 0.0,
        n_sims=model.n_sims)


# -- bootstrap -------------------------------------------------------------

def _content_key(values: np.ndarray) -> int:
    return stable_hash("samples", values.tobytes().hex())


def resampled_difference(a: np.ndarray, b: np.ndarray, rep: int, seed: int,
                         paired: bool) -> float:
    """One bootstrap replicate of the group difference.

    Streams are keyed by sample content rather than argument position, so
    swapping the groups negates the replicate exactly.
    """
    if paired:
        diffs = a - b
        key = tuple(sorted((_content_key(a), _content_key(b))))
        rng = derive_rng(seed, "boot-paired", rep, *key)
        idx = rng.integers(0, len(diffs), len(diffs))
        return float(np.mean(diffs[idx]))
    rng_a = derive_rng(seed, "boot-group", rep, _content_key(a))
    rng_b = derive_rng(seed, "boot-group", rep, _content_key(b))
    mean_a = float(np.mean(a[rng_a.integers(0, len(a), len(a))]))
    mean_b = float(np.mean(b[rng_b.integers(0, len(b), len(b))]))
    return mean_a - mean_b


def bootstrap_compare(a: Sequence[float], b: Sequence[float],
                      paired: bool = False, n_resamples: int = 10000,
                      seed: int = 0, metric_name: str = "difference",
                      ) -> StatReport:
    """Two-sided bootstrap test of mean difference: 2(A + 1) / (n + 1).

    A counts replicates strictly on the minority side of zero plus half of
    the exact zeros, so label order cannot matter and exact nulls cannot
    produce spuriously small p.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if paired and len(a) != len(b):
        raise SizeMismatch(f"paired groups differ: {len(a)} vs {len(b)}")
    if min(len(a), len(b)) < 2:
        raise TooFewSamples("need at least 2 samples per group")
    diffs = [resampled_difference(a, b, rep, seed, paired)
             for rep in range(n_resamples)]
    pos = sum(1 for d in diffs if d > 0)
    neg = sum(1 for d in diffs if d < 0)
    zero = len(diffs) - pos - neg
    minority = Fraction(min(pos, neg)) + Fraction(zero, 2)
    p = min(2 * (minority + 1) / (n_resamples + 1), Fraction(1))
    return StatReport(
        metric=metric_name,
        observed=float(np.mean(a) - np.mean(b)), seed=seed, p_raw=p,
        chance_mean=float(np.mean(diffs)),
        chance_sd=float(np.std(diffs, ddof=1)),
        n_resamples=n_resamples)


def bootstrap_ci(samples: Sequence[float], level: float = 0.95,
                 n_resamples: int = 1000, seed: int = 0,
                 method: str = "bca") -> tuple[float, float]:
    """Bootstrap confidence interval for the mean (BCa by default)."""
    data = np.asarray(samples, dtype=float)
    n = len(data)
    if n < 2:
        raise TooFewSamples("need at least 2 samples")
    if np.all(data == data[0]):
        return (float(data[0]), float(data[0]))
    observed = float(np.mean(data))
    boot = np.empty(n_resamples)
    for rep in range(n_resamples):
        rng = derive_rng(seed, "boot-ci", rep)
        boot[rep] = np.mean(data[rng.integers(0, n, n)])
    alpha = (1.0 - level) / 2.0
    if method == "percentile":
        return (float(np.quantile(boot, alpha)),
                float(np.quantile(boot, 1.0 - alpha)))
    if method != "bca":
        raise FormatError(f"unknown CI method {method!r}")
    # ties at the observed mean split half below, half above, so discrete
    # resampling distributions do not fake a bias
    below = np.count_nonzero(boot < observed) \
        + 0.5 * np.count_nonzero(boot == observed)
    frac = min(max(below / n_resamples, 1.0 / (n_resamples + 1)),
               n_resamples / (n_resamples + 1.0))
    z0 = float(ndtri(frac))
    # jackknife acceleration from leave-one-out means
    loo = (data.sum() - data) / (n - 1)
    dev = loo.mean() - loo
    denom = float(np.sum(dev * dev)) ** 1.5
    accel = float(np.sum(dev ** 3)) / (6.0 * denom) if denom > 0 else 0.0
    out = []
    for z in (ndtri(alpha), ndtri(1.0 - alpha)):
        adj = z0 + (z0 + z) / (1.0 - accel * (z0 + z))
        out.append(float(np.quantile(boot, float(ndtr(adj)))))
    return (out[0], out[1])


# -- multiple comparisons --------------------------------------------------

def fdr_adjust(p_values: Sequence) -> list:
    """Benjamini-Hochberg step-up adjustment, returned in input order."""
    m = len(p_values)
    for p in p_values:
        if not (0 < p <= 1):
            raise InvalidP(f"p value {p!r} outside (0, 1]")
    order = sorted(range(m), key=lambda i: p_values[i])
    adjusted = [None] * m
    running = None
    for rank in range(m, 0, -1):
        i = order[rank - 1]
        q = p_values[i] * m / rank
        running = q if running is None else min(running, q)
        adjusted[i] = min(running, 1)
    return adjusted


# -- repeated-measures ANOVA -----------------------------------------------

def rm_anova(data: Sequence[Sequence[float]]) -> dict:
    """One-way repeated-measures ANOVA over participants x conditions."""
    try:
        matrix = np.asarray(data, dtype=float)
    except ValueError as exc:
        raise ShapeError(f"ragged data: {exc}") from exc
    if matrix.ndim != 2:
        raise ShapeError("data must be a participants x conditions matrix")
    n, k = matrix.shape
    if n < 2 or k < 2:
        raise ShapeError(f"need >=2 participants and conditions, got {n}x{k}")
    grand = matrix.mean()
    cond_means = matrix.mean(axis=0)
    subj_means = matrix.mean(axis=1)
    ss_cond = n * float(np.sum((cond_means - grand) ** 2))
    residuals = matrix - cond_means[None, :] - subj_means[:, None] + grand
    ss_err = float(np.sum(residuals ** 2))
    df1 = k - 1
    df2 = (n - 1) * (k - 1)
    ms_err = ss_err / df2
    if ms_err == 0.0:
        raise DegenerateError("zero error variance")
    f_stat = (ss_cond / df1) / ms_err
    p = float(betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f_stat)))
    return {"F": f_stat, "df1": df1, "df2": df2, "p": p}


def with_fdr(reports: Sequence[StatReport]) -> list[StatReport]:
    """Attach FDR-adjusted p values across a family of reports."""
    ps = [r.p_raw for r in reports]
    if any(p is None for p in ps):
        raise InvalidP("every report needs a raw p before adjustment")
    adjusted = fdr_adjust(ps)
    return [replace(r, p_fdr=float(q)) for r, q in zip(reports, adjusted)]
