"""Latent tree recovery from pooled deletions.

Pools the spans deleted across many tests of one sentence, then finds the
binary bracketing that explains the largest share of them with a weighted
CKY chart. Also scores trees against each other (explained ratio, F1) and
summarizes tree shape over a collection.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .errors import EmptyList, EmptyPool, FormatError, LengthMismatch
from .treebank import (ConstituencyTree, Node, Span, Token, balance_factor,
                       depth, iter_nodes, node_spans, to_bracketed)


@dataclass(frozen=True)
class SpanDistribution:
    """Pooled deletion counts for one test sentence."""

    sentence_id: str
    n: int
    counts: Mapping[Span, int]
    tokens: tuple[str, ...] = ()

    def __post_init__(self):
        for (s, e) in self.counts:
            if not (0 <= s < e <= self.n):
                raise FormatError(f"span ({s}, {e}) outside [0, {self.n})")
        if self.total <= 0:
            raise FormatError("distribution has no mass")

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def weight(self, span: Span) -> Fraction:
        return Fraction(self.counts.get(span, 0), self.total)


@dataclass(frozen=True)
class ReconstructedTree:
    sentence_id: str
    tree: ConstituencyTree
    explained_ratio: Fraction
    unexplained: tuple[tuple[Span, Fraction], ...]


def span_distribution(records, sentence_id: str, n: int,
                      tokens: Sequence[str] = ()) -> SpanDistribution:
    """Pool the single-gap deletions recorded for one sentence.

    Only actual single-span deletions are poolable; whole-sentence,
    multi-gap, and other-class records carry no usable span.
    """
    counts: dict[Span, int] = {}
    for record in records:
        if record.kind != "single_gap":
            continue
        assert record.span is not None
        counts[record.span] = counts.get(record.span, 0) + 1
    if not counts:
        raise EmptyPool(f"no single-gap deletions for {sentence_id!r}")
    return SpanDistribution(sentence_id=sentence_id, n=n,
                            counts=dict(sorted(counts.items())),
                            tokens=tuple(tokens))


def cky_reconstruct(dist: SpanDistribution) -> ReconstructedTree:
    """Binary tree over the sentence maximizing the explained ratio.

    best(i,j) = w(i,j) + max over splits k of best(i,k) + best(k,j), all in
    exact rational arithmetic; equal-scoring splits resolve to the smallest
    k so reruns agree byte for byte.
    """
    n = dist.n
    best: dict[Span, Fraction] = {}
    split: dict[Span, int] = {}
    for i in range(n):
        best[(i, i + 1)] = dist.weight((i, i + 1))
    for width in range(2, n + 1):
        for i in range(n - width + 1):
            j = i + width
            top = None
            arg = None
            for k in range(i + 1, j):
                score = best[(i, k)] + best[(k, j)]
                if top is None or score > top:
                    top, arg = score, k
            best[(i, j)] = dist.weight((i, j)) + top
            split[(i, j)] = arg

    def build(i: int, j: int) -> Node:
        if j - i == 1:
            return Node("X", i, j, ())
        k = split[(i, j)]
        return Node("X", i, j, (build(i, k), build(k, j)))

    tokens = dist.tokens or tuple(f"w{i}" for i in range(n))
    tree = ConstituencyTree(
        sentence_id=dist.sentence_id, lang="",
        tokens=tuple(Token(i, t) for i, t in enumerate(tokens)),
        root=build(0, n))
    explained = node_spans(tree)
    unexplained = tuple((span, dist.weight(span))
                        for span in sorted(dist.counts)
                        if span not in explained)
    return ReconstructedTree(sentence_id=dist.sentence_id, tree=tree,
                             explained_ratio=best[(0, n)],
                             unexplained=unexplained)


def tree_explained_ratio(tree: ConstituencyTree,
                         dist: SpanDistribution) -> Fraction:
    """Share of pooled deletions that are node spans of the tree."""
    if tree.n_tokens != dist.n:
        raise LengthMismatch(
            f"tree covers {tree.n_tokens} tokens, distribution {dist.n}")
    spans = node_spans(tree)
    hit = sum(c for span, c in dist.counts.items() if span in spans)
    return Fraction(hit, dist.total)


def _scored_spans(tree: ConstituencyTree, min_len: int,
                  include_full: bool) -> frozenset[Span]:
    n = tree.n_tokens
    spans = {node.span for node, _ in iter_nodes(tree)
             if node.end - node.start >= min_len}
    if not include_full:
        spans.discard((0, n))
    return frozenset(spans)


def f1_score(tree_a: ConstituencyTree, tree_b: ConstituencyTree,
             min_len: int = 2, include_full: bool = True) -> Fraction:
    """Unlabeled span F1 = 2O / (L + D) between two trees.

    Spans count once each (unary chains collapse), length-1 spans are
    excluded by default, and the full-sentence span is included; both
    conventions are parameters so alternates can be compared.
    """
    if tree_a.n_tokens != tree_b.n_tokens:
        raise LengthMismatch(
            f"trees cover {tree_a.n_tokens} vs {tree_b.n_tokens} tokens")
    a = _scored_spans(tree_a, min_len, include_full)
    b = _scored_spans(tree_b, min_len, include_full)
    if not a and not b:
        return Fraction(1)
    return Fraction(2 * len(a & b), len(a) + len(b))


def _level_widths(tree: ConstituencyTree) -> list[int]:
    widths: list[int] = []
    frontier = [tree.root]
    while frontier:
        widths.append(len(frontier))
        frontier = [c for node in frontier for c in node.children]
    return widths


def aggregate_tree_stats(trees: Sequence[ConstituencyTree]) -> dict:
    """Shape summary over a collection of strictly binary trees.

    mean_balance skips the single-leaf sentinel (no two-child nodes to
    weigh) and is None if nothing remains.
    """
    trees = list(trees)
    if not trees:
        raise EmptyList("no trees to aggregate")
    depths = [depth(t) for t in trees]
    balances = [balance_factor(t) for t in trees]
    finite = [b for b in balances if isinstance(b, Fraction)]
    histogram: dict[int, int] = {}
    for d in depths:
        histogram[d] = histogram.get(d, 0) + 1
    level_sums: dict[int, int] = {}
    level_counts: dict[int, int] = {}
    for tree in trees:
        for level, width in enumerate(_level_widths(tree)):
            level_sums[level] = level_sums.get(level, 0) + width
            level_counts[level] = level_counts.get(level, 0) + 1
    return {
        "n_trees": len(trees),
        "mean_depth": Fraction(sum(depths), len(depths)),
        "mean_balance": (sum(finite) / len(finite)) if finite else None,
        "depth_histogram": dict(sorted(histogram.items())),
        "mean_width_by_level": {
            level: Fraction(level_sums[level], level_counts[level])
            for level in sorted(level_sums)},
    }


def reconstruction_to_dict(rec: ReconstructedTree) -> dict:
    return {
        "sentence_id": rec.sentence_id,
        "tree": to_bracketed(rec.tree),
        "explained_ratio": float(rec.explained_ratio),
        "unexplained": [{"span": list(span), "proportion": float(p)}
                        for span, p in rec.unexplained],
    }


def distribution_to_dict(dist: SpanDistribution) -> dict:
    return {
        "sentence_id": dist.sentence_id,
        "n": dist.n,
        "tokens": list(dist.tokens),
        "counts": [[s, e, c] for (s, e), c in sorted(dist.counts.items())],
        "total": dist.total,
    }


def distribution_from_dict(data: Mapping) -> SpanDistribution:
    try:
        counts = {(s, e): c for s, e, c in data["counts"]}
        return SpanDistribution(sentence_id=data["sentence_id"],
                                n=data["n"], counts=counts,
                                tokens=tuple(data.get("tokens", ())))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad distribution record: {exc}") from exc
