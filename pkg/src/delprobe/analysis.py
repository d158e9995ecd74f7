"""Response reduction and behavioral metrics.

Takes the raw text a participant produced for a trial, recovers which words
were deleted relative to the original sentence, classifies the deletion
against the test sentence's tree, and aggregates the rates the experiments
report (constituent rate, rule explained ratios, target-string rates).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .errors import EmptyGroup, FormatError, MissingTargetSpan, UnknownTrial
from .taskgen import Trial
from .treebank import ConstituencyTree, Span, base_label, span_index

QUOTE_CHARS = "\"'`‘’“”‚„«»‹›" \
              "「」『』〈〉《》"
TERMINAL_PUNCT = ".!?。！？…"


@dataclass(frozen=True)
class DeletionResult:
    """What a response did to the original sentence.

    kind is one of single_gap, multi_gap, no_deletion, addition, empty.
    span is set only for single_gap, spans only for multi_gap.
    """

    kind: str
    normalized_tokens: tuple[str, ...]
    span: Optional[Span] = None
    spans: Optional[tuple[Span, ...]] = None


@dataclass(frozen=True)
class ClassifiedDeletion:
    """A deletion judged against the test tree.

    label is constituent, nonconstituent, or other. span and the category
    fields are populated only where the label warrants them; kind carries
    the underlying DeletionResult kind so edge cases stay auditable.
    """

    trial_id: str
    label: str
    kind: str
    span: Optional[Span] = None
    node_cat: Optional[str] = None
    parent_cat: Optional[str] = None


def normalize_response(text: str, lang: str) -> tuple[str, ...]:
    """Reduce raw response text to comparison tokens.

    Strips surrounding quote characters and terminal punctuation, then
    tokenizes: whitespace words (case-folded) for en, individual characters
    (whitespace removed) for zh.
    """
    s = text.strip()
    s = s.strip(QUOTE_CHARS).strip()
    while s and s[-1] in TERMINAL_PUNCT:
        s = s[:-1].rstrip()
    s = s.strip(QUOTE_CHARS).strip()
    if lang == "zh":
        return tuple(ch for ch in s if not ch.isspace())
    return tuple(s.casefold().split())


def _single_gap_candidates(original: Sequence[str],
                           response: Sequence[str]) -> list[Span]:
    n, m = len(original), len(response)
    gap = n - m
    if gap < 1:
        return []
    out = []
    for s in range(m + 1):
        if (tuple(original[:s]) == tuple(response[:s])
                and tuple(original[s + gap:]) == tuple(response[s:])):
            out.append((s, s + gap))
    return out


def _min_gap_alignment(original: Sequence[str],
                       response: Sequence[str]) -> Optional[list[Span]]:
    """Deleted spans of the fewest-gaps subsequence embedding, or None.

    Ties between equally gappy alignments break toward matching response
    tokens as early as possible, which generalizes the max-common-prefix
    rule used for single gaps.
    """
    n, m = len(original), len(response)
    if m == 0 or m >= n:
        return None
    big = n + 2
    # suffix[i][j][last] = min further gaps from (i, j); last=1 means
    # original[i-1] was deleted so extending that gap is free
    suffix = [[[big, big] for _ in range(m + 1)] for _ in range(n + 1)]
    suffix[n][m][0] = suffix[n][m][1] = 0
    for i in range(n - 1, -1, -1):
        for j in range(m, -1, -1):
            for last in (0, 1):
                best = big
                if j < m and original[i] == response[j]:
                    best = suffix[i + 1][j + 1][0]
                cost = 0 if last == 1 else 1
                cand = cost + suffix[i + 1][j][1]
                if cand < best:
                    best = cand
                suffix[i][j][last] = best
    if suffix[0][0][0] >= big:
        return None
    deleted = []
    i = j = 0
    last = 0
    while i < n:
        keep_ok = (j < m and original[i] == response[j]
                   and suffix[i + 1][j + 1][0] == suffix[i][j][last])
        if keep_ok:
            i, j, last = i + 1, j + 1, 0
        else:
            deleted.append(i)
            i, last = i + 1, 1
    spans: list[Span] = []
    for pos in deleted:
        if spans and spans[-1][1] == pos:
            spans[-1] = (spans[-1][0], pos + 1)
        else:
            spans.append((pos, pos + 1))
    return spans


def extract_deletion(original_tokens: Sequence[str], response_text: str,
                     lang: str) -> DeletionResult:
    """Recover the deletion a response performed on the original sentence.

    Every input maps to exactly one result; nothing raises.
    """
    if not original_tokens:
        raise FormatError("original sentence has no tokens")
    response = normalize_response(response_text, lang)
    if lang == "zh":
        original = tuple(original_tokens)
    else:
        original = tuple(t.casefold() for t in original_tokens)
    if not response:
        return DeletionResult(kind="empty", normalized_tokens=response)
    if response == original:
        return DeletionResult(kind="no_deletion", normalized_tokens=response)
    candidates = _single_gap_candidates(original, response)
    if candidates:
        span = max(candidates, key=lambda c: c[0])
        return DeletionResult(kind="single_gap", normalized_tokens=response,
                              span=span)
    gaps = _min_gap_alignment(original, response)
    if gaps is not None:
        return DeletionResult(kind="multi_gap", normalized_tokens=response,
                              spans=tuple(gaps))
    return DeletionResult(kind="addition", normalized_tokens=response)


def classify(result: DeletionResult, test_tree: ConstituencyTree,
             trial_id: str = "") -> ClassifiedDeletion:
    """Sort a deletion into constituent / nonconstituent / other.

    An empty response deleted the whole sentence, and the full span is the
    root node, so it counts as a constituent deletion rather than a refusal.
    """
    index = span_index(test_tree)
    if result.kind == "single_gap":
        span = result.span
        assert span is not None
        info = index.get(span)
        if info is not None:
            return ClassifiedDeletion(trial_id, "constituent", result.kind,
                                      span=span, node_cat=info.category,
                                      parent_cat=info.parent_category)
        return ClassifiedDeletion(trial_id, "nonconstituent", result.kind,
                                  span=span)
    if result.kind == "empty":
        span = (0, test_tree.n_tokens)
        info = index[span]
        return ClassifiedDeletion(trial_id, "constituent", result.kind,
                                  span=span, node_cat=info.category,
                                  parent_cat=info.parent_category)
    if result.kind == "multi_gap":
        return ClassifiedDeletion(trial_id, "nonconstituent", result.kind)
    return ClassifiedDeletion(trial_id, "other", result.kind)


def classified_to_dict(record: ClassifiedDeletion) -> dict:
    return {
        "trial_id": record.trial_id,
        "class": record.label,
        "span": list(record.span) if record.span is not None else None,
        "node_cat": record.node_cat,
        "parent_cat": record.parent_cat,
        "kind": record.kind,
    }


def classified_from_dict(data: Mapping) -> ClassifiedDeletion:
    try:
        span = data["span"]
        return ClassifiedDeletion(
            trial_id=data["trial_id"], label=data["class"],
            kind=data["kind"],
            span=tuple(span) if span is not None else None,
            node_cat=data.get("node_cat"), parent_cat=data.get("parent_cat"))
    except KeyError as exc:
        raise FormatError(f"classified record missing key {exc}") from exc


def class_rates(records: Iterable[ClassifiedDeletion]) -> dict[str, Fraction]:
    """Share of each class over all records, others in the denominator."""
    records = list(records)
    if not records:
        raise EmptyGroup("no classified records to rate")
    total = len(records)
    out = {}
    for label in ("constituent", "nonconstituent", "other"):
        out[label] = Fraction(sum(1 for r in records if r.label == label),
                              total)
    return out


def constituent_rate(records: Iterable[ClassifiedDeletion]) -> Fraction:
    return class_rates(records)["constituent"]


def kind_counts(records: Iterable[ClassifiedDeletion]) -> dict[str, int]:
    """Tally of raw deletion kinds, for auditing edge-case policy."""
    out: dict[str, int] = {}
    for record in records:
        out[record.kind] = out.get(record.kind, 0) + 1
    return dict(sorted(out.items()))


def _is_dissociated(trial: Trial) -> bool:
    return bool(trial.flags.get("np_is_indirect_descendant")
                or trial.flags.get("node_parent_split"))


def _ratio(flags: list[bool]) -> Optional[Fraction]:
    if not flags:
        return None
    return Fraction(sum(flags), len(flags))


def rule_match_vectors(trials: Sequence[Trial],
                       classified: Sequence[ClassifiedDeletion],
                       ) -> dict[str, list[bool]]:
    """Per-constituent-response indicators of node and parent rule matches.

    One boolean per constituent-class record, in input order; the
    dissociated vectors restrict to trials whose flags mark the node and
    parent cues as pulling apart.
    """
    by_id = {t.trial_id: t for t in trials}
    vectors: dict[str, list[bool]] = {
        "node": [], "parent": [], "node_dissociated": [],
        "parent_dissociated": []}
    for record in classified:
        trial = by_id.get(record.trial_id)
        if trial is None:
            raise UnknownTrial(f"no trial for classified {record.trial_id!r}")
        if record.label != "constituent":
            continue
        node_match = (record.node_cat is not None
                      and base_label(record.node_cat) == trial.demo.node_cat)
        parent_match = (record.parent_cat is not None
                        and trial.demo.parent_cat is not None
                        and base_label(record.parent_cat)
                        == trial.demo.parent_cat)
        vectors["node"].append(node_match)
        vectors["parent"].append(parent_match)
        if _is_dissociated(trial):
            vectors["node_dissociated"].append(node_match)
            vectors["parent_dissociated"].append(parent_match)
    return vectors


def rule_explained_ratios(trials: Sequence[Trial],
                          classified: Sequence[ClassifiedDeletion]) -> dict:
    """How well the node and parent rules explain constituent deletions.

    Computed only over constituent-class tests; an empty basis yields None
    (a missing value, never 0).
    """
    vectors = rule_match_vectors(trials, classified)
    return {
        "node_ratio": _ratio(vectors["node"]),
        "parent_ratio": _ratio(vectors["parent"]),
        "node_ratio_dissociated": _ratio(vectors["node_dissociated"]),
        "parent_ratio_dissociated": _ratio(vectors["parent_dissociated"]),
        "n_constituent": len(vectors["node"]),
        "n_dissociated": len(vectors["node_dissociated"]),
    }


def target_string_rates(trials: Sequence[Trial],
                        classified: Sequence[ClassifiedDeletion],
                        ) -> dict[str, Fraction]:
    """Per-condition rate of deleting exactly the annotated target span."""
    by_id = {r.trial_id: r for r in classified}
    hits: dict[str, list[bool]] = {}
    for trial in trials:
        if trial.experiment != "4":
            continue
        if trial.target_span is None:
            raise MissingTargetSpan(trial.trial_id)
        record = by_id.get(trial.trial_id)
        if record is None:
            raise UnknownTrial(f"no classified record for {trial.trial_id!r}")
        matched = (record.kind == "single_gap"
                   and record.span == trial.target_span)
        hits.setdefault(trial.condition or "unknown", []).append(matched)
    return {cond: Fraction(sum(v), len(v))
            for cond, v in sorted(hits.items())}
