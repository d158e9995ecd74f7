"""Shared fixtures and tree generators for the test suite."""

from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import strategies as st

from delprobe import treebank as tb

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

CATEGORIES = ["S", "NP", "VP", "PP", "ADVP", "SBAR", "X", "Q"]
TAGS = ["NN", "VB", "DT", "JJ", "IN", "RB", "PRP"]
WORDS = ["cat", "dog", "ran", "saw", "the", "a", "green", "tea", "old", "boat"]


def load_bank(name: str, lang: str) -> list[tb.ConstituencyTree]:
    trees = []
    for i, line in enumerate(open(FIXTURES / name, encoding="utf-8")):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        trees.append(tb.parse_bracketed(line, lang=lang, sentence_id=f"{lang}-{i:04d}"))
    return trees


@pytest.fixture(scope="session")
def en_bank():
    return load_bank("en.trees", "en")


@pytest.fixture(scope="session")
def zh_bank():
    return load_bank("zh.trees", "zh")


def _build_tokens(n: int) -> tuple[tb.Token, ...]:
    return tuple(tb.Token(i, WORDS[i % len(WORDS)]) for i in range(n))


@st.composite
def binary_node(draw, lo: int, hi: int):
    """Random strictly binary subtree over token slots [lo, hi)."""
    if hi - lo == 1:
        return tb.Node(draw(st.sampled_from(TAGS)), lo, hi)
    k = draw(st.integers(lo + 1, hi - 1))
    left = draw(binary_node(lo, k))
    right = draw(binary_node(k, hi))
    return tb.Node(draw(st.sampled_from(CATEGORIES)), lo, hi, (left, right))


@st.composite
def binary_trees(draw, min_tokens: int = 2, max_tokens: int = 9):
    n = draw(st.integers(min_tokens, max_tokens))
    root = draw(binary_node(0, n))
    return tb.ConstituencyTree("t", "en", _build_tokens(n), root)


@st.composite
def nary_node(draw, lo: int, hi: int, depth_budget: int):
    if hi - lo == 1:
        leaf = tb.Node(draw(st.sampled_from(TAGS)), lo, hi)
        if depth_budget > 0 and draw(st.booleans()):
            return tb.Node(draw(st.sampled_from(CATEGORIES)), lo, hi, (leaf,))
        return leaf
    n_children = draw(st.integers(2, min(4, hi - lo)))
    # choose split points
    cuts = sorted(draw(st.lists(st.integers(lo + 1, hi - 1), min_size=n_children - 1,
                                max_size=n_children - 1, unique=True)))
    bounds = [lo] + cuts + [hi]
    children = tuple(
        draw(nary_node(bounds[i], bounds[i + 1], depth_budget - 1))
        for i in range(len(bounds) - 1)
    )
    return tb.Node(draw(st.sampled_from(CATEGORIES)), lo, hi, children)


@st.composite
def nary_trees(draw, min_tokens: int = 1, max_tokens: int = 9):
    """Random k-ary trees with occasional unary chains above leaves."""
    n = draw(st.integers(min_tokens, max_tokens))
    root = draw(nary_node(0, n, 3))
    return tb.ConstituencyTree("t", "en", _build_tokens(n), root)
