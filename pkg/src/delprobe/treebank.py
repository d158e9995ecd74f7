"""Constituency trees over tokenized sentences.

Trees are parsed from PTB/CTB-style bracketed strings such as

    (S (NP (PRP She)) (VP (VBD had) (NP (DT an) (NN idea))))

In the Node structure the lowest nodes are preterminals (part-of-speech
nodes), each covering exactly one token. The words themselves live in the
token list and count as one extra edge below their preterminal when
measuring depth, so a bare preterminal subtree already has depth 1 and the
tree above has depth 4 along S - VP - NP - NN - idea.

Spans are half-open token index pairs [start, end). Unary chains (distinct
nodes with identical spans) are preserved by the parser; span-level lookups
(`span_index`, `relation`, classification) resolve a span to the highest
node carrying it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Iterator

from .errors import NotBinary, ParseError, SpanNotANode

Span = tuple[int, int]

# Labels whose presence anywhere in a tree disqualifies the sentence from a
# probing bank: numbers, proper names, punctuation and trace/empty elements.
DEFAULT_EXCLUDED_LABELS = frozenset({
    "-NONE-", "CD", "OD", "NNP", "NNPS", "NR", "PU", "SYM", "LS", "FW",
    ".", ",", ":", "``", "''", "-LRB-", "-RRB-", "#", "$",
})

WRAPPER_LABELS = frozenset({"", "ROOT", "TOP"})


@dataclass(frozen=True)
class Token:
    index: int
    surface: str


@dataclass(frozen=True)
class Node:
    """One constituent: category label plus half-open token span.

    Leaves (preterminals) have no children and span exactly one token.
    """

    category: str
    start: int
    end: int
    children: tuple["Node", ...] = ()

    @property
    def span(self) -> Span:
        return (self.start, self.end)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ConstituencyTree:
    sentence_id: str
    lang: str
    tokens: tuple[Token, ...]
    root: Node

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    def token_surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]


def base_label(category: str) -> str:
    """Category with binarization primes stripped: "VP'" -> "VP"."""
    return category.rstrip("'")


# ---------------------------------------------------------------------------
# parsing and serialization


def parse_bracketed(text: str, lang: str = "en", sentence_id: str = "") -> ConstituencyTree:
    """Parse one bracketed tree string.

    Raises ParseError(position, reason) on unbalanced brackets, empty
    labels, leaves without a surface form, or trailing content. An outer
    single-child wrapper labeled '', ROOT or TOP is dropped.
    """
    i = 0
    n = len(text)
    tokens: list[Token] = []

    def skip_ws(j: int) -> int:
        while j < n and text[j].isspace():
            j += 1
        return j

    def read_atom(j: int) -> tuple[str, int]:
        k = j
        while k < n and not text[k].isspace() and text[k] not in "()":
            k += 1
        return text[j:k], k

    def parse_node(j: int) -> tuple[Node, int]:
        j = skip_ws(j)
        if j >= n or text[j] != "(":
            raise ParseError(j, "expected '('")
        j = skip_ws(j + 1)
        label, j = read_atom(j)
        j = skip_ws(j)
        if j < n and text[j] == "(":
            children = []
            start = len(tokens)
            while j < n and text[j] == "(":
                child, j = parse_node(j)
                children.append(child)
                j = skip_ws(j)
            if j >= n or text[j] != ")":
                raise ParseError(j, "unbalanced brackets: expected ')'")
            if label == "" and len(children) != 1:
                raise ParseError(j, "empty label on a multi-child node")
            return Node(label, start, len(tokens), tuple(children)), j + 1
        # leaf: label + surface
        surface, j2 = read_atom(j)
        if surface == "":
            raise ParseError(j, "leaf without a surface form")
        if label == "":
            raise ParseError(j, "leaf without a category label")
        j = skip_ws(j2)
        if j >= n or text[j] != ")":
            raise ParseError(j, "unbalanced brackets: expected ')' after leaf")
        idx = len(tokens)
        tokens.append(Token(idx, surface))
        return Node(label, idx, idx + 1), j + 1

    root, i = parse_node(0)
    i = skip_ws(i)
    if i != n:
        raise ParseError(i, "trailing content after tree")
    while root.category in WRAPPER_LABELS and len(root.children) == 1:
        root = root.children[0]
    if root.category in WRAPPER_LABELS and root.is_leaf:
        raise ParseError(0, "tree reduces to an unlabeled leaf")
    if not tokens:
        raise ParseError(0, "tree has no tokens")
    tree = ConstituencyTree(sentence_id, lang, tuple(tokens), root)
    for node, _ in iter_nodes(tree):
        if node.category == "":
            raise ParseError(0, "empty category label below the root")
    return tree


def to_bracketed(tree: ConstituencyTree) -> str:
    """Serialize back to a single-line bracketed string (round-trips)."""

    def render(node: Node) -> str:
        if node.is_leaf:
            return f"({node.category} {tree.tokens[node.start].surface})"
        return "(" + node.category + " " + " ".join(render(c) for c in node.children) + ")"

    return render(tree.root)


def to_dot(tree: ConstituencyTree) -> str:
    """GraphViz DOT rendering with words as boxed terminals."""
    lines = ["digraph tree {", '  node [fontname="Helvetica"];']
    counter = 0

    def emit(node: Node) -> str:
        nonlocal counter
        name = f"n{counter}"
        counter += 1
        lines.append(f'  {name} [label="{node.category}"];')
        if node.is_leaf:
            word = tree.tokens[node.start].surface.replace('"', '\\"')
            lines.append(f'  {name}_w [label="{word}" shape=box];')
            lines.append(f"  {name} -> {name}_w;")
        else:
            for child in node.children:
                lines.append(f"  {name} -> {emit(child)};")
        return name

    emit(tree.root)
    lines.append("}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# traversal and metrics


def iter_nodes(tree: ConstituencyTree) -> Iterator[tuple[Node, Node | None]]:
    """Pre-order (node, parent) pairs."""
    stack: list[tuple[Node, Node | None]] = [(tree.root, None)]
    while stack:
        node, parent = stack.pop()
        yield node, parent
        for child in reversed(node.children):
            stack.append((child, node))


def depth(tree: ConstituencyTree) -> int:
    """Edges from the root to the farthest word, words counted as leaves."""

    def f(node: Node) -> int:
        if node.is_leaf:
            return 1  # the edge from the preterminal down to its word
        return 1 + max(f(c) for c in node.children)

    return f(tree.root)


@dataclass(frozen=True)
class TreeMetrics:
    depth: int
    n_nodes: int
    n_internal: int
    constituent_spans: frozenset[tuple[Span, str, str | None]]


def tree_metrics(tree: ConstituencyTree) -> TreeMetrics:
    """Depth, node counts and the (span, category, parent category) set."""
    spans = []
    n_nodes = 0
    n_internal = 0
    for node, parent in iter_nodes(tree):
        n_nodes += 1
        if not node.is_leaf:
            n_internal += 1
        spans.append((node.span, node.category, parent.category if parent else None))
    return TreeMetrics(depth(tree), n_nodes, n_internal, frozenset(spans))


@dataclass(frozen=True)
class SpanInfo:
    category: str
    parent_category: str | None


def span_index(tree: ConstituencyTree) -> dict[Span, SpanInfo]:
    """Map each distinct node span to the highest node carrying it.

    Unary chains collapse to their topmost member: the category is the top
    node's label and the parent category belongs to the node above the whole
    chain (None for the root span).
    """
    out: dict[Span, SpanInfo] = {}
    for node, parent in iter_nodes(tree):
        if node.span not in out:  # pre-order: first visit is the highest node
            out[node.span] = SpanInfo(node.category, parent.category if parent else None)
    return out


def node_spans(tree: ConstituencyTree) -> frozenset[Span]:
    return frozenset(span_index(tree))


def relation(tree: ConstituencyTree, span_a: Span, span_b: Span) -> str:
    """Structural relation of span A to span B: 'direct_child',
    'descendant' or 'none'. Spans are resolved to their highest nodes, so
    unary chains never relate a span to itself.
    """
    span_a = tuple(span_a)
    span_b = tuple(span_b)
    highest: dict[Span, Node] = {}
    parents: dict[int, Node | None] = {}
    for node, parent in iter_nodes(tree):
        parents[id(node)] = parent
        if node.span not in highest:
            highest[node.span] = node
    if span_a not in highest:
        raise SpanNotANode(f"span {span_a} is not a node of the tree")
    if span_b not in highest:
        raise SpanNotANode(f"span {span_b} is not a node of the tree")
    if span_a == span_b:
        return "none"
    node = highest[span_a]
    up = parents[id(node)]
    if up is not None and up.span == span_b:
        return "direct_child"
    while up is not None:
        if up.span == span_b:
            return "descendant"
        up = parents[id(up)]
    return "none"


# ---------------------------------------------------------------------------
# transforms


def binarize(tree: ConstituencyTree) -> ConstituencyTree:
    """Right-binarize: children c1..ck become (c1 (c2 (.. ck))) with the
    intermediate nodes labeled with the parent label plus a prime.

    Unary nodes are left in place, so the result has 1 or 2 children per
    non-leaf node; idempotent; the original node spans all survive.
    """

    def chain(label: str, nodes: list[Node], start: int) -> Node:
        if len(nodes) == 1:
            return nodes[0]
        head, rest = nodes[0], nodes[1:]
        tail = chain(label, rest, rest[0].start)
        return Node(label, head.start, tail.end, (head, tail))

    def walk(node: Node) -> Node:
        if node.is_leaf:
            return node
        children = [walk(c) for c in node.children]
        if len(children) <= 2:
            return Node(node.category, node.start, node.end, tuple(children))
        primed = base_label(node.category) + "'"
        tail = chain(primed, children[1:], children[1].start)
        return Node(node.category, node.start, node.end, (children[0], tail))

    return ConstituencyTree(tree.sentence_id, tree.lang, tree.tokens, walk(tree.root))


def collapse_unary(tree: ConstituencyTree) -> ConstituencyTree:
    """Merge unary chains keeping the topmost label of each chain.

    A chain ending at a preterminal collapses onto the leaf, which keeps
    the top label. Useful to make binarized trees strictly binary before
    balance computations.
    """

    def walk(node: Node) -> Node:
        while len(node.children) == 1:
            node = Node(node.category, node.start, node.end, node.children[0].children)
        return Node(node.category, node.start, node.end, tuple(walk(c) for c in node.children))

    return ConstituencyTree(tree.sentence_id, tree.lang, tree.tokens, walk(tree.root))


def mirror(tree: ConstituencyTree) -> ConstituencyTree:
    """Left-right mirror image: token order reversed, children reversed."""
    n = tree.n_tokens
    new_tokens = tuple(
        Token(i, t.surface) for i, t in enumerate(reversed(tree.tokens))
    )

    def walk(node: Node) -> Node:
        return Node(
            node.category,
            n - node.end,
            n - node.start,
            tuple(walk(c) for c in reversed(node.children)),
        )

    return ConstituencyTree(tree.sentence_id, tree.lang, new_tokens, walk(tree.root))


# ---------------------------------------------------------------------------
# balance


def balance_factor(tree: ConstituencyTree) -> Fraction | float:
    """Total right-descendant count over total left-descendant count.

    For every 2-child node the right (left) contribution is the size of the
    right (left) child's subtree, leaves included. Requires a strictly
    binary tree; a single-leaf tree has no branching at all and returns the
    +inf sentinel.
    """

    sizes: dict[int, int] = {}

    def size(node: Node) -> int:
        s = 1 + sum(size(c) for c in node.children)
        sizes[id(node)] = s
        return s

    size(tree.root)
    right_total = 0
    left_total = 0
    for node, _ in iter_nodes(tree):
        if node.is_leaf:
            continue
        if len(node.children) != 2:
            raise NotBinary(
                f"node {node.category}{node.span} has {len(node.children)} children"
            )
        left_total += sizes[id(node.children[0])]
        right_total += sizes[id(node.children[1])]
    if left_total == 0:
        return math.inf
    return Fraction(right_total, left_total)


# ---------------------------------------------------------------------------
# bank filtering


def filter_bank(
    trees: Iterable[ConstituencyTree],
    min_tokens: int = 4,
    max_tokens: int = 15,
    min_depth: int = 3,
    max_depth: int = 8,
    excluded_labels: frozenset[str] = DEFAULT_EXCLUDED_LABELS,
) -> list[ConstituencyTree]:
    """Keep sentences usable as probing stimuli.

    Length and depth bounds are inclusive; a sentence is dropped if any
    node label (phrase or part of speech) appears in excluded_labels.
    """
    kept = []
    for tree in trees:
        if not (min_tokens <= tree.n_tokens <= max_tokens):
            continue
        if not (min_depth <= depth(tree) <= max_depth):
            continue
        if any(node.category in excluded_labels for node, _ in iter_nodes(tree)):
            continue
        kept.append(tree)
    return kept
