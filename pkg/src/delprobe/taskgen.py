"""Trial generation for the one-shot deletion experiments.

A trial pairs one demonstration (a sentence with one constituent deleted)
with one test sentence. Four generators cover the experiment designs:

  exp1   demo deletes a multi-word NP directly under a VP; tests contain a
         multi-word NP somewhere below a VP (variant "b" restricts both
         sides to structure-matched parallel sentences)
  exp2   demo deletes an arbitrary non-root constituent; tests must offer
         both the same node category and the same parent category
  exp3   demos sweep every (node, parent) category combination in the bank
         and every test sentence is paired with every demonstration
  exp4   tests are structurally ambiguous sentences with an annotated
         target span; demos delete the NP2 of a template sentence

Sampling is seeded and without replacement within a run; demo and test
sentence ids always differ within a trial.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

from .errors import (EmptyPool, FormatError, InsufficientPool, PoolError,
                     UnknownTemplate)
from .seeding import derive_rng
from .treebank import (ConstituencyTree, Span, base_label, iter_nodes,
                       node_spans, span_index, to_bracketed)


@dataclass(frozen=True)
class Demonstration:
    sentence_id: str
    tokens: tuple[str, ...]
    deleted_span: Span
    node_cat: str | None
    parent_cat: str | None


@dataclass(frozen=True)
class TestItem:
    sentence_id: str
    tokens: tuple[str, ...]
    tree: str
    lang: str


@dataclass
class Trial:
    trial_id: str
    run_id: int
    experiment: str
    demo: Demonstration
    test: TestItem
    flags: dict
    condition: str | None = None
    target_span: Span | None = None


def remainder_tokens(tokens: Sequence[str], span: Span) -> list[str]:
    s, e = span
    return list(tokens[:s]) + list(tokens[e:])


def detokenize(tokens: Sequence[str], lang: str) -> str:
    return (" " if lang == "en" else "").join(tokens)


# ---------------------------------------------------------------------------
# serialization

def trial_to_dict(t: Trial) -> dict:
    return {
        "trial_id": t.trial_id,
        "run_id": t.run_id,
        "experiment": t.experiment,
        "demo": {
            "sentence_id": t.demo.sentence_id,
            "tokens": list(t.demo.tokens),
            "deleted_span": list(t.demo.deleted_span),
            "node_cat": t.demo.node_cat,
            "parent_cat": t.demo.parent_cat,
        },
        "test": {
            "sentence_id": t.test.sentence_id,
            "tokens": list(t.test.tokens),
            "tree": t.test.tree,
            "lang": t.test.lang,
        },
        "flags": t.flags,
        "condition": t.condition,
        "target_span": list(t.target_span) if t.target_span else None,
    }


def trial_from_dict(d: dict) -> Trial:
    try:
        demo = Demonstration(
            d["demo"]["sentence_id"], tuple(d["demo"]["tokens"]),
            tuple(d["demo"]["deleted_span"]), d["demo"]["node_cat"],
            d["demo"]["parent_cat"])
        test = TestItem(
            d["test"]["sentence_id"], tuple(d["test"]["tokens"]),
            d["test"]["tree"], d["test"].get("lang", "en"))
        return Trial(
            d["trial_id"], d["run_id"], d["experiment"], demo, test,
            d.get("flags") or {}, d.get("condition"),
            tuple(d["target_span"]) if d.get("target_span") else None)
    except KeyError as e:
        raise FormatError(f"trial row missing key {e}") from e


# ---------------------------------------------------------------------------
# span predicates

def np_spans_under_vp(tree: ConstituencyTree) -> tuple[list[Span], list[Span]]:
    """Multi-word NP spans that are direct children of a VP, and those that
    are descendants of some VP (direct or not). Spans resolve to their
    highest node, matching how responses are classified later.
    """
    highest: dict[Span, object] = {}
    parents: dict[int, object] = {}
    for node, parent in iter_nodes(tree):
        parents[id(node)] = parent
        if node.span not in highest:
            highest[node.span] = node
    direct, anywhere = [], []
    for span, node in highest.items():
        if span[1] - span[0] < 2 or base_label(node.category) != "NP":
            continue
        up = parents[id(node)]
        if up is not None and base_label(up.category) == "VP":
            direct.append(span)
        while up is not None:
            if base_label(up.category) == "VP":
                anywhere.append(span)
                break
            up = parents[id(up)]
    return sorted(direct), sorted(anywhere)


def candidate_spans(tree: ConstituencyTree, min_len: int = 1) -> list[Span]:
    """Distinct non-root spans, shortest-first then left-to-right."""
    full = (0, tree.n_tokens)
    spans = [s for s in node_spans(tree) if s != full and s[1] - s[0] >= min_len]
    return sorted(spans, key=lambda s: (s[1] - s[0], s))


def _root_is_clause(tree: ConstituencyTree) -> bool:
    return base_label(tree.root.category) in {"S", "IP"}


def object_np_in_vp(tree: ConstituencyTree) -> Span | None:
    """Span of the object NP in a [S [NP] [VP .. [NP ..] ..]] sentence;
    None when the shape does not match (PP-embedded objects do not count).
    """
    if not _root_is_clause(tree):
        return None
    cats = [base_label(c.category) for c in tree.root.children]
    if "NP" not in cats or "VP" not in cats:
        return None
    vp = tree.root.children[cats.index("VP")]
    if any(base_label(c.category) == "PP" for c in vp.children):
        return None
    for child in vp.children:
        if base_label(child.category) == "NP" and len(child) >= 2:
            return child.span
    return None


def pp_np_in_vp(tree: ConstituencyTree) -> Span | None:
    """Span of the NP inside [S [NP] [VP .. [PP .. [NP ..]] ..]]."""
    if not _root_is_clause(tree):
        return None
    cats = [base_label(c.category) for c in tree.root.children]
    if "NP" not in cats or "VP" not in cats:
        return None
    vp = tree.root.children[cats.index("VP")]
    for child in vp.children:
        if base_label(child.category) == "PP":
            for grand in child.children:
                if base_label(grand.category) == "NP" and len(grand) >= 2:
                    return grand.span
    return None


# ---------------------------------------------------------------------------
# experiment 1

def _pick_distinct_tests(rng, demo_idx: list[int], test_pool: list[int],
                         bank_ids: list[str], n: int) -> list[int]:
    """Choose n test sentences without replacement, never equal to the
    demo at the same position; fixes collisions by swapping positions."""
    if len(test_pool) < n:
        raise InsufficientPool(
            f"test pool has {len(test_pool)} sentences, need {n}")
    picked = [test_pool[i] for i in rng.choice(len(test_pool), size=n, replace=False)]
    for i in range(n):
        if bank_ids[picked[i]] != bank_ids[demo_idx[i]]:
            continue
        for j in range(n):
            if (bank_ids[picked[j]] != bank_ids[demo_idx[i]]
                    and bank_ids[picked[i]] != bank_ids[demo_idx[j]]):
                picked[i], picked[j] = picked[j], picked[i]
                break
        else:
            raise InsufficientPool("cannot pair distinct demo and test sentences")
    return picked


def gen_exp1(bank: list[ConstituencyTree], n_trials: int, seed: int,
             variant: str = "a", run_id: int = 0) -> list[Trial]:
    """One run of the NP-under-VP deletion experiment."""
    if variant not in ("a", "b"):
        raise ValueError(f"unknown variant {variant!r}")
    if not bank:
        raise EmptyPool("empty bank")
    ids = [t.sentence_id for t in bank]
    if variant == "a":
        demo_pool = [i for i, t in enumerate(bank) if np_spans_under_vp(t)[0]]
        test_pool = [i for i, t in enumerate(bank) if np_spans_under_vp(t)[1]]
    else:
        demo_pool = [i for i, t in enumerate(bank) if object_np_in_vp(t)]
        test_pool = [i for i, t in enumerate(bank) if pp_np_in_vp(t)]
    if len(demo_pool) < n_trials:
        raise InsufficientPool(
            f"demo pool has {len(demo_pool)} sentences, need {n_trials}")
    rng = derive_rng(seed, "exp1", variant, run_id)
    demo_idx = [demo_pool[i] for i in
                rng.choice(len(demo_pool), size=n_trials, replace=False)]
    test_idx = _pick_distinct_tests(rng, demo_idx, test_pool, ids, n_trials)

    trials = []
    exp = "1" + variant
    for i, (di, ti) in enumerate(zip(demo_idx, test_idx)):
        demo_tree, test_tree = bank[di], bank[ti]
        if variant == "a":
            spans = np_spans_under_vp(demo_tree)[0]
            span = spans[int(rng.integers(len(spans)))]
        else:
            span = object_np_in_vp(demo_tree)
        info = span_index(demo_tree)[span]
        direct, anywhere = np_spans_under_vp(test_tree)
        flags = {"np_is_indirect_descendant": bool(anywhere and not direct)}
        trials.append(Trial(
            trial_id=f"e{exp}-r{run_id:03d}-t{i:03d}",
            run_id=run_id,
            experiment=exp,
            demo=Demonstration(demo_tree.sentence_id,
                               tuple(demo_tree.token_surfaces()), span,
                               base_label(info.category),
                               base_label(info.parent_category)),
            test=TestItem(test_tree.sentence_id,
                          tuple(test_tree.token_surfaces()),
                          to_bracketed(test_tree), test_tree.lang),
            flags=flags))
    return trials


# ---------------------------------------------------------------------------
# experiment 2

def gen_exp2(bank: list[ConstituencyTree], n_trials: int, seed: int,
             run_id: int = 0, min_deletion_len: int = 1) -> list[Trial]:
    """One run with arbitrary non-root constituents deleted in the demo.

    Each test sentence must contain a constituent of the demo's node
    category and one (possibly the same) whose parent has the demo's parent
    category; node_parent_split marks tests where no single constituent
    satisfies both.
    """
    if not bank:
        raise EmptyPool("empty bank")
    ids = [t.sentence_id for t in bank]
    indexes = [span_index(t) for t in bank]
    demo_pool = [i for i, t in enumerate(bank)
                 if candidate_spans(t, min_deletion_len)]
    if len(demo_pool) < n_trials:
        raise InsufficientPool(
            f"demo pool has {len(demo_pool)} sentences, need {n_trials}")
    rng = derive_rng(seed, "exp2", run_id)
    demo_idx = [demo_pool[i] for i in
                rng.choice(len(demo_pool), size=n_trials, replace=False)]

    trials = []
    used_tests: set[int] = set()
    for i, di in enumerate(demo_idx):
        demo_tree = bank[di]
        spans = candidate_spans(demo_tree, min_deletion_len)
        span = spans[int(rng.integers(len(spans)))]
        info = indexes[di][span]
        node_cat = base_label(info.category)
        parent_cat = base_label(info.parent_category)

        def matching(idx: dict) -> tuple[bool, bool, bool]:
            has_node = has_parent = both = False
            for s, si in idx.items():
                m_node = base_label(si.category) == node_cat
                m_parent = (si.parent_category is not None
                            and base_label(si.parent_category) == parent_cat)
                has_node |= m_node
                has_parent |= m_parent
                both |= m_node and m_parent
            return has_node, has_parent, both

        qualified = []
        for j in range(len(bank)):
            if j in used_tests or ids[j] == ids[di]:
                continue
            has_node, has_parent, both = matching(indexes[j])
            if has_node and has_parent:
                qualified.append((j, both))
        if not qualified:
            raise InsufficientPool(
                f"no test sentence offers node {node_cat} and parent {parent_cat}")
        j, both = qualified[int(rng.integers(len(qualified)))]
        used_tests.add(j)
        test_tree = bank[j]
        trials.append(Trial(
            trial_id=f"e2-r{run_id:03d}-t{i:03d}",
            run_id=run_id,
            experiment="2",
            demo=Demonstration(demo_tree.sentence_id,
                               tuple(demo_tree.token_surfaces()), span,
                               node_cat, parent_cat),
            test=TestItem(test_tree.sentence_id,
                          tuple(test_tree.token_surfaces()),
                          to_bracketed(test_tree), test_tree.lang),
            flags={"node_parent_split": not both}))
    return trials


# ---------------------------------------------------------------------------
# experiment 3

def category_combos(bank: list[ConstituencyTree]) -> dict[tuple[str, str], int]:
    """All (node category, parent category) pairs over distinct non-root
    spans, with occurrence counts."""
    combos: dict[tuple[str, str], int] = {}
    for tree in bank:
        for span, info in span_index(tree).items():
            if info.parent_category is None:
                continue
            key = (base_label(info.category), base_label(info.parent_category))
            combos[key] = combos.get(key, 0) + 1
    return combos


def gen_exp3(bank: list[ConstituencyTree], per_combo: int, seed: int,
             combo_limit: int | None = None,
             test_ids: Sequence[str] | None = None) -> list[Trial]:
    """Demonstration sweep: up to per_combo demos for every category
    combination, each paired with every test sentence (self-pairs skipped).
    """
    if not bank:
        raise EmptyPool("empty bank")
    by_id = {t.sentence_id: t for t in bank}
    combos = category_combos(bank)
    ordered = sorted(combos, key=lambda c: (-combos[c], c))
    if combo_limit is not None:
        ordered = ordered[:combo_limit]
    rng = derive_rng(seed, "exp3")

    demos: list[Demonstration] = []
    for node_cat, parent_cat in ordered:
        occurrences = []
        for tree in bank:
            for span, info in sorted(span_index(tree).items()):
                if info.parent_category is None:
                    continue
                if (base_label(info.category) == node_cat
                        and base_label(info.parent_category) == parent_cat):
                    occurrences.append((tree, span))
        k = min(per_combo, len(occurrences))
        chosen = rng.choice(len(occurrences), size=k, replace=False)
        for idx in sorted(int(x) for x in chosen):
            tree, span = occurrences[idx]
            demos.append(Demonstration(tree.sentence_id,
                                       tuple(tree.token_surfaces()), span,
                                       node_cat, parent_cat))

    if test_ids is None:
        tests = list(bank)
    else:
        missing = [i for i in test_ids if i not in by_id]
        if missing:
            raise FormatError(f"unknown test sentence ids: {missing}")
        tests = [by_id[i] for i in test_ids]

    trials = []
    counter = 0
    for test_tree in tests:
        item = TestItem(test_tree.sentence_id,
                        tuple(test_tree.token_surfaces()),
                        to_bracketed(test_tree), test_tree.lang)
        for demo in demos:
            if demo.sentence_id == test_tree.sentence_id:
                continue
            trials.append(Trial(
                trial_id=f"e3-t{counter:05d}",
                run_id=0,
                experiment="3",
                demo=demo,
                test=item,
                flags={}))
            counter += 1
    return trials


# ---------------------------------------------------------------------------
# experiment 4

REQUIRED_AMBIGUOUS_KEYS = {"pair_id", "type", "condition", "text", "tree",
                           "target_span"}
REQUIRED_DEMO_KEYS = {"demo_id", "type", "text", "np2_span"}


def gen_exp4(ambiguous_rows: list[dict], demo_rows: list[dict], seed: int,
             run_id: int = 0) -> list[Trial]:
    """One 24-trial run over ambiguous sentences: six tests for each of
    adjunct-1, adjunct-2, pp-1 and pp-2, never both members of a pair."""
    for row in ambiguous_rows:
        if not REQUIRED_AMBIGUOUS_KEYS <= row.keys():
            raise FormatError(
                f"ambiguous row missing {REQUIRED_AMBIGUOUS_KEYS - row.keys()}")
    for row in demo_rows:
        if not REQUIRED_DEMO_KEYS <= row.keys():
            raise FormatError(
                f"demo row missing {REQUIRED_DEMO_KEYS - row.keys()}")

    rng = derive_rng(seed, "exp4", run_id)
    trials = []
    counter = 0
    for kind in ("adjunct", "pp"):
        members: dict[str, dict[int, dict]] = {}
        for row in ambiguous_rows:
            if row["type"] == kind:
                members.setdefault(row["pair_id"], {})[int(row["condition"])] = row
        for cond in (1, 2):
            eligible = sum(1 for pair in members.values() if cond in pair)
            if eligible < 6:
                raise PoolError(
                    f"{kind}-{cond} has {eligible} eligible sentences, need 6")
        pair_ids = sorted(p for p, m in members.items() if 1 in m and 2 in m)
        if len(pair_ids) < 12:
            raise PoolError(
                f"{kind} has {len(pair_ids)} complete pairs, need 12")
        order = [pair_ids[i] for i in
                 rng.choice(len(pair_ids), size=12, replace=False)]
        kind_demos = sorted((r for r in demo_rows if r["type"] == kind),
                            key=lambda r: r["demo_id"])
        if not kind_demos:
            raise PoolError(f"no demonstration templates of type {kind}")
        for slot, pair_id in enumerate(order):
            cond = 1 if slot < 6 else 2
            row = members[pair_id][cond]
            demo_row = kind_demos[int(rng.integers(len(kind_demos)))]
            tokens = tuple(demo_row["text"].split())
            trials.append(Trial(
                trial_id=f"e4-r{run_id:03d}-t{counter:03d}",
                run_id=run_id,
                experiment="4",
                demo=Demonstration(demo_row["demo_id"], tokens,
                                   tuple(demo_row["np2_span"]), "NP", None),
                test=TestItem(f"{pair_id}-c{cond}",
                              tuple(row["text"].split()), row["tree"], "en"),
                flags={},
                condition=f"{kind}-{cond}",
                target_span=tuple(row["target_span"])))
            counter += 1
    return trials


# ---------------------------------------------------------------------------
# prompts

def _load_template(template_id: str, lang: str) -> str:
    if os.sep in template_id or template_id.endswith(".txt"):
        if os.path.exists(template_id):
            with open(template_id, encoding="utf-8") as f:
                return f.read().rstrip("\n")
        raise UnknownTemplate(f"template file not found: {template_id}")
    name = f"{template_id}.{lang}.txt"
    ref = resources.files("delprobe") / "templates" / name
    if not ref.is_file():
        raise UnknownTemplate(f"no template {template_id!r} for lang {lang!r}")
    return ref.read_text(encoding="utf-8").rstrip("\n")


def render_prompt(trial: Trial, template_id: str = "default",
                  lang: str | None = None) -> str:
    """Fill the deletion-task prompt template for one trial.

    The demonstration remainder is the demo sentence with its deleted span
    removed; for English its first character is lowercased unconditionally,
    mirroring how the remainder reads mid-quote.
    """
    lang = lang or trial.test.lang
    template = _load_template(template_id, lang)
    demo_sentence = detokenize(trial.demo.tokens, lang)
    rem = detokenize(remainder_tokens(trial.demo.tokens, trial.demo.deleted_span), lang)
    if lang == "en" and rem:
        rem = rem[0].lower() + rem[1:]
    test_sentence = detokenize(trial.test.tokens, lang)
    return template.format(demo=demo_sentence, remainder=rem, test=test_sentence)


def independence_reminder(lang: str) -> str:
    return _load_template("reminder", lang)
