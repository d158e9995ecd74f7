#!/usr/bin/env python3
"""Regenerate the synthetic ambiguous-sentence fixtures.

Builds fixtures/ambiguous_en.jsonl (sentence pairs with adjunct / PP
attachment ambiguity, target spans annotated) and fixtures/exp4_demos_en.jsonl
(demonstration templates with the NP2 span annotated). All sentences are
hand-written toys; spans and bracketings are derived here so the JSONL files
stay internally consistent.
"""

from __future__ import annotations

import json
from pathlib import Path

FIXDIR = Path(__file__).resolve().parents[1] / "fixtures"

# (NP1, NP2, relative clause, VP); the clause suits NP2. The condition-2
# member swaps NP1 and NP2 so the clause plausibly modifies NP1 instead.
ADJUNCT_PAIRS = [
    ("letter", "writer", "had blonde hair", "arrived"),
    ("photo", "actor", "wore a black coat", "appeared"),
    ("novel", "author", "spoke three languages", "was famous"),
    ("speech", "leader", "wore a gray suit", "impressed everyone"),
    ("garden", "widow", "lived alone", "was beautiful"),
    ("statue", "dancer", "trained for years", "drew a crowd"),
    ("poem", "student", "studied all night", "won a prize"),
    ("house", "doctor", "worked downtown", "was old"),
    ("portrait", "queen", "ruled the island", "attracted visitors"),
    ("recipe", "baker", "woke at dawn", "became popular"),
    ("story", "sailor", "crossed the ocean", "spread quickly"),
    ("melody", "pianist", "practiced daily", "filled the room"),
]

# (NP1, verb, NP2, attribute PP object, instrument PP object); "with the
# <attribute>" suits NP2 (condition 1), "with <instrument>" suits the verb
# (condition 2).
PP_PAIRS = [
    ("boy", "saw", "man", "the gray beard", "the old telescope"),
    ("girl", "drew", "horse", "the long mane", "a soft pencil"),
    ("cook", "cut", "bread", "the dark crust", "a sharp knife"),
    ("guard", "watched", "woman", "the red scarf", "the new camera"),
    ("farmer", "hit", "fence", "the loose board", "a heavy hammer"),
    ("child", "found", "box", "the golden lid", "a long stick"),
    ("artist", "painted", "girl", "the green eyes", "a thin brush"),
    ("hunter", "filmed", "deer", "the white spots", "a long lens"),
    ("waiter", "served", "guest", "the blue hat", "a silver tray"),
    ("student", "read", "book", "the torn cover", "a bright lamp"),
    ("nurse", "washed", "child", "the curly hair", "a warm sponge"),
    ("writer", "greeted", "editor", "the kind smile", "a warm hug"),
]

ADJUNCT_DEMOS = [
    ("The song of the player is really popular", (3, 5)),
    ("The roof of the house was badly damaged", (3, 5)),
    ("The cover of the book looked very nice", (3, 5)),
    ("The door of the office stayed wide open", (3, 5)),
    ("The end of the movie felt too sudden", (3, 5)),
    ("The name of the street sounded quite familiar", (3, 5)),
]

PP_DEMOS = [
    ("The programmer wrote the code", (3, 5)),
    ("The plumber fixed the sink", (3, 5)),
    ("The tailor sewed the dress", (3, 5)),
    ("The barber trimmed the beard", (3, 5)),
    ("The gardener watered the plants", (3, 5)),
    ("The editor checked the draft", (3, 5)),
]


def verb_phrase(words_str: str) -> str:
    # generic VP bracketing: verb head, remaining words grouped as an NP
    words = words_str.split()
    head = f"(VBD {words[0]})"
    rest = words[1:]
    if not rest:
        return f"(VP {head})"
    inner = " ".join(
        f"({'JJ' if i < len(rest) - 1 else 'NN'} {w})" for i, w in enumerate(rest)
    )
    return f"(VP {head} (NP {inner}))"


def adjunct_tree(np1: str, np2: str, clause: str, vp: str) -> str:
    # structure-1 parse: the clause attaches to NP2.
    return (
        f"(S (NP (NP (DT The) (NN {np1})) (PP (IN of) "
        f"(NP (NP (DT the) (NN {np2})) (SBAR (WDT that) (S {verb_phrase(clause)}))))) "
        f"{verb_phrase(vp)})"
    )


def pp_tree(np1: str, verb: str, np2: str, ppobj: str) -> str:
    # structure-1 parse: the PP attaches to NP2.
    obj = ppobj.split()
    obj_br = f"({'DT'} {obj[0]}) " + " ".join(
        f"({'JJ' if i < len(obj) - 2 else 'NN'} {w})" for i, w in enumerate(obj[1:])
    )
    return (
        f"(S (NP (DT The) (NN {np1})) (VP (VBD {verb}) "
        f"(NP (NP (DT the) (NN {np2})) (PP (IN with) (NP {obj_br})))))"
    )


def build() -> None:
    amb_rows = []
    for i, (np1, np2, clause, vp) in enumerate(ADJUNCT_PAIRS):
        pair_id = f"adj-{i:02d}"
        for cond in (1, 2):
            a, b = (np1, np2) if cond == 1 else (np2, np1)
            text = f"The {a} of the {b} that {clause} {vp}"
            n_clause = len(clause.split())
            target = (3, 6 + n_clause)  # "the <b> that <clause>"
            amb_rows.append({
                "pair_id": pair_id,
                "type": "adjunct",
                "condition": cond,
                "text": text,
                "tree": adjunct_tree(a, b, clause, vp),
                "target_span": list(target),
            })
    for i, (np1, verb, np2, attr, instr) in enumerate(PP_PAIRS):
        pair_id = f"pp-{i:02d}"
        for cond, ppobj in ((1, attr), (2, instr)):
            text = f"The {np1} {verb} the {np2} with {ppobj}"
            target = (3, 6 + len(ppobj.split()))  # "the <np2> with <ppobj>"
            amb_rows.append({
                "pair_id": pair_id,
                "type": "pp",
                "condition": cond,
                "text": text,
                "tree": pp_tree(np1, verb, np2, ppobj),
                "target_span": list(target),
            })

    demo_rows = []
    for i, (text, span) in enumerate(ADJUNCT_DEMOS):
        demo_rows.append({"demo_id": f"adjd-{i:02d}", "type": "adjunct",
                          "text": text, "np2_span": list(span)})
    for i, (text, span) in enumerate(PP_DEMOS):
        demo_rows.append({"demo_id": f"ppd-{i:02d}", "type": "pp",
                          "text": text, "np2_span": list(span)})

    with open(FIXDIR / "ambiguous_en.jsonl", "w", encoding="utf-8") as f:
        for row in amb_rows:
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    with open(FIXDIR / "exp4_demos_en.jsonl", "w", encoding="utf-8") as f:
        for row in demo_rows:
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    print(f"wrote {len(amb_rows)} ambiguous rows, {len(demo_rows)} demo rows")


if __name__ == "__main__":
    build()
