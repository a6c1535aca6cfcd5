"""Writes tagged_corpus.jsonl and its annotation file tagged_annotations.jsonl.

The annotation is computed here, independently of the Rust code, from the
rules: cues are earlier nouns sharing the verb's number, attractors are
earlier nouns of the other number; an instance is kept when it has an
attractor, the verb does not directly follow its subject, and some attractor
is fewer than 10 tokens before the subject (or after it).
"""
import json
import random

rng = random.Random(20240611)

SG = ["dog", "author", "pilot", "key", "cabinet", "senator", "report"]
PL = ["dogs", "authors", "pilots", "keys", "cabinets", "senators", "reports"]
FILLER = [("the", "DT"), ("old", "JJ"), ("very", "RB"), ("of", "IN"), ("near", "IN"), ("with", "IN"), ("red", "JJ")]
VERBS = {
    "sg": [("runs", "VBZ"), ("is", "VBZ"), ("was", "VBD"), ("likes", "VBZ")],
    "pl": [("run", "VBP"), ("are", "VBP"), ("were", "VBD"), ("like", "VBP")],
}
PAST = [("walked", "VBD"), ("saw", "VBD")]


def noun(number):
    return (rng.choice(SG if number == "sg" else PL), "NN" if number == "sg" else "NNS", number)


def build():
    toks, pos, num, subj = [], [], [], []

    def push(t, p, n=None, s=None):
        toks.append(t)
        pos.append(p)
        num.append(n)
        subj.append(s)

    for _ in range(rng.randint(0, 4)):
        if rng.random() < 0.5:
            t, p, n = noun(rng.choice(["sg", "pl"]))
            push(t, p, n)
        else:
            push(*rng.choice(FILLER))
    if rng.random() < 0.45:
        for _ in range(rng.randint(6, 12)):
            push(*rng.choice(FILLER))
    number = rng.choice(["sg", "pl"])
    push("the", "DT")
    t, p, n = noun(number)
    subject = len(toks)
    push(t, p, n)
    for _ in range(rng.choice([0, 0, 1, 2, 3, 4])):
        r = rng.random()
        if r < 0.4:
            t, p, n = noun(rng.choice(["sg", "pl"]))
            push(t, p, n)
        elif r < 0.55:
            push(*rng.choice(PAST), None, subject)
        else:
            push(*rng.choice(FILLER))
    verb, vpos = rng.choice(VERBS[number])
    push(verb, vpos, None, None if rng.random() < 0.08 else subject)
    push(".", ".")
    return toks, pos, num, subj


def verb_number(tok, p):
    low = tok.lower()
    if low in ("is", "was"):
        return "SINGULAR"
    if low in ("are", "were"):
        return "PLURAL"
    return {"VBZ": "SINGULAR", "VBP": "PLURAL"}.get(p)


NUM = {"sg": "SINGULAR", "pl": "PLURAL"}
records, annotations = [], []
for k in range(50):
    toks, pos, num, subj = build()
    rid = f"s{k:02d}"
    records.append({"id": rid, "tokens": toks, "pos": pos,
                    "noun_number": [NUM[n] if n else None for n in num], "subject_index": subj})
    for v, (t, p) in enumerate(zip(toks, pos)):
        vn = verb_number(t, p)
        if vn is None:
            continue
        cues = [i for i in range(v) if num[i] and NUM[num[i]] == vn]
        attractors = [i for i in range(v) if num[i] and NUM[num[i]] != vn]
        s = subj[v]
        if s is None:
            decision = "missing_subject"
        elif not attractors:
            decision = "no_attractor"
        elif v - s == 1:
            decision = "adjacent_subject"
        elif all(s - a >= 10 for a in attractors if a < s) and not any(a > s for a in attractors):
            decision = "distant_attractors"
        else:
            decision = "kept"
        annotations.append({"id": rid, "verb": v, "gold": vn, "cues": cues, "attractors": attractors,
                            "decision": decision})

with open("tagged_corpus.jsonl", "w") as f:
    for r in records:
        f.write(json.dumps(r) + "\n")
with open("tagged_annotations.jsonl", "w") as f:
    for a in annotations:
        f.write(json.dumps(a) + "\n")
