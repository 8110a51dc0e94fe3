"""Reference EM/F1/BLEU-1/ROUGE-L for the metric golden fixture.

Written independently of the C++ code, following the SQuAD v1.1 evaluation
script for EM/F1. Run from the repository root:

    python3 tests/oracles/metric_golden.py > tests/data/metric_golden.json
"""
import collections
import json
import math
import re
import string


def normalize_answer(s):
    def remove_articles(text):
        return re.sub(r"\b(a|an|the)\b", " ", text)

    def white_space_fix(text):
        return " ".join(text.split())

    def remove_punc(text):
        exclude = set(string.punctuation)
        return "".join(ch for ch in text if ch not in exclude)

    return white_space_fix(remove_articles(remove_punc(s.lower())))


def f1_pair(pred, gold):
    p = normalize_answer(pred).split()
    g = normalize_answer(gold).split()
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    common = collections.Counter(p) & collections.Counter(g)
    same = sum(common.values())
    if same == 0:
        return 0.0
    prec = same / len(p)
    rec = same / len(g)
    return 2 * prec * rec / (prec + rec)


def em(pred, golds):
    return float(any(normalize_answer(pred) == normalize_answer(g) for g in golds))


def f1(pred, golds):
    return max(f1_pair(pred, g) for g in golds)


def bleu1(pred, refs):
    p = pred.lower().split()
    if not p:
        return 0.0
    rs = [r.lower().split() for r in refs]
    max_counts = collections.Counter()
    for r in rs:
        for t, n in collections.Counter(r).items():
            max_counts[t] = max(max_counts[t], n)
    clipped = sum(min(n, max_counts[t]) for t, n in collections.Counter(p).items())
    c = len(p)
    r = min((abs(len(x) - c), len(x)) for x in rs)[1]
    bp = math.exp(min(0.0, 1.0 - r / c))
    return clipped / c * bp


def lcs(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[len(a)][len(b)]


def rouge_l(pred, refs):
    p = pred.lower().split()
    if not p:
        return 0.0
    best = 0.0
    for ref in refs:
        r = ref.lower().split()
        if not r:
            continue
        l = lcs(p, r)
        if l == 0:
            continue
        prec, rec = l / len(p), l / len(r)
        best = max(best, 2 * prec * rec / (prec + rec))
    return best


PAIRS = [
    ("gruesome serial killings", ["serial killings"]),
    ("the cat", ["the cat sat"]),
    ("cat sat", ["the cat sat"]),
    ("Roy Lynn Oakley", ["Roy Lynn Oakley"]),
    ("12,00", ["12,000"]),
    ("the cat", ["cat"]),
    ("The 12,000", ["12000 people", "12,000"]),
    ("Denver Broncos", ["Broncos", "Denver Broncos", "the Denver Broncos"]),
    ("in the year 1843", ["1843"]),
    ("a  cat", ["A cat!"]),
    ("", ["something"]),
    ("", [""]),
    ("Paris, France", ["paris"]),
    ("the the the", ["the"]),
    ("New York New York", ["New York"]),
    ("Ada Lovelace wrote programs", ["Lovelace", "Ada Lovelace"]),
    ("an apple a day", ["apple day", "an apple"]),
    ("Zürich, Switzerland", ["Zürich"]),
    ("completely different words", ["nothing in common"]),
    ("north-east of the city", ["north-east", "east of the city"]),
]


def main():
    rows = []
    for pred, golds in PAIRS:
        rows.append({
            "pred": pred,
            "golds": golds,
            "normalized_pred": normalize_answer(pred),
            "em": em(pred, golds),
            "f1": f1(pred, golds),
            "bleu1": bleu1(pred, golds),
            "rouge_l": rouge_l(pred, golds),
        })
    n = len(rows)
    report = {k: 100.0 * sum(r[k] for r in rows) / n for k in ("em", "f1", "bleu1", "rouge_l")}
    report["n_examples"] = n
    print(json.dumps({"pairs": rows, "report": report}, indent=1, ensure_ascii=False))


if __name__ == "__main__":
    main()
