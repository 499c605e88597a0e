"""Pure-Python reference implementations used as independent test oracles.

Nothing here imports the package's math: plain lists, explicit loops and
the ``math`` module only.
"""

import math


def sig(a):
    return 1.0 / (1.0 + math.exp(-a)) if a >= 0 else math.exp(a) / (1.0 + math.exp(a))


def _row_dot(row, v):
    return math.fsum(w * x for w, x in zip(row, v))


def gru_step(P, x, h):
    """P maps names to nested lists (matrices) or lists (biases)."""
    H = len(h)
    r = [sig(_row_dot(P["Wxr"][i], x) + _row_dot(P["Whr"][i], h) + P["br"][i]) for i in range(H)]
    z = [sig(_row_dot(P["Wxz"][i], x) + _row_dot(P["Whz"][i], h) + P["bz"][i]) for i in range(H)]
    rh = [r[i] * h[i] for i in range(H)]
    ht = [math.tanh(_row_dot(P["Wxh"][i], x) + _row_dot(P["Whh"][i], rh) + P["bh"][i]) for i in range(H)]
    return [(1.0 - z[i]) * h[i] + z[i] * ht[i] for i in range(H)]


def gru_sequence(P, xs, H):
    h = [0.0] * H
    out = []
    for x in xs:
        h = gru_step(P, x, h)
        out.append(h)
    return out


def gru_as_lists(g):
    return {n: getattr(g, n).tolist() for n in ("Wxr", "Wxz", "Wxh", "Whr", "Whz", "Whh", "br", "bz", "bh")}


def sf_gru_probability(params, window, order, hidden):
    """Stacked fusion: level 0 eats feature 0; level j eats [h_{j-1}^t, feature_j^t]."""
    m = len(window[order[0]])
    seq = [list(window[order[0]][t]) for t in range(m)]
    hs = None
    for j, g in enumerate(params.levels):
        P = gru_as_lists(g)
        if j > 0:
            seq = [hs[t] + list(window[order[j]][t]) for t in range(m)]
        hs = gru_sequence(P, seq, hidden)
    W = params.classifier.W[0].tolist()
    logit = _row_dot(W, hs[-1]) + float(params.classifier.b[0])
    return sig(logit)


def auc_pairs(scores, labels):
    """O(P*N) pair count: wins plus half ties over all positive/negative pairs."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def hand_counts(preds, labels):
    tp = fp = tn = fn = 0
    for p, y in zip(preds, labels):
        if p == 1 and y == 1:
            tp += 1
        elif p == 1:
            fp += 1
        elif y == 0:
            tn += 1
        else:
            fn += 1
    return tp, fp, tn, fn
