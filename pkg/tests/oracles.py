"""Slow, obviously-correct reference implementations used as test oracles.

Nothing here imports the package's numeric code paths; inputs and outputs are
plain Python lists and floats.
"""

from __future__ import annotations

import math
from decimal import Decimal, getcontext
from fractions import Fraction


def naive_dot_scores(q, k, d):
    out = []
    for i in range(len(q)):
        row = []
        for j in range(len(k)):
            acc = 0.0
            for t in range(len(q[i])):
                acc += q[i][t] * k[j][t]
            row.append(acc / math.sqrt(d))
        out.append(row)
    return out


def naive_matmul(a, b):
    return [[sum(a[i][t] * b[t][j] for t in range(len(b))) for j in range(len(b[0]))] for i in range(len(a))]


def decimal_softmax(row, prec=50):
    """Softmax of finite values at ``prec`` significant digits (masked entries given as None)."""
    getcontext().prec = prec
    vals = [Decimal(float(v)) if v is not None else None for v in row]
    exps = [v.exp() if v is not None else Decimal(0) for v in vals]
    total = sum(exps)
    return [float(e / total) for e in exps]


def naive_binarize(A, threshold):
    L = len(A)
    return [[bool(A[i][j] > threshold and i >= j) for j in range(L)] for i in range(L)]


def naive_pattern(H, orientation="prose"):
    """(diagonal, vertical, horizontal, active) straight from the adjacency definitions."""
    L = len(H)
    active = 0
    diag = down = right = 0
    for i in range(L):
        for j in range(L):
            if not H[i][j]:
                continue
            active += 1
            if i + 1 < L and j + 1 < L and H[i + 1][j + 1]:
                diag += 1
            if i + 1 < L and H[i + 1][j]:
                down += 1  # next query, same key: adjacency down a key column
            if j + 1 < L and H[i][j + 1]:
                right += 1  # same query, next key: adjacency along a row
    if active == 0:
        return (None, None, None, 0)
    if orientation == "prose":
        vertical, horizontal = down, right
    else:
        vertical, horizontal = right, down
    return (diag / active, vertical / active, horizontal / active, active)


def sort_median(values):
    """Median with the midpoint convention, computed exactly then rounded once."""
    vals = sorted(values)
    n = len(vals)
    if n == 0:
        raise ValueError("empty")
    if n % 2:
        return vals[n // 2]
    return float((Fraction(vals[n // 2 - 1]) + Fraction(vals[n // 2])) / 2)


def causal_entries(S):
    return [S[i][j] for i in range(len(S)) for j in range(len(S[i])) if i >= j]


# ---------------------------------------------------------------------------
# straight-line decoder forward pass


def _ln(x, g, b, eps=1e-5):
    mu = sum(x) / len(x)
    var = sum((v - mu) ** 2 for v in x) / len(x)
    return [(v - mu) / math.sqrt(var + eps) * g[t] + b[t] for t, v in enumerate(x)]


def _gelu(v):
    return 0.5 * v * (1.0 + math.tanh(math.sqrt(2.0 / math.pi) * (v + 0.044715 * v * v * v)))


def _vecmat(x, W):
    return [sum(x[t] * W[t][c] for t in range(len(x))) for c in range(len(W[0]))]


def reference_forward(params, tokens, num_layers, num_heads, head_dim, masks=None):
    """Logits of a pre-norm decoder, one position and one head at a time.

    ``params`` maps names to nested lists. ``masks`` optionally maps
    (layer, head) to an additive L x L mask (defaults to causal).
    """
    L = len(tokens)
    D = num_heads * head_dim
    x = [[params["embed"][tok][c] + params["pos"][p][c] for c in range(D)] for p, tok in enumerate(tokens)]
    for layer in range(num_layers):
        P = lambda name: params[f"layer{layer}.{name}"]  # noqa: E731
        h = [_ln(x[p], P("ln1_g"), P("ln1_b")) for p in range(L)]
        q = [_vecmat(h[p], P("wq")) for p in range(L)]
        k = [_vecmat(h[p], P("wk")) for p in range(L)]
        v = [_vecmat(h[p], P("wv")) for p in range(L)]
        mixed = [[0.0] * D for _ in range(L)]
        for head in range(num_heads):
            lo = head * head_dim
            for i in range(L):
                logits = []
                for j in range(L):
                    s = sum(q[i][lo + t] * k[j][lo + t] for t in range(head_dim)) / math.sqrt(head_dim)
                    if masks is not None and (layer, head) in masks:
                        s = s + masks[(layer, head)][i][j]
                    elif j > i:
                        s = -math.inf
                    logits.append(s)
                top = max(logits)
                w = [math.exp(s - top) if s != -math.inf else 0.0 for s in logits]
                z = sum(w)
                for t in range(head_dim):
                    mixed[i][lo + t] = sum(w[j] / z * v[j][lo + t] for j in range(L))
        attn_out = [_vecmat(mixed[p], P("wo")) for p in range(L)]
        x = [[x[p][c] + attn_out[p][c] for c in range(D)] for p in range(L)]
        for p in range(L):
            h2 = _ln(x[p], P("ln2_g"), P("ln2_b"))
            hidden = [_gelu(a + b) for a, b in zip(_vecmat(h2, P("w1")), P("b1"))]
            ff = [a + b for a, b in zip(_vecmat(hidden, P("w2")), P("b2"))]
            x[p] = [x[p][c] + ff[c] for c in range(D)]
    return [_vecmat(_ln(x[p], params["lnf_g"], params["lnf_b"]), params["unembed"]) for p in range(L)]


# ---------------------------------------------------------------------------
# forward chaining by repeated scanning


def saturate(facts, rules):
    """Repeat full scans over (rule, entity) until nothing new is derived.

    ``rules`` are (conditions, conclusion) with literals ``(attribute, polarity)``.
    Returns the derived atom set, or None if some atom holds in both polarities.
    """
    known = set(facts)
    while True:
        entities = sorted({a[0] for a in known})
        new = set()
        for conditions, conclusion in rules:
            for e in entities:
                if all((e, a, p) in known for a, p in conditions):
                    atom = (e, conclusion[0], conclusion[1])
                    if atom not in known:
                        new.add(atom)
        if not new:
            break
        known |= new
    if any((e, a, not p) in known for e, a, p in known):
        return None
    return known


def recount(golds, predictions):
    hits = 0
    for g, p in zip(golds, predictions):
        if p is not None and p == g:
            hits += 1
    return hits / len(golds)
