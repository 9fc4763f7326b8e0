"""Independent brute-force reference implementations used as test oracles.

Pure python scalar loops only; these must never share code with the package
paths they verify.
"""

import math


def brute_sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def brute_lstm(x, h, c, w_x, w_h, b, hidden):
    """Scalar-loop LSTM step on packed [input, forget, output, candidate] rows."""
    z = [
        sum(w_x[r][j] * x[j] for j in range(len(x)))
        + sum(w_h[r][j] * h[j] for j in range(len(h)))
        + b[r]
        for r in range(4 * hidden)
    ]
    gi = [brute_sigmoid(z[r]) for r in range(hidden)]
    gf = [brute_sigmoid(z[hidden + r]) for r in range(hidden)]
    go = [brute_sigmoid(z[2 * hidden + r]) for r in range(hidden)]
    gg = [math.tanh(z[3 * hidden + r]) for r in range(hidden)]
    c2 = [gf[r] * c[r] + gi[r] * gg[r] for r in range(hidden)]
    h2 = [go[r] * math.tanh(c2[r]) for r in range(hidden)]
    return h2, c2


def brute_attention(query, keys):
    scores = [sum(k[j] * query[j] for j in range(len(query))) for k in keys]
    mx = max(scores)
    exps = [math.exp(s - mx) for s in scores]
    z = sum(exps)
    weights = [e / z for e in exps]
    ctx = [sum(weights[s] * keys[s][j] for s in range(len(keys))) for j in range(len(query))]
    return ctx, weights


def brute_affine(x, w, b):
    return [sum(w[i][j] * x[j] for j in range(len(x))) + b[i] for i in range(len(b))]


# bucket membership written directly against the interval table:
# rate (wkm/min): (-inf, -0.2) | [-0.2, -0.05) | [-0.05, +0.05] | (+0.05, inf)
# lateral (m):    [0, 10) | [10, 20) | [20, 40) | [40, inf)
RATE_MEMBERSHIP = (
    lambda x: x < -0.2,
    lambda x: -0.2 <= x < -0.05,
    lambda x: -0.05 <= x <= 0.05,
    lambda x: x > 0.05,
)
LATERAL_MEMBERSHIP = (
    lambda x: 0 <= x < 10,
    lambda x: 10 <= x < 20,
    lambda x: 20 <= x < 40,
    lambda x: x >= 40,
)


def brute_bucket(predicates, value):
    hits = [i for i, pred in enumerate(predicates) if pred(value)]
    assert len(hits) == 1, f"value {value} matched buckets {hits}"
    return hits[0]
