"""Deliberately naive reference implementations used as test oracles.

Everything here is written scalar-first (plain loops, no shared code with
the package) so that agreement with the fast implementations is meaningful.
Slow is fine; these only run under pytest.
"""

import math
import random


def forward_step(net_doc, obs, h_prev, s_prev):
    """Scalar forward pass over the serialized network document.

    ``net_doc`` is the plain-dict form produced by ``grusm.nets.network_doc``.
    Returns (outputs, h_new, s_new) as plain lists.
    """
    t = net_doc["target"]
    n_hidden = len(t["hidden"])
    n_out = len(t["outputs"])
    h_new = []
    for j in range(n_hidden):
        a = t["hidden"][j]["bias"] + t["hidden"][j]["self"] * h_prev[j]
        for i, x in enumerate(obs):
            a += x * t["w_in"][i][j]
        h_new.append(math.tanh(a))

    src = net_doc.get("source")
    s_new = []
    s_out = []
    if src is not None:
        s = src["net"]
        tr = net_doc["transfer"]
        for j in range(len(s["hidden"])):
            a = s["hidden"][j]["bias"] + s["hidden"][j]["self"] * s_prev[j]
            # the source's own input channels carry 0, so s["w_in"] is unused
            for i, x in enumerate(obs):
                a += x * tr["in_to_hidden"][i][j]
            s_new.append(math.tanh(a))
        for k in range(len(s["outputs"])):
            b = s["outputs"][k]["bias"]
            for j, sv in enumerate(s_new):
                b += sv * s["w_out"][j][k]
            s_out.append(math.tanh(b))

    outputs = []
    for k in range(n_out):
        a = t["outputs"][k]["bias"]
        for j, hv in enumerate(h_new):
            a += hv * t["w_out"][j][k]
        if src is not None:
            tr = net_doc["transfer"]
            for m, ov in enumerate(s_out):
                a += ov * tr["out_to_out"][m][k]
        outputs.append(math.tanh(a))
    return outputs, h_new, s_new


def rollout(net_doc, obs_seq):
    """Run a fresh-state episode over a sequence of observations."""
    n_hidden = len(net_doc["target"]["hidden"])
    n_sh = len(net_doc["source"]["net"]["hidden"]) if net_doc.get("source") else 0
    h = [0.0] * n_hidden
    s = [0.0] * n_sh
    outs = []
    for obs in obs_seq:
        o, h, s = forward_step(net_doc, obs, h, s)
        outs.append(o)
    return outs


def ols_fit(X, y):
    """Least-squares coefficients via the normal equations, solved with
    Gaussian elimination on plain lists. X has a leading-intercept column
    added here; returns [b0, b1, ...]."""
    n = len(X)
    p = len(X[0]) + 1
    A = [[1.0] + list(row) for row in X]
    # G = A^T A, c = A^T y
    G = [[sum(A[r][i] * A[r][j] for r in range(n)) for j in range(p)] for i in range(p)]
    c = [sum(A[r][i] * y[r] for r in range(n)) for i in range(p)]
    # gaussian elimination with partial pivoting
    for col in range(p):
        piv = max(range(col, p), key=lambda r: abs(G[r][col]))
        if abs(G[piv][col]) < 1e-12:
            raise ZeroDivisionError("singular normal equations")
        G[col], G[piv] = G[piv], G[col]
        c[col], c[piv] = c[piv], c[col]
        for r in range(col + 1, p):
            f = G[r][col] / G[col][col]
            for j in range(col, p):
                G[r][j] -= f * G[col][j]
            c[r] -= f * c[col]
    beta = [0.0] * p
    for i in range(p - 1, -1, -1):
        acc = c[i] - sum(G[i][j] * beta[j] for j in range(i + 1, p))
        beta[i] = acc / G[i][i]
    return beta


def pearson_r(xs, ys):
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    return sxy / math.sqrt(sxx * syy)


def ga_xor_best_mse(seed, generations=100, pop=40):
    """Tiny generational GA on a 2-2-1 tanh net for XOR; returns best MSE.

    This is the independent check that XOR is solvable at the evolution
    budget used by the subpopulation engine, not a performance baseline.
    """
    rng = random.Random(seed)
    cases = [((0.0, 0.0), 0.0), ((0.0, 1.0), 1.0), ((1.0, 0.0), 1.0), ((1.0, 1.0), 0.0)]

    def mse(g):
        w = g
        err = 0.0
        for (x1, x2), t in cases:
            h1 = math.tanh(w[0] * x1 + w[1] * x2 + w[2])
            h2 = math.tanh(w[3] * x1 + w[4] * x2 + w[5])
            o = math.tanh(w[6] * h1 + w[7] * h2 + w[8])
            err += (o - t) ** 2
        return err / len(cases)

    popn = [[rng.uniform(-0.5, 0.5) for _ in range(9)] for _ in range(pop)]
    best = min(mse(g) for g in popn)
    for _ in range(generations):
        scored = sorted(popn, key=mse)
        best = min(best, mse(scored[0]))
        elites = scored[: pop // 4]
        popn = list(elites)
        while len(popn) < pop:
            a, b = rng.sample(elites, 2) if len(elites) > 1 else (elites[0], elites[0])
            cut = rng.randrange(1, 9)
            child = a[:cut] + b[cut:]
            child = [w + rng.gauss(0.0, 0.3) if rng.random() < 0.4 else w for w in child]
            popn.append(child)
    return best
