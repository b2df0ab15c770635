"""Naive reference implementations used as independent oracles.

Written from the textbook definitions with plain loops and exact fractions;
they share no code with the package.
"""

from fractions import Fraction


def naive_confusion(gold, pred, k):
    m = [[0] * k for _ in range(k)]
    for g, p in zip(gold, pred):
        m[g][p] += 1
    return m


def naive_summary(m):
    k = len(m)
    n = sum(sum(r) for r in m)
    acc = Fraction(sum(m[i][i] for i in range(k)), n)
    sens, spec = [], []
    for c in range(k):
        tp = m[c][c]
        fn = sum(m[c][j] for j in range(k) if j != c)
        fp = sum(m[i][c] for i in range(k) if i != c)
        tn = n - tp - fn - fp
        if tp + fn == 0:
            continue
        sens.append(Fraction(tp, tp + fn))
        if tn + fp:
            spec.append(Fraction(tn, tn + fp))
    mean = lambda xs: float(sum(xs) / len(xs)) if xs else float("nan")  # noqa: E731
    return float(acc), mean(sens), mean(spec)


def naive_kappa(m):
    k = len(m)
    n = sum(sum(r) for r in m)
    po = Fraction(sum(m[i][i] for i in range(k)), n)
    pe = sum(Fraction(sum(m[i]), n) * Fraction(sum(m[j][i] for j in range(k)), n)
             for i in range(k))
    if pe == 1:
        return 1.0 if po == 1 else 0.0
    return float((po - pe) / (1 - pe))


def naive_quadratic_kappa(m):
    k = len(m)
    n = sum(sum(r) for r in m)
    if k == 1:
        return 1.0
    rows = [sum(m[i]) for i in range(k)]
    cols = [sum(m[j][i] for j in range(k)) for i in range(k)]
    w = lambda i, j: Fraction((i - j) ** 2, (k - 1) ** 2)  # noqa: E731
    obs = sum(w(i, j) * m[i][j] for i in range(k) for j in range(k)) / n
    exp = sum(w(i, j) * rows[i] * cols[j] for i in range(k) for j in range(k)) / (n * n)
    if exp == 0:
        return 1.0 if obs == 0 else 0.0
    return float(1 - obs / exp)


def mann_whitney_auc(scores, labels):
    """Probability a random positive outscores a random negative, ties counted half."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = Fraction(0)
    for p in pos:
        for q in neg:
            wins += 1 if p > q else Fraction(1, 2) if p == q else 0
    return float(wins / (len(pos) * len(neg)))


def pairwise_sq_dists(x):
    n = len(x)
    return [[sum((a - b) ** 2 for a, b in zip(x[i], x[j])) for j in range(n)] for i in range(n)]


# Patient score for non-late eyes, written out by hand. Rows are the left eye
# and columns the right eye, both in the order
#   (small/none, no pigment), (small/none, pigment), (medium, no pigment),
#   (medium, pigment), (large, no pigment), (large, pigment).
# Per eye, large drusen and pigment each add one point; medium drusen in both
# eyes adds one more.
SCORE_TABLE = [
    [0, 1, 0, 1, 1, 2],
    [1, 2, 1, 2, 2, 3],
    [0, 1, 1, 2, 1, 2],
    [1, 2, 2, 3, 2, 3],
    [1, 2, 1, 2, 2, 3],
    [2, 3, 2, 3, 3, 4],
]


def table_score(left, right):
    """Look up the score of two eyes given as (drusen 0..2, pigment, late) triples."""
    if left[2] or right[2]:
        return 5
    return SCORE_TABLE[2 * left[0] + left[1]][2 * right[0] + right[1]]


def numeric_grad(f, x, eps=1e-5):
    """Central differences of the scalar function ``f`` at every entry of ``x``."""
    import numpy as np

    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        old = x[idx]
        x[idx] = old + eps
        up = f(x)
        x[idx] = old - eps
        down = f(x)
        x[idx] = old
        g[idx] = (up - down) / (2 * eps)
    return g


def max_rel_error(analytic, numeric, floor=1e-8):
    import numpy as np

    a, n = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    return float(np.max(np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)))


def layer_fd_error(layer, in_shape, rng, x=None, eps=1e-5):
    """Worst relative error of a layer's input and parameter gradients against
    central differences of ``sum(layer(x) * r)`` for a random ``r``."""
    import numpy as np

    layer.init_params(in_shape, rng)
    for k in layer.params:
        layer.params[k] = layer.params[k] + rng.normal(0, 0.1, layer.params[k].shape)
    if x is None:
        x = rng.normal(size=(2,) + tuple(in_shape))
    out, cache = layer.forward(x)
    r = rng.normal(size=out.shape)
    dx, grads = layer.backward(r, cache)

    def objective(xx):
        return float(np.sum(layer.forward(xx)[0] * r))

    worst = max_rel_error(dx, numeric_grad(objective, x, eps))
    if layer.learnable:
        for name in list(layer.params):
            def pobj(p, name=name):
                saved = layer.params[name]
                layer.params[name] = p
                try:
                    return objective(x)
                finally:
                    layer.params[name] = saved

            worst = max(worst, max_rel_error(grads[name],
                                             numeric_grad(pobj, layer.params[name], eps)))
    return worst


def network_fd_error(net, x, y, eps=1e-5):
    """Worst relative error of every parameter gradient of ``net`` on a cross-entropy loss."""
    import numpy as np

    def loss():
        logits = net.forward(x)[0]
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return float(-logp[np.arange(len(y)), y].mean())

    _, grads = net.loss_and_grads(x, y)
    worst = 0.0
    for i, layer in enumerate(net.layers):
        if not layer.learnable:
            continue
        for name in list(layer.params):
            def pobj(p, layer=layer, name=name):
                saved = layer.params[name]
                layer.params[name] = p
                try:
                    return loss()
                finally:
                    layer.params[name] = saved

            worst = max(worst, max_rel_error(grads[i][name],
                                             numeric_grad(pobj, layer.params[name], eps)))
    return worst
