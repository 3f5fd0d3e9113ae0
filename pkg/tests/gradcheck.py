"""Central finite-difference gradient checking for the autograd engine.

Piecewise-linear ops (relu, leaky_relu, L1) have kinks. A central difference
whose +h and -h evaluations fall on different sides of a kink measures a
secant, not the derivative, so such coordinates are detected (the ops record
their branch pattern) and skipped. With a tiny step no coordinate is skipped.
"""

import numpy as np

from docprompt.net.autograd import record_kinks


def _same(a, b):
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def check(fn, leaves, h=1e-3, seed=0, floor=1e-6):
    """Compare analytic and numeric gradients of ``sum(fn() * R)``.

    ``fn`` builds the graph from ``leaves`` (float64 parameter tensors) and
    returns a Tensor; ``R`` is a fixed random projection so every output
    element contributes. Returns ``(worst relative error, skipped fraction)``.
    """
    out = fn()
    proj = np.random.default_rng(seed).standard_normal(out.shape) if out.value.size > 1 else None

    def scalar():
        with record_kinks() as kinks:
            v = fn().value
        return float(np.sum(v * proj)) if proj is not None else float(v), kinks

    for leaf in leaves:
        leaf.grad = None
    out.backward(proj if proj is not None else None)
    worst, skipped, total = 0.0, 0, 0
    for leaf in leaves:
        v = leaf.value
        for idx in np.ndindex(v.shape):
            old = v[idx]
            v[idx] = old + h
            fp, kp = scalar()
            v[idx] = old - h
            fm, km = scalar()
            v[idx] = old
            total += 1
            if not _same(kp, km):
                skipped += 1
                continue
            num = (fp - fm) / (2 * h)
            ana = 0.0 if leaf.grad is None else float(leaf.grad[idx])
            worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), floor))
    return worst, skipped / max(total, 1)
