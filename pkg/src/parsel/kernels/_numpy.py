"""Pure-numpy kernels, vectorised across the replications of a chunk."""

import numpy as np

from ..rng import uniform_matrix


def uniform_fill(k0, k1, first_sub, lane, counts, out):
    n = out.shape[1]
    subs = np.arange(first_sub, first_sub + out.shape[0], dtype=np.uint64)
    out[:] = uniform_matrix((k0, k1), subs, n, lane)


def flowline_recursion(x, rates, caps, warmups, observe):
    r1, r2, r3 = (float(r) for r in rates)
    m = x.shape[0]
    b2, b3 = int(caps[0]), int(caps[1])
    total = warmups + observe
    d1 = np.zeros(m)
    d2 = np.zeros(m)
    d3 = np.zeros(m)
    ring2 = np.zeros((m, b2))
    ring3 = np.zeros((m, b3))
    start = np.zeros(m)
    end = np.zeros(m)
    for n in range(int(total.max())):
        c1 = d1 - x[:, 3 * n] / r1
        d1 = np.maximum(c1, ring2[:, n % b2]) if n >= b2 else c1
        c2 = np.maximum(d1, d2) - x[:, 3 * n + 1] / r2
        d2 = np.maximum(c2, ring3[:, n % b3]) if n >= b3 else c2
        d3 = np.maximum(d2, d3) - x[:, 3 * n + 2] / r3
        ring2[:, n % b2] = d2
        ring3[:, n % b3] = d3
        hit = warmups == n + 1
        start[hit] = d3[hit]
        hit = total == n + 1
        end[hit] = d3[hit]
    return observe / (end - start)
