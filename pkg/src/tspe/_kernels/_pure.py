"""Pure-Python node2vec kernels, used when the compiled extension is absent.

Same signatures and the same random draw order as ``_ext.pyx``.  Walks are
bitwise identical to the compiled path; skip-gram embeddings agree to
rounding because the dot products here go through numpy.
"""
from __future__ import annotations

import bisect
import math

import numpy as np

from ..numerics.rng import _DOUBLE_UNIT, xoshiro_next


def _has_edge(indptr, indices, u, v):
    lo, hi = indptr[u], indptr[u + 1]
    k = bisect.bisect_left(indices, v, lo, hi)
    return k < hi and indices[k] == v


def random_walks(indptr, indices, num_nodes, walks_per_node, walk_length, p, q, state):
    s = [int(w) for w in state]
    indptr_l = [int(x) for x in indptr]
    indices_l = [int(x) for x in indices]
    uniform = p == 1.0 and q == 1.0
    inv_p, inv_q = 1.0 / p, 1.0 / q
    order = list(range(num_nodes))
    walks: list[int] = []
    offsets = [0]
    for _ in range(walks_per_node):
        for i in range(num_nodes - 1, 0, -1):
            j = min(int(((xoshiro_next(s) >> 11) * _DOUBLE_UNIT) * (i + 1)), i)
            order[i], order[j] = order[j], order[i]
        for start_node in order:
            cur, prev = start_node, -1
            walks.append(cur)
            length = 1
            while length < walk_length:
                start = indptr_l[cur]
                deg = indptr_l[cur + 1] - start
                if deg == 0:
                    break
                if uniform or prev < 0:
                    k = min(int(((xoshiro_next(s) >> 11) * _DOUBLE_UNIT) * deg), deg - 1)
                else:
                    weights = []
                    tot = 0.0
                    for x in indices_l[start:start + deg]:
                        if x == prev:
                            w = inv_p
                        elif _has_edge(indptr_l, indices_l, prev, x):
                            w = 1.0
                        else:
                            w = inv_q
                        weights.append(w)
                        tot = tot + w
                    u = ((xoshiro_next(s) >> 11) * _DOUBLE_UNIT) * tot
                    acc = 0.0
                    k = deg - 1
                    for j, w in enumerate(weights):
                        acc = acc + w
                        if acc > u:
                            k = j
                            break
                prev = cur
                cur = indices_l[start + k]
                walks.append(cur)
                length += 1
            offsets.append(len(walks))
    state[:] = s
    return np.asarray(walks, dtype=np.int64), np.asarray(offsets, dtype=np.int64)


def _log_sigmoid(f):
    if f >= 0:
        return -math.log1p(math.exp(-f))
    return f - math.log1p(math.exp(f))


def _sigmoid(f):
    if f >= 0:
        return 1.0 / (1.0 + math.exp(-f))
    e = math.exp(f)
    return e / (1.0 + e)


def skipgram_epoch(walks, offsets, syn0, syn1, noise_cdf, window, negative,
                   learning_rate, processed, total_tokens, state):
    s = [int(w) for w in state]
    cdf = noise_cdf.tolist()
    n_noise = len(cdf)
    walks_l = walks.tolist()
    offsets_l = offsets.tolist()
    loss = 0.0
    pairs = 0
    for wi in range(len(offsets_l) - 1):
        a, b = offsets_l[wi], offsets_l[wi + 1]
        for i in range(a, b):
            alpha = learning_rate * max(1.0 - processed / total_tokens, 1e-4)
            center = walks_l[i]
            l1 = syn0[center]
            for j in range(i - window, i + window + 1):
                if j < a or j >= b or j == i:
                    continue
                context = walks_l[j]
                neu1e = np.zeros_like(l1)
                for d in range(negative + 1):
                    if d == 0:
                        target, label = context, 1.0
                    else:
                        u = (xoshiro_next(s) >> 11) * _DOUBLE_UNIT
                        target = min(bisect.bisect_right(cdf, u), n_noise - 1)
                        if target == context:
                            continue
                        label = 0.0
                    row = syn1[target]
                    f = float(np.dot(l1, row))
                    loss -= _log_sigmoid(f) if label > 0.5 else _log_sigmoid(-f)
                    g = (label - _sigmoid(f)) * alpha
                    neu1e += g * row
                    row += g * l1
                l1 += neu1e
                pairs += 1
            processed += 1
    state[:] = s
    return loss, pairs, processed
