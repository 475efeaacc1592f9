# cython: language_level=3
"""Compiled node2vec kernels: second-order random walks and skip-gram SGD.

Mirrors ``tspe._kernels._pure`` draw for draw.  The xoshiro256** state is a
4-element uint64 array advanced in place.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef double DOUBLE_UNIT = 1.0 / 9007199254740992.0  # 2**-53


cdef inline uint64_t rotl(uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline uint64_t next_u64(uint64_t* s) nogil:
    cdef uint64_t result = rotl(s[1] * 5, 7) * 9
    cdef uint64_t t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = rotl(s[3], 45)
    return result


cdef inline double next_double(uint64_t* s) nogil:
    return <double>(next_u64(s) >> 11) * DOUBLE_UNIT


cdef inline bint has_edge(const int64_t* indptr, const int64_t* indices,
                          int64_t u, int64_t v) nogil:
    cdef int64_t lo = indptr[u]
    cdef int64_t hi = indptr[u + 1]
    cdef int64_t mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if indices[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo < indptr[u + 1] and indices[lo] == v


def random_walks(const int64_t[::1] indptr, const int64_t[::1] indices,
                 int64_t num_nodes, int64_t walks_per_node, int64_t walk_length,
                 double p, double q, uint64_t[::1] state):
    cdef uint64_t* s = &state[0]
    cdef int64_t total = num_nodes * walks_per_node
    walks_arr = np.empty(total * walk_length, dtype=np.int64)
    offsets_arr = np.empty(total + 1, dtype=np.int64)
    order_arr = np.arange(num_nodes, dtype=np.int64)
    weights_arr = np.empty(max(1, _max_degree(indptr, num_nodes)), dtype=np.float64)
    cdef int64_t[::1] walks = walks_arr
    cdef int64_t[::1] offsets = offsets_arr
    cdef int64_t[::1] order = order_arr
    cdef double[::1] weights = weights_arr
    cdef bint uniform = (p == 1.0 and q == 1.0)
    cdef double inv_p = 1.0 / p
    cdef double inv_q = 1.0 / q
    cdef int64_t r, i, j, tmp, w = 0, pos = 0, length, cur, prev, deg, start, k, x
    cdef double tot, u, acc
    offsets[0] = 0
    with nogil:
        for r in range(walks_per_node):
            for i in range(num_nodes - 1, 0, -1):
                j = <int64_t>(next_double(s) * (i + 1))
                if j > i:
                    j = i
                tmp = order[i]
                order[i] = order[j]
                order[j] = tmp
            for i in range(num_nodes):
                cur = order[i]
                walks[pos] = cur
                pos += 1
                length = 1
                prev = -1
                while length < walk_length:
                    start = indptr[cur]
                    deg = indptr[cur + 1] - start
                    if deg == 0:
                        break
                    if uniform or prev < 0:
                        k = <int64_t>(next_double(s) * deg)
                        if k >= deg:
                            k = deg - 1
                    else:
                        tot = 0.0
                        for k in range(deg):
                            x = indices[start + k]
                            if x == prev:
                                weights[k] = inv_p
                            elif has_edge(&indptr[0], &indices[0], prev, x):
                                weights[k] = 1.0
                            else:
                                weights[k] = inv_q
                            tot = tot + weights[k]
                        u = next_double(s) * tot
                        acc = 0.0
                        k = deg - 1
                        for j in range(deg):
                            acc = acc + weights[j]
                            if acc > u:
                                k = j
                                break
                    prev = cur
                    cur = indices[start + k]
                    walks[pos] = cur
                    pos += 1
                    length += 1
                w += 1
                offsets[w] = pos
    return walks_arr[:pos].copy(), offsets_arr


cdef int64_t _max_degree(const int64_t[::1] indptr, int64_t n):
    cdef int64_t i, m = 0
    for i in range(n):
        if indptr[i + 1] - indptr[i] > m:
            m = indptr[i + 1] - indptr[i]
    return m


cdef inline double log_sigmoid(double f) nogil:
    # log(sigmoid(f)), stable on both tails
    if f >= 0:
        return -log1p(exp(-f))
    return f - log1p(exp(f))


cdef inline double sigmoid(double f) nogil:
    cdef double e
    if f >= 0:
        return 1.0 / (1.0 + exp(-f))
    e = exp(f)
    return e / (1.0 + e)


def skipgram_epoch(const int64_t[::1] walks, const int64_t[::1] offsets,
                   double[:, ::1] syn0, double[:, ::1] syn1,
                   const double[::1] noise_cdf, int64_t window, int64_t negative,
                   double learning_rate, int64_t processed, int64_t total_tokens,
                   uint64_t[::1] state):
    """One pass over the corpus; returns (loss_sum, pair_count, processed)."""
    cdef uint64_t* s = &state[0]
    cdef int64_t num_walks = offsets.shape[0] - 1
    cdef int64_t dim = syn0.shape[1]
    cdef int64_t n_noise = noise_cdf.shape[0]
    neu_arr = np.zeros(dim, dtype=np.float64)
    cdef double[::1] neu1e = neu_arr
    cdef int64_t wi, a, b, i, j, center, context, target, d, c, lo, hi, mid
    cdef double alpha, frac, f, g, label, u, loss = 0.0
    cdef int64_t pairs = 0
    with nogil:
        for wi in range(num_walks):
            a = offsets[wi]
            b = offsets[wi + 1]
            for i in range(a, b):
                frac = 1.0 - <double>processed / <double>total_tokens
                if frac < 1e-4:
                    frac = 1e-4
                alpha = learning_rate * frac
                center = walks[i]
                for j in range(i - window, i + window + 1):
                    if j < a or j >= b or j == i:
                        continue
                    context = walks[j]
                    for c in range(dim):
                        neu1e[c] = 0.0
                    for d in range(negative + 1):
                        if d == 0:
                            target = context
                            label = 1.0
                        else:
                            u = next_double(s)
                            lo = 0
                            hi = n_noise - 1
                            while lo < hi:
                                mid = (lo + hi) >> 1
                                if noise_cdf[mid] > u:
                                    hi = mid
                                else:
                                    lo = mid + 1
                            target = lo
                            if target == context:
                                continue
                            label = 0.0
                        f = 0.0
                        for c in range(dim):
                            f = f + syn0[center, c] * syn1[target, c]
                        if label > 0.5:
                            loss = loss - log_sigmoid(f)
                        else:
                            loss = loss - log_sigmoid(-f)
                        g = (label - sigmoid(f)) * alpha
                        for c in range(dim):
                            neu1e[c] = neu1e[c] + g * syn1[target, c]
                        for c in range(dim):
                            syn1[target, c] = syn1[target, c] + g * syn0[center, c]
                    for c in range(dim):
                        syn0[center, c] = syn0[center, c] + neu1e[c]
                    pairs += 1
                processed += 1
    return loss, pairs, processed
