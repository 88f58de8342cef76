# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot allocation kernels.

Same contracts as ``_kernels_py``; plain C loops instead of vectorized
NumPy, which pays off on the many small problems the allocators and the
dual solver generate.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, log, pow, sqrt

cnp.import_array()

PRICE_FLOOR = 1e-12
cdef double _PRICE_FLOOR = 1e-12


def waterfill(weights, caps, double budget):
    """Split ``budget`` proportionally to ``weights`` under per-entry caps.

    Clamp-and-redistribute rounds, at most one per entry; leftover budget
    stays unallocated when the caps are too small to absorb it.
    """
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[::1] cap = np.ascontiguousarray(caps, dtype=np.float64)
    cdef Py_ssize_t n = w.shape[0]
    alloc_arr = np.zeros(n)
    cdef double[::1] alloc = alloc_arr
    if n == 0 or budget <= 0.0:
        return alloc_arr
    free_arr = np.ones(n, dtype=np.uint8)
    cdef unsigned char[::1] free = free_arr
    cdef double remaining = budget
    cdef double denom, cap_sum
    cdef Py_ssize_t i, round_no
    cdef bint clamped
    for round_no in range(n):
        denom = 0.0
        for i in range(n):
            if free[i]:
                denom += w[i]
        if denom <= 0.0 or remaining <= 0.0:
            break
        # Clamp decisions use the round's remaining budget, as in the
        # NumPy twin, so both backends walk the same rounds.
        clamped = False
        cap_sum = 0.0
        for i in range(n):
            if free[i] and remaining * w[i] / denom >= cap[i]:
                alloc[i] = cap[i]
                cap_sum += cap[i]
                free[i] = 0
                clamped = True
        if not clamped:
            for i in range(n):
                if free[i]:
                    alloc[i] = remaining * w[i] / denom
            return alloc_arr
        remaining -= cap_sum
    return alloc_arr


def dual_chunk(
    edge_links,
    edge_flows,
    capacities,
    flow_weights,
    double gamma,
    rate_caps,
    prices,
    rate_sum,
    long start_iter,
    long num_iters,
    double alpha0,
    double best_dual,
    best_prices,
    dual_history=None,
):
    """Run ``num_iters`` projected subgradient steps on the dual prices.

    Mirrors ``_kernels_py.dual_chunk``: updates ``prices`` in place,
    accumulates rate iterates into ``rate_sum``, snapshots the prices of
    the best dual value into ``best_prices``, optionally records the dual
    values, and returns the updated best dual value.
    """
    cdef const long[::1] e_links = np.ascontiguousarray(edge_links, dtype=np.int64)
    cdef const long[::1] e_flows = np.ascontiguousarray(edge_flows, dtype=np.int64)
    cdef const double[::1] c = np.ascontiguousarray(capacities, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(flow_weights, dtype=np.float64)
    cdef const double[::1] x_cap = np.ascontiguousarray(rate_caps, dtype=np.float64)
    cdef double[::1] lam = prices
    cdef double[::1] xsum = rate_sum
    cdef double[::1] lam_best = best_prices
    cdef double[::1] hist
    cdef bint record = dual_history is not None
    if record:
        hist = dual_history

    cdef Py_ssize_t nnz = e_links.shape[0]
    cdef Py_ssize_t L = c.shape[0]
    cdef Py_ssize_t R = w.shape[0]
    cdef double inv_gamma = 1.0 / gamma
    cdef double one_minus = 1.0 - gamma
    cdef bint is_log = gamma == 1.0

    q_arr = np.zeros(R)
    x_arr = np.zeros(R)
    load_arr = np.zeros(L)
    cdef double[::1] q = q_arr
    cdef double[::1] x = x_arr
    cdef double[::1] load = load_arr

    cdef Py_ssize_t i, e, t_idx
    cdef long t
    cdef double g, step, xi

    for t_idx in range(num_iters):
        t = start_iter + t_idx + 1
        for i in range(R):
            q[i] = 0.0
        for e in range(nnz):
            q[e_flows[e]] += lam[e_links[e]]
        g = 0.0
        for i in range(R):
            if q[i] < _PRICE_FLOOR:
                q[i] = _PRICE_FLOOR
            if is_log:
                xi = w[i] / q[i]
            else:
                xi = pow(w[i] / q[i], inv_gamma)
            if xi > x_cap[i]:
                xi = x_cap[i]
            x[i] = xi
            if is_log:
                g += w[i] * log(xi) - q[i] * xi
            else:
                g += w[i] * pow(xi, one_minus) / one_minus - q[i] * xi
            xsum[i] += xi
        for i in range(L):
            g += lam[i] * c[i]
            load[i] = 0.0
        if record:
            hist[t_idx] = g
        if g < best_dual:
            best_dual = g
            for i in range(L):
                lam_best[i] = lam[i]
        for e in range(nnz):
            load[e_links[e]] += x[e_flows[e]]
        step = alpha0 / sqrt(<double> t)
        for i in range(L):
            lam[i] += step * (load[i] - c[i])
            if lam[i] < 0.0:
                lam[i] = 0.0
    return best_dual
