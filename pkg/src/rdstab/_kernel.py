"""Compiled inner loop for long workload-recursion runs."""
import numpy as np
from numba import njit

IID, IDENTICAL, JOINT = 0, 1, 2


@njit(cache=True)
def _pick(cdf, u):
    k = 0
    while u >= cdf[k] and k < cdf.shape[0] - 1:
        k += 1
    return k


@njit(cache=True)
def simulate(rng, K, d, lam, slots, burn_in, stride, mode, values, cdf, rows, record_cap):
    """Run the recursion from the empty state for ``slots`` slots.

    Per arrival: one uniform for the arrival flag, ``d`` partial Fisher-Yates
    draws for the routing set, then the service draws (``d`` for iid, one
    otherwise). ``record_cap > 0`` keeps the first arrivals' draws so a
    reference implementation can replay them.
    """
    w = np.zeros(K, np.int64)
    perm = np.arange(K)
    routed = np.empty(d, np.int64)
    b = np.empty(d, np.int64)
    sums = np.zeros(K)
    series = np.zeros(slots // stride, np.int64)
    max_total = 0
    jobs = 0
    sojourn = 0.0
    violations = 0
    first_violation = -1
    rec_slot = np.zeros(record_cap, np.int64)
    rec_route = np.zeros((record_cap, d), np.int64)
    rec_b = np.zeros((record_cap, d), np.int64)
    nrec = 0
    for t in range(1, slots + 1):
        if rng.random() < lam:
            for k in range(d):
                r = k + rng.integers(0, K - k)
                tmp = perm[k]
                perm[k] = perm[r]
                perm[r] = tmp
                routed[k] = perm[k]
            if mode == IID:
                for k in range(d):
                    b[k] = values[_pick(cdf, rng.random())]
            elif mode == IDENTICAL:
                v = values[_pick(cdf, rng.random())]
                for k in range(d):
                    b[k] = v
            else:
                row = _pick(cdf, rng.random())
                for k in range(d):
                    b[k] = rows[row, routed[k]]
            # min_j [b_j + w_j - w_k]^+ == [min_j (b_j + w_j) - w_k]^+
            finish = b[0] + w[routed[0]]
            for k in range(1, d):
                x = b[k] + w[routed[k]]
                if x < finish:
                    finish = x
            if nrec < record_cap:
                rec_slot[nrec] = t
                for k in range(d):
                    rec_route[nrec, k] = routed[k]
                    rec_b[nrec, k] = b[k]
                nrec += 1
            if t > burn_in:
                jobs += 1
                sojourn += finish
            for k in range(d):
                i = routed[k]
                if finish > w[i]:
                    w[i] = finish
        total = 0
        top = 0
        for i in range(K):
            if w[i] > 0:
                w[i] -= 1
            total += w[i]
            if w[i] > top:
                top = w[i]
        ntop = 0
        for i in range(K):
            if w[i] == top:
                ntop += 1
        if ntop < d:
            violations += 1
            if first_violation < 0:
                first_violation = t
        if t > burn_in:
            for i in range(K):
                sums[i] += w[i]
            if total > max_total:
                max_total = total
        if t % stride == 0:
            series[t // stride - 1] = total
    return (w, sums, series, max_total, jobs, sojourn, violations, first_violation,
            rec_slot[:nrec], rec_route[:nrec], rec_b[:nrec])
