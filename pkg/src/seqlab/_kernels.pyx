# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Beta-Bernoulli backward induction and the experiment simulator.

Both functions mirror :mod:`seqlab._fallback` operation for operation so that
the two backends return bitwise-identical results.
"""
import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport cos, log, sqrt
from numpy.random cimport bitgen_t

cnp.import_array()

cdef double TWO_PI = 6.283185307179586
cdef const char *CAPSULE_NAME = "BitGenerator"

BACKEND = "cython"


def make_source(bit_generator):
    """Observation source for :func:`run_experiments`: the bit generator itself."""
    return bit_generator


cdef inline Py_ssize_t _first_accept(double a_n, Py_ssize_t n) nogil:
    # acc is +inf when unreachable
    if a_n > n:
        return n + 1
    return <Py_ssize_t>a_n


def bb_induction(double a, double b, Py_ssize_t k, const double[::1] acc, double reject_cost,
                 bint keep_values=False):
    """Backward induction on the integer lattice 0 <= S <= n <= k.

    Returns ``(w1, r, nrej, table)`` where ``w1`` holds W(1, 0) and W(1, 1),
    ``r[n]`` is the largest rejected S at step n (-inf if none), ``nrej[n]`` the
    number of rejected states and ``table`` the full value table when requested.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=1] nxt_arr = np.zeros(k + 2)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cur_arr = np.zeros(k + 2)
    cdef double[::1] nxt = nxt_arr
    cdef double[::1] cur = cur_arr
    cdef double[::1] tmp
    r_arr = np.full(k + 1, -np.inf)
    nrej_arr = np.zeros(k + 1, dtype=np.int64)
    cdef double[::1] r = r_arr
    cdef cnp.int64_t[::1] nrej = nrej_arr
    cdef double[:, ::1] tab
    table = None
    if keep_values:
        table = np.full((k + 1, k + 1), np.nan)
        tab = table
    cdef Py_ssize_t n, S, fa, rmax, cnt
    cdef double ab = a + b
    cdef double p, cont

    with nogil:
        fa = _first_accept(acc[k], k)
        cnt = 0
        for S in range(k + 1):
            if S >= fa:
                nxt[S] = 0.0
            else:
                nxt[S] = reject_cost
                cnt += 1
        if cnt > 0:
            r[k] = <double>(cnt - 1)
        nrej[k] = cnt
        if keep_values:
            for S in range(k + 1):
                tab[k, S] = nxt[S]

        for n in range(k - 1, 0, -1):
            fa = _first_accept(acc[n], n)
            rmax = -1
            cnt = 0
            for S in range(n + 1):
                if S >= fa:
                    cur[S] = 0.0
                else:
                    p = (a + S) / (ab + n)
                    cont = 1.0 + p * nxt[S + 1] + (1.0 - p) * nxt[S]
                    if cont <= reject_cost:
                        cur[S] = cont
                    else:
                        cur[S] = reject_cost
                        rmax = S
                        cnt += 1
            if rmax >= 0:
                r[n] = <double>rmax
            nrej[n] = cnt
            if keep_values:
                for S in range(n + 1):
                    tab[n, S] = cur[S]
            tmp = nxt
            nxt = cur
            cur = tmp

    w1 = np.array([nxt[0], nxt[1]])
    return w1, r_arr, nrej_arr, table


def run_experiments(const double[::1] effects, const double[::1] acc, const double[::1] rej,
                    Py_ssize_t horizon, bint discrete, double sigma, object source,
                    Py_ssize_t max_discoveries):
    """Run experiments in order until ``max_discoveries`` discoveries or the effects run out.

    Returns ``(count, samples, outcome, final_S)`` for the first ``count``
    experiments. Outcome codes: 0 rejected, 1 discovered, 2 horizon reached.
    """
    cdef Py_ssize_t m = effects.shape[0]
    samples_arr = np.zeros(m, dtype=np.int64)
    outcome_arr = np.zeros(m, dtype=np.int8)
    final_arr = np.zeros(m, dtype=np.float64)
    cdef cnp.int64_t[::1] samples = samples_arr
    cdef cnp.int8_t[::1] outcome = outcome_arr
    cdef double[::1] final_s = final_arr

    capsule = source.capsule
    if not PyCapsule_IsValid(capsule, CAPSULE_NAME):
        raise ValueError("source must be a numpy BitGenerator")
    cdef bitgen_t *rng = <bitgen_t *>PyCapsule_GetPointer(capsule, CAPSULE_NAME)

    cdef Py_ssize_t e, n, count = 0, disc = 0
    cdef double mu, S, u, u1, u2, x
    cdef signed char out

    with source.lock, nogil:
        for e in range(m):
            mu = effects[e]
            S = 0.0
            n = 0
            while True:
                n += 1
                if discrete:
                    u = rng.next_double(rng.state)
                    if u < mu:
                        S += 1.0
                    if S >= acc[n]:
                        out = 1
                        break
                else:
                    u1 = rng.next_double(rng.state)
                    u2 = rng.next_double(rng.state)
                    x = mu + sigma * (sqrt(-2.0 * log(1.0 - u1)) * cos(TWO_PI * u2))
                    S += x
                    if S > acc[n]:
                        out = 1
                        break
                if S <= rej[n]:
                    out = 0
                    break
                if n >= horizon:
                    out = 2
                    break
            samples[e] = n
            outcome[e] = out
            final_s[e] = S
            count = e + 1
            if out == 1:
                disc += 1
                if disc >= max_discoveries:
                    break
    return count, samples_arr, outcome_arr, final_arr
