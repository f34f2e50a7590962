"""Pure-Python/numpy implementations of the compiled kernels.

Same signatures and same floating-point operation order as ``_kernels.pyx``:
the induction sweep is vectorised per row, and the simulator reads uniforms
from a buffered view of the bit generator so that the i-th consumed uniform is
the i-th ``next_double`` of the generator, exactly as in the compiled loop.
"""
import math

import numpy as np

BACKEND = "python"

TWO_PI = 6.283185307179586


class UniformStream:
    """Sequential reader of ``next_double`` outputs with look-ahead."""

    def __init__(self, bit_generator, block=8192):
        self._gen = np.random.Generator(bit_generator)
        self._block = block
        self._buf = np.empty(0)
        self._pos = 0

    def peek(self, m):
        avail = self._buf.size - self._pos
        if avail < m:
            fresh = self._gen.random(max(self._block, m - avail))
            self._buf = np.concatenate((self._buf[self._pos:], fresh))
            self._pos = 0
        return self._buf[self._pos:self._pos + m]

    def consume(self, m):
        self._pos += m

    def next(self):
        v = self.peek(1)[0]
        self._pos += 1
        return float(v)


def make_source(bit_generator):
    return UniformStream(bit_generator)


def bb_induction(a, b, k, acc, reject_cost, keep_values=False):
    a = float(a)
    b = float(b)
    ab = a + b
    acc = np.asarray(acc, dtype=float)
    r = np.full(k + 1, -np.inf)
    nrej = np.zeros(k + 1, dtype=np.int64)
    table = np.full((k + 1, k + 1), np.nan) if keep_values else None

    S = np.arange(k + 1, dtype=float)
    nxt = np.where(S >= acc[k], 0.0, reject_cost)
    cnt = int(np.count_nonzero(S < acc[k]))
    if cnt > 0:
        r[k] = float(cnt - 1)
    nrej[k] = cnt
    if keep_values:
        table[k, :] = nxt

    for n in range(k - 1, 0, -1):
        Sn = S[: n + 1]
        p = (a + Sn) / (ab + n)
        cont = 1.0 + p * nxt[1 : n + 2] + (1.0 - p) * nxt[: n + 1]
        accepted = Sn >= acc[n]
        reject = ~accepted & ~(cont <= reject_cost)
        cur = np.where(accepted, 0.0, np.where(reject, reject_cost, cont))
        idx = np.flatnonzero(reject)
        if idx.size:
            r[n] = float(idx[-1])
        nrej[n] = idx.size
        if keep_values:
            table[n, : n + 1] = cur
        nxt = cur
    w1 = np.array([nxt[0], nxt[1]])
    return w1, r, nrej, table


def _run_discrete(mu, acc, rej, horizon, stream):
    S = 0
    n0 = 0
    chunk = 16
    while True:
        m = min(chunk, horizon - n0)
        u = stream.peek(m)
        Ss = S + np.cumsum(u < mu)
        ns = np.arange(n0 + 1, n0 + m + 1)
        disc = Ss >= acc[ns]
        rejm = Ss <= rej[ns]
        stop = disc | rejm | (ns >= horizon)
        if stop.any():
            i = int(np.argmax(stop))
            stream.consume(i + 1)
            out = 1 if disc[i] else (0 if rejm[i] else 2)
            return int(ns[i]), out, float(Ss[i])
        stream.consume(m)
        S = int(Ss[-1])
        n0 += m
        chunk *= 2


def _run_continuous(mu, acc, rej, horizon, sigma, stream):
    S = 0.0
    n = 0
    while True:
        n += 1
        u1 = stream.next()
        u2 = stream.next()
        x = mu + sigma * (math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(TWO_PI * u2))
        S += x
        if S > acc[n]:
            return n, 1, S
        if S <= rej[n]:
            return n, 0, S
        if n >= horizon:
            return n, 2, S


def run_experiments(effects, acc, rej, horizon, discrete, sigma, source, max_discoveries):
    effects = np.asarray(effects, dtype=float)
    acc = np.asarray(acc, dtype=float)
    rej = np.asarray(rej, dtype=float)
    m = effects.size
    samples = np.zeros(m, dtype=np.int64)
    outcome = np.zeros(m, dtype=np.int8)
    final_s = np.zeros(m, dtype=np.float64)
    count = 0
    disc = 0
    for e in range(m):
        mu = float(effects[e])
        if discrete:
            n, out, S = _run_discrete(mu, acc, rej, horizon, source)
        else:
            n, out, S = _run_continuous(mu, acc, rej, horizon, sigma, source)
        samples[e] = n
        outcome[e] = out
        final_s[e] = S
        count = e + 1
        if out == 1:
            disc += 1
            if disc >= max_discoveries:
                break
    return count, samples, outcome, final_s
