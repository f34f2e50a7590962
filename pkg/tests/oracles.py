"""Independent reference computations used by the tests.

Nothing here imports the package: the discovery test uses the binomial
identity for integer-shape incomplete beta functions, path probabilities come
from beta-function ratios, and optimal policies are found by enumerating every
deterministic continue/reject rule.
"""
import itertools
import math
from fractions import Fraction


def beta_cdf_integer(x: float, a: int, b: int) -> float:
    """I_x(a, b) for integer shapes via P(Bin(a + b - 1, x) >= a)."""
    m = a + b - 1
    return sum(math.comb(m, j) * x**j * (1 - x) ** (m - j) for j in range(a, m + 1))


def is_discovery(a: int, b: int, n: int, S: int, s: float, alpha: float) -> bool:
    return beta_cdf_integer(s, a + S, b + n - S) < alpha


def _beta_fn(x: int, y: int) -> Fraction:
    # B(x, y) for positive integers
    return Fraction(math.factorial(x - 1) * math.factorial(y - 1), math.factorial(x + y - 1))


def path_prob(a: int, b: int, n: int, S: int) -> Fraction:
    """Prior-predictive probability of one specific outcome path with S successes in n trials."""
    return _beta_fn(a + S, b + n - S) / _beta_fn(a, b)


def enumerate_policies(a: int, b: int, k: int, s: float, alpha: float):
    """Every deterministic rule on non-discovery states with n < k.

    Yields ``(reject_set, expected_samples, discovery_prob)`` with exact
    rational arithmetic. Discovery states always stop; n = k always rejects.
    """
    free = [(n, S) for n in range(1, k) for S in range(n + 1) if not is_discovery(a, b, n, S, s, alpha)]
    paths = list(itertools.product((0, 1), repeat=k))
    for bits in itertools.product((False, True), repeat=len(free)):
        rej = {st for st, r in zip(free, bits) if r}
        e_tau = Fraction(0)
        p_disc = Fraction(0)
        for path in paths:
            S = 0
            for n, x in enumerate(path, start=1):
                S += x
                if is_discovery(a, b, n, S, s, alpha):
                    stop, disc = n, True
                    break
                if n == k or (n, S) in rej:
                    stop, disc = n, False
                    break
            # probability of the realised prefix; the unused suffix sums out
            pr = path_prob(a, b, stop, sum(path[:stop]))
            # each prefix is counted 2^(k - stop) times over the full path set
            w = pr / 2 ** (k - stop)
            e_tau += w * stop
            if disc:
                p_disc += w
        yield rej, e_tau, p_disc


def brute_force_kappa(a: int, b: int, k: int, s: float, alpha: float, c: float = 0.0) -> float:
    """Optimal expected cost per discovery, ``min_r (E tau_r + c) / P_r(discover)``."""
    best = math.inf
    for _, e_tau, p in enumerate_policies(a, b, k, s, alpha):
        if p > 0:
            best = min(best, (float(e_tau) + c) / float(p))
    return best


def brute_force_values(a: int, b: int, k: int, s: float, alpha: float, kappa: float) -> dict:
    """``W(n, S)`` for every state by minimising over all continue/reject rules from that state.

    The cost from a state is the expected number of further observations plus
    ``kappa`` if the experiment is eventually rejected.
    """
    out = {}
    for n in range(1, k + 1):
        for S in range(n + 1):
            if is_discovery(a, b, n, S, s, alpha):
                out[(n, S)] = 0.0
                continue
            if n == k:
                out[(n, S)] = kappa
                continue
            free = [
                (m, T) for m in range(n, k) for T in range(S, S + m - n + 1)
                if not is_discovery(a, b, m, T, s, alpha)
            ]
            best = math.inf
            base = path_prob(a, b, n, S)
            for bits in itertools.product((False, True), repeat=len(free)):
                rej = {st for st, r in zip(free, bits) if r}
                if (n, S) in rej:
                    best = min(best, kappa)
                    continue
                cost = 0.0
                L = k - n
                for tail in itertools.product((0, 1), repeat=L):
                    T = S
                    for j, x in enumerate(tail, start=1):
                        T += x
                        m = n + j
                        if is_discovery(a, b, m, T, s, alpha):
                            stop, pen = j, 0.0
                            break
                        if m == k or (m, T) in rej:
                            stop, pen = j, kappa
                            break
                    pr = float(path_prob(a, b, n + stop, T) / base) / 2 ** (L - stop)
                    cost += pr * (stop + pen)
                best = min(best, cost)
            out[(n, S)] = best
    return out
