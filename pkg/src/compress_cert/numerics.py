"""Special functions and root finding shared by the bound solvers.

Two evaluation paths exist for the regularized incomplete beta function:
a scalar one in plain Python (fast for single queries) and an array one in
numpy (fast when a whole table of queries is solved at once).  Both run the
same modified-Lentz continued fraction with the same stopping rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

_TINY = 1e-300


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class ConvergenceError(ArithmeticError):
    """An iterative evaluation did not converge within its iteration cap."""


@dataclass(frozen=True)
class Precision:
    bisection_tol: float = 1e-10
    series_tol: float = 1e-15
    max_iter: int = 10_000

    def __post_init__(self):
        if not self.bisection_tol > 0:
            raise ValueError("bisection_tol must be positive")
        if not self.series_tol > 0:
            raise ValueError("series_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


DEFAULT_PRECISION = Precision()


def log_binomial(n: int, k: int) -> float:
    """Natural log of the binomial coefficient C(n, k)."""
    if n < 0 or k < 0 or k > n:
        raise DomainError(f"log_binomial requires 0 <= k <= n, got n={n}, k={k}")
    if k == 0 or k == n:
        return 0.0
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _betacf(x: float, a: float, b: float, prec: Precision) -> float:
    # Modified Lentz evaluation of the continued fraction for I_x(a, b).
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, prec.max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < prec.series_tol:
            return h
    raise ConvergenceError(
        f"incomplete beta continued fraction did not converge "
        f"(x={x}, a={a}, b={b}, max_iter={prec.max_iter})"
    )


def _check_beta_args(t, a, b):
    if not (0.0 <= t <= 1.0):
        raise DomainError(f"t must lie in [0, 1], got {t}")
    if not (a > 0 and b > 0):
        raise DomainError(f"a and b must be positive, got a={a}, b={b}")


def log_reg_inc_beta(t: float, a: float, b: float,
                     prec: Precision = DEFAULT_PRECISION) -> float:
    """log I_t(a, b), accurate even where I_t(a, b) underflows."""
    _check_beta_args(t, a, b)
    if t == 0.0:
        return -math.inf
    if t == 1.0:
        return 0.0
    log_front = a * math.log(t) + b * math.log1p(-t) - _log_beta(a, b)
    if t < (a + 1.0) / (a + b + 2.0):
        return log_front + math.log(_betacf(t, a, b, prec)) - math.log(a)
    tail = math.exp(log_front + math.log(_betacf(1.0 - t, b, a, prec)) - math.log(b))
    return math.log1p(-tail) if tail < 1.0 else -math.inf


def reg_inc_beta(t: float, a: float, b: float,
                 prec: Precision = DEFAULT_PRECISION) -> float:
    """Regularized incomplete beta function I_t(a, b).

    Uses the continued fraction directly when t <= (a+1)/(a+b+2) and the
    symmetry I_t(a, b) = 1 - I_{1-t}(b, a) otherwise.

    >>> round(reg_inc_beta(0.3, 1.0, 1.0), 12)
    0.3
    """
    _check_beta_args(t, a, b)
    if t == 0.0:
        return 0.0
    if t == 1.0:
        return 1.0
    log_front = a * math.log(t) + b * math.log1p(-t) - _log_beta(a, b)
    if t < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(t, a, b, prec) / a
    return 1.0 - math.exp(log_front) * _betacf(1.0 - t, b, a, prec) / b


# ---------------------------------------------------------------- arrays

_lgamma = np.vectorize(math.lgamma, otypes=[float])


def _betacf_array(x, a, b, prec: Precision):
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _TINY, _TINY, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, prec.max_iter + 1):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            return h
        xa, aa_, ba, qabi, qapi, qami = x[idx], a[idx], b[idx], qab[idx], qap[idx], qam[idx]
        ci, di = c[idx], d[idx]
        m2 = 2 * m
        aa = m * (ba - m) * xa / ((qami + m2) * (aa_ + m2))
        di = 1.0 + aa * di
        di = np.where(np.abs(di) < _TINY, _TINY, di)
        ci = 1.0 + aa / ci
        ci = np.where(np.abs(ci) < _TINY, _TINY, ci)
        di = 1.0 / di
        hi = h[idx] * (di * ci)
        aa = -(aa_ + m) * (qabi + m) * xa / ((aa_ + m2) * (qapi + m2))
        di = 1.0 + aa * di
        di = np.where(np.abs(di) < _TINY, _TINY, di)
        ci = 1.0 + aa / ci
        ci = np.where(np.abs(ci) < _TINY, _TINY, ci)
        di = 1.0 / di
        delta = di * ci
        hi = hi * delta
        h[idx], c[idx], d[idx] = hi, ci, di
        active[idx] = np.abs(delta - 1.0) >= prec.series_tol
    if active.any():
        raise ConvergenceError(
            f"incomplete beta continued fraction did not converge for "
            f"{int(active.sum())} entries (max_iter={prec.max_iter})"
        )
    return h


def log_reg_inc_beta_array(t, a, b, prec: Precision = DEFAULT_PRECISION) -> np.ndarray:
    """Elementwise log I_t(a, b) over broadcast numpy arrays.

    Callers guarantee 0 < t < 1 and a, b > 0; entries are not validated
    individually so this stays cheap inside a vectorized bisection.
    """
    t, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, a, b)))
    t, a, b = t.ravel().copy(), a.ravel().copy(), b.ravel().copy()
    out = np.empty_like(t)
    log_front = (a * np.log(t) + b * np.log1p(-t)
                 - (_lgamma(a) + _lgamma(b) - _lgamma(a + b)))
    direct = t < (a + 1.0) / (a + b + 2.0)
    if direct.any():
        cf = _betacf_array(t[direct], a[direct], b[direct], prec)
        out[direct] = log_front[direct] + np.log(cf) - np.log(a[direct])
    swap = ~direct
    if swap.any():
        cf = _betacf_array(1.0 - t[swap], b[swap], a[swap], prec)
        tail = np.exp(log_front[swap] + np.log(cf) - np.log(b[swap]))
        with np.errstate(divide="ignore"):
            out[swap] = np.where(tail < 1.0, np.log1p(-np.minimum(tail, 1.0)), -np.inf)
    return out


# ------------------------------------------------------------ bisection

class Root(NamedTuple):
    root: float
    lo: float
    hi: float
    iterations: int
    converged: bool


def bisect(f: Callable[[float], float], lo: float, hi: float,
           prec: Precision = DEFAULT_PRECISION, *, decreasing: bool = False,
           endpoint: str = "upper") -> Root:
    """Bracketing bisection on a sign-structured function.

    With ``decreasing=False`` a positive ``f(t)`` means the crossing lies
    below ``t``; ``decreasing=True`` flips that.  ``endpoint`` picks which
    end of the final bracket is reported ("upper", "lower" or "mid").
    Exhausting ``max_iter`` returns the bracket midpoint, flagged.
    """
    if not lo < hi:
        if lo == hi:
            return Root(lo, lo, hi, 0, True)
        raise DomainError(f"bisect requires lo < hi, got [{lo}, {hi}]")
    it = 0
    while hi - lo > prec.bisection_tol:
        if it >= prec.max_iter:
            return Root(0.5 * (lo + hi), lo, hi, it, False)
        t = 0.5 * (lo + hi)
        if (f(t) > 0) != decreasing:
            hi = t
        else:
            lo = t
        it += 1
    return Root(_pick(endpoint, lo, hi), lo, hi, it, True)


def _pick(endpoint, lo, hi):
    if endpoint == "upper":
        return hi
    if endpoint == "lower":
        return lo
    if endpoint == "mid":
        return 0.5 * (lo + hi)
    raise ValueError(f"unknown endpoint {endpoint!r}")


def bisect_array(f: Callable[[np.ndarray, np.ndarray], np.ndarray], lo, hi,
                 prec: Precision = DEFAULT_PRECISION, *,
                 decreasing: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Run independent bisections for many brackets at once.

    ``f(t, idx)`` evaluates the sign function at points ``t`` for the rows
    ``idx`` still being refined.  Each row follows exactly the iteration of
    :func:`bisect`; the final ``(lo, hi)`` brackets are returned.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(prec.max_iter):
        idx = np.nonzero(hi - lo > prec.bisection_tol)[0]
        if idx.size == 0:
            break
        t = 0.5 * (lo[idx] + hi[idx])
        move_hi = (f(t, idx) > 0) != decreasing
        hi[idx] = np.where(move_hi, t, hi[idx])
        lo[idx] = np.where(move_hi, lo[idx], t)
    return lo, hi
