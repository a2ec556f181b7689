"""Distribution-free bounds on the probability of change of compression.

For a sample of size N, confidence parameter delta and compressed
cardinality k this module computes

* ``eps``: the upper bound valid under preference alone,
* ``eps_low`` / ``eps_up``: the two-sided interval valid under preference,
  non-associativity and non-concentrated mass,
* the explicit envelope ``k/N -+ 2 sqrt(k+1)/N (ln(1/delta) + ln(k+1) + 4)``.

The roots are found by bisection on incomplete-beta reformulations of the
defining series.  The series themselves (:func:`psi`, :func:`psi_tilde`)
are evaluated by direct log-domain summation and serve as a residual check
on every solution.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .numerics import (
    DEFAULT_PRECISION,
    ConvergenceError,
    DomainError,
    Precision,
    bisect,
    bisect_array,
    log_binomial,
    log_reg_inc_beta,
    log_reg_inc_beta_array,
)

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-6
CSV_HEADER = ("N", "delta", "k", "eps", "eps_low", "eps_up", "asym_low", "asym_high")


@dataclass(frozen=True)
class BoundQuery:
    N: int
    k: int
    delta: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be a positive integer, got {self.N}")
        if int(self.k) != self.k or not 0 <= self.k <= self.N:
            raise DomainError(f"k must be an integer in [0, N], got k={self.k}, N={self.N}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class BoundRow:
    k: int
    eps: float
    eps_low: float
    eps_up: float
    asym_low: float
    asym_high: float


@dataclass(frozen=True)
class BoundTable:
    N: int
    delta: float
    rows: tuple[BoundRow, ...] = field(repr=False)

    def row(self, k: int) -> BoundRow:
        r = self.rows[k]
        assert r.k == k
        return r

    def to_csv(self, dest=None) -> str:
        """Serialize as CSV (12 significant digits, LF endings).

        Writes to ``dest`` (a path) when given and always returns the text.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([self.N, fmt(self.delta), r.k, fmt(r.eps), fmt(r.eps_low),
                        fmt(r.eps_up), fmt(r.asym_low), fmt(r.asym_high)])
        text = buf.getvalue()
        if dest is not None:
            Path(dest).write_text(text, encoding="utf-8", newline="")
        return text


def fmt(x: float) -> str:
    return format(x, ".12g")


# ------------------------------------------------------- series (oracles)

@lru_cache(maxsize=16)
def _log_factorials(n: int) -> np.ndarray:
    return np.array([math.lgamma(i + 1) for i in range(n + 1)])


def _log_binom_vec(m: np.ndarray, k: int, lf: np.ndarray) -> np.ndarray:
    return lf[m] - lf[k] - lf[m - k]


def _sum_exp(log_terms: np.ndarray) -> float:
    if log_terms.size == 0:
        return 0.0
    top = float(np.max(log_terms))
    if math.isinf(top):
        return math.exp(top)
    # positive terms: numpy's pairwise summation keeps the error O(log n) ulps
    return math.exp(top) * float(np.sum(np.exp(log_terms - top)))


def psi(q: BoundQuery, alpha: float) -> float:
    """The series whose unit crossing defines ``eps`` (k < N only)."""
    N, k, delta = q.N, q.k, q.delta
    if k == N:
        raise DomainError("psi is undefined for k = N (eps_N = 1 by definition)")
    if not 0.0 <= alpha < 1.0:
        raise DomainError(f"psi requires 0 <= alpha < 1, got {alpha}")
    lf = _log_factorials(N)
    m = np.arange(k, N)
    terms = (math.log(delta / N) + _log_binom_vec(m, k, lf) - log_binomial(N, k)
             - (N - m) * math.log1p(-alpha))
    return _sum_exp(terms)


def psi_tilde(q: BoundQuery, alpha: float) -> float:
    """The two-sum series whose unit crossings define ``eps_low``/``eps_up``."""
    N, k, delta = q.N, q.k, q.delta
    if not alpha < 1.0:
        raise DomainError(f"psi_tilde requires alpha < 1, got {alpha}")
    lf = _log_factorials(4 * N)
    l1a = math.log1p(-alpha)
    lcnk = log_binomial(N, k)
    m_hi = np.arange(N + 1, 4 * N + 1)
    parts = [math.log(delta / (6 * N)) + _log_binom_vec(m_hi, k, lf) - lcnk + (m_hi - N) * l1a]
    if k < N:
        m_lo = np.arange(k, N)
        parts.append(math.log(delta / (2 * N)) + _log_binom_vec(m_lo, k, lf) - lcnk
                     - (N - m_lo) * l1a)
    return _sum_exp(np.concatenate(parts))


# ------------------------------------------- incomplete-beta equations

def _log_pmf(k, N, t):
    # log of C(N,k) t^k (1-t)^(N-k); equals I_t(k,N-k+1) - I_t(k+1,N-k)
    return log_binomial(N, k) + (k * math.log(t) if k else 0.0) + (N - k) * math.log1p(-t)


def _logaddexp(x, y):
    if x == -math.inf:
        return y
    if y == -math.inf:
        return x
    hi, lo = (x, y) if x > y else (y, x)
    return hi + math.log1p(math.exp(lo - hi))


def _eq_eps(t, N, k, delta, prec):
    left = math.log(delta) + log_reg_inc_beta(t, k + 1, N - k, prec)
    right = math.log(t) + math.log(N) + _log_pmf(k, N, t)
    return left - right


def _eq_tilde(t, N, k, delta, c1, prec):
    a = log_reg_inc_beta(t, k + 1, 4 * N + 1 - k, prec)
    left = math.log(delta / 6) + a
    if k < N:
        left = _logaddexp(math.log(c1) + log_reg_inc_beta(t, k + 1, N - k, prec), left)
    right = math.log1p(delta / 6 / N) + math.log(t) + math.log(N) + _log_pmf(k, N, t)
    return left - right


def _lower_coef(delta):
    return delta / 3


def _upper_coef(delta):
    return delta / 2 - delta / 6


# ---------------------------------------------------- residual guard

def _guard(series, q, lo, hi, endpoint, sign_fn, decreasing, prec):
    """Refine a converged bracket until the series re-evaluates to 1.

    Bisection continues past ``bisection_tol`` only while the reported
    endpoint misses the residual target and the bracket can still shrink in
    double precision.  At double resolution the root may be unrepresentable;
    then the bracket must at least straddle the crossing.
    """
    def value(a):
        return math.inf if a >= 1.0 else series(q, a)

    while True:
        t = hi if endpoint == "upper" else lo
        if abs(value(t) - 1.0) <= RESIDUAL_TOL:
            return t
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if (sign_fn(mid) > 0) != decreasing:
            hi = mid
        else:
            lo = mid
    # the crossing falls between adjacent doubles; a neighbour may still
    # meet the residual target even though neither bracket end does
    near = set()
    for a in (lo, hi):
        for direction in (-1.0, 2.0):
            b = a
            for _ in range(4):
                b = math.nextafter(b, direction)
                if 0.0 < b < 1.0:
                    near.add(b)
    best = min(sorted(near), key=lambda a: abs(value(a) - 1.0), default=None)
    if best is not None and abs(value(best) - 1.0) <= RESIDUAL_TOL:
        return best
    v_lo, v_hi = value(lo), value(hi)
    if decreasing:
        ok = v_lo >= 1.0 - 1e-9 and v_hi <= 1.0 + 1e-9
    else:
        ok = v_lo <= 1.0 + 1e-9 and v_hi >= 1.0 - 1e-9
    if not ok:
        raise ConvergenceError(
            f"bracket [{lo!r}, {hi!r}] does not straddle the unit crossing for {q}"
        )
    log.debug("root for %s not representable to residual %g; bracket [%r, %r]",
              q, RESIDUAL_TOL, lo, hi)
    return hi if endpoint == "upper" else lo


# ---------------------------------------------------------- public API

def eps_upper(q: BoundQuery, prec: Precision = DEFAULT_PRECISION) -> float:
    """Upper bound on the change-of-compression probability at cardinality k."""
    N, k, delta = q.N, q.k, q.delta
    if k == N:
        return 1.0

    def sign(t):
        return _eq_eps(t, N, k, delta, prec)

    r = bisect(sign, 0.0, 1.0, prec, endpoint="upper")
    return _guard(psi, q, r.lo, r.hi, "upper", sign, False, prec)


def eps_interval(q: BoundQuery, prec: Precision = DEFAULT_PRECISION) -> tuple[float, float]:
    """Two-sided bounds ``(eps_low, eps_up)`` at cardinality k."""
    N, k, delta = q.N, q.k, q.delta

    def lower_sign(t):
        return _eq_tilde(t, N, k, delta, _lower_coef(delta), prec)

    r = bisect(lower_sign, 0.0, k / N, prec, decreasing=True, endpoint="lower")
    low = r.lo
    if low > 0.0:
        low = _guard(psi_tilde, q, r.lo, r.hi, "lower", lower_sign, True, prec)
    if k == N:
        return low, 1.0

    def upper_sign(t):
        return _eq_tilde(t, N, k, delta, _upper_coef(delta), prec)

    r = bisect(upper_sign, k / N, 1.0, prec, endpoint="upper")
    up = _guard(psi_tilde, q, r.lo, r.hi, "upper", upper_sign, False, prec)
    return low, up


def asymptotic_envelope(q: BoundQuery) -> tuple[float, float]:
    """Explicit (unclamped) envelope around k/N enclosing all three bounds."""
    N, k, delta = q.N, q.k, q.delta
    s = 2.0 * math.sqrt(k + 1) / N * (math.log(1.0 / delta) + math.log(k + 1) + 4.0)
    return k / N - s, k / N + s


# ----------------------------------------------------- vectorized table

def _log_pmf_arr(k, N, t, lbin):
    kt = np.where(k > 0, k * np.log(t), 0.0)
    return lbin + kt + (N - k) * np.log1p(-t)


def _solve_rows(N: int, delta: float, ks: np.ndarray, prec: Precision):
    """Solve eps, eps_low and eps_up for the cardinalities ``ks`` at once."""
    ks = np.asarray(ks, dtype=np.int64)
    kf = ks.astype(float)
    lbin = np.array([log_binomial(N, int(k)) for k in ks])
    log_n = math.log(N)

    eps = np.ones(ks.size)
    open_ = ks < N
    if open_.any():
        kk, lb = kf[open_], lbin[open_]

        def f_eps(t, idx):
            left = math.log(delta) + log_reg_inc_beta_array(t, kk[idx] + 1, N - kk[idx], prec)
            return left - (np.log(t) + log_n + _log_pmf_arr(kk[idx], N, t, lb[idx]))

        lo, hi = bisect_array(f_eps, np.zeros(kk.size), np.ones(kk.size), prec)
        eps[open_] = [_guard(psi, BoundQuery(N, int(k), delta), a, b, "upper",
                             lambda t, k=int(k): _eq_eps(t, N, k, delta, prec), False, prec)
                      for k, a, b in zip(kk, lo, hi)]

    def f_tilde(kk, lb, c1):
        def f(t, idx):
            k_ = kk[idx]
            left = math.log(delta / 6) + log_reg_inc_beta_array(t, k_ + 1, 4 * N + 1 - k_, prec)
            inner = k_ < N
            if inner.any():
                first = np.full(t.shape, -np.inf)
                first[inner] = math.log(c1) + log_reg_inc_beta_array(
                    t[inner], k_[inner] + 1, N - k_[inner], prec)
                left = np.logaddexp(first, left)
            right = math.log1p(delta / 6 / N) + np.log(t) + log_n + _log_pmf_arr(k_, N, t, lb[idx])
            return left - right
        return f

    lo, hi = bisect_array(f_tilde(kf, lbin, _lower_coef(delta)), np.zeros(ks.size), kf / N,
                          prec, decreasing=True)
    eps_low = lo.copy()
    for i in np.nonzero(lo > 0.0)[0]:
        k = int(ks[i])
        eps_low[i] = _guard(psi_tilde, BoundQuery(N, k, delta), lo[i], hi[i], "lower",
                            lambda t, k=k: _eq_tilde(t, N, k, delta, _lower_coef(delta), prec),
                            True, prec)

    eps_up = np.ones(ks.size)
    if open_.any():
        kk, lb = kf[open_], lbin[open_]
        lo, hi = bisect_array(f_tilde(kk, lb, _upper_coef(delta)), kk / N, np.ones(kk.size), prec)
        eps_up[open_] = [
            _guard(psi_tilde, BoundQuery(N, int(k), delta), a, b, "upper",
                   lambda t, k=int(k): _eq_tilde(t, N, k, delta, _upper_coef(delta), prec),
                   False, prec)
            for k, a, b in zip(kk, lo, hi)]
    return eps, eps_low, eps_up


def _solve_chunk(args):
    N, delta, ks, prec = args
    return _solve_rows(N, delta, ks, prec)


def bound_table(N: int, delta: float, prec: Precision = DEFAULT_PRECISION, *,
                jobs: int = 1) -> BoundTable:
    """Rows for every k in 0..N.

    With ``jobs > 1`` the cardinalities are split into contiguous chunks
    solved in worker processes; each row's arithmetic does not depend on
    its chunk, so the output is identical for any ``jobs``.
    """
    BoundQuery(N, 0, delta)
    ks = np.arange(N + 1)
    if jobs > 1 and ks.size > 1:
        chunks = np.array_split(ks, min(jobs, ks.size))
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_solve_chunk, [(N, delta, c, prec) for c in chunks]))
        eps, eps_low, eps_up = (np.concatenate(p) for p in zip(*parts))
    else:
        eps, eps_low, eps_up = _solve_rows(N, delta, ks, prec)
    rows = []
    for i, k in enumerate(ks):
        lo, hi = asymptotic_envelope(BoundQuery(N, int(k), delta))
        rows.append(BoundRow(int(k), float(eps[i]), float(eps_low[i]), float(eps_up[i]), lo, hi))
    return BoundTable(N, delta, tuple(rows))
