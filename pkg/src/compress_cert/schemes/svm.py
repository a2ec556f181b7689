"""Support vector classification and regression with margin-set compression.

Both learners solve the dual of

    min |w|^2 + rho * sum(xi)

(hinge constraints for classification, t-insensitive tube for regression)
with a pairwise SMO solver using second-order working-set selection.
Repeated examples are merged into one dual variable with box bound
``C * multiplicity``.  Among all optimal offsets the one of smallest
absolute value is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

from ..compression import CompressionScheme, Multiset
from .kernels import Kernel

TAU = 1e-12
MARGIN_TOL = 1e-6
SOLVER_TOL = 1e-8
MAX_ITER = 100_000


class LabeledBatch(NamedTuple):
    X: np.ndarray
    y: np.ndarray


def as_labeled(examples) -> LabeledBatch:
    if isinstance(examples, LabeledBatch):
        return examples
    examples = list(examples)
    if not examples:
        return LabeledBatch(np.zeros((0, 0)), np.zeros(0))
    X = np.array([z[0] for z in examples], dtype=float)
    y = np.array([z[1] for z in examples], dtype=float)
    return LabeledBatch(X.reshape(len(examples), -1), y)


# ---------------------------------------------------------------- solver

class QPResult(NamedTuple):
    alpha: np.ndarray
    grad: np.ndarray
    iterations: int
    converged: bool
    gap: float


def kkt_gap(alpha, grad, y, C) -> float:
    """Largest violation m - M of the dual optimality conditions (0 when optimal)."""
    up = np.where(y > 0, alpha < C, alpha > 0)
    low = np.where(y > 0, alpha > 0, alpha < C)
    score = -y * grad
    if not up.any() or not low.any():
        return 0.0
    return max(0.0, float(score[up].max() - score[low].min()))


def smo(Q, p, y, C, tol: float = SOLVER_TOL, max_iter: int = MAX_ITER) -> QPResult:
    """min 0.5 a'Qa + p'a  s.t.  y'a = 0, 0 <= a <= C  (y in {-1, +1}, Q signed)."""
    n = len(p)
    alpha = np.zeros(n)
    G = np.array(p, dtype=float)
    QD = np.diag(Q).copy()
    C = np.broadcast_to(np.asarray(C, dtype=float), (n,)).copy()
    pos = y > 0
    it = 0
    while True:
        # i: maximal violator in I_up
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        score = -y * G
        if not up.any() or not low.any():
            return QPResult(alpha, G, it, True, 0.0)
        s_up = np.where(up, score, -np.inf)
        i = int(np.argmax(s_up))
        gmax = s_up[i]
        s_low = np.where(low, score, np.inf)
        gap = gmax - s_low.min()
        if gap < tol:
            return QPResult(alpha, G, it, True, max(0.0, float(gap)))
        if it >= max_iter:
            return QPResult(alpha, G, it, False, float(gap))
        # j: second-order choice among I_low with positive gradient difference
        b = gmax - score
        quad = QD[i] + QD - 2.0 * y[i] * y * Q[i]
        quad = np.where(quad > 0, quad, TAU)
        cand = low & (b > 0)
        obj = np.where(cand, -(b * b) / quad, np.inf)
        j = int(np.argmin(obj))
        it += 1

        ai, aj = alpha[i], alpha[j]
        Ci, Cj = C[i], C[j]
        Qij = Q[i, j]
        if y[i] != y[j]:
            q = QD[i] + QD[j] + 2.0 * Qij
            q = q if q > 0 else TAU
            delta = (-G[i] - G[j]) / q
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > Ci - Cj:
                if ai > Ci:
                    ai, aj = Ci, Ci - diff
            elif aj > Cj:
                aj, ai = Cj, Cj + diff
        else:
            q = QD[i] + QD[j] - 2.0 * Qij
            q = q if q > 0 else TAU
            delta = (G[i] - G[j]) / q
            total = ai + aj
            ai -= delta
            aj += delta
            if total > Ci:
                if ai > Ci:
                    ai, aj = Ci, total - Ci
            elif aj < 0:
                aj, ai = 0.0, total
            if total > Cj:
                if aj > Cj:
                    aj, ai = Cj, total - Cj
            elif ai < 0:
                ai, aj = 0.0, total
        dai, daj = ai - alpha[i], aj - alpha[j]
        alpha[i], alpha[j] = ai, aj
        G += Q[:, i] * dai + Q[:, j] * daj


def _project(v, y, C):
    """Euclidean projection onto {a : y'a = 0, 0 <= a <= C}."""
    lam = np.unique(np.concatenate([v * y, (v - C) * y]))
    h = (y * np.clip(v[None, :] - lam[:, None] * y[None, :], 0.0, C)).sum(axis=1)
    # h is nonincreasing in lambda; find the zero by linear interpolation
    k = int(np.searchsorted(-h, 0.0))
    if k == 0:
        lmb = lam[0]
    elif k >= len(lam):
        lmb = lam[-1]
    else:
        h0, h1 = h[k - 1], h[k]
        lmb = lam[k - 1] if h0 == h1 else lam[k - 1] + (lam[k] - lam[k - 1]) * h0 / (h0 - h1)
    return np.clip(v - lmb * y, 0.0, C)


def reference_qp(Q, p, y, C, iters: int = 3_000, tol: float = 1e-9) -> np.ndarray:
    """Accelerated projected gradient with restarts; slow but simple.

    Stops once the optimality gap (checked every 25 steps) drops below ``tol``.
    """
    n = len(p)
    C = np.broadcast_to(np.asarray(C, dtype=float), (n,)).copy()
    L = max(float(np.linalg.eigvalsh(Q).max()), 1e-12)
    x = _project(np.zeros(n), y, C)
    z, t = x.copy(), 1.0

    def f(a):
        return 0.5 * a @ Q @ a + p @ a

    fx = f(x)
    for it in range(iters):
        if it % 25 == 0 and kkt_gap(x, Q @ x + p, y, C) < tol:
            break
        x_new = _project(z - (Q @ z + p) / L, y, C)
        f_new = f(x_new)
        if f_new > fx:
            z, t = x.copy(), 1.0
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + (t - 1.0) / t_new * (x_new - x)
        x, fx, t = x_new, f_new, t_new
    return _polish(x, Q, p, y, C, f)


def _polish(x, Q, p, y, C, f, rounds: int = 200):
    """Primal active-set refinement of a feasible point.

    Each round solves the problem restricted to the free variables exactly,
    steps toward that solution as far as the box allows, and once the step
    is complete releases the bound variable whose multiplier has the wrong
    sign.  Only steps that do not increase ``f`` are accepted.
    """
    free = (x > 0) & (x < C)
    for _ in range(rounds):
        F, B = np.nonzero(free)[0], np.nonzero(~free)[0]
        if F.size == 0:
            return x
        m = len(F)
        A = np.zeros((m + 1, m + 1))
        A[:m, :m] = Q[np.ix_(F, F)]
        A[:m, m] = y[F]
        A[m, :m] = y[F]
        rhs = np.concatenate([-p[F] - Q[np.ix_(F, B)] @ x[B], [-(y[B] @ x[B])]])
        sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
        dF = sol[:m] - x[F]
        if np.abs(A @ sol - rhs).max() > 1e-9 * max(1.0, np.abs(rhs).max()):
            # no minimizer on the free face: f is linear and decreasing
            # along part of the null space; follow it to the boundary
            M = np.vstack([Q[np.ix_(F, F)], y[F][None, :]])
            _, sv, vt = np.linalg.svd(M)
            null = vt[int(np.sum(sv > 1e-10 * sv.max())):]
            g = (Q @ x + p)[F]
            dF = -(null.T @ (null @ g))
            dF *= 1e6 / max(np.abs(dF).max(), 1e-300)
            sol = np.append(x[F] + dF, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            room = np.where(dF > 0, (C[F] - x[F]) / dF, np.where(dF < 0, -x[F] / dF, np.inf))
        step = min(1.0, float(room.min()))
        cand = x.copy()
        cand[F] = np.clip(x[F] + step * dF, 0.0, C[F])
        if f(cand) > f(x) + 1e-15 * max(1.0, abs(f(x))):
            return x
        x = cand
        if step < 1.0:
            hit = F[int(np.argmin(room))]
            x[hit] = C[hit] if dF[int(np.argmin(room))] > 0 else 0.0
            free[hit] = False
            continue
        r = Q @ x + p + sol[m] * y
        wrong = np.where(~free & (x <= 0), -r, 0.0) + np.where(~free & (x >= C), r, 0.0)
        worst = int(np.argmax(wrong))
        if wrong[worst] <= 1e-12:
            return x
        free[worst] = True
    return x


# ------------------------------------------------------------- offsets

def _argmin_interval(a, s, w):
    """Minimizers [L, R] of sum w_j max(0, a_j + s_j b) with s_j = +-1."""
    kinks = -a / s
    order = np.argsort(kinks, kind="stable")
    xs, inc = kinks[order], w[order]
    slope = np.cumsum(inc) - w[s < 0].sum()
    lo_idx = np.nonzero(slope >= 0)[0]
    hi_idx = np.nonzero(slope > 0)[0]
    L = -np.inf if w[s < 0].sum() <= 0 else (xs[lo_idx[0]] if lo_idx.size else np.inf)
    R = xs[hi_idx[0]] if hi_idx.size else np.inf
    return float(L), float(R)


def _min_abs(L, R) -> float:
    return float(min(max(0.0, L), R))


# --------------------------------------------------------------- models

@dataclass(frozen=True)
class SvmModel:
    """Kernel expansion f(x) = sum beta_i k(x_i, x) + b."""

    kernel: Kernel
    X: np.ndarray
    beta: np.ndarray
    b: float
    rho: float
    t: Optional[float] = None
    converged: bool = True
    kkt: float = 0.0
    iterations: int = 0
    b_interval: tuple = field(default=(0.0, 0.0), compare=False)

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.beta.size == 0:
            return np.full(len(X), self.b)
        return self.kernel.gram(X, self.X) @ self.beta + self.b

    def predict(self, X) -> np.ndarray:
        f = self.decision(X)
        if self.t is not None:
            return f
        return np.where(f >= 0, 1.0, -1.0)

    def to_dict(self) -> dict:
        return {"kind": "svr" if self.t is not None else "svm", "kernel": self.kernel.to_dict(),
                "X": self.X.tolist(), "beta": self.beta.tolist(), "b": self.b, "rho": self.rho,
                "t": self.t, "converged": self.converged, "kkt": self.kkt}


def _distinct_arrays(S: Multiset):
    items = S.items()
    batch = as_labeled([z for z, _ in items])
    mult = np.array([m for _, m in items], dtype=float)
    return batch, mult


def _primal_value(K, beta, f, b, y, mult, rho, t):
    w2 = float(beta @ K @ beta)
    if t is None:
        xi = np.maximum(0.0, 1.0 - y * (f + b))
    else:
        xi = np.maximum(0.0, np.abs(y - f - b) - t)
    return w2 + rho * float(mult @ xi)


class _Problem(NamedTuple):
    K: np.ndarray
    Q: np.ndarray
    p: np.ndarray
    ys: np.ndarray
    C: np.ndarray


def _svm_problem(K, y, mult, rho) -> _Problem:
    Q = (y[:, None] * y[None, :]) * K
    return _Problem(K, Q, -np.ones(len(y)), y, rho / 2.0 * mult)


def _svr_problem(K, y, mult, rho, t) -> _Problem:
    n = len(y)
    Q = np.block([[K, -K], [-K, K]])
    p = np.concatenate([t - y, t + y])
    ys = np.concatenate([np.ones(n), -np.ones(n)])
    C = np.concatenate([mult, mult]) * rho / 2.0
    return _Problem(K, Q, p, ys, C)


def _beta(alpha, y, t):
    if t is None:
        return alpha * y
    n = len(alpha) // 2
    return alpha[:n] - alpha[n:]


def _offset(f, y, mult, rho, t):
    w = rho / 2.0 * mult
    if t is None:
        return _argmin_interval(1.0 - y * f, -y, w)
    a = np.concatenate([y - f - t, f - y - t])
    s = np.concatenate([-np.ones(len(y)), np.ones(len(y))])
    return _argmin_interval(a, s, np.concatenate([w, w]))


def _fit(S: Multiset, kernel: Kernel, rho: float, t: Optional[float], tol: float,
         max_iter: int) -> SvmModel:
    if len(S) == 0:
        return SvmModel(kernel, np.zeros((0, 0)), np.zeros(0), 0.0, rho, t)
    (X, y), mult = _distinct_arrays(S)
    K = kernel.gram(X, X)
    prob = _svm_problem(K, y, mult, rho) if t is None else _svr_problem(K, y, mult, rho, t)
    res = smo(prob.Q, prob.p, prob.ys, prob.C, tol, max_iter)
    beta = _beta(res.alpha, y, t)
    f = K @ beta
    L, R = _offset(f, y, mult, rho, t)
    keep = beta != 0
    return SvmModel(kernel, X[keep], beta[keep], _min_abs(L, R), rho, t, res.converged,
                    res.gap, res.iterations, (L, R))


def svm_train(S: Multiset, kernel: Kernel = Kernel(), rho: float = 10.0,
              tol: float = SOLVER_TOL, max_iter: int = MAX_ITER) -> SvmModel:
    if not rho > 0:
        raise ValueError("rho must be positive")
    return _fit(S, kernel, rho, None, tol, max_iter)


def svr_train(S: Multiset, kernel: Kernel = Kernel(), rho: float = 10.0, t: float = 0.1,
              tol: float = SOLVER_TOL, max_iter: int = MAX_ITER) -> SvmModel:
    if not rho > 0:
        raise ValueError("rho must be positive")
    if not t > 0:
        raise ValueError("tolerance t must be positive")
    return _fit(S, kernel, rho, t, tol, max_iter)


def solve_both(S: Multiset, kernel: Kernel, rho: float, t: Optional[float] = None,
               tol: float = SOLVER_TOL) -> dict:
    """SMO and reference solutions of the same problem, for cross-checking."""
    (X, y), mult = _distinct_arrays(S)
    K = kernel.gram(X, X)
    prob = _svm_problem(K, y, mult, rho) if t is None else _svr_problem(K, y, mult, rho, t)
    out = {}
    for name, alpha in (("smo", None), ("reference", reference_qp(prob.Q, prob.p, prob.ys, prob.C))):
        if alpha is None:
            res = smo(prob.Q, prob.p, prob.ys, prob.C, tol)
            alpha, gap, conv = res.alpha, res.gap, res.converged
        else:
            gap = kkt_gap(alpha, prob.Q @ alpha + prob.p, prob.ys, prob.C)
            conv = True
        beta = _beta(alpha, y, t)
        f = K @ beta
        b = _min_abs(*_offset(f, y, mult, rho, t))
        out[name] = {"primal": _primal_value(K, beta, f, b, y, mult, rho, t),
                     "dual": float(0.5 * alpha @ prob.Q @ alpha + prob.p @ alpha),
                     "kkt": gap, "converged": conv, "b": b}
    return out


# -------------------------------------------------------------- schemes

def _margins(model: SvmModel, S: Multiset) -> tuple[list, np.ndarray]:
    items = S.distinct()
    X, y = as_labeled(items)
    f = model.decision(X)
    if model.t is None:
        return items, 1.0 - y * f
    return items, np.abs(y - f) - model.t


def margin_set(model: SvmModel, S: Multiset, tol: float = MARGIN_TOL) -> Multiset:
    """Examples with active or violated constraint, with full multiplicity."""
    if len(S) == 0:
        return Multiset()
    items, m = _margins(model, S)
    return Multiset.from_counts({z: S.count(z) for z, v in zip(items, m) if v >= -tol})


def _scheme(name, train, tol_margin, loss, batch_loss):
    cached = lru_cache(maxsize=64)(train)

    def compress(S: Multiset) -> Multiset:
        return margin_set(cached(S), S, tol_margin)

    return CompressionScheme(name, compress, cached, loss, cached, batch_loss)


def svm_scheme(kernel: Kernel = Kernel(), rho: float = 10.0,
               tol_margin: float = MARGIN_TOL) -> CompressionScheme:
    """Classification; compression is the margin set, loss is misclassification."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    def train(S):
        return svm_train(S, kernel, rho)

    def batch_loss(h: SvmModel, Z):
        X, y = as_labeled(Z)
        if len(y) == 0:
            return np.zeros(0, dtype=np.int8)
        return (h.predict(X) != y).astype(np.int8)

    def loss(h, z):
        return int(batch_loss(h, [z])[0])

    return _scheme("svm", train, tol_margin, loss, batch_loss)


def svr_scheme(kernel: Kernel = Kernel(), rho: float = 10.0, t: float = 0.1,
               tol_margin: float = MARGIN_TOL) -> CompressionScheme:
    """Regression; loss 1 iff the prediction misses by more than ``t``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    if not t > 0:
        raise ValueError("tolerance t must be positive")

    def train(S):
        return svr_train(S, kernel, rho, t)

    def batch_loss(h: SvmModel, Z):
        X, y = as_labeled(Z)
        if len(y) == 0:
            return np.zeros(0, dtype=np.int8)
        return (np.abs(y - h.decision(X)) > t).astype(np.int8)

    def loss(h, z):
        return int(batch_loss(h, [z])[0])

    return _scheme("svr", train, tol_margin, loss, batch_loss)
