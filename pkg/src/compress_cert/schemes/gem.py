"""Ternary classifier built from a chain of feature-space balls.

Starting from an anchor example, each step draws the largest open ball
around the current center that contains no example of the other label,
assigns the center's label to the part of the ball not yet covered, and
moves the center to the closest blocking example.  The blocking examples
form the compression; uncovered space gets the abstention label 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..compression import CompressionScheme, Multiset
from .kernels import Kernel
from .svm import as_labeled


@dataclass(frozen=True)
class GemRegion:
    center: tuple
    radius: float
    label: int


@dataclass(frozen=True)
class GemModel:
    kernel: Kernel
    regions: tuple[GemRegion, ...]
    centers: tuple
    d: int

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(len(X))
        open_ = np.ones(len(X), dtype=bool)
        for reg in self.regions:
            if not open_.any():
                break
            if math.isinf(reg.radius):
                hit = open_.copy()
            else:
                hit = open_ & (self.kernel.feature_dist(reg.center, X) < reg.radius)
            out[hit] = reg.label
            open_ &= ~hit
        return out

    def to_dict(self) -> dict:
        return {"kind": "gem", "kernel": self.kernel.to_dict(), "d": self.d,
                "regions": [{"center": list(r.center), "radius": r.radius, "label": r.label}
                            for r in self.regions],
                "centers": [[list(x), y] for x, y in self.centers]}


def gem_train(S: Multiset, anchor: tuple, d: int, kernel: Kernel = Kernel()) -> GemModel:
    """Run the ball-chaining construction on ``S`` with initial center ``anchor``.

    ``anchor`` is an example ``(x, y)`` with ``y`` in {-1, +1}.
    """
    if d < 1:
        raise ValueError("budget d must be at least 1")
    ax, ay = tuple(float(v) for v in anchor[0]), int(anchor[1])
    if ay not in (-1, 1):
        raise ValueError("anchor label must be -1 or +1")
    items = S.items()
    # row 0 is the anchor; rows 1.. are the distinct training examples
    rows = [(ax, ay)] + [z for z, _ in items]
    X, y = as_labeled(rows)
    count = np.array([1] + [m for _, m in items])
    order = sorted(range(len(rows)), key=lambda i: rows[i][0])
    rank = np.empty(len(rows), dtype=int)
    rank[order] = np.arange(len(rows))

    regions: list[GemRegion] = []
    centers: list = []
    c = 0
    while True:
        dist = kernel.feature_dist(X[c], X)
        blocking = (count > 0) & (y != y[c])
        r = float(dist[blocking].min()) if blocking.any() else math.inf
        regions.append(GemRegion(rows[c][0], r, int(y[c])))
        if r > 0:
            count[dist < r] = 0
        elif count[c] > 0:
            count[c] -= 1
        if r < math.inf:
            cand = np.nonzero(blocking & (count > 0) & (dist == r))[0]
            nxt = int(cand[np.argmin(rank[cand])])
            centers.append(rows[nxt])
            c = nxt
        if len(centers) == d or count.sum() == 0:
            break
    return GemModel(kernel, tuple(regions), tuple(centers), d)


def default_anchor(dim: int) -> tuple:
    return (tuple([0.0] * dim), 1)


def gem_scheme(d: int = 10, kernel: Kernel = Kernel(), anchor: Optional[tuple] = None) -> CompressionScheme:
    """Compression = the chosen centers; loss 1 only for a firm wrong label.

    Without an explicit anchor the origin labeled +1 is used, with the
    dimension taken from the data.
    """
    def anchor_for(S: Multiset):
        if anchor is not None:
            return anchor
        first = S.distinct()[0] if len(S) else ((0.0,), 1)
        return default_anchor(len(first[0]))

    def learner(S: Multiset) -> GemModel:
        return gem_train(S, anchor_for(S), d, kernel)

    def compress(S: Multiset) -> Multiset:
        if len(S) == 0:
            return Multiset()
        return Multiset(learner(S).centers)

    def batch_loss(h: GemModel, Z):
        X, yz = as_labeled(Z)
        if len(yz) == 0:
            return np.zeros(0, dtype=np.int8)
        return (np.abs(yz - h.predict(X)) == 2).astype(np.int8)

    def loss(h, z):
        return int(batch_loss(h, [z])[0])

    return CompressionScheme("gem", compress, learner, loss, learner, batch_loss)
