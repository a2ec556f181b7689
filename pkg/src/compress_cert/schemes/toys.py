"""Small scalar schemes that break one property or another on purpose."""

from __future__ import annotations

import math

from ..compression import CompressionScheme, Multiset


def second_largest_scheme() -> CompressionScheme:
    """Compression keeps the maximum; the hypothesis is (-inf, second largest].

    Inclusion holds but a point between the two top values is misclassified
    without changing the compression.  With one example the second largest
    is taken as -inf.
    """
    def compress(U: Multiset) -> Multiset:
        return Multiset([max(U.distinct())]) if len(U) else Multiset()

    def learner(U: Multiset) -> float:
        vals = sorted(U, reverse=True)
        return vals[1] if len(vals) > 1 else -math.inf

    def loss(h: float, z) -> int:
        return int(z > h)

    return CompressionScheme("second_largest", compress, learner, loss)


def trimming_scheme(atom=0.0, M: int = 100) -> CompressionScheme:
    """Caps the multiplicity of ``atom`` at ``M`` and keeps everything else."""
    if M < 1:
        raise ValueError("M must be at least 1")

    def compress(U: Multiset) -> Multiset:
        counts = dict(U.items())
        if counts.get(atom, 0) > M:
            counts[atom] = M
        return Multiset.from_counts(counts)

    return CompressionScheme(f"trimming{M}", compress)


def closest_pair_scheme() -> CompressionScheme:
    """Points on a circle of unit circumference; keep the two closest ones.

    Adding points one at a time can leave the pair unchanged while adding
    them together does not.  Ties go to the smallest pair in sorted order.
    """
    def compress(U: Multiset) -> Multiset:
        pts = sorted(U)
        n = len(pts)
        if n <= 2:
            return U
        best = None
        for i in range(n):
            a, b = pts[i], pts[(i + 1) % n]
            gap = b - a if i + 1 < n else b + 1.0 - a
            key = (gap, tuple(sorted((a, b))))
            if best is None or key < best:
                best = key
        return Multiset(best[1])

    return CompressionScheme("closest_pair", compress)
