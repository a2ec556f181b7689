from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

KINDS = ("linear", "rbf", "polynomial")


@dataclass(frozen=True)
class Kernel:
    """Inner product in an implicit feature space.

    ``rbf``: exp(-gamma |a - b|^2); ``polynomial``: (a.b + coef0)^degree.
    """

    kind: str = "rbf"
    gamma: float = 1.0
    degree: int = 3
    coef0: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "rbf" and not self.gamma > 0:
            raise ValueError("rbf gamma must be positive")
        if self.kind == "polynomial" and (self.degree < 1 or self.coef0 < 0):
            raise ValueError("polynomial kernel needs degree >= 1 and coef0 >= 0")

    def gram(self, A, B) -> np.ndarray:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if self.kind == "linear":
            return A @ B.T
        if self.kind == "polynomial":
            return (A @ B.T + self.coef0) ** self.degree
        d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
        return np.exp(-self.gamma * np.maximum(d2, 0.0))

    def __call__(self, a, b) -> float:
        return float(self.gram(a, b)[0, 0])

    def feature_dist(self, c, X) -> np.ndarray:
        """Feature-space distances from point ``c`` to each row of ``X``.

        Computed row by row from elementwise operations so a pair's
        distance never depends on which other rows are present.
        """
        c = np.asarray(c, dtype=float)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        diff2 = ((X - c) ** 2).sum(axis=1)
        if self.kind == "linear":
            d2 = diff2
        elif self.kind == "rbf":
            d2 = 2.0 - 2.0 * np.exp(-self.gamma * diff2)
        else:
            kcc = ((c * c).sum() + self.coef0) ** self.degree
            kxx = ((X * X).sum(axis=1) + self.coef0) ** self.degree
            kcx = ((X * c).sum(axis=1) + self.coef0) ** self.degree
            d2 = kcc - 2.0 * kcx + kxx
        return np.sqrt(np.maximum(d2, 0.0))

    def to_dict(self) -> dict:
        return asdict(self)
