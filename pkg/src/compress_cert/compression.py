"""Multisets, compression schemes and sampling-based property checks.

Examples are any hashable, totally ordered values.  Points are tuples of
floats, labeled examples are ``(x_tuple, y)`` pairs, scalars are floats.
Floating-point examples compare bitwise; samplers with a density never
produce duplicates, so this is the exact equality the checks need.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Iterator, Optional, Protocol

import numpy as np


class SchemeConfigError(ValueError):
    """A scheme lacks a component (learner, loss) an operation needs."""


class Multiset:
    """Immutable finite multiset with the additive union of sample algebra.

    ``U | V`` adds multiplicities, ``U & V`` takes the minimum, ``U - V``
    subtracts and clamps at zero, ``V <= U`` is sub-multiset inclusion and
    ``len(U)`` is the cardinality counted with multiplicity.

    >>> U, V = Multiset("aab"), Multiset("ac")
    >>> sorted(U | V), sorted(U & V), sorted(U - V)
    (['a', 'a', 'a', 'b', 'c'], ['a'], ['a', 'b'])
    """

    __slots__ = ("_counts", "_key")

    def __init__(self, items: Iterable[Hashable] = ()):
        counts = Counter(items)
        self._counts: dict = {z: m for z, m in counts.items() if m > 0}
        self._key: Optional[tuple] = None

    @classmethod
    def from_counts(cls, counts: dict) -> "Multiset":
        if any(m < 0 for m in counts.values()):
            raise ValueError("multiplicities must be nonnegative")
        out = cls.__new__(cls)
        out._counts = {z: int(m) for z, m in counts.items() if m > 0}
        out._key = None
        return out

    def count(self, z) -> int:
        return self._counts.get(z, 0)

    def distinct(self) -> list:
        return sorted(self._counts)

    def items(self) -> list[tuple[Any, int]]:
        return [(z, self._counts[z]) for z in self.distinct()]

    def __iter__(self) -> Iterator:
        for z, m in self.items():
            for _ in range(m):
                yield z

    def __len__(self) -> int:
        return sum(self._counts.values())

    def __contains__(self, z) -> bool:
        return z in self._counts

    def __or__(self, other: "Multiset") -> "Multiset":
        c = dict(self._counts)
        for z, m in other._counts.items():
            c[z] = c.get(z, 0) + m
        return Multiset.from_counts(c)

    union = __or__

    def __and__(self, other: "Multiset") -> "Multiset":
        return Multiset.from_counts({z: min(m, other.count(z)) for z, m in self._counts.items()})

    def __sub__(self, other: "Multiset") -> "Multiset":
        return Multiset.from_counts({z: max(m - other.count(z), 0) for z, m in self._counts.items()})

    def __le__(self, other: "Multiset") -> bool:
        return all(m <= other.count(z) for z, m in self._counts.items())

    def add(self, *zs) -> "Multiset":
        return self | Multiset(zs)

    def _sorted_key(self) -> tuple:
        if self._key is None:
            self._key = tuple(self.items())
        return self._key

    def __eq__(self, other) -> bool:
        if not isinstance(other, Multiset):
            return NotImplemented
        return self._counts == other._counts

    def __hash__(self) -> int:
        return hash(self._sorted_key())

    def __repr__(self) -> str:
        body = ", ".join(f"{z!r}" if m == 1 else f"{z!r}x{m}" for z, m in self.items())
        return f"Multiset({{{body}}})"

    def to_json(self) -> list:
        return [[_jsonable(z), m] for z, m in self.items()]


def _jsonable(z):
    if isinstance(z, (tuple, list)):
        return [_jsonable(v) for v in z]
    if isinstance(z, np.generic):
        return z.item()
    return z


# ------------------------------------------------------------- schemes

@dataclass(frozen=True)
class CompressionScheme:
    """A compression function with optional learner, loss and reconstruction.

    ``batch_loss(h, examples)`` is an optional vectorized loss over a list
    of examples; when absent it falls back to ``loss`` one at a time.
    """

    name: str
    compress_fn: Callable[[Multiset], Multiset]
    learner: Optional[Callable[[Multiset], Any]] = None
    loss: Optional[Callable[[Any, Any], int]] = None
    reconstruct: Optional[Callable[[Multiset], Any]] = None
    batch_loss: Optional[Callable[[Any, Any], np.ndarray]] = field(default=None, repr=False)

    def compress(self, U: Multiset) -> Multiset:
        C = self.compress_fn(U)
        if not C <= U:
            raise AssertionError(f"{self.name}: compression is not a sub-multiset of its input")
        return C

    def train(self, U: Multiset):
        if self.learner is None:
            raise SchemeConfigError(f"scheme {self.name!r} has no learner")
        return self.learner(U)

    def losses(self, h, examples) -> np.ndarray:
        if self.batch_loss is not None:
            return np.asarray(self.batch_loss(h, examples), dtype=np.int8)
        if self.loss is None:
            raise SchemeConfigError(f"scheme {self.name!r} has no loss")
        return np.array([self.loss(h, z) for z in examples], dtype=np.int8)

    @property
    def supervised(self) -> bool:
        return self.learner is not None and self.loss is not None


def change_of_compression(s: CompressionScheme, U: Multiset, z, cU: Optional[Multiset] = None) -> bool:
    """True iff adding ``z`` to the compression of ``U`` changes the compression.

    Pass ``cU`` when ``c(U)`` is already known to skip recomputing it.
    """
    if cU is None:
        cU = s.compress(U)
    return s.compress(cU.add(z)) != cU


def augment(s: CompressionScheme) -> CompressionScheme:
    """Add to c(U) every training example the trained hypothesis gets wrong.

    Each such example enters with its full multiplicity in U, so the
    result satisfies inclusion.  Hypotheses are rebuilt by running the
    learner on the compressed multiset.
    """
    if not s.supervised:
        raise SchemeConfigError(f"augment needs a learner and a loss; {s.name!r} lacks one")
    base = s

    def compress(U: Multiset) -> Multiset:
        C = base.compress(U)
        distinct = U.distinct()
        if not distinct:
            return C
        bad = base.losses(base.train(U), distinct)
        extra = {z: U.count(z) - C.count(z) for z, b in zip(distinct, bad) if b}
        return C | Multiset.from_counts(extra) if extra else C

    return CompressionScheme(
        name=f"{s.name}+aug",
        compress_fn=compress,
        learner=s.learner,
        loss=s.loss,
        reconstruct=s.learner,
        batch_loss=s.batch_loss,
    )


# ---------------------------------------------------------- checking

class ExampleSource(Protocol):
    """What the property checks need from a data law."""

    def sample(self, rng: np.random.Generator) -> Multiset: ...

    def fresh(self, rng: np.random.Generator, n: int) -> list: ...


@dataclass
class PropertyReport:
    property: str
    trials: int
    violations: int = 0
    counterexample: Optional[dict] = None
    scheme: str = ""

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def record(self, **case):
        self.violations += 1
        if self.counterexample is None:
            self.counterexample = {
                k: v.to_json() if isinstance(v, Multiset) else _jsonable(v) for k, v in case.items()
            }

    def to_dict(self) -> dict:
        out = {"property": self.property, "trials": self.trials, "violations": self.violations}
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample
        if self.scheme:
            out["scheme"] = self.scheme
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def trial_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _run(name, s, trials, seed, body) -> PropertyReport:
    rep = PropertyReport(name, trials, scheme=s.name)
    for i in range(trials):
        body(trial_rng(seed, i), rep, i)
    return rep


def check_preference(s: CompressionScheme, source: ExampleSource, trials: int,
                     seed: int = 0) -> PropertyReport:
    """c(V) = c(U) for random V between c(U) and U."""
    def body(rng, rep, i):
        U = source.sample(rng)
        C = s.compress(U)
        rest = list(U - C)
        keep = rng.random(len(rest)) < 0.5
        V = C | Multiset(z for z, k in zip(rest, keep) if k)
        cV = s.compress(V)
        if cV != C:
            rep.record(trial=i, U=U, V=V, cU=C, cV=cV)
    return _run("preference", s, trials, seed, body)


def check_idempotence(s: CompressionScheme, source: ExampleSource, trials: int,
                      seed: int = 0) -> PropertyReport:
    def body(rng, rep, i):
        U = source.sample(rng)
        C = s.compress(U)
        CC = s.compress(C)
        if CC != C:
            rep.record(trial=i, U=U, cU=C, ccU=CC)
    return _run("idempotence", s, trials, seed, body)


def check_non_associativity(s: CompressionScheme, source: ExampleSource, trials: int,
                            p: int = 2, seed: int = 0) -> PropertyReport:
    """Unchanged by each single addition implies unchanged by the batch."""
    if p < 1:
        raise ValueError("batch size p must be at least 1")

    def body(rng, rep, i):
        U = source.sample(rng)
        C = s.compress(U)
        zs = source.fresh(rng, p)
        if all(s.compress(U.add(z)) == C for z in zs):
            joint = s.compress(U.add(*zs))
            if joint != C:
                rep.record(trial=i, U=U, added=list(zs), cU=C, c_joint=joint)
    return _run("non_assoc", s, trials, seed, body)


def check_inclusion(s: CompressionScheme, source: ExampleSource, trials: int,
                    seed: int = 0) -> PropertyReport:
    """Every misclassified training example sits in c(U) with full multiplicity."""
    if not s.supervised:
        raise SchemeConfigError(f"inclusion needs a learner and a loss; {s.name!r} lacks one")

    def body(rng, rep, i):
        U = source.sample(rng)
        distinct = U.distinct()
        if not distinct:
            return
        C = s.compress(U)
        bad = s.losses(s.train(U), distinct)
        for z, b in zip(distinct, bad):
            if b and C.count(z) < U.count(z):
                rep.record(trial=i, U=U, cU=C, example=z)
                return
    return _run("inclusion", s, trials, seed, body)


def _coherence(part: int, s, source, trials, seed, per_trial):
    if not s.supervised:
        raise SchemeConfigError(f"coherence needs a learner and a loss; {s.name!r} lacks one")

    def body(rng, rep, i):
        U = source.sample(rng)
        C = s.compress(U)
        h = s.train(U)
        zs = source.fresh(rng, per_trial)
        for z, bad in zip(zs, s.losses(h, zs)):
            changed = change_of_compression(s, U, z, cU=C)
            if (part == 1 and bad and not changed) or (part == 2 and changed and not bad):
                rep.record(trial=i, U=U, z=z, cU=C, loss=int(bad), changed=changed)
                return
    return _run(f"coherence{part}", s, trials, seed, body)


def check_coherence_I(s: CompressionScheme, source: ExampleSource, trials: int,
                      seed: int = 0, per_trial: int = 1) -> PropertyReport:
    """A fresh example the hypothesis gets wrong must change the compression."""
    return _coherence(1, s, source, trials, seed, per_trial)


def check_coherence_II(s: CompressionScheme, source: ExampleSource, trials: int,
                       seed: int = 0, per_trial: int = 1) -> PropertyReport:
    """A change of compression must come with a loss on the fresh example."""
    return _coherence(2, s, source, trials, seed, per_trial)


def check_reconstruction(s: CompressionScheme, source: ExampleSource, trials: int,
                         n_probe: int = 1000, seed: int = 0) -> PropertyReport:
    """Hypotheses rebuilt from c(U) agree with A(U) on fresh probes."""
    if s.reconstruct is None or not s.supervised:
        raise SchemeConfigError(f"scheme {s.name!r} has no reconstruction")

    def body(rng, rep, i):
        U = source.sample(rng)
        probes = source.fresh(rng, n_probe)
        a = s.losses(s.train(U), probes)
        b = s.losses(s.reconstruct(s.compress(U)), probes)
        if not np.array_equal(a, b):
            j = int(np.argmax(a != b))
            rep.record(trial=i, U=U, probe=probes[j])
    return _run("reconstruction", s, trials, seed, body)


CHECKS = {
    "preference": check_preference,
    "idempotence": check_idempotence,
    "non_assoc": check_non_associativity,
    "inclusion": check_inclusion,
    "coherence1": check_coherence_I,
    "coherence2": check_coherence_II,
}
