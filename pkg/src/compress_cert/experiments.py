"""Samplers, Monte Carlo trials and bound-coverage summaries."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Any, Optional

import numpy as np

from .bounds import BoundTable, bound_table, fmt
from .compression import CompressionScheme, Multiset, change_of_compression
from .schemes import SCHEME_NAMES, make_scheme
from .schemes.svm import LabeledBatch

DIST_KINDS = ("gaussian", "uniform_cube", "labeled_blobs", "noisy_line", "point_mass")
TRIALS_HEADER = ("trial", "seed", "k", "risk_hat", "phi_hat", "eps", "eps_low", "eps_up", "inside")


class ConfigError(ValueError):
    """A configuration field is missing or invalid; the message names it."""


# ------------------------------------------------------------ laws

@dataclass(frozen=True)
class Distribution:
    """A seedable data law.

    Points of dimension 1 are returned as plain floats, higher dimensions
    as tuples, labeled examples as ``(x_tuple, y)``.
    """

    kind: str
    dim: int = 2
    mean: Any = 0.0
    var: Any = 1.0
    lo: float = 0.0
    hi: float = 1.0
    mean_pos: Any = 1.0
    mean_neg: Any = -1.0
    spread: float = 1.0
    slope: float = 1.0
    intercept: float = 0.0
    noise: float = 0.1
    atom: Any = 0.0

    def __post_init__(self):
        if self.kind not in DIST_KINDS:
            raise ConfigError(f"distribution.kind: unknown kind {self.kind!r}; expected one of {DIST_KINDS}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigError(f"distribution.dim: must be a positive integer, got {self.dim!r}")
        if self.kind in ("uniform_cube", "noisy_line") and not self.lo < self.hi:
            raise ConfigError("distribution.lo: must be below distribution.hi")
        if self.kind == "gaussian" and np.any(np.asarray(self.var, dtype=float) <= 0):
            raise ConfigError("distribution.var: variances must be positive")
        if self.kind == "labeled_blobs" and not self.spread > 0:
            raise ConfigError("distribution.spread: must be positive")
        if self.kind == "noisy_line" and not self.noise > 0:
            raise ConfigError("distribution.noise: must be positive")

    @property
    def labeled(self) -> bool:
        return self.kind in ("labeled_blobs", "noisy_line")

    def _vec(self, v) -> np.ndarray:
        return np.broadcast_to(np.asarray(v, dtype=float), (self.dim,))

    def draw(self, rng: np.random.Generator, n: int):
        """Raw batch: an (n, dim) array, or a LabeledBatch."""
        if self.kind == "gaussian":
            return self._vec(self.mean) + rng.standard_normal((n, self.dim)) * np.sqrt(self._vec(self.var))
        if self.kind == "uniform_cube":
            return rng.uniform(self.lo, self.hi, (n, self.dim))
        if self.kind == "point_mass":
            return np.broadcast_to(np.asarray(self.atom, dtype=float).reshape(1, -1),
                                   (n, np.asarray(self.atom).size)).copy()
        if self.kind == "labeled_blobs":
            y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
            centers = np.where(y[:, None] > 0, self._vec(self.mean_pos), self._vec(self.mean_neg))
            return LabeledBatch(centers + self.spread * rng.standard_normal((n, self.dim)), y)
        x = rng.uniform(self.lo, self.hi, (n, 1))
        y = self.slope * x[:, 0] + self.intercept + self.noise * rng.standard_normal(n)
        return LabeledBatch(x, y)

    def examples(self, batch) -> list:
        if isinstance(batch, LabeledBatch):
            return [(tuple(x), y) for x, y in zip(batch.X.tolist(), batch.y.tolist())]
        rows = batch.tolist()
        if batch.shape[1] == 1:
            return [r[0] for r in rows]
        return [tuple(r) for r in rows]

    def source(self, n: int) -> "Source":
        return Source(self, n)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class Source:
    """Training multisets of size ``n`` and fresh examples from one law."""

    dist: Distribution
    n: int

    def sample(self, rng: np.random.Generator) -> Multiset:
        return Multiset(self.dist.examples(self.dist.draw(rng, self.n)))

    def fresh(self, rng: np.random.Generator, n: int) -> list:
        return self.dist.examples(self.dist.draw(rng, n))


# ----------------------------------------------------------- config

@dataclass(frozen=True)
class ExperimentConfig:
    scheme: dict
    distribution: Distribution
    N: int
    delta: float
    trials: int
    n_test_risk: int = 100_000
    n_test_phi: int = 1000
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["distribution"] = self.distribution.to_dict()
        return d


_CONFIG_FIELDS = {"scheme", "distribution", "N", "delta", "trials", "n_test_risk", "n_test_phi", "seed"}


def _int_field(raw, name, minimum):
    v = raw.get(name)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{name}: expected an integer, got {v!r}")
    if v < minimum:
        raise ConfigError(f"{name}: must be >= {minimum}, got {v}")
    return v


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a decoded JSON config; errors name the offending field."""
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    unknown = set(raw) - _CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown field")
    for name in ("scheme", "distribution", "N", "delta", "trials"):
        if name not in raw:
            raise ConfigError(f"{name}: missing required field")
    scheme = raw["scheme"]
    if isinstance(scheme, str):
        scheme = {"name": scheme}
    if not isinstance(scheme, dict) or scheme.get("name") not in SCHEME_NAMES:
        raise ConfigError(f"scheme.name: expected one of {SCHEME_NAMES}")
    try:
        make_scheme(**scheme)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"scheme: {exc}") from None
    dist = raw["distribution"]
    if not isinstance(dist, dict) or "kind" not in dist:
        raise ConfigError("distribution.kind: missing required field")
    bad = set(dist) - set(Distribution.__dataclass_fields__)
    if bad:
        raise ConfigError(f"distribution.{sorted(bad)[0]}: unknown field")
    distribution = Distribution(**dist)
    N = _int_field(raw, "N", 1)
    delta = raw["delta"]
    if isinstance(delta, bool) or not isinstance(delta, (int, float)) or not 0 < delta < 1:
        raise ConfigError(f"delta: must be a number in (0, 1), got {delta!r}")
    trials = _int_field(raw, "trials", 0)
    opts = {}
    for name, minimum in (("n_test_risk", 1), ("n_test_phi", 1), ("seed", 0)):
        if name in raw:
            opts[name] = _int_field(raw, name, minimum)
    return ExperimentConfig(scheme, distribution, N, float(delta), trials, **opts)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from None
    return parse_config(raw)


# ----------------------------------------------------------- trials

@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: int
    k: int
    risk_hat: float
    phi_hat: float
    eps: float
    eps_low: float
    eps_up: float
    inside: bool
    error: Optional[str] = field(default=None, compare=False)

    @property
    def failed(self) -> bool:
        return self.error is not None


def trial_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([master, index]).generate_state(1, np.uint64)[0])


def binomial_slack(p: float, n: int) -> float:
    return 3.0 * math.sqrt(max(p * (1.0 - p), 0.0) / n)


@lru_cache(maxsize=8)
def cached_table(N: int, delta: float) -> BoundTable:
    return bound_table(N, delta)


def estimate_risk(s: CompressionScheme, S: Multiset, dist: Distribution, n_test: int,
                  rng: np.random.Generator, h=None) -> float:
    """Fraction of fresh draws on which the hypothesis trained on S errs."""
    if h is None:
        h = s.train(S)
    batch = dist.draw(rng, n_test)
    return float(np.mean(s.losses(h, batch if s.batch_loss else dist.examples(batch))))


def estimate_phi(s: CompressionScheme, S: Multiset, dist: Distribution, n_test: int,
                 rng: np.random.Generator, cS: Optional[Multiset] = None) -> float:
    """Fraction of fresh draws that change the compression when added to it."""
    if cS is None:
        cS = s.compress(S)
    zs = dist.examples(dist.draw(rng, n_test))
    return sum(change_of_compression(s, S, z, cU=cS) for z in zs) / n_test


def run_trial(cfg: ExperimentConfig, index: int, table: Optional[BoundTable] = None,
              scheme: Optional[CompressionScheme] = None) -> TrialResult:
    seed = trial_seed(cfg.seed, index)
    rng = np.random.default_rng(seed)
    s = scheme if scheme is not None else make_scheme(**cfg.scheme)
    table = table if table is not None else cached_table(cfg.N, cfg.delta)
    nan = math.nan
    try:
        S = Multiset(cfg.distribution.examples(cfg.distribution.draw(rng, cfg.N)))
        C = s.compress(S)
        k = len(C)
        risk_rng, phi_rng = rng.spawn(2)
        phi = estimate_phi(s, S, cfg.distribution, cfg.n_test_phi, phi_rng, cS=C)
        if s.supervised:
            h = s.train(S)
            if not getattr(h, "converged", True):
                raise RuntimeError("learner did not converge")
            risk, n_risk = estimate_risk(s, S, cfg.distribution, cfg.n_test_risk, risk_rng, h), cfg.n_test_risk
        else:
            risk, n_risk = phi, cfg.n_test_phi
    except Exception as exc:  # recorded per trial, excluded from coverage
        return TrialResult(index, seed, -1, nan, nan, nan, nan, nan, False, f"{type(exc).__name__}: {exc}")
    row = table.row(k)
    slack = binomial_slack(risk, n_risk)
    inside = row.eps_low - slack <= risk <= row.eps_up + slack
    return TrialResult(index, seed, k, risk, phi, row.eps, row.eps_low, row.eps_up, inside)


_WORKER: dict = {}


def _init_worker(cfg, table):
    _WORKER["cfg"], _WORKER["table"] = cfg, table
    _WORKER["scheme"] = make_scheme(**cfg.scheme)


def _worker_trial(index):
    return run_trial(_WORKER["cfg"], index, _WORKER["table"], _WORKER["scheme"])


def run_trials(cfg: ExperimentConfig, jobs: int = 1) -> list[TrialResult]:
    """All trials of ``cfg`` in index order; the output does not depend on ``jobs``."""
    if cfg.trials == 0:
        return []
    table = cached_table(cfg.N, cfg.delta)
    if jobs <= 1:
        scheme = make_scheme(**cfg.scheme)
        return [run_trial(cfg, i, table, scheme) for i in range(cfg.trials)]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                             initargs=(cfg, table)) as ex:
        return list(ex.map(_worker_trial, range(cfg.trials), chunksize=max(1, cfg.trials // (4 * jobs))))


# ---------------------------------------------------------- reports

def coverage_report(results: list[TrialResult], delta: float, N: Optional[int] = None) -> dict:
    """Summary of a trial list; reports, never asserts."""
    ok = [r for r in results if not r.failed]
    out = {"trials": len(results), "valid": len(ok), "failed": len(results) - len(ok),
           "delta": delta, "target": 1.0 - delta}
    if not ok:
        out["coverage"] = None
        return out
    out["coverage"] = sum(r.inside for r in ok) / len(ok)
    out["meets_target"] = out["coverage"] >= 1.0 - delta
    if N is not None:
        dev = [abs(r.risk_hat - r.k / N) for r in ok]
        pdev = [abs(r.phi_hat - r.k / N) for r in ok]
        out.update(mean_abs_risk_dev=float(np.mean(dev)), max_abs_risk_dev=float(np.max(dev)),
                   mean_abs_phi_dev=float(np.mean(pdev)))
    ks = [r.k for r in ok]
    risks = [r.risk_hat for r in ok]
    out.update(k_min=min(ks), k_max=max(ks), risk_min=min(risks), risk_max=max(risks))
    return out


def trials_csv(results: list[TrialResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIALS_HEADER)
    for r in results:
        inside = "failed" if r.failed else ("true" if r.inside else "false")
        w.writerow([r.trial, r.seed, r.k, fmt(r.risk_hat), fmt(r.phi_hat), fmt(r.eps),
                    fmt(r.eps_low), fmt(r.eps_up), inside])
    return buf.getvalue()
