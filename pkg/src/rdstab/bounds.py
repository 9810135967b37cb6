"""Stability lower bounds for R(d) with FIFO servers.

``lambda_lb`` is the closed form built from the overlap probabilities
``P_m`` and the min-moment profile. ``lambda_m_search`` evaluates the
tighter bound obtained by maximising the expected incoming work over gap
vectors between ordered workloads. The search runs over all nonnegative
gap vectors with the top ``d`` workloads tied, a superset of the reachable
ones, so its value is still a valid lower bound and never drops below
``lambda_lb``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .distributions import (NotSamplableError, ServiceSpec, SupportTooLargeError, marginal_support,
                            min_moment_profile, sample_matrix, time_scaling_check)
from .model import incoming_work_batch
from .seeding import cell_seed


class CapabilityError(RuntimeError):
    """The requested computation is not available for this input."""


class GridTooLargeError(CapabilityError):
    def __init__(self, cells: int, cap: int):
        super().__init__(f"gap grid needs {cells} cells, cap is {cap}")
        self.cells = cells
        self.cap = cap


def overlap_prob(K: int, d: int, m: int) -> Fraction:
    """Probability that a uniform d-subset of K servers hits exactly ``m`` of a fixed d-set."""
    if not (0 <= m <= d <= K and K >= 1):
        raise ValueError(f"need 0 <= m <= d <= K, got K={K}, d={d}, m={m}")
    return Fraction(math.comb(K - d, d - m) * math.comb(d, m), math.comb(K, d))


def overlap_probs(K: int, d: int) -> list[Fraction]:
    return [overlap_prob(K, d, m) for m in range(d + 1)]


def _check_profile(g: Sequence, d: int) -> None:
    if len(g) < d:
        raise ValueError(f"profile has {len(g)} entries, need {d}")
    if any(x <= 0 for x in g[:d]):
        raise ValueError("min-moment profile must be positive")
    if any(b > a * (1 + 1e-12) for a, b in zip(g[:d], g[1:d])):
        raise ValueError("min-moment profile must be non-increasing")


def lambda_lb(K: int, d: int, g: Sequence) -> float:
    """Closed-form lower bound; ``g[j-1] = E[min(B_1..B_j)]`` for ``j = 1..d``.

    Fractions in ``g`` give an exact Fraction result.
    """
    if not 1 <= d <= K:
        raise ValueError(f"need 1 <= d <= K, got d={d}, K={K}")
    _check_profile(g, d)
    prefix = [0]
    for x in g[:d]:
        prefix.append(prefix[-1] + x)
    denom = sum((prefix[d - m] + m * g[d - 1]) * p
                for m, p in enumerate(overlap_probs(K, d)) if p)
    return K / denom


def lambda_lb_d2(K: int, m1, m2) -> float:
    """``d = 2`` form: ``K / ((1 - P_2) E[B_1] + (1 + P_2) E[B_1 ^ B_2])``."""
    if not 0 < m2 <= m1:
        raise ValueError("need 0 < E[B1^B2] <= E[B1]")
    p2 = overlap_prob(K, 2, 2)
    return K / ((1 - p2) * m1 + (1 + p2) * m2)


def known_bound(g_d: float) -> float:
    """Earlier K-independent bound ``1 / E[min(B_1..B_d)]``."""
    if g_d <= 0:
        raise ValueError("E[min] must be positive")
    return 1 / g_d


@dataclass(frozen=True)
class GapVector:
    """Gaps ``delta[i] = s[i+1] - s[i]`` between ordered workloads; last ``d-1`` are zero."""

    delta: tuple[int, ...]
    d: int

    def __post_init__(self):
        object.__setattr__(self, "delta", tuple(int(x) for x in self.delta))
        K = len(self.delta) + 1
        if not 1 <= self.d <= K:
            raise ValueError(f"need 1 <= d <= K, got d={self.d}, K={K}")
        if any(x < 0 for x in self.delta):
            raise ValueError("gaps must be nonnegative")
        if any(self.delta[K - self.d:]):
            raise ValueError(f"the last {self.d - 1} gaps must be zero")

    @classmethod
    def zeros(cls, K: int, d: int) -> "GapVector":
        return cls((0,) * (K - 1), d)

    @classmethod
    def from_free(cls, free: Sequence[int], d: int) -> "GapVector":
        """Build from the ``K - d`` unconstrained leading gaps."""
        return cls(tuple(free) + (0,) * (d - 1), d)

    @classmethod
    def from_state(cls, s: Sequence[int], d: int) -> "GapVector":
        s = list(s)
        if any(b < a for a, b in zip(s, s[1:])):
            raise ValueError("state must be ordered non-decreasingly")
        return cls(tuple(b - a for a, b in zip(s, s[1:])), d)

    @property
    def K(self) -> int:
        return len(self.delta) + 1

    def positions(self) -> np.ndarray:
        """Ordered workloads with ``s[0] = 0``."""
        return np.concatenate([[0], np.cumsum(self.delta, dtype=np.int64)]).astype(np.int64)

    def cumulative(self, i: int, j: int) -> int:
        """``sum(delta[i:j])`` for ``i <= j``, i.e. ``s[j] - s[i]``."""
        return sum(self.delta[i:j])

    def capped(self, cap: int) -> "GapVector":
        return GapVector(tuple(min(x, cap) for x in self.delta), self.d)


def _subsets(K: int, d: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(K), d)), dtype=np.int64).reshape(-1, d)


def _exact_server_work(positions: np.ndarray, vecs: np.ndarray, probs: np.ndarray, d: int,
                       budget: int = 4_000_000) -> np.ndarray:
    """Exact per-server expected incoming work for a batch of ordered states.

    ``positions`` is ``(c, K)``; returns ``(c, K)``. Enumerates every routed
    subset and every point of the d-dimensional marginal support.
    """
    c, K = positions.shape
    subsets = _subsets(K, d)
    out = np.zeros((c, K))
    weight = 1.0 / len(subsets)
    chunk = max(1, budget // (len(vecs) * d * d))
    for lo in range(0, c, chunk):
        pos = positions[lo:lo + chunk]
        for G in subsets:
            sub = pos[:, G]                                   # (c, d)
            off = sub[:, None, :] - sub[:, :, None]           # off[c, k, j] = s_j - s_k
            x = vecs[None, :, None, :] + off[:, None, :, :]   # (c, n, k, j)
            work = np.clip(x, 0, None).min(axis=3)            # (c, n, k)
            out[lo:lo + chunk][:, G] += weight * np.einsum("n,cnk->ck", probs, work)
    return out


def _support(spec: ServiceSpec, d: int, cap: int):
    try:
        return marginal_support(spec, d, cap=cap)
    except (NotSamplableError, SupportTooLargeError) as exc:
        raise CapabilityError(f"exact expectation unavailable: {exc}") from exc


def _mc_server_samples(positions: np.ndarray, spec: ServiceSpec, d: int, samples: int,
                       rng: np.random.Generator) -> np.ndarray:
    """``(samples, K)`` incoming work per server for sampled (routing, service) pairs."""
    K = len(positions)
    routes = np.argsort(rng.random((samples, K)), axis=1)[:, :d]
    services = sample_matrix(spec, rng, samples, K)
    return incoming_work_batch(positions, routes, services).astype(float)


def server_work(state, spec: ServiceSpec, K: int, d: int, method: str = "exact",
                samples: int = 100_000, seed: int = 0, support_cap: int = 1_000_000):
    """Per-server expected incoming work ``f_i`` for an ordered state, with standard errors.

    ``state`` is a ``GapVector`` or an ordered workload vector.
    """
    pos = state.positions() if isinstance(state, GapVector) else np.asarray(state, dtype=np.int64)
    if len(pos) != K:
        raise ValueError(f"state has {len(pos)} servers, expected {K}")
    if method == "exact":
        vecs, probs = _support(spec, d, support_cap)
        return _exact_server_work(pos[None, :], vecs, probs, d)[0], np.zeros(K)
    if method == "mc":
        if not spec.samplable:
            raise CapabilityError("moment_profile cannot be sampled")
        x = _mc_server_samples(pos, spec, d, samples, np.random.default_rng(seed))
        return x.mean(axis=0), x.std(axis=0, ddof=1) / math.sqrt(samples)
    raise ValueError(f"unknown method {method!r}")


def expected_incoming_work(delta: GapVector, spec: ServiceSpec, K: int, d: int,
                           method: str = "exact", samples: int = 100_000, seed: int = 0,
                           support_cap: int = 1_000_000) -> tuple[float, float]:
    """Expected total work brought by one job at gap vector ``delta``; returns ``(value, stderr)``."""
    if delta.K != K or delta.d != d:
        raise ValueError("gap vector does not match (K, d)")
    if method == "mc":
        if not spec.samplable:
            raise CapabilityError("moment_profile cannot be sampled")
        x = _mc_server_samples(delta.positions(), spec, d, samples, np.random.default_rng(seed)).sum(axis=1)
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(samples))
    f, _ = server_work(delta, spec, K, d, method, samples, seed, support_cap)
    return float(f.sum()), 0.0


def lb_denominator(K: int, d: int, g: Sequence[float]) -> float:
    """Uniform upper bound on the expected incoming work used by ``lambda_lb``."""
    return K / lambda_lb(K, d, g)


@dataclass
class LambdaMResult:
    value: float
    delta: GapVector
    method: str
    stderr: float = 0.0
    cells: int = 1
    max_work: float = field(default=math.nan)


def grid_size(spec: ServiceSpec, K: int, d: int) -> int:
    if d == 1 or d == K:
        return 1
    return (spec.max_value + 1) ** (K - d)


def lambda_m_search(spec: ServiceSpec, K: int, d: int, method: str = "exact",
                    grid_cell_cap: int = 2_000_000, mc_samples: int = 20_000, seed: int = 0,
                    support_cap: int = 1_000_000) -> LambdaMResult:
    """``K / max_delta E[incoming work]`` over the gap grid ``{0..B_max}^(K-d)``.

    A gap at or above ``B_max`` already saturates every ``[b_j + gap]^+``
    term, so capping each free coordinate at ``B_max`` loses nothing.
    With ``d == 1`` the incoming work does not depend on the gaps and only
    the zero vector is evaluated.
    """
    if not 1 <= d <= K:
        raise ValueError(f"need 1 <= d <= K, got d={d}, K={K}")
    if not spec.samplable:
        raise CapabilityError("lambda_m needs an enumerable or samplable law")
    spec.check_k(K)
    cells = grid_size(spec, K, d)
    if cells > grid_cell_cap:
        raise GridTooLargeError(cells, grid_cell_cap)
    free = 0 if d == 1 else K - d
    bmax = spec.max_value
    grid = np.array(list(itertools.product(range(bmax + 1), repeat=free)), dtype=np.int64).reshape(cells, free)
    gaps = np.concatenate([grid, np.zeros((cells, K - 1 - free), dtype=np.int64)], axis=1)
    positions = np.concatenate([np.zeros((cells, 1), dtype=np.int64), np.cumsum(gaps, axis=1)], axis=1)

    if method == "exact":
        vecs, probs = _support(spec, d, support_cap)
        totals = _exact_server_work(positions, vecs, probs, d).sum(axis=1)
        errs = np.zeros(cells)
    elif method == "mc":
        totals = np.empty(cells)
        errs = np.empty(cells)
        for c in range(cells):
            x = _mc_server_samples(positions[c], spec, d, mc_samples,
                                   np.random.default_rng(cell_seed(seed, c))).sum(axis=1)
            totals[c] = x.mean()
            errs[c] = x.std(ddof=1) / math.sqrt(mc_samples)
    else:
        raise ValueError(f"unknown method {method!r}")
    best = int(np.argmax(totals))
    work = float(totals[best])
    return LambdaMResult(
        value=K / work,
        delta=GapVector(tuple(gaps[best]), d),
        method=method,
        stderr=K * float(errs[best]) / work**2,
        cells=cells,
        max_work=work,
    )


def monotone_fi_check(state, spec: ServiceSpec, K: int, d: int, method: str = "exact",
                      samples: int = 100_000, seed: int = 0) -> bool:
    """Check ``f_1 >= ... >= f_K`` at an ordered state (gap vector or workloads)."""
    if not isinstance(state, GapVector):
        s = list(state)
        if any(b < a for a, b in zip(s, s[1:])):
            raise ValueError("state must be ordered non-decreasingly")
    if method == "exact":
        f, _ = server_work(state, spec, K, d, "exact")
        scale = max(1.0, float(np.abs(f).max()))
        return bool(np.all(np.diff(f) <= 1e-12 * scale))
    pos = state.positions() if isinstance(state, GapVector) else np.asarray(state, dtype=np.int64)
    x = _mc_server_samples(pos, spec, d, samples, np.random.default_rng(seed))
    diff = x[:, :-1] - x[:, 1:]
    mean = diff.mean(axis=0)
    se = diff.std(axis=0, ddof=1) / math.sqrt(samples)
    return bool(np.all(mean >= -3 * se))


@dataclass
class BoundReport:
    K: int
    d: int
    p_m: list[Fraction]
    lambda_lb: float
    known_bound: float
    best_bound: float
    time_scaling: bool
    g: list[float]
    lambda_m: LambdaMResult | None = None

    def to_dict(self) -> dict:
        out = {
            "K": self.K,
            "d": self.d,
            "p_m": [float(p) for p in self.p_m],
            "p_m_exact": [str(p) for p in self.p_m],
            "min_moments": list(self.g),
            "lambda_lb": self.lambda_lb,
            "known_bound": self.known_bound,
            "best_bound": self.best_bound,
            "time_scaling": self.time_scaling,
        }
        if self.lambda_m is not None:
            lm = self.lambda_m
            out["lambda_m"] = {
                "value": lm.value,
                "delta": list(lm.delta.delta),
                "method": lm.method,
                "stderr": lm.stderr,
                "cells": lm.cells,
            }
        return out


def bound_report(spec: ServiceSpec, K: int, d: int, with_lambda_m: bool = False,
                 method: str = "exact", **search_kw) -> BoundReport:
    g = min_moment_profile(spec, d)
    lb = float(lambda_lb(K, d, g))
    kb = known_bound(g[-1])
    report = BoundReport(K, d, overlap_probs(K, d), lb, kb, max(lb, kb),
                         time_scaling_check(spec, K, d), g)
    if with_lambda_m:
        report.lambda_m = lambda_m_search(spec, K, d, method, **search_kw)
    return report
