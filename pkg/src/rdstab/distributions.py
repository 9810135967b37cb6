"""Exchangeable joint service-time laws for the task vector of one job.

Four kinds are supported:

* ``iid_finite`` -- every coordinate drawn independently from one finite pmf.
* ``identical_replicas`` -- one draw from the pmf, copied to every coordinate.
* ``joint_finite`` -- an explicit pmf over K-vectors, symmetrized on load so
  that every permutation of coordinates has the same law.
* ``moment_profile`` -- only the sequence ``g[j] = E[min(B_1..B_j)]`` is known.
  Usable for bounds, not for simulation.

All support values are positive integers (service is counted in slots).
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

KINDS = ("iid_finite", "identical_replicas", "joint_finite", "moment_profile")
PROB_TOL = 1e-12
# K! permutations are enumerated during symmetrization.
MAX_JOINT_K = 8


class SpecError(ValueError):
    """Invalid service-time law."""


class NotSamplableError(SpecError):
    """The law carries only min-moments and cannot be sampled or enumerated."""


def _check_probs(probs: Sequence[float]) -> None:
    if any(p < 0 for p in probs):
        raise SpecError("negative probability")
    total = math.fsum(float(p) for p in probs)
    if abs(total - 1.0) > PROB_TOL:
        raise SpecError(f"probabilities sum to {total!r}, not 1")


def _normalize_pmf(pmf) -> tuple[tuple[int, ...], tuple[float, ...]]:
    items = pmf.items() if isinstance(pmf, Mapping) else pmf
    merged: dict[int, float] = defaultdict(float)
    raw = []
    for value, prob in items:
        if int(value) != value or value < 1:
            raise SpecError(f"support value {value!r} is not a positive integer")
        raw.append(prob)
        merged[int(value)] += float(prob)
    if not raw:
        raise SpecError("empty pmf")
    _check_probs(raw)
    values = tuple(sorted(v for v, p in merged.items() if p > 0))
    return values, tuple(merged[v] for v in values)


@dataclass(frozen=True)
class ServiceSpec:
    kind: str
    values: tuple[int, ...] = ()
    probs: tuple[float, ...] = ()
    vectors: tuple[tuple[int, ...], ...] = ()
    profile: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown kind {self.kind!r}")

    # -- constructors -----------------------------------------------------
    @classmethod
    def iid(cls, pmf) -> "ServiceSpec":
        values, probs = _normalize_pmf(pmf)
        return cls("iid_finite", values=values, probs=probs)

    @classmethod
    def identical(cls, pmf) -> "ServiceSpec":
        values, probs = _normalize_pmf(pmf)
        return cls("identical_replicas", values=values, probs=probs)

    @classmethod
    def two_point(cls, alpha: int, beta: int, p: float, identical: bool = False) -> "ServiceSpec":
        """``alpha`` with probability ``p``, ``beta`` with probability ``1 - p``."""
        pmf = [(alpha, p), (beta, 1 - p)]
        return cls.identical(pmf) if identical else cls.iid(pmf)

    @classmethod
    def joint(cls, pmf) -> "ServiceSpec":
        """Joint pmf over K-vectors; mass is spread evenly over coordinate permutations."""
        items = list(pmf.items() if isinstance(pmf, Mapping) else pmf)
        if not items:
            raise SpecError("empty pmf")
        K = len(items[0][0])
        if K > MAX_JOINT_K:
            raise SpecError(f"joint_finite supports K <= {MAX_JOINT_K}")
        _check_probs([p for _, p in items])
        sym: dict[tuple[int, ...], float] = defaultdict(float)
        for vec, prob in items:
            vec = tuple(vec)
            if len(vec) != K:
                raise SpecError("joint support vectors must share one length")
            if any(int(v) != v or v < 1 for v in vec):
                raise SpecError(f"support vector {vec!r} has a non-positive entry")
            # Every distinct arrangement of a multiset is hit by the same number
            # of permutations, so averaging over K! reduces to uniform mass here.
            arrangements = set(itertools.permutations(int(v) for v in vec))
            share = float(prob) / len(arrangements)
            for arr in arrangements:
                sym[arr] += share
        vectors = tuple(sorted(v for v, p in sym.items() if p > 0))
        return cls("joint_finite", vectors=vectors, probs=tuple(sym[v] for v in vectors))

    @classmethod
    def moment_profile(cls, g: Iterable[float]) -> "ServiceSpec":
        g = tuple(float(x) for x in g)
        if not g:
            raise SpecError("empty moment profile")
        if any(x <= 0 for x in g):
            raise SpecError("moment profile must be positive")
        if any(b > a * (1 + 1e-12) for a, b in zip(g, g[1:])):
            raise SpecError("moment profile must be non-increasing")
        return cls("moment_profile", profile=g)

    @classmethod
    def power_profile(cls, scale: float, exponent: float, n: int) -> "ServiceSpec":
        """``g[j] = scale / j**exponent`` for ``j = 1..n``."""
        return cls.moment_profile(scale / j**exponent for j in range(1, n + 1))

    # -- properties --------------------------------------------------------
    @property
    def samplable(self) -> bool:
        return self.kind != "moment_profile"

    @property
    def size(self) -> int | None:
        """Fixed vector length for joint laws, ``None`` otherwise."""
        if self.kind == "joint_finite":
            return len(self.vectors[0])
        if self.kind == "moment_profile":
            return len(self.profile)
        return None

    @property
    def max_value(self) -> int:
        if self.kind == "moment_profile":
            raise NotSamplableError("moment_profile has no support")
        if self.kind == "joint_finite":
            return max(max(v) for v in self.vectors)
        return max(self.values)

    def marginal(self) -> tuple[tuple[int, ...], tuple[float, ...]]:
        """Support and probabilities of a single coordinate B_1."""
        if self.kind in ("iid_finite", "identical_replicas"):
            return self.values, self.probs
        if self.kind == "joint_finite":
            acc: dict[int, float] = defaultdict(float)
            for vec, p in zip(self.vectors, self.probs):
                acc[vec[0]] += p
            vals = tuple(sorted(acc))
            return vals, tuple(acc[v] for v in vals)
        raise NotSamplableError("moment_profile has no marginal law")

    def check_k(self, K: int) -> None:
        if self.kind == "joint_finite" and self.size != K:
            raise SpecError(f"joint law has {self.size} coordinates, system has K={K}")


def sample_vector(spec: ServiceSpec, rng: np.random.Generator, K: int | None = None) -> np.ndarray:
    """One draw of the K-vector of task service times."""
    return sample_matrix(spec, rng, 1, K)[0]


def sample_matrix(spec: ServiceSpec, rng: np.random.Generator, n: int, K: int | None = None) -> np.ndarray:
    """``n`` independent draws, shape ``(n, K)``, dtype int64."""
    if not spec.samplable:
        raise NotSamplableError("moment_profile cannot be sampled")
    if spec.kind == "joint_finite":
        if K is not None:
            spec.check_k(K)
        rows = np.asarray(spec.vectors, dtype=np.int64)
        idx = rng.choice(len(rows), size=n, p=_renorm(spec.probs))
        return rows[idx]
    if K is None:
        raise SpecError("K is required for iid_finite and identical_replicas")
    values = np.asarray(spec.values, dtype=np.int64)
    p = _renorm(spec.probs)
    if spec.kind == "iid_finite":
        return rng.choice(values, size=(n, K), p=p)
    col = rng.choice(values, size=(n, 1), p=p)
    return np.repeat(col, K, axis=1)


def _renorm(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    return p / p.sum()


def min_moment(spec: ServiceSpec, j: int, K: int | None = None) -> float:
    """Exact ``E[min(B_1, ..., B_j)]``."""
    if j < 1:
        raise SpecError(f"j={j} out of range")
    if K is not None and j > K:
        raise SpecError(f"j={j} exceeds K={K}")
    if spec.kind == "moment_profile":
        if j > len(spec.profile):
            raise SpecError(f"profile has only {len(spec.profile)} entries")
        return spec.profile[j - 1]
    if spec.kind == "identical_replicas":
        return math.fsum(v * p for v, p in zip(spec.values, spec.probs))
    if spec.kind == "iid_finite":
        # E[min] = sum_{t>=0} P(B > t)^j; the survival function is a step
        # function, constant on [v_{k-1}, v_k).
        prev, tail = 0, 1.0
        terms = []
        for v, p in zip(spec.values, spec.probs):
            terms.append((v - prev) * tail**j)
            tail -= p
            prev = v
        return math.fsum(terms)
    if j > spec.size:
        raise SpecError(f"j={j} exceeds the joint law's K={spec.size}")
    return math.fsum(min(vec[:j]) * p for vec, p in zip(spec.vectors, spec.probs))


def min_moment_profile(spec: ServiceSpec, d: int) -> list[float]:
    """``[E[min of first j]] for j = 1..d``."""
    return [min_moment(spec, j) for j in range(1, d + 1)]


def time_scaling_check(spec: ServiceSpec, K: int, d: int) -> bool:
    """True when ``E[min(B_1..B_d)] > K``, keeping every stable rate below 1."""
    if not 1 <= d <= K:
        raise SpecError(f"need 1 <= d <= K, got d={d}, K={K}")
    return min_moment(spec, d) > K


def moments(spec: ServiceSpec) -> tuple[float, float]:
    """Mean and second moment of B_1 (second moment is NaN for a bare profile)."""
    if spec.kind == "moment_profile":
        return spec.profile[0], math.nan
    vals, probs = spec.marginal()
    return (math.fsum(v * p for v, p in zip(vals, probs)),
            math.fsum(v * v * p for v, p in zip(vals, probs)))


def marginal_support(spec: ServiceSpec, d: int, cap: int = 1_000_000) -> tuple[np.ndarray, np.ndarray]:
    """Joint support of ``(B_1, ..., B_d)`` as ``(vectors[n, d], probs[n])``.

    By exchangeability this is the law of the service times seen by any
    routed d-subset, read in increasing server order.
    """
    if spec.kind == "moment_profile":
        raise NotSamplableError("moment_profile has no enumerable support")
    if spec.kind == "identical_replicas":
        vecs = np.repeat(np.asarray(spec.values, dtype=np.int64)[:, None], d, axis=1)
        return vecs, np.asarray(spec.probs, dtype=float)
    if spec.kind == "iid_finite":
        n = len(spec.values) ** d
        if n > cap:
            raise SupportTooLargeError(n, cap)
        vecs = np.array(list(itertools.product(spec.values, repeat=d)), dtype=np.int64).reshape(n, d)
        pr = np.array([math.prod(c) for c in itertools.product(spec.probs, repeat=d)], dtype=float)
        return vecs, pr
    if d > spec.size:
        raise SpecError(f"d={d} exceeds the joint law's K={spec.size}")
    acc: dict[tuple[int, ...], float] = defaultdict(float)
    for vec, p in zip(spec.vectors, spec.probs):
        acc[vec[:d]] += p
    if len(acc) > cap:
        raise SupportTooLargeError(len(acc), cap)
    keys = sorted(acc)
    return np.array(keys, dtype=np.int64).reshape(len(keys), d), np.array([acc[k] for k in keys])


class SupportTooLargeError(SpecError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"joint support has {size} points, cap is {cap}")
        self.size = size
        self.cap = cap


def parse_pmf(text: str) -> list[tuple[int, float]]:
    """Parse ``"10:0.9, 100:0.1"``; probabilities may be written as fractions."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        value, _, prob = item.partition(":")
        out.append((int(value), float(Fraction(prob.strip()))))
    return out
