"""Long-horizon runs, stability verdicts, sweeps and validation checks."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from . import _kernel, model
from .bounds import overlap_probs
from .distributions import NotSamplableError, ServiceSpec, sample_matrix
from .seeding import RNG_ALGORITHM, SEED_MIXER, cell_seed

log = logging.getLogger(__name__)

DEFAULT_STRIDE = 100
DEFAULT_WINDOW = 0.5
# Total-workload growth per slot; above 10x this a run is called unstable.
DEFAULT_SLOPE_TOL = 0.02
DEFAULT_MAX_TOTAL_SLOTS = 10**11
ORACLE_MAX_K = 6
ORACLE_MAX_SLOTS = 10**6
_CHUNK = 4096


@dataclass(frozen=True)
class RunConfig:
    K: int
    d: int
    lam: float
    slots: int
    spec: ServiceSpec
    burn_in: int | None = None
    seed: int = 0
    stride: int = DEFAULT_STRIDE

    def __post_init__(self):
        if not 1 <= self.d <= self.K:
            raise ValueError(f"need 1 <= d <= K, got d={self.d}, K={self.K}")
        if not 0 < self.lam < 1:
            raise ValueError(f"arrival probability must be in (0, 1), got {self.lam}")
        if self.slots < 1:
            raise ValueError("slots must be positive")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.slots // 10)
        if not 0 <= self.burn_in < self.slots:
            raise ValueError("need 0 <= burn_in < slots")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        self.spec.check_k(self.K)


@dataclass
class Trace:
    cfg: RunConfig
    mean_workload: float
    max_workload: int
    server_means: tuple[float, ...]
    jobs: int
    mean_sojourn: float
    series: np.ndarray
    balance_violations: int
    first_violation: int | None
    final: tuple[int, ...]
    rng: str = RNG_ALGORITHM

    @property
    def stride(self) -> int:
        return self.cfg.stride

    @property
    def series_slots(self) -> np.ndarray:
        return self.cfg.stride * np.arange(1, len(self.series) + 1)

    def summary(self) -> dict:
        c = self.cfg
        return {
            "K": c.K, "d": c.d, "lambda": c.lam, "slots": c.slots, "burn_in": c.burn_in,
            "seed": c.seed, "rng": self.rng,
            "mean_workload": self.mean_workload,
            "max_workload": self.max_workload,
            "server_means": list(self.server_means),
            "jobs": self.jobs,
            "mean_sojourn": self.mean_sojourn,
            "balance_violations": self.balance_violations,
        }


def _kernel_law(spec: ServiceSpec, K: int):
    if not spec.samplable:
        raise NotSamplableError("moment_profile cannot be simulated")
    cdf = np.cumsum(spec.probs)
    cdf[-1] = 1.0
    if spec.kind == "joint_finite":
        rows = np.asarray(spec.vectors, dtype=np.int64)
        return _kernel.JOINT, np.zeros(1, np.int64), cdf, rows
    mode = _kernel.IID if spec.kind == "iid_finite" else _kernel.IDENTICAL
    return mode, np.asarray(spec.values, dtype=np.int64), cdf, np.zeros((1, 1), np.int64)


def _simulate(cfg: RunConfig, record: int = 0):
    mode, values, cdf, rows = _kernel_law(cfg.spec, cfg.K)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    return _kernel.simulate(rng, cfg.K, cfg.d, float(cfg.lam), cfg.slots, cfg.burn_in, cfg.stride,
                            mode, values, cdf, rows, record)


def run(cfg: RunConfig) -> Trace:
    """Simulate ``cfg.slots`` slots from the empty state."""
    (w, sums, series, max_total, jobs, sojourn, violations, first_violation,
     _, _, _) = _simulate(cfg)
    n = cfg.slots - cfg.burn_in
    means = tuple(float(x) / n for x in sums)
    return Trace(
        cfg=cfg,
        mean_workload=float(sums.sum()) / n,
        max_workload=int(max_total),
        server_means=means,
        jobs=int(jobs),
        mean_sojourn=sojourn / jobs if jobs else math.nan,
        series=series,
        balance_violations=int(violations),
        first_violation=None if first_violation < 0 else int(first_violation),
        final=tuple(int(x) for x in w),
    )


def trend_slope(trace: Trace, window_fraction: float = DEFAULT_WINDOW) -> float:
    """Least-squares slope of total workload per slot over the trailing window."""
    if not 0 < window_fraction <= 1:
        raise ValueError("window_fraction must be in (0, 1]")
    x = trace.series_slots
    keep = x > trace.cfg.burn_in
    x, y = x[keep], trace.series[keep]
    n = int(len(x) * window_fraction)
    if n < 10:
        raise ValueError(f"trailing window holds {n} points, need at least 10")
    x, y = x[-n:].astype(float), y[-n:].astype(float)
    x -= x.mean()
    return float(np.dot(x, y - y.mean()) / np.dot(x, x))


def stability_verdict(trace: Trace, window_fraction: float = DEFAULT_WINDOW,
                      slope_tol: float = DEFAULT_SLOPE_TOL) -> str:
    slope = trend_slope(trace, window_fraction)
    if slope < slope_tol:
        return "stable"
    if slope > 10 * slope_tol:
        return "unstable"
    return "inconclusive"


@dataclass
class SweepRow:
    d: int
    lam: float
    mean_workload: float
    slope: float
    verdict: str
    slots: int
    seed: int


@dataclass
class SweepResult:
    rows: list[SweepRow]
    base_seed: int
    K: int
    meta: dict = field(default_factory=dict)

    def edge(self, d: int) -> float | None:
        """Largest arrival probability with a stable verdict for this ``d``."""
        lams = [r.lam for r in self.rows if r.d == d and r.verdict == "stable"]
        return max(lams) if lams else None

    def for_d(self, d: int) -> list[SweepRow]:
        return [r for r in self.rows if r.d == d]


def _sweep_cell(args) -> SweepRow:
    cfg, window_fraction, slope_tol = args
    trace = run(cfg)
    slope = trend_slope(trace, window_fraction)
    verdict = stability_verdict(trace, window_fraction, slope_tol)
    return SweepRow(cfg.d, cfg.lam, trace.mean_workload, slope, verdict, cfg.slots, cfg.seed)


def sweep(base: RunConfig, ds: Sequence[int], lambdas: Sequence[float], workers: int = 1,
          window_fraction: float = DEFAULT_WINDOW, slope_tol: float = DEFAULT_SLOPE_TOL,
          max_total_slots: int = DEFAULT_MAX_TOTAL_SLOTS) -> SweepResult:
    """One run per ``(d, lambda)`` cell; cell seeds come from ``cell_seed(base.seed, i_d, i_lambda)``."""
    if not ds or not lambdas:
        raise ValueError("d and lambda lists must be non-empty")
    budget = len(ds) * len(lambdas) * base.slots
    if budget > max_total_slots:
        raise ResourceWarning(f"sweep needs {budget} slots, cap is {max_total_slots}")
    jobs = [(replace(base, d=d, lam=lam, seed=cell_seed(base.seed, i, j)), window_fraction, slope_tol)
            for i, d in enumerate(ds) for j, lam in enumerate(lambdas)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, jobs))
    else:
        rows = [_sweep_cell(job) for job in jobs]
    meta = {"rng": RNG_ALGORITHM, "seed_mixer": SEED_MIXER, "base_seed": base.seed,
            "window_fraction": window_fraction, "slope_tol": slope_tol}
    return SweepResult(rows, base.seed, base.K, meta)


# --------------------------------------------------------------------------
# Reference-path helpers (pure Python recursion fed by numpy draws)


def _arrival_runs(K: int, d: int, lam: float, spec: ServiceSpec,
                  rng: np.random.Generator) -> Iterator[tuple[int, model.SlotInput]]:
    """Endless ``(quiet slots, arrival input)`` pairs, drawn in fixed-size blocks."""
    gap = 0
    while True:
        arrive = rng.random(_CHUNK) < lam
        na = int(arrive.sum())
        routes = np.sort(np.argsort(rng.random((na, K)), axis=1)[:, :d], axis=1).tolist()
        services = sample_matrix(spec, rng, na, K).tolist()
        k = 0
        for a in arrive.tolist():
            if a:
                yield gap, model.SlotInput._trusted(tuple(routes[k]), tuple(services[k]))
                gap = 0
                k += 1
            else:
                gap += 1


def input_stream(K: int, d: int, lam: float, spec: ServiceSpec,
                 rng: np.random.Generator) -> Iterator[model.SlotInput]:
    """Endless stream of slot inputs, one per slot."""
    for gap, inp in _arrival_runs(K, d, lam, spec, rng):
        for _ in range(gap):
            yield model.NO_ARRIVAL
        yield inp


@dataclass
class EquivalenceReport:
    ok: bool
    slots: int
    jobs: int
    slot: int | None = None
    message: str = ""


def validate_equivalence(cfg: RunConfig, max_K: int = ORACLE_MAX_K,
                         max_slots: int = ORACLE_MAX_SLOTS,
                         drain_every_slot: bool = False) -> EquivalenceReport:
    """Co-simulate the recursion and the task-level oracle on one input stream.

    Compares, every slot, workload vectors against oracle drain times, the
    balance property, and each job's departure slot and completing server
    against the values predicted at its arrival.

    Oracle drain times are recomputed from the queues on every arrival
    slot. On other slots the previous drain vector minus one is used: the
    drain computation already simulates the no-arrival future, departures
    included, so this is exact. ``drain_every_slot`` recomputes always.

    Once both sides are empty, ``model.step`` is called for the first quiet
    slot only; if it keeps the empty state, both clocks jump to the next
    arrival. While busy, stretches with no arrival and no completion move
    the oracle in one jump; the recursion is still stepped and checked
    slot by slot.
    """
    if cfg.K > max_K or cfg.slots > max_slots:
        raise ValueError(f"oracle runs are capped at K <= {max_K}, slots <= {max_slots}")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    runs = _arrival_runs(cfg.K, cfg.d, cfg.lam, cfg.spec, rng)
    state = model.WorkloadState.empty(cfg.K)
    oracle = model.OracleState(cfg.K)
    predicted: dict[int, tuple[int, int]] = {}
    zeros = (0,) * cfg.K
    drain = zeros
    jobs = 0
    pending = 0
    nxt = None

    def fail(t, msg):
        return EquivalenceReport(False, t, jobs, t, f"slot {t}: {msg}")

    while state.slot < cfg.slots:
        if pending == 0 and nxt is None:
            pending, nxt = next(runs)
        if pending:
            inp = model.NO_ARRIVAL
            pending -= 1
            if state.w == zeros and oracle.idle():
                state = model.step(state, inp)
                oracle.advance(inp)
                if state.w != zeros:
                    return fail(state.slot, f"recursion left the empty state: {state.w}")
                skip = min(pending, cfg.slots - state.slot)
                pending -= skip
                state = model.WorkloadState(zeros, state.slot + skip)
                oracle.slot += skip
                continue
            quiet = min(pending, oracle.quiet_slots(), cfg.slots - state.slot - 1)
            if quiet > 0 and not drain_every_slot:
                # no task finishes: the oracle only counts down, the recursion still steps
                for _ in range(quiet):
                    state = model.step(state, inp)
                    drain = tuple([x - 1 if x > 0 else 0 for x in drain])
                    if drain != state.w:
                        return fail(state.slot, f"recursion workload {state.w} != oracle drain times {drain}")
                    if state.w.count(max(state.w)) < cfg.d:
                        return fail(state.slot, f"top-{cfg.d} workloads unequal in {state.w}")
                oracle.advance_quiet(quiet)
                pending -= quiet
        else:
            inp, nxt = nxt, None
            predicted[oracle.next_id] = model.departure(state, inp.routing, inp.services)
        state = model.step(state, inp)
        t = state.slot
        departed = oracle.advance(inp)
        for jid in departed:
            rec = oracle.jobs.pop(jid)
            want = predicted.pop(jid)
            jobs += 1
            if (rec.departure, rec.completed_by) != want:
                return fail(t, f"job {jid} departed at {rec.departure} via server {rec.completed_by}, "
                               f"recursion predicts {want[0]} via {want[1]}")
        if inp.arrival or drain_every_slot:
            drain = tuple(model.oracle_drain_times(oracle))
        else:
            drain = tuple([x - 1 if x > 0 else 0 for x in drain])
        if drain != state.w:
            return fail(t, f"recursion workload {state.w} != oracle drain times {drain}")
        if state.w.count(max(state.w)) < cfg.d:
            return fail(t, f"top-{cfg.d} workloads unequal in {state.w}")
    return EquivalenceReport(True, cfg.slots, jobs, None, "no divergence")


def validate_kernel(cfg: RunConfig, arrivals: int = 2000) -> EquivalenceReport:
    """Replay the compiled run's first draws through ``model.step`` and compare trajectories."""
    short = replace(cfg, slots=cfg.slots, burn_in=0, stride=1)
    out = _simulate(short, record=arrivals)
    series = out[2]
    rec_slots, routes, bs = out[-3:]
    horizon = int(rec_slots[-1]) if len(rec_slots) == arrivals else cfg.slots
    by_slot = {}
    for t, g, b in zip(rec_slots.tolist(), routes.tolist(), bs.tolist()):
        vec = [1] * cfg.K
        for j, v in zip(g, b):
            vec[j] = v
        by_slot[t] = model.SlotInput.job(g, vec)
    state = model.WorkloadState.empty(cfg.K)
    for t in range(1, horizon + 1):
        state = model.step(state, by_slot.get(t, model.NO_ARRIVAL))
        if sum(state.w) != series[t - 1]:
            return EquivalenceReport(False, t, len(by_slot), t,
                                     f"slot {t}: compiled total {series[t - 1]} != reference {sum(state.w)}")
    return EquivalenceReport(True, horizon, len(by_slot), None, "no divergence")


@dataclass
class ArrivalStats:
    arrivals: int
    omega_freq: list[float]
    p_m: list[float]
    omega_se: list[float]
    rank_means: list[float]
    rank_diff_mean: list[float]
    rank_diff_se: list[float]

    @property
    def omega_ok(self) -> bool:
        return all(abs(f - p) <= 3 * s + 1e-15 for f, p, s in zip(self.omega_freq, self.p_m, self.omega_se))

    @property
    def rank_ok(self) -> bool:
        return all(m >= -3 * s for m, s in zip(self.rank_diff_mean, self.rank_diff_se))


def arrival_statistics(K: int, d: int, lam: float, spec: ServiceSpec, arrivals: int,
                       seed: int = 0) -> ArrivalStats:
    """Per-arrival overlap with the current top-d set and rank-ordered incoming work.

    Servers are ranked by workload just before the arrival (ties by index);
    rank 0 is the least loaded. ``rank_diff_*`` describe ``A[rank r] -
    A[rank r+1]``, which should be nonnegative on average.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    stream = input_stream(K, d, lam, spec, rng)
    state = model.WorkloadState.empty(K)
    counts = [0] * (d + 1)
    work_sum = np.zeros(K)
    diff_sum = np.zeros(K - 1)
    diff_sq = np.zeros(K - 1)
    seen = 0
    while seen < arrivals:
        inp = next(stream)
        if inp.arrival:
            w = state.w
            order = sorted(range(K), key=lambda i: (w[i], i))
            top = set(order[K - d:])
            g = inp.routing.servers
            counts[sum(1 for j in g if j in top)] += 1
            finish = min(w[j] + inp.services[j] for j in g)
            a = [0] * K
            for j in g:
                a[j] = max(finish - w[j], 0)
            ranked = np.array([a[i] for i in order], dtype=float)
            work_sum += ranked
            diff = ranked[:-1] - ranked[1:]
            diff_sum += diff
            diff_sq += diff * diff
            seen += 1
        state = model.step(state, inp)
    n = float(arrivals)
    p_m = [float(p) for p in overlap_probs(K, d)]
    freq = [c / n for c in counts]
    mean_diff = diff_sum / n
    var_diff = np.maximum(diff_sq / n - mean_diff**2, 0.0) * n / (n - 1)
    return ArrivalStats(
        arrivals=arrivals,
        omega_freq=freq,
        p_m=p_m,
        omega_se=[math.sqrt(p * (1 - p) / n) for p in p_m],
        rank_means=(work_sum / n).tolist(),
        rank_diff_mean=mean_diff.tolist(),
        rank_diff_se=np.sqrt(var_diff / n).tolist(),
    )


def drift_estimate(state, lam: float, spec: ServiceSpec, K: int, d: int,
                   samples: int = 10_000, seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo mean and standard error of ``L(next) - L(state)``, ``L(w) = sum w_i^2``."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    w = np.asarray(state.w if isinstance(state, model.WorkloadState) else state, dtype=np.int64)
    if len(w) != K:
        raise ValueError(f"state has {len(w)} servers, expected {K}")
    rng = np.random.Generator(np.random.PCG64(seed))
    arrive = rng.random(samples) < lam
    routes = np.argsort(rng.random((samples, K)), axis=1)[:, :d]
    services = sample_matrix(spec, rng, samples, K)
    a = model.incoming_work_batch(w, routes, services) * arrive[:, None]
    nxt = np.maximum(w + a - 1, 0)
    delta = (nxt.astype(float) ** 2).sum(axis=1) - float((w.astype(float) ** 2).sum())
    if samples == 1:
        return float(delta[0]), 0.0
    return float(delta.mean()), float(delta.std(ddof=1) / math.sqrt(samples))


def sample_ordered_states(n: int, K: int, d: int, low: int, high: int, seed: int = 0,
                          floor: int = 0) -> list[tuple[int, ...]]:
    """Random ordered states with the top ``d`` tied, maximum in ``[low, high]``
    and every entry at least ``floor``."""
    if not 0 <= floor <= low <= high:
        raise ValueError("need 0 <= floor <= low <= high")
    rng = np.random.default_rng(seed)
    states = []
    for _ in range(n):
        top = int(rng.integers(low, high + 1))
        rest = np.sort(rng.integers(floor, top + 1, size=K - d))
        states.append(tuple(int(x) for x in rest) + (top,) * d)
    return states
