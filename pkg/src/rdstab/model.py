"""Workload Markov chain of the R(d) system and a task-level FIFO oracle.

Servers are indexed ``0..K-1``. Slot ``t`` proceeds as: possible arrival,
one unit of service at every busy server, completion and sibling
cancellation, clamp at zero. ``WorkloadState.w[i]`` is the number of slots
server ``i`` needs to empty its buffer if nothing else arrives, counting
tasks that will be cancelled by a faster sibling.

Randomness never enters this module: every slot's arrival flag, routing
set and service vector come in through ``SlotInput``, so the recursion and
the oracle can be driven by the same draws.
"""
from __future__ import annotations

import copy
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class WorkloadState:
    w: tuple[int, ...]
    slot: int = 0

    def __post_init__(self):
        if any(x < 0 for x in self.w):
            raise ValueError(f"negative workload in {self.w}")
        if self.slot < 0:
            raise ValueError("slot must be nonnegative")

    @classmethod
    def empty(cls, K: int) -> "WorkloadState":
        return cls((0,) * K, 0)

    @property
    def K(self) -> int:
        return len(self.w)

    def gap(self, i: int, j: int) -> int:
        """``w[j] - w[i]``."""
        return self.w[j] - self.w[i]


@dataclass(frozen=True)
class RoutingDraw:
    servers: tuple[int, ...]

    def __post_init__(self):
        s = tuple(sorted(self.servers))
        if len(set(s)) != len(s) or not s:
            raise ValueError(f"routing set {self.servers} must be non-empty and distinct")
        if s[0] < 0:
            raise ValueError(f"negative server index in {self.servers}")
        object.__setattr__(self, "servers", s)

    @classmethod
    def draw(cls, rng: np.random.Generator, K: int, d: int) -> "RoutingDraw":
        return cls(tuple(int(x) for x in rng.choice(K, size=d, replace=False)))

    @property
    def d(self) -> int:
        return len(self.servers)

    def __contains__(self, i: int) -> bool:
        return i in self.servers

    def check(self, K: int) -> None:
        if self.servers[-1] >= K:
            raise ValueError(f"routing set {self.servers} out of range for K={K}")


@dataclass(frozen=True)
class SlotInput:
    arrival: bool = False
    routing: RoutingDraw | None = None
    services: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.arrival != (self.routing is not None) or self.arrival != (self.services is not None):
            raise ValueError("routing and services must be given exactly when a job arrives")
        if self.services is not None:
            object.__setattr__(self, "services", tuple(int(b) for b in self.services))
            if any(b < 1 for b in self.services):
                raise ValueError(f"service times must be >= 1, got {self.services}")

    @classmethod
    def job(cls, servers: Sequence[int], services: Sequence[int]) -> "SlotInput":
        return cls(True, RoutingDraw(tuple(servers)), tuple(services))

    @classmethod
    def _trusted(cls, servers: tuple[int, ...], services: tuple[int, ...]) -> "SlotInput":
        # sampler output: sorted distinct servers, positive integer services
        g = object.__new__(RoutingDraw)
        object.__setattr__(g, "servers", servers)
        inp = object.__new__(cls)
        object.__setattr__(inp, "arrival", True)
        object.__setattr__(inp, "routing", g)
        object.__setattr__(inp, "services", services)
        return inp


NO_ARRIVAL = SlotInput()


def _check_job(K: int, g: RoutingDraw, b: Sequence[int]) -> None:
    g.check(K)
    if len(b) != K:
        raise ValueError(f"service vector has length {len(b)}, expected {K}")
    for j in g.servers:
        if b[j] < 1:
            raise ValueError(f"service time b[{j}]={b[j]} < 1")


def _w(state) -> Sequence[int]:
    return state.w if isinstance(state, WorkloadState) else state


def incoming_work(state, i: int, g: RoutingDraw, b: Sequence[int]) -> int:
    """Work added to server ``i`` by a job routed to ``g`` with service vector ``b``.

    ``min_{j in g} [b[j] + w[j] - w[i]]^+`` if ``i`` is routed, else 0. The
    minimizer is the sibling that finishes first; server ``i``'s copy is
    truncated at that instant or cancelled outright.
    """
    w = _w(state)
    K = len(w)
    if not 0 <= i < K:
        raise IndexError(f"server {i} out of range for K={K}")
    _check_job(K, g, b)
    if i not in g.servers:
        return 0
    wi = w[i]
    return min(max(b[j] + w[j] - wi, 0) for j in g.servers)


def step(state: WorkloadState, inp: SlotInput) -> WorkloadState:
    """One slot of the workload recursion ``w_i <- [w_i + A_i - 1]^+``."""
    w = state.w
    if inp.arrival:
        g, b = inp.routing, inp.services
        _check_job(len(w), g, b)
        new = [x - 1 if x > 0 else 0 for x in w]
        for i in g.servers:
            wi = w[i]
            a = min([max(b[j] + w[j] - wi, 0) for j in g.servers])
            new[i] = max(wi + a - 1, 0)
        return _state(tuple(new), state.slot + 1)
    return _state(tuple([x - 1 if x > 0 else 0 for x in w]), state.slot + 1)


def _state(w: tuple[int, ...], slot: int) -> WorkloadState:
    # outputs of the recursion are nonnegative by construction
    st = object.__new__(WorkloadState)
    st.__dict__.update(w=w, slot=slot)
    return st


def completing_server(state, g: RoutingDraw, b: Sequence[int]) -> int:
    """Server whose task finishes first; smallest index wins ties."""
    w = _w(state)
    _check_job(len(w), g, b)
    return min(g.servers, key=lambda j: (w[j] + b[j], j))


def departure_slot(state: WorkloadState, g: RoutingDraw, b: Sequence[int]) -> int:
    """Slot at whose end a job arriving in slot ``state.slot + 1`` departs."""
    return departure(state, g, b)[0]


def departure(state: WorkloadState, g: RoutingDraw, b: Sequence[int]) -> tuple[int, int]:
    """``(departure slot, completing server)`` for a job arriving in the next slot."""
    j = completing_server(state, g, b)
    return state.slot + state.w[j] + b[j], j


def balance_check(state, d: int) -> bool:
    """True iff the ``d`` largest workloads are all equal."""
    w = _w(state)
    if not 1 <= d <= len(w):
        raise ValueError(f"need 1 <= d <= K, got d={d}")
    if not isinstance(w, (tuple, list)):
        w = list(w)
    return w.count(max(w)) >= d


def incoming_work_batch(w: np.ndarray, routes: np.ndarray, services: np.ndarray) -> np.ndarray:
    """Vectorized ``incoming_work`` for ``n`` jobs against states ``w``.

    ``w`` is ``(K,)`` or ``(n, K)``, ``routes`` ``(n, d)`` server indices,
    ``services`` ``(n, K)``. Returns ``(n, K)`` incoming work.
    """
    n, d = routes.shape
    w = np.asarray(w, dtype=np.int64)
    rows = np.arange(n)[:, None]
    ww = np.broadcast_to(w, (n, w.shape[-1]))
    sub_w = ww[rows, routes]
    sub_b = services[rows, routes]
    # x[r, k, j] = b_j + w_j - w_k
    x = (sub_b + sub_w)[:, None, :] - sub_w[:, :, None]
    a = np.clip(x, 0, None).min(axis=2)
    out = np.zeros_like(ww)
    out[rows, routes] = a
    return out


# --------------------------------------------------------------------------
# Task-level oracle


@dataclass
class JobRecord:
    arrival: int
    servers: tuple[int, ...]
    departure: int | None = None
    completed_by: int | None = None


@dataclass
class OracleState:
    """Explicit FIFO queues of ``[job_id, remaining]`` task records."""

    K: int
    queues: list = field(default=None)
    jobs: dict = field(default_factory=dict)
    slot: int = 0
    next_id: int = 0

    def __post_init__(self):
        if self.queues is None:
            self.queues = [deque() for _ in range(self.K)]

    def clone(self) -> "OracleState":
        return copy.deepcopy(self)

    def idle(self) -> bool:
        return not any(self.queues)

    def enqueue(self, g: RoutingDraw, b: Sequence[int]) -> int:
        """Place one task per routed server, without advancing time."""
        _check_job(self.K, g, b)
        jid = self.next_id
        self.next_id += 1
        for s in g.servers:
            self.queues[s].append([jid, int(b[s])])
        self.jobs[jid] = JobRecord(self.slot + 1, g.servers)
        return jid

    def _cancel(self, queues, jid: int) -> None:
        for s in self.jobs[jid].servers:
            q = queues[s]
            for k, task in enumerate(q):
                if task[0] == jid:
                    del q[k]
                    break

    def advance(self, inp: SlotInput) -> list[int]:
        """Run one slot in place; returns ids of jobs departing in it."""
        if inp.arrival:
            self.enqueue(inp.routing, inp.services)
        self.slot += 1
        finished = []
        for s, q in enumerate(self.queues):
            if q:
                head = q[0]
                head[1] -= 1
                if head[1] == 0:
                    finished.append((s, head[0]))
        departed = []
        for s, jid in finished:
            rec = self.jobs[jid]
            if rec.departure is not None:
                # a lower-indexed sibling finished in the same slot
                continue
            rec.departure = self.slot
            rec.completed_by = s
            self._cancel(self.queues, jid)
            departed.append(jid)
        return departed

    def quiet_slots(self) -> int:
        """Slots that can pass with no arrival before any head task finishes."""
        heads = [q[0][1] for q in self.queues if q]
        return min(heads) - 1 if heads else -1

    def advance_quiet(self, n: int) -> None:
        """``n`` slots with no arrival and no completion, in one step."""
        if n <= 0:
            return
        if n > self.quiet_slots() >= 0 or self.idle():
            raise ValueError(f"{n} quiet slots would cross a completion")
        for q in self.queues:
            if q:
                q[0][1] -= n
        self.slot += n

    def check(self) -> None:
        seen: dict[int, int] = {}
        for q in self.queues:
            for jid, rem in q:
                if rem <= 0:
                    raise AssertionError(f"task of job {jid} has remaining work {rem}")
                if self.jobs[jid].departure is not None:
                    raise AssertionError(f"departed job {jid} still queued")
                seen[jid] = seen.get(jid, 0) + 1
        for jid, count in seen.items():
            if count > len(self.jobs[jid].servers):
                raise AssertionError(f"job {jid} queued {count} times")


def oracle_step(o: OracleState, inp: SlotInput) -> tuple[OracleState, list[int]]:
    """Functional form of ``OracleState.advance``; ``o`` is left untouched."""
    nxt = o.clone()
    departed = nxt.advance(inp)
    return nxt, departed


def oracle_drain_times(o: OracleState) -> list[int]:
    """Slots until each queue empties if no further job arrives.

    Runs the queues forward, jumping from one head-of-line completion to the
    next. Cancelled tasks are dropped lazily: a finished job's id goes into a
    set, and its sibling tasks are skipped when they reach a head.
    """
    K = o.K
    queues = [list(q) for q in o.queues]
    pos = [0] * K
    rem = [q[0][1] if q else 0 for q in queues]
    live = [s for s in range(K) if queues[s]]
    drain = [0] * K
    done = set()
    t = 0
    while live:
        dt = min([rem[s] for s in live])
        t += dt
        for s in live:
            rem[s] -= dt
            if rem[s] == 0:
                done.add(queues[s][pos[s]][0])
        still = []
        for s in live:
            q = queues[s]
            if rem[s] == 0 or q[pos[s]][0] in done:
                k = pos[s] + 1
                while k < len(q) and q[k][0] in done:
                    k += 1
                pos[s] = k
                if k == len(q):
                    drain[s] = t
                    continue
                rem[s] = q[k][1]
            still.append(s)
        live = still
    return drain
