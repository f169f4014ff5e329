"""The online stream protocol: batches revealed once, a fixed update budget per batch."""
from __future__ import annotations

import gc
import math
import weakref
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from odics.domains import DomainSpec, LabeledSample, generate_sample, make_split
from odics.errors import ConfigurationError, ProtocolViolation


@dataclass(frozen=True)
class StreamConfig:
    mode: str = "sequential"  # or "mixed"
    domain_order: tuple = ("cs", "idd", "bdd", "acdc")
    train_sizes: tuple = (1700, 1700, 1700, 1700)
    test_size: int = 425
    batch_size: int = 8
    budget: int = 4
    shuffle_seed: int = 0
    # mixed mode: relative per-domain share of each batch (None = proportional to size)
    quotas: tuple | None = None
    eval_every_fraction: float = 0.1

    def __post_init__(self):
        if self.mode not in ("sequential", "mixed"):
            raise ConfigurationError(f"mode must be 'sequential' or 'mixed', got {self.mode!r}")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.budget < 1:
            raise ConfigurationError("budget N must be >= 1")
        if len(self.train_sizes) != len(self.domain_order):
            raise ConfigurationError("train_sizes must give one size per domain")
        if any(n <= 0 for n in self.train_sizes) or self.test_size <= 0:
            raise ConfigurationError("train and test sizes must be positive")
        if len(set(self.domain_order)) != len(self.domain_order):
            raise ConfigurationError("domain_order must not repeat a domain")
        if self.quotas is not None and (len(self.quotas) != len(self.domain_order) or min(self.quotas) < 0
                                        or sum(self.quotas) <= 0):
            raise ConfigurationError("quotas must be nonnegative, one per domain, with a positive total")


@dataclass
class StreamStep:
    t: int  # 1-based
    batch: list
    boundary: bool
    composition: dict = field(default_factory=dict)  # logging only, never shown to learners


class Stream:
    """Lazily generated sequence of :class:`StreamStep` for a config and its domains."""

    def __init__(self, config: StreamConfig, domains: Sequence[DomainSpec]):
        by_name = {d.name: d for d in domains}
        unknown = [n for n in config.domain_order if n not in by_name]
        if unknown:
            raise ConfigurationError(f"unknown domain(s) in domain_order: {unknown}")
        self.config = config
        self.domains = [by_name[n] for n in config.domain_order]
        self.splits = [make_split(d, n, config.test_size) for d, n in zip(self.domains, config.train_sizes)]
        self._plan = self._build_plan()

    # -- planning ---------------------------------------------------------

    def _train_order(self, i: int) -> np.ndarray:
        rng = np.random.default_rng([self.config.shuffle_seed, i])
        return rng.permutation(np.asarray(self.splits[i][0]))

    def _build_plan(self) -> list[list[tuple[int, int]]]:
        """Per step, the ``(domain index, sample seed)`` pairs to reveal."""
        cfg = self.config
        orders = [self._train_order(i) for i in range(len(self.domains))]
        plan = []
        if cfg.mode == "sequential":
            for i, order in enumerate(orders):
                for s in range(0, len(order), cfg.batch_size):
                    plan.append([(i, int(x)) for x in order[s:s + cfg.batch_size]])
            return plan
        shares = np.asarray(cfg.quotas if cfg.quotas is not None else cfg.train_sizes, dtype=float)
        cursor = [0] * len(orders)
        remaining = np.array([len(o) for o in orders])
        while remaining.sum() > 0:
            take = mixed_quotas(shares, remaining, cfg.batch_size)
            step = []
            for i, k in enumerate(take):
                step.extend((i, int(x)) for x in orders[i][cursor[i]:cursor[i] + k])
                cursor[i] += k
            remaining = remaining - take
            rng = np.random.default_rng([cfg.shuffle_seed, 7919, len(plan)])
            plan.append([step[j] for j in rng.permutation(len(step))])
        return plan

    def __len__(self) -> int:
        return len(self._plan)

    @property
    def num_steps(self) -> int:
        return len(self._plan)

    def boundary_steps(self) -> list[int]:
        """1-based steps at which a new domain starts (sequential) or the stream starts (mixed)."""
        if self.config.mode == "mixed":
            return [1]
        steps, t = [], 1
        for n in self.config.train_sizes:
            steps.append(t)
            t += math.ceil(n / self.config.batch_size)
        return steps

    def domain_end_steps(self) -> list[int]:
        ends, t = [], 0
        for n in self.config.train_sizes:
            t += math.ceil(n / self.config.batch_size)
            ends.append(t)
        return ends

    def eval_points(self) -> list[int]:
        if self.config.mode == "sequential":
            return self.domain_end_steps()
        total = self.num_steps
        k = max(1, round(1 / self.config.eval_every_fraction))
        return sorted({max(1, math.ceil(total * q / k)) for q in range(1, k + 1)})

    def test_seeds(self, i: int) -> range:
        return self.splits[i][1]

    # -- iteration --------------------------------------------------------

    def __iter__(self) -> Iterator[StreamStep]:
        starts = set(self.boundary_steps())
        for t, entries in enumerate(self._plan, start=1):
            comp: dict = {}
            for i, _ in entries:
                name = self.domains[i].name
                comp[name] = comp.get(name, 0) + 1
            # built inline: the generator frame must not keep a reference to the batch
            yield StreamStep(t=t, batch=[generate_sample(self.domains[i], seed) for i, seed in entries],
                             boundary=t in starts, composition=comp)


def mixed_quotas(shares, remaining, batch_size: int) -> np.ndarray:
    """Largest-remainder split of ``batch_size`` slots over domains with data left."""
    remaining = np.asarray(remaining)
    active = remaining > 0
    w = np.where(active, np.asarray(shares, dtype=float), 0.0)
    if w.sum() <= 0:
        w = active.astype(float)
    slots = min(batch_size, int(remaining.sum()))
    take = np.zeros(len(w), dtype=int)
    while slots > 0:
        ideal = w / w.sum() * slots
        extra = np.minimum(np.floor(ideal).astype(int), remaining - take)
        take += extra
        slots -= int(extra.sum())
        if slots == 0:
            break
        frac = np.where(take < remaining, ideal - np.floor(ideal), -1.0)
        if frac.max() < 0:
            break
        # ties resolved toward the lower domain index
        j = int(np.argmax(frac))
        take[j] += 1
        slots -= 1
        w = np.where(take < remaining, w, 0.0)
        if w.sum() <= 0:
            break
    return take


def build_stream(config: StreamConfig, domains: Sequence[DomainSpec]) -> Stream:
    return Stream(config, domains)


# ---------------------------------------------------------------------------
# budget audit and lifetime instrumentation


class UpdateAudit:
    """Counts parameter updates; every learner update must go through :meth:`record`."""

    def __init__(self, budget: int):
        self.budget = budget
        self.total = 0
        self.in_step = 0
        self.step = 0

    def begin_step(self, t: int) -> None:
        self.step = t
        self.in_step = 0

    def record(self) -> None:
        if self.in_step >= self.budget:
            raise ProtocolViolation(f"step {self.step}: learner attempted update {self.in_step + 1} "
                                    f"with budget N={self.budget}")
        self.in_step += 1
        self.total += 1

    def end_step(self) -> None:
        if self.in_step != self.budget:
            raise ProtocolViolation(f"step {self.step}: learner made {self.in_step} updates, budget is {self.budget}")


class LifetimeTracker:
    """Weak references to every revealed sample, to prove nothing from past steps is retained."""

    def __init__(self):
        self._refs: list[tuple[int, weakref.ref]] = []

    def register(self, t: int, samples) -> None:
        self._refs.extend((t, weakref.ref(s)) for s in samples)

    def alive_before(self, t: int) -> list[LabeledSample]:
        gc.collect()
        alive = [(s, r()) for s, r in self._refs if s < t]
        self._refs = [(s, r) for s, r in self._refs if r() is not None]
        return [obj for _, obj in alive if obj is not None]


@dataclass
class EngineResult:
    steps: int
    audit_total: int
    eval_records: list
    retained_violations: list


def run(stream: Stream, learner, evaluator: Callable | None = None, eval_points=None,
        tracker: LifetimeTracker | None = None, allowed_retention: Callable | None = None,
        on_step: Callable | None = None) -> EngineResult:
    """Drive ``learner`` through ``stream``.

    ``evaluator(t)`` is called after each eval point step and its return value
    stored. ``tracker`` enables the no-rewind audit; samples legitimately held
    by the learner (e.g. a replay buffer) are reported by ``allowed_retention()``.
    """
    budget = stream.config.budget
    audit = UpdateAudit(budget)
    learner.attach_audit(audit)
    points = set(stream.eval_points() if eval_points is None else eval_points)
    records, violations = [], []
    for step in stream:
        t = step.t
        if tracker is not None:
            tracker.register(t, step.batch)
        audit.begin_step(t)
        boundary = step.boundary if learner.needs_boundaries else None
        learner.on_batch(step.batch, budget, boundary)
        audit.end_step()
        if on_step is not None:
            on_step(step)
        del step
        if tracker is not None:
            allowed = {id(s) for s in (allowed_retention() if allowed_retention else [])}
            leaked = [s for s in tracker.alive_before(t + 1) if id(s) not in allowed]
            if leaked:
                violations.append((t, len(leaked)))
        if evaluator is not None and t in points:
            records.append((t, evaluator(t)))
    return EngineResult(steps=stream.num_steps, audit_total=audit.total, eval_records=records,
                        retained_violations=violations)


def budget_normalized_pair(simcs_budget: int, ratio: float) -> tuple[int, int]:
    """(SimCS budget, baseline budget) with matched forward/backward sample counts."""
    if simcs_budget < 1:
        raise ConfigurationError("budget must be >= 1")
    if ratio < 0:
        raise ConfigurationError("ratio must be >= 0")
    normalized = simcs_budget * (1 + ratio)
    if abs(normalized - round(normalized)) > 1e-9:
        raise ConfigurationError(f"N*(1+ratio) = {normalized} is not an integer budget")
    return simcs_budget, int(round(normalized))
