"""Continual-learning strategies: NT, EWC, MAS, LwF, ER and the SimCS wrapper.

Every learner owns its parameters and routes each parameter update through
the engine's :class:`~odics.stream.UpdateAudit`, so the per-batch budget is
enforced from outside the learner.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from odics import model as M
from odics.domains import DomainSpec, LabeledSample, generate_sample, stack_samples
from odics.errors import ConfigurationError
from odics.labels import LabelMap
from odics.model import DataTerm, LogitTerm, ModelConfig, ParamTerm
from odics.tensor import ParamSet, log_softmax, sgd_step

log = logging.getLogger(__name__)

DEFAULT_LAMBDA = {"mas": 1.0, "ewc": 10.0, "lwf": 50.0}
LAMBDA_SWEEP = (1.0, 10.0, 50.0)
RATIO_SWEEP = (0.25, 0.5, 1.0, 2.0, 4.0, 5.0, 8.0, 10.0)
RATIO_SWEEP_PROSE = (0.25, 0.5, 1.0, 2.0, 4.0, 5.0, 10.0)


class Learner:
    """Naive training: ``budget`` SGD steps on the revealed batch."""

    name = "nt"
    needs_boundaries = False

    def __init__(self, params: ParamSet, lr: float, config: ModelConfig | None = None):
        self.params = params
        self.lr = lr
        self.config = config or ModelConfig()
        self.audit = None
        self.loss_history: list[float] = []
        self.record_losses = False

    def attach_audit(self, audit) -> None:
        self.audit = audit

    # hooks -------------------------------------------------------------

    def begin_batch(self, images, masks, boundary) -> None:
        """Called once per revealed batch before the training iterations."""

    def iteration_terms(self, images, masks, iteration: int) -> list:
        return []

    def end_batch(self, batch: Sequence[LabeledSample], images, masks) -> None:
        """Called after the training iterations."""

    # driver ------------------------------------------------------------

    def on_batch(self, batch: Sequence[LabeledSample], budget: int, boundary: bool | None = None,
                 extra_terms: Callable[[int, int], list] | None = None) -> None:
        if budget < 1:
            raise ConfigurationError("budget N must be >= 1")
        images, masks = stack_samples(batch, self.config.dtype)
        self.begin_batch(images, masks, boundary)
        for it in range(budget):
            terms = self.iteration_terms(images, masks, it)
            if extra_terms is not None:
                terms = terms + extra_terms(it, len(batch))
            loss, grads = M.loss_and_grads(self.params, images, masks, terms)
            if self.record_losses:
                self.loss_history.append(loss)
            self.update(grads)
        self.end_batch(batch, images, masks)

    def update(self, grads: ParamSet) -> None:
        if self.audit is not None:
            self.audit.record()
        sgd_step(self.params, grads, self.lr)


NTLearner = Learner


def nt_on_batch(params, batch, budget, lr, config=None) -> None:
    Learner(params, lr, config).on_batch(batch, budget)


# ---------------------------------------------------------------------------
# parameter-importance regularizers


@dataclass
class AnchorState:
    """Anchor parameters plus per-parameter importance; ``lam`` is the strength."""

    lam: float
    anchor: M.ModelSnapshot | None = None
    importance: ParamSet | None = None

    @property
    def active(self) -> bool:
        return self.anchor is not None and self.lam != 0


EWCState = AnchorState
MASState = AnchorState


def data_grad(params: ParamSet, images, masks) -> ParamSet:
    return M.loss_and_grads(params, images, masks)[1]


def fisher_diagonal(params: ParamSet, batches, grad_fn=data_grad) -> ParamSet:
    """Mean over batches of squared data-loss gradients (ground-truth labels)."""
    acc = params.zeros_like()
    if not batches:
        log.warning("EWC consolidation with no batches; Fisher set to zero")
        return acc
    for images, masks in batches:
        g = grad_fn(params, images, masks)
        for k in acc:
            acc[k] += g[k] ** 2
    for k in acc:
        acc[k] /= len(batches)
    return acc


def output_norm_grad(params: ParamSet, images, masks=None) -> ParamSet:
    """Gradient of the mean over pixels of the squared L2 norm of the logit vector."""
    cache: list = []
    logits = M.forward(params, images, cache)
    pixels = logits.shape[0] * logits.shape[2] * logits.shape[3]
    return M.backward(params, cache, 2.0 * logits / pixels)


def output_norm(params: ParamSet, images) -> float:
    logits = M.forward(params, images)
    pixels = logits.shape[0] * logits.shape[2] * logits.shape[3]
    return float((logits ** 2).sum() / pixels)


def mas_importance(params: ParamSet, batches, grad_fn=output_norm_grad) -> ParamSet:
    """Mean over batches of |d(output norm)/d theta|."""
    acc = params.zeros_like()
    if not batches:
        log.warning("MAS consolidation with no batches; importance set to zero")
        return acc
    for images, masks in batches:
        g = grad_fn(params, images, masks)
        for k in acc:
            acc[k] += np.abs(g[k])
    for k in acc:
        acc[k] /= len(batches)
    return acc


def consolidate_ewc(state: AnchorState, params: ParamSet, recent_batches, grad_fn=data_grad) -> None:
    state.anchor = M.snapshot(params)
    state.importance = fisher_diagonal(params, recent_batches, grad_fn)


def consolidate_mas(state: AnchorState, params: ParamSet, recent_batches, grad_fn=output_norm_grad) -> None:
    state.anchor = M.snapshot(params)
    state.importance = mas_importance(params, recent_batches, grad_fn)


def _quadratic_penalty(params: ParamSet, state: AnchorState, scale: float):
    """``scale * sum F (theta - theta*)^2`` and its gradient."""
    value = 0.0
    grads = ParamSet()
    anchor = state.anchor.params
    for k, p in params.items():
        diff = p - anchor[k]
        value += float(np.sum(state.importance[k] * diff ** 2))
        grads[k] = 2.0 * scale * state.importance[k] * diff
    return scale * value, grads


def ewc_penalty(params: ParamSet, state: AnchorState) -> tuple[float, ParamSet]:
    """``(lam/2) * sum F (theta - theta*)^2``."""
    if not state.active:
        return 0.0, params.zeros_like()
    return _quadratic_penalty(params, state, state.lam / 2.0)


def mas_penalty(params: ParamSet, state: AnchorState) -> tuple[float, ParamSet]:
    """``lam * sum Omega (theta - theta*)^2``."""
    if not state.active:
        return 0.0, params.zeros_like()
    return _quadratic_penalty(params, state, state.lam)


class _AnchoredLearner(Learner):
    needs_boundaries = True
    consolidation_batches = 25

    def __init__(self, params, lr, config=None, lam: float | None = None, consolidation_batches: int = 25):
        super().__init__(params, lr, config)
        self.state = AnchorState(lam=DEFAULT_LAMBDA[self.name] if lam is None else lam)
        self.consolidation_batches = consolidation_batches
        # transient window of recent real batches, only used to estimate importances
        self._recent: deque = deque(maxlen=consolidation_batches)

    def consolidate(self) -> None:
        raise NotImplementedError

    def begin_batch(self, images, masks, boundary) -> None:
        if boundary and self._recent:
            self.consolidate()
            self._recent.clear()

    def end_batch(self, batch, images, masks) -> None:
        self._recent.append((images, masks))


class EWCLearner(_AnchoredLearner):
    name = "ewc"

    def consolidate(self) -> None:
        consolidate_ewc(self.state, self.params, list(self._recent))

    def iteration_terms(self, images, masks, iteration):
        if not self.state.active:
            return []
        return [ParamTerm(lambda p: ewc_penalty(p, self.state), name="ewc")]


class MASLearner(_AnchoredLearner):
    name = "mas"

    def consolidate(self) -> None:
        consolidate_mas(self.state, self.params, list(self._recent))

    def iteration_terms(self, images, masks, iteration):
        if not self.state.active:
            return []
        return [ParamTerm(lambda p: mas_penalty(p, self.state), name="mas")]


# ---------------------------------------------------------------------------
# distillation


def lwf_term(student_logits, teacher_logits, temperature: float, lam: float, valid_mask=None):
    """``lam * T^2 * mean_valid KL(softmax(teacher/T) || softmax(student/T))`` and d/d student."""
    if student_logits.shape != teacher_logits.shape:
        raise ConfigurationError("student and teacher logits must have the same shape")
    n, c, h, w = student_logits.shape
    valid = np.ones((n, h, w), dtype=bool) if valid_mask is None else np.asarray(valid_mask, dtype=bool)
    count = int(valid.sum())
    grad = np.zeros_like(student_logits)
    if count == 0 or lam == 0:
        return 0.0, grad
    log_pt = log_softmax(teacher_logits / temperature, axis=1)
    log_ps = log_softmax(student_logits / temperature, axis=1)
    pt = np.exp(log_pt)
    kl = (pt * (log_pt - log_ps)).sum(axis=1)
    value = lam * temperature ** 2 * float(kl[valid].sum()) / count
    grad[:] = (lam * temperature / count) * (np.exp(log_ps) - pt) * valid[:, None]
    return value, grad


@dataclass
class LwFState:
    lam: float
    temperature: float = 2.0
    teacher: M.ModelSnapshot | None = None


class LwFLearner(Learner):
    name = "lwf"
    needs_boundaries = True

    def __init__(self, params, lr, config=None, lam: float | None = None, temperature: float = 2.0):
        super().__init__(params, lr, config)
        self.state = LwFState(lam=DEFAULT_LAMBDA["lwf"] if lam is None else lam, temperature=temperature)
        self._seen_data = False
        self._teacher_logits = None

    def begin_batch(self, images, masks, boundary) -> None:
        if boundary and self._seen_data:
            self.state.teacher = M.snapshot(self.params, self.config)
        self._teacher_logits = None
        if self.state.teacher is not None and self.state.lam != 0:
            self._teacher_logits = M.forward(self.state.teacher.params, images)

    def iteration_terms(self, images, masks, iteration):
        if self._teacher_logits is None:
            return []
        teacher, st = self._teacher_logits, self.state
        valid = masks != M.IGNORE_INDEX
        return [LogitTerm(lambda logits: lwf_term(logits, teacher, st.temperature, st.lam, valid), name="lwf")]

    def end_batch(self, batch, images, masks) -> None:
        self._seen_data = True
        self._teacher_logits = None


# ---------------------------------------------------------------------------
# replay


class ReplayBuffer:
    """Bounded FIFO store: inserting into a full buffer evicts the oldest item."""

    def __init__(self, capacity: int = 800):
        if capacity < 0:
            raise ConfigurationError("buffer capacity must be >= 0")
        self.capacity = capacity
        self._items: deque = deque(maxlen=capacity) if capacity > 0 else deque(maxlen=0)
        self.inserted = 0

    def __len__(self) -> int:
        return len(self._items)

    def insert(self, item) -> None:
        self._items.append(item)
        self.inserted += 1

    def extend(self, items) -> None:
        for item in items:
            self.insert(item)

    def items(self) -> list:
        return list(self._items)

    def sample(self, k: int, rng: np.random.Generator) -> list:
        k = min(k, len(self._items))
        if k == 0:
            return []
        idx = rng.choice(len(self._items), size=k, replace=False)
        return [self._items[i] for i in idx]


class ERLearner(Learner):
    name = "er"

    def __init__(self, params, lr, config=None, capacity: int = 800, seed: int = 0):
        super().__init__(params, lr, config)
        self.buffer = ReplayBuffer(capacity)
        self.rng = np.random.default_rng([seed, 31337])

    def iteration_terms(self, images, masks, iteration):
        picked = self.buffer.sample(len(images), self.rng)
        if not picked:
            return []
        r_images, r_masks = stack_samples(picked, self.config.dtype)
        return [DataTerm(r_images, r_masks, name="replay")]

    def end_batch(self, batch, images, masks) -> None:
        self.buffer.extend(batch)

    def retained_samples(self) -> list:
        return self.buffer.items()


def er_on_batch(params, batch, buffer: ReplayBuffer, budget, lr, config=None, rng=None) -> None:
    learner = ERLearner(params, lr, config, capacity=buffer.capacity)
    learner.buffer = buffer
    if rng is not None:
        learner.rng = rng
    learner.on_batch(batch, budget)


# ---------------------------------------------------------------------------
# simulation


@dataclass
class SimCSConfig:
    sim_domain: DomainSpec
    label_map: LabelMap
    ratio: float = 1.0
    sim_seed: int = 0

    def __post_init__(self):
        if self.ratio <= 0:
            raise ConfigurationError("sim-real ratio must be > 0")
        if self.label_map.source_space != self.sim_domain.label_space:
            raise ConfigurationError("label map source space does not match the simulator label space")

    def sim_batch_size(self, real_batch_size: int) -> int:
        return max(1, int(round(self.ratio * real_batch_size)))


class SimSource:
    """Fresh simulated batches from a counter-based seed stream, relabeled to the target space."""

    def __init__(self, cfg: SimCSConfig, dtype: str = "float64"):
        self.cfg = cfg
        self.dtype = dtype
        self.counter = 0
        self.table = cfg.label_map.lookup_table()

    def next_batch(self, size: int) -> tuple[np.ndarray, np.ndarray]:
        seeds = [self.cfg.sim_seed * 1_000_000_007 + self.counter + i for i in range(size)]
        self.counter += size
        samples = [generate_sample(self.cfg.sim_domain, s) for s in seeds]
        images, masks = stack_samples(samples, self.dtype)
        return images, self.table[masks]


class SimCSLearner:
    """Adds the simulated-data loss to every training iteration of ``base``."""

    def __init__(self, base: Learner, cfg: SimCSConfig):
        self.base = base
        self.cfg = cfg
        self.source = SimSource(cfg, base.config.dtype)
        self.name = f"{base.name}+sim"

    @property
    def needs_boundaries(self) -> bool:
        return self.base.needs_boundaries

    @property
    def params(self) -> ParamSet:
        return self.base.params

    def attach_audit(self, audit) -> None:
        self.base.attach_audit(audit)

    def retained_samples(self) -> list:
        fn = getattr(self.base, "retained_samples", None)
        return fn() if fn else []

    def _sim_terms(self, iteration: int, real_batch_size: int) -> list:
        size = self.cfg.sim_batch_size(real_batch_size)
        images, masks = self.source.next_batch(size)
        # both losses are sums over images, normalised by the real batch size
        return [DataTerm(images, masks, weight=size / real_batch_size, name="sim")]

    def on_batch(self, batch, budget, boundary=None) -> None:
        self.base.on_batch(batch, budget, boundary, extra_terms=self._sim_terms)

    def __getattr__(self, item):
        return getattr(self.base, item)


def simcs_wrap(base: Learner, cfg: SimCSConfig) -> SimCSLearner:
    return SimCSLearner(base, cfg)


def make_sim_dataset(cfg: SimCSConfig, num_images: int, seed_offset: int = 0, dtype: str = "float64"):
    source = SimSource(cfg, dtype)
    source.counter = seed_offset
    return source.next_batch(num_images)


def train_supervised(params: ParamSet, images, masks, epochs: int, lr: float, batch_size: int = 8,
                     seed: int = 0) -> list[float]:
    """Shuffled multi-epoch minibatch SGD; returns per-epoch mean training loss."""
    rng = np.random.default_rng([seed, 2718])
    history = []
    n = len(images)
    for _ in range(epochs):
        order = rng.permutation(n)
        losses = []
        for s in range(0, n, batch_size):
            idx = order[s:s + batch_size]
            loss, grads = M.loss_and_grads(params, images[idx], masks[idx])
            sgd_step(params, grads, lr)
            losses.append(loss)
        history.append(float(np.mean(losses)))
    return history


def pretrain_on_sim(params: ParamSet, cfg: SimCSConfig, num_images: int, epochs: int, lr: float,
                    batch_size: int = 8, seed: int = 0, dtype: str | None = None) -> list[float]:
    """Supervised training on a fixed generated + relabeled simulator dataset."""
    if epochs == 0:
        return []
    dtype = dtype or next(iter(params.values())).dtype.name
    # seeds far from the on-the-fly SimCS stream so pretraining data is disjoint
    images, masks = make_sim_dataset(cfg, num_images, seed_offset=500_000_000, dtype=dtype)
    return train_supervised(params, images, masks, epochs, lr, batch_size, seed)


def supervised_upper_bound(domains: Sequence[DomainSpec], train_seeds: Sequence, config: ModelConfig,
                           epochs: int = 30, lr: float = 0.05, batch_size: int = 8, seed: int = 0) -> ParamSet:
    """Offline training on the union of all domains' training sets."""
    samples = [generate_sample(d, int(s)) for d, seeds in zip(domains, train_seeds) for s in seeds]
    images, masks = stack_samples(samples, config.dtype)
    params = M.init_model(config)
    train_supervised(params, images, masks, epochs, lr, batch_size, seed)
    return params


# ---------------------------------------------------------------------------
# factory


STRATEGIES = ("nt", "ewc", "mas", "lwf", "er")


def make_learner(strategy: str, params: ParamSet, lr: float, config: ModelConfig, *, lam=None,
                 temperature: float = 2.0, capacity: int = 800, consolidation_batches: int = 25,
                 seed: int = 0, sim: SimCSConfig | None = None):
    strategy = strategy.lower()
    if strategy == "nt":
        learner = Learner(params, lr, config)
    elif strategy == "ewc":
        learner = EWCLearner(params, lr, config, lam=lam, consolidation_batches=consolidation_batches)
    elif strategy == "mas":
        learner = MASLearner(params, lr, config, lam=lam, consolidation_batches=consolidation_batches)
    elif strategy == "lwf":
        learner = LwFLearner(params, lr, config, lam=lam, temperature=temperature)
    elif strategy == "er":
        learner = ERLearner(params, lr, config, capacity=capacity, seed=seed)
    else:
        raise ConfigurationError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    return simcs_wrap(learner, sim) if sim is not None else learner
