"""Experiment configuration, multi-seed orchestration and run records."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from odics import __version__
from odics import model as M
from odics import strategies as S
from odics.domains import DomainSpec, generate_sample, real_domain_presets, sim_domain_presets, stack_samples
from odics.errors import ConfigurationError
from odics.labels import builtin_maps, load_map
from odics.metrics import ConfusionMatrix, TransferMatrix, accumulate, miou, transfer_stats
from odics.stream import LifetimeTracker, Stream, StreamConfig, budget_normalized_pair, run

FULL_SCALE_LR = 7e-3
TOY_LR = 0.05


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    stream: StreamConfig = field(default_factory=StreamConfig)
    model: M.ModelConfig = field(default_factory=M.ModelConfig)
    strategy: str = "nt"
    lam: float | None = None
    temperature: float = 2.0
    buffer_size: int = 800
    consolidation_batches: int = 25
    sim: str | None = None  # "SimA" | "SimB"
    sim_ratio: float = 1.0
    label_map_path: str | None = None
    lr: float = TOY_LR
    seeds: tuple = (0,)
    pretrain_sim: bool = False
    pretrain_epochs: int = 30
    pretrain_images: int | None = None  # default: total real training images
    pretrain_sim_domain: str | None = None  # defaults to ``sim`` or SimB
    supervised_baseline: bool = False
    supervised_epochs: int = 30
    budget_normalized: bool = False

    def __post_init__(self):
        if not self.seeds:
            raise ConfigurationError("seeds must be non-empty")
        if self.strategy not in S.STRATEGIES:
            raise ConfigurationError(f"unknown strategy {self.strategy!r}")
        names = {d.name for d in real_domain_presets()}
        missing = [n for n in self.stream.domain_order if n not in names]
        if missing:
            raise ConfigurationError(f"unknown domain presets {missing}")
        sims = {d.name for d in sim_domain_presets()}
        for s in (self.sim, self.pretrain_sim_domain):
            if s is not None and s not in sims:
                raise ConfigurationError(f"unknown simulator preset {s!r}; expected one of {sorted(sims)}")
        if self.sim_ratio <= 0:
            raise ConfigurationError("sim_ratio must be > 0")
        if self.lr <= 0:
            raise ConfigurationError("lr must be > 0")

    def effective_budget(self) -> int:
        if self.budget_normalized and self.sim is None:
            return budget_normalized_pair(self.stream.budget, self.sim_ratio)[1]
        return self.stream.budget

    def echo(self) -> dict:
        d = asdict(self)
        d["stream"]["domain_order"] = list(self.stream.domain_order)
        d["stream"]["train_sizes"] = list(self.stream.train_sizes)
        d["seeds"] = list(self.seeds)
        return d


def sim_config(name: str, ratio: float, seed: int, label_map_path: str | None = None) -> S.SimCSConfig:
    spec = {d.name: d for d in sim_domain_presets()}[name]
    lmap = load_map(label_map_path, spec.label_space) if label_map_path else builtin_maps()[name]
    return S.SimCSConfig(sim_domain=spec, label_map=lmap, ratio=ratio, sim_seed=seed)


@lru_cache(maxsize=64)
def _test_arrays(spec: DomainSpec, start: int, stop: int, dtype: str):
    samples = [generate_sample(spec, s) for s in range(start, stop)]
    images, masks = stack_samples(samples, dtype)
    images.setflags(write=False)
    masks.setflags(write=False)
    return images, masks


def test_set(spec: DomainSpec, seeds: range, dtype: str = "float64"):
    return _test_arrays(spec, seeds.start, seeds.stop, dtype)


def confusion_on(params, images, masks, num_classes: int, chunk: int = 64) -> ConfusionMatrix:
    cm = ConfusionMatrix(num_classes)
    for s in range(0, len(images), chunk):
        accumulate(cm, M.predict(params, images[s:s + chunk]), masks[s:s + chunk])
    return cm


def evaluate_domain(snapshot, test_images, test_masks, num_classes: int | None = None) -> float:
    """mIoU of one accumulated confusion matrix over the whole test set."""
    params = snapshot.params if isinstance(snapshot, M.ModelSnapshot) else snapshot
    if num_classes is None:
        num_classes = params[f"conv{M.num_layers(params) - 1}.bias"].shape[0]
    return miou(confusion_on(params, test_images, test_masks, num_classes))


def _seed_stream(cfg: StreamConfig, seed: int) -> StreamConfig:
    return replace(cfg, shuffle_seed=seed)


def run_seed(config: ExperimentConfig, seed: int, track_lifetimes: bool = False) -> dict:
    """One continual run; returns the per-seed portion of a RunRecord."""
    model_cfg = replace(config.model, init_seed=seed)
    stream_cfg = replace(_seed_stream(config.stream, seed), budget=config.effective_budget())
    domains = real_domain_presets()
    stream = Stream(stream_cfg, domains)
    tests = [test_set(d, stream.test_seeds(i), model_cfg.dtype) for i, d in enumerate(stream.domains)]
    params = M.init_model(model_cfg)
    out: dict = {"seed": seed}
    if config.pretrain_sim:
        sim_name = config.pretrain_sim_domain or config.sim or "SimB"
        pcfg = sim_config(sim_name, config.sim_ratio, seed, config.label_map_path)
        n_img = config.pretrain_images or sum(stream_cfg.train_sizes)
        hist = S.pretrain_on_sim(params, pcfg, n_img, config.pretrain_epochs, config.lr, stream_cfg.batch_size, seed)
        out["pretrain_loss"] = hist
    sim = sim_config(config.sim, config.sim_ratio, seed, config.label_map_path) if config.sim else None
    learner = S.make_learner(config.strategy, params, config.lr, model_cfg, lam=config.lam,
                             temperature=config.temperature, capacity=config.buffer_size,
                             consolidation_batches=config.consolidation_batches, seed=seed, sim=sim)

    def evaluator(t):
        snap = M.snapshot(learner.params, model_cfg)
        return [evaluate_domain(snap, *tests[j], model_cfg.num_classes) for j in range(len(tests))]

    tracker = LifetimeTracker() if track_lifetimes else None
    retained = getattr(learner, "retained_samples", None)
    result = run(stream, learner, evaluator, tracker=tracker, allowed_retention=retained)
    names = list(stream_cfg.domain_order)
    out["steps"] = result.steps
    out["budget"] = stream_cfg.budget
    out["update_audit"] = result.audit_total
    out["eval"] = [{"step": t, "miou": dict(zip(names, row))} for t, row in result.eval_records]
    final = result.eval_records[-1][1]
    out["final_miou"] = dict(zip(names, final))
    out["mean_miou"] = float(np.mean(final))
    if stream_cfg.mode == "sequential":
        R = TransferMatrix.empty(names)
        for i, (_, row) in enumerate(result.eval_records):
            R.set_row(i, row)
        out["transfer_matrix"] = R.to_list()
        out["transfer"] = transfer_stats(R)
    if track_lifetimes:
        out["retained_violations"] = result.retained_violations
    if config.supervised_baseline:
        train_seeds = [stream.splits[i][0] for i in range(len(stream.domains))]
        ub = S.supervised_upper_bound(stream.domains, train_seeds, model_cfg, config.supervised_epochs,
                                      config.lr, stream_cfg.batch_size, seed)
        ub_final = [evaluate_domain(ub, *tests[j], model_cfg.num_classes) for j in range(len(tests))]
        out["supervised_miou"] = dict(zip(names, ub_final))
        out["supervised_mean_miou"] = float(np.mean(ub_final))
    return out


def summarize(runs: Sequence[dict], names: Sequence[str]) -> dict:
    finals = np.array([[r["final_miou"][n] for n in names] for r in runs])
    means = np.array([r["mean_miou"] for r in runs])
    summary = {
        "per_domain_mean": dict(zip(names, finals.mean(axis=0).tolist())),
        "per_domain_std": dict(zip(names, finals.std(axis=0).tolist())),
        "mean_miou": float(means.mean()),
        "mean_miou_std": float(means.std()),
        "update_audit_total": int(sum(r["update_audit"] for r in runs)),
    }
    if "transfer_matrix" in runs[0]:
        summary["transfer_matrix_mean"] = np.mean([r["transfer_matrix"] for r in runs], axis=0).tolist()
    if "supervised_mean_miou" in runs[0]:
        summary["supervised_mean_miou"] = float(np.mean([r["supervised_mean_miou"] for r in runs]))
    return summary


def run_experiment(config: ExperimentConfig, track_lifetimes: bool = False) -> tuple[dict, dict]:
    """Returns ``(record, timing)``; the record is deterministic, timing is kept separate."""
    timing = {"per_seed_seconds": []}
    runs = []
    for seed in config.seeds:
        t0 = time.perf_counter()
        runs.append(run_seed(config, seed, track_lifetimes))
        timing["per_seed_seconds"].append(time.perf_counter() - t0)
    names = list(config.stream.domain_order)
    record = {
        "artifact_version": __version__,
        "config": config.echo(),
        "seeds": list(config.seeds),
        "runs": runs,
        "summary": summarize(runs, names),
    }
    timing["total_seconds"] = float(sum(timing["per_seed_seconds"]))
    return record, timing


def record_to_json(record: dict) -> str:
    return json.dumps(record, indent=2, sort_keys=True, allow_nan=False) + "\n"
