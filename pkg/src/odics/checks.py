"""Fast invariant suite behind ``odics check``; independent of the pytest tests."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from odics import model as M
from odics import strategies as S
from odics.domains import generate_sample, preset_by_name, real_domain_presets, sim_domain_presets, stack_samples
from odics.errors import ProtocolViolation
from odics.labels import builtin_maps, overlap_count
from odics.metrics import ConfusionMatrix, accumulate, miou, transfer_stats
from odics.stream import LifetimeTracker, Stream, StreamConfig, run
from odics.tensor import ParamSet, conv2d, finite_diff_check, masked_softmax_cross_entropy


def _naive_conv(x, k, b):
    n, c, h, w = x.shape
    o, _, kk, _ = k.shape
    p = kk // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    out = np.empty((n, o, h, w))
    for i in range(h):
        for j in range(w):
            patch = xp[:, :, i:i + kk, j:j + kk]
            out[:, :, i, j] = np.tensordot(patch, k, axes=([1, 2, 3], [1, 2, 3])) + b
    return out


def check_conv() -> str:
    rng = np.random.default_rng(0)
    x, k, b = rng.standard_normal((2, 3, 6, 5)), rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4)
    err = float(np.abs(conv2d(x, k, b) - _naive_conv(x, k, b)).max())
    assert err <= 1e-12, err
    return f"max abs err {err:.1e}"


def check_uniform_ce() -> str:
    loss, _ = masked_softmax_cross_entropy(np.zeros((1, 19, 4, 4)), np.zeros((1, 4, 4), dtype=int))
    assert abs(loss - math.log(19)) < 1e-9
    return f"{loss:.6f} = ln 19"


def check_gradients() -> str:
    cfg = M.ModelConfig(hidden_channels=4, init_seed=7)
    params = M.init_model(cfg)
    # nonzero biases move pre-activations off the ReLU kink at the evaluation point
    for k in params:
        if k.endswith("bias"):
            params[k][:] = 0.05 * np.random.default_rng(8).standard_normal(params[k].shape)
    images, masks = stack_samples([generate_sample(preset_by_name("cs"), s) for s in range(2)])
    state = S.AnchorState(lam=2.0)
    moved = ParamSet((k, v + 0.05) for k, v in params.items())
    S.consolidate_ewc(state, moved, [(images, masks)])
    teacher = M.forward(moved, images)
    terms = {
        "nt": [],
        "ewc": [M.ParamTerm(lambda p: S.ewc_penalty(p, state))],
        "mas": [M.ParamTerm(lambda p: S.mas_penalty(p, state))],
        "lwf": [M.LogitTerm(lambda z: S.lwf_term(z, teacher, 2.0, 1.0, masks != 255))],
        "er": [M.DataTerm(*stack_samples([generate_sample(preset_by_name("idd"), 0)]))],
    }
    worst = 0.0
    for name, extra in terms.items():
        err = finite_diff_check(lambda p: M.loss_and_grads(p, images, masks, extra), params, num_coords=40)
        assert err < 1e-4, (name, err)
        worst = max(worst, err)
    return f"worst relative error {worst:.1e}"


def check_anchor_zero() -> str:
    params = M.init_model(M.ModelConfig(hidden_channels=4))
    images, masks = stack_samples([generate_sample(preset_by_name("cs"), 0)])
    state = S.AnchorState(lam=10.0)
    S.consolidate_ewc(state, params, [(images, masks)])
    assert S.ewc_penalty(params, state)[0] == 0.0 and S.mas_penalty(params, state)[0] == 0.0
    z = np.random.default_rng(0).standard_normal((1, 19, 4, 4))
    assert abs(S.lwf_term(z, z, 2.0, 50.0)[0]) < 1e-12
    return "ewc, mas, lwf are zero at their anchors"


class _Greedy:
    needs_boundaries = False

    def attach_audit(self, audit):
        self.audit = audit

    def on_batch(self, batch, budget, boundary=None):
        for _ in range(budget + 1):
            self.audit.record()


def check_protocol() -> str:
    cfg = M.ModelConfig(hidden_channels=4, dtype="float32")
    stream = Stream(StreamConfig(train_sizes=(16, 8, 8, 8), budget=2), real_domain_presets())
    learner = S.make_learner("lwf", M.init_model(cfg), 0.05, cfg)
    result = run(stream, learner, tracker=LifetimeTracker())
    assert result.audit_total == stream.num_steps * 2 and not result.retained_violations
    try:
        run(stream, _Greedy())
    except ProtocolViolation:
        pass
    else:
        raise AssertionError("extra update not caught")
    buf = S.ReplayBuffer(2)
    buf.extend("abc")
    assert buf.items() == ["b", "c"]
    return f"audit {result.audit_total} = {stream.num_steps} x 2, no retained samples, FIFO exact"


def check_label_maps() -> str:
    maps = builtin_maps()
    counts = (overlap_count(maps["SimA"]), overlap_count(maps["SimB"]))
    assert counts == (11, 15), counts
    assert [len(m.entries) for m in maps.values()] == [len(s.label_space) for s in sim_domain_presets()]
    return f"overlap {counts[0]} and {counts[1]} of 19"


def check_metrics() -> str:
    cm = ConfusionMatrix(2)
    accumulate(cm, np.array([0, 1, 1, 1]), np.array([0, 0, 1, 1]))
    assert cm.counts.tolist() == [[1, 1], [0, 2]] and abs(miou(cm) - 7 / 12) < 1e-15
    st = transfer_stats([[0.5, 0.2], [0.4, 0.6]])
    assert abs(st["backward"][0] + 0.1) < 1e-15 and abs(st["forward"][1] - 0.4) < 1e-15
    return "mIoU 7/12, backward -0.1, forward +0.4"


CHECKS: dict[str, Callable[[], str]] = {
    "conv-oracle": check_conv,
    "uniform-ce": check_uniform_ce,
    "gradients": check_gradients,
    "anchor-zero": check_anchor_zero,
    "protocol": check_protocol,
    "label-maps": check_label_maps,
    "metrics": check_metrics,
}


def run_checks(report: Callable[[str], None] = print) -> list[tuple[str, Exception]]:
    """Run every check, reporting one line each; returns the failures."""
    failures = []
    for name, fn in CHECKS.items():
        try:
            detail = fn()
            report(f"PASS {name}: {detail}")
        except Exception as exc:  # noqa: BLE001 - each failure is reported, the suite continues
            failures.append((name, exc))
            report(f"FAIL {name}: {type(exc).__name__}: {exc}")
    return failures
