import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odics import model as M
from odics.errors import ConfigurationError
from odics.model import DataTerm, LogitTerm, ModelConfig, ParamTerm
from odics.tensor import ParamSet, distance, finite_diff_check, sgd_step


def test_init_is_deterministic():
    a = M.init_model(ModelConfig(init_seed=3))
    b = M.init_model(ModelConfig(init_seed=3))
    assert list(a) == list(b)
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])


def test_init_differs_across_seeds():
    a, b = M.init_model(ModelConfig(init_seed=1)), M.init_model(ModelConfig(init_seed=2))
    assert any((a[k] != b[k]).any() for k in a)


def test_parameter_count_closed_form():
    cfg = ModelConfig(num_classes=8, hidden_channels=16, num_layers=3)
    # k^2 * Cin * Cout + Cout per layer: 3->16, 16->16, 16->8
    expected = (9 * 3 * 16 + 16) + (9 * 16 * 16 + 16) + (9 * 16 * 8 + 8)
    assert M.init_model(cfg).num_values() == expected == 3928


def test_biases_start_at_zero():
    p = M.init_model(ModelConfig())
    assert all(not p[k].any() for k in p if k.endswith("bias"))


def test_invalid_config():
    with pytest.raises(ConfigurationError):
        ModelConfig(num_classes=1)
    with pytest.raises(ConfigurationError):
        ModelConfig(kernel_size=4)


def test_zero_weight_model_outputs_final_bias():
    cfg = ModelConfig(num_classes=5)
    p = M.init_model(cfg)
    for k in p:
        p[k][:] = 0
    p["conv2.bias"][:] = [0.1, -2.0, 3.0, 0.0, 1.5]
    logits = M.forward(p, np.random.default_rng(0).random((2, 3, 6, 6)))
    np.testing.assert_array_equal(logits, np.broadcast_to(p["conv2.bias"][None, :, None, None], logits.shape))


def test_identical_images_identical_logits():
    p = M.init_model(ModelConfig())
    img = np.random.default_rng(1).random((1, 3, 8, 8))
    out = M.forward(p, np.concatenate([img, img]))
    np.testing.assert_array_equal(out[0], out[1])


def straight_line_forward(p, images):
    """Independent 3-layer pipeline written with explicit loops over kernel offsets."""
    def conv(x, w, b):
        n, c, h, wd = x.shape
        o, _, k, _ = w.shape
        pad = k // 2
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        out = np.zeros((n, o, h, wd)) + b[None, :, None, None]
        for di in range(k):
            for dj in range(k):
                out += np.einsum("nchw,oc->nohw", xp[:, :, di:di + h, dj:dj + wd], w[:, :, di, dj])
        return out

    h = np.maximum(conv(images - 0.5, p["conv0.weight"], p["conv0.bias"]), 0)
    h = np.maximum(conv(h, p["conv1.weight"], p["conv1.bias"]), 0)
    return conv(h, p["conv2.weight"], p["conv2.bias"])


def test_forward_matches_straight_line_oracle():
    p = M.init_model(ModelConfig(init_seed=5))
    for k in p:
        if k.endswith("bias"):
            p[k][:] = np.random.default_rng(6).standard_normal(p[k].shape)
    images = np.random.default_rng(7).random((2, 3, 9, 7))
    np.testing.assert_allclose(M.forward(p, images), straight_line_forward(p, images), atol=1e-10)


def test_forward_shape_error():
    with pytest.raises(ConfigurationError):
        M.forward(M.init_model(ModelConfig()), np.zeros((3, 8, 8)))
    with pytest.raises(ConfigurationError):
        M.forward(M.init_model(ModelConfig()), np.zeros((1, 4, 8, 8)))


def test_predict_unique_maxima():
    logits = np.zeros((1, 3, 1, 2))
    logits[0, 2, 0, 0] = 1.0
    logits[0, 1, 0, 1] = 1.0
    np.testing.assert_array_equal(M.argmax_classes(logits), [[[2, 1]]])


def test_predict_ties_go_to_class_zero():
    assert not M.argmax_classes(np.ones((2, 4, 3, 3))).any()


def test_predict_matches_linear_scan():
    logits = np.random.default_rng(2).integers(0, 3, (2, 5, 4, 4)).astype(float)  # many ties
    scan = np.zeros((2, 4, 4), dtype=int)
    for n in range(2):
        for i in range(4):
            for j in range(4):
                best = 0
                for c in range(1, 5):
                    if logits[n, c, i, j] > logits[n, best, i, j]:
                        best = c
                scan[n, i, j] = best
    np.testing.assert_array_equal(M.argmax_classes(logits), scan)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_predict_invariant_to_per_pixel_shift(seed):
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((1, 6, 4, 4))
    shift = rng.standard_normal((1, 1, 4, 4)) * 10
    np.testing.assert_array_equal(M.argmax_classes(logits), M.argmax_classes(logits + shift))


def test_empty_terms_equal_plain_data_loss(tiny_model, small_batch_data):
    params, _ = tiny_model
    images, masks = small_batch_data
    loss, grads = M.loss_and_grads(params, images, masks)
    cache = []
    logits = M.forward(params, images, cache)
    from odics.tensor import masked_softmax_cross_entropy
    ref, d = masked_softmax_cross_entropy(logits, masks)
    assert loss == ref
    ref_grads = M.backward(params, cache, d)
    for k in grads:
        np.testing.assert_array_equal(grads[k], ref_grads[k])


def test_zero_penalty_leaves_grads_unchanged(tiny_model, small_batch_data):
    params, _ = tiny_model
    images, masks = small_batch_data
    _, g0 = M.loss_and_grads(params, images, masks)
    zero = ParamTerm(lambda p: (0.0, p.zeros_like()))
    _, g1 = M.loss_and_grads(params, images, masks, [zero])
    for k in g0:
        np.testing.assert_array_equal(g0[k], g1[k])


def test_full_model_loss_finite_differences(tiny_model, small_batch_data):
    params, _ = tiny_model
    images, masks = small_batch_data
    err = finite_diff_check(lambda p: M.loss_and_grads(p, images, masks), params, eps=1e-5, num_coords=150)
    assert err < 1e-4


def test_quadratic_anchor_term_finite_differences(tiny_model, small_batch_data):
    params, _ = tiny_model
    images, masks = small_batch_data
    rng = np.random.default_rng(11)
    anchor = ParamSet((k, v + 0.1 * rng.standard_normal(v.shape)) for k, v in params.items())
    lam = 0.7

    def penalty(p):
        value = lam * sum(float(((p[k] - anchor[k]) ** 2).sum()) for k in p)
        return value, ParamSet((k, 2 * lam * (p[k] - anchor[k])) for k in p)

    _, g_data = M.loss_and_grads(params, images, masks)
    _, g_all = M.loss_and_grads(params, images, masks, [ParamTerm(penalty)])
    for k in params:
        np.testing.assert_allclose(g_all[k] - g_data[k], 2 * lam * (params[k] - anchor[k]), atol=1e-12)
    err = finite_diff_check(lambda p: M.loss_and_grads(p, images, masks, [ParamTerm(penalty)]), params,
                            num_coords=150)
    assert err < 1e-4


def test_data_and_logit_terms_finite_differences(tiny_model, small_batch_data):
    params, _ = tiny_model
    images, masks = small_batch_data
    rng = np.random.default_rng(12)
    extra_img = rng.random((2, 3, 8, 8))
    extra_mask = rng.integers(0, params["conv2.bias"].size, (2, 8, 8))
    extra_mask[:, :3] = 255
    target = rng.standard_normal((2, params["conv2.bias"].size, 8, 8))

    def logit_pen(z):
        return 0.3 * float(((z - target) ** 2).mean()), 0.6 * (z - target) / z.size

    terms = [DataTerm(extra_img, extra_mask), LogitTerm(logit_pen)]
    err = finite_diff_check(lambda p: M.loss_and_grads(p, images, masks, terms), params, num_coords=150)
    assert err < 1e-4


def test_snapshot_is_immutable_and_detached(tiny_model, small_batch_data):
    params, _ = tiny_model
    images, masks = small_batch_data
    snap = M.snapshot(params)
    before = {k: v.copy() for k, v in snap.params.items()}
    _, g = M.loss_and_grads(params, images, masks)
    sgd_step(params, g, 0.1)
    for k in before:
        np.testing.assert_array_equal(snap.params[k], before[k])
    with pytest.raises(ValueError):
        snap.params["conv0.bias"][0] = 1.0
    assert distance(params, snap.params) > 0


def test_snapshot_of_snapshot(tiny_model):
    params, _ = tiny_model
    a = M.snapshot(params)
    b = M.snapshot(a)
    for k in params:
        np.testing.assert_array_equal(a.params[k], b.params[k])


def test_checkpoint_round_trip(tmp_path):
    cfg = ModelConfig(num_classes=7, init_seed=4)
    p = M.init_model(cfg)
    M.save_checkpoint(tmp_path / "m.npz", p, cfg)
    q, cfg2 = M.load_checkpoint(tmp_path / "m.npz")
    assert cfg2 == cfg and list(q) == list(p)
    for k in p:
        np.testing.assert_array_equal(p[k], q[k])


def test_checkpoint_round_trip_float32(tmp_path):
    cfg = ModelConfig(dtype="float32")
    p = M.init_model(cfg)
    M.save_checkpoint(tmp_path / "m.npz", p, cfg)
    q, _ = M.load_checkpoint(tmp_path / "m.npz")
    assert q["conv1.weight"].dtype == np.float32
    np.testing.assert_array_equal(p["conv1.weight"], q["conv1.weight"])
