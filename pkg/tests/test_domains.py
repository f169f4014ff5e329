from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odics import model as M
from odics import strategies as S
from odics.domains import (CANVAS, SIM_A_CLASSES, SIM_B_CLASSES, TARGET_CLASSES, ShapePrior,
                           generate_sample, make_split, preset_by_name, real_domain_presets,
                           sim_domain_presets, stack_samples, with_weights)
from odics.errors import ConfigurationError
from odics.experiment import evaluate_domain


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["cs", "idd", "bdd", "acdc", "SimA", "SimB"]))
def test_generation_is_deterministic_and_valid(seed, name):
    spec = preset_by_name(name)
    a, b = generate_sample(spec, seed), generate_sample(spec, seed)
    np.testing.assert_array_equal(a.image, b.image)
    np.testing.assert_array_equal(a.mask, b.mask)
    assert a.image.shape == (3, CANVAS, CANVAS) and a.mask.shape == (CANVAS, CANVAS)
    assert a.image.min() >= 0 and a.image.max() <= 1
    ids = np.unique(a.mask)
    assert ((ids < len(spec.label_space)) | (ids == 255)).all()


def test_different_seeds_differ():
    spec = preset_by_name("cs")
    assert not np.array_equal(generate_sample(spec, 1).image, generate_sample(spec, 2).image)


def test_single_positive_weight_only_that_class_in_foreground():
    cs = preset_by_name("cs")
    car = TARGET_CLASSES.index("car")
    w = [0.0] * 19
    w[car] = 1.0
    spec = with_weights(cs, w)
    layer_ids = {TARGET_CLASSES.index(n) for n in ("road", "sidewalk", "building", "vegetation", "terrain", "sky")}
    seen = set()
    for s in range(50):
        seen |= set(np.unique(generate_sample(spec, s).mask).tolist())
    assert seen - layer_ids == {car}


def test_weight_vector_validation():
    cs = preset_by_name("cs")
    with pytest.raises(ConfigurationError):
        replace(cs, class_frequency_weights=(0.0,) * 19, shape_priors=cs.shape_priors)
    with pytest.raises(ConfigurationError):
        replace(cs, class_frequency_weights=(1.0,) * 18)
    with pytest.raises(ConfigurationError):
        replace(cs, texture_noise_sigma=-0.1)


def test_pixel_frequency_rank_follows_weights():
    # identical priors for every foreground class so pixel counts track draw counts
    cs = preset_by_name("cs")
    fg = [TARGET_CLASSES.index(n) for n in ("car", "person", "pole", "bus", "train")]
    weights = [0.0] * 19
    for rank, cls in enumerate(fg):
        weights[cls] = 2.0 ** (len(fg) - rank)
    prior = ShapePrior("rect", (4, 6), (4, 6), (0.6, 1.0))
    spec = replace(with_weights(cs, weights), shape_priors={c: prior for c in fg})
    counts = np.zeros(19)
    for s in range(1000):
        counts += np.bincount(generate_sample(spec, s).mask.ravel(), minlength=256)[:19]
    order = sorted(fg, key=lambda c: -counts[c])
    assert order == fg


def test_real_presets_share_target_space():
    specs = real_domain_presets()
    assert [s.name for s in specs] == ["cs", "idd", "bdd", "acdc"]
    assert all(s.label_space.names == TARGET_CLASSES for s in specs)
    assert len({s.palette for s in specs}) == 4


def test_idd_is_vehicle_heavy():
    cs, idd = preset_by_name("cs"), preset_by_name("idd")
    vehicles = [TARGET_CLASSES.index(n) for n in ("car", "truck", "bus", "motorcycle")]

    def share(spec):
        w = np.asarray(spec.class_frequency_weights)
        return w[vehicles].sum() / w.sum()

    assert share(idd) > share(cs)


def test_acdc_has_weather():
    assert set(preset_by_name("acdc").weather) >= {"fog", "rain", "snow"}
    assert not preset_by_name("cs").weather


def test_sim_presets_have_own_label_spaces():
    a, b = sim_domain_presets()
    assert (a.name, b.name) == ("SimA", "SimB")
    assert len(a.label_space) == 23 and a.label_space.names == SIM_A_CLASSES
    assert len(b.label_space) == 31 and b.label_space.names == SIM_B_CLASSES
    assert a.palette_jitter > 0 and b.palette_jitter > 0


def test_split_is_disjoint_and_exact():
    train, test = make_split(preset_by_name("cs"), 1700, 425)
    assert len(train) == 1700 and len(test) == 425
    assert not set(train) & set(test)
    with pytest.raises(ConfigurationError):
        make_split(preset_by_name("cs"), 0, 10)


def test_stack_samples_dtype_and_empty():
    samples = [generate_sample(preset_by_name("cs"), s) for s in range(3)]
    images, masks = stack_samples(samples, "float32")
    assert images.dtype == np.float32 and images.shape == (3, 3, CANVAS, CANVAS)
    assert masks.shape == (3, CANVAS, CANVAS)
    assert stack_samples([])[0].shape[0] == 0


def test_shift_severity_first_vs_last_domain():
    """A model trained only on the first domain scores lower on the last domain."""
    cs, acdc = preset_by_name("cs"), preset_by_name("acdc")
    gaps = []
    for seed in range(5):
        cfg = M.ModelConfig(init_seed=seed, dtype="float32")
        params = M.init_model(cfg)
        images, masks = stack_samples([generate_sample(cs, s) for s in range(64)], "float32")
        S.train_supervised(params, images, masks, epochs=4, lr=0.1, batch_size=8, seed=seed)
        on_cs = evaluate_domain(params, *stack_samples([generate_sample(cs, s) for s in range(64, 96)], "float32"))
        on_acdc = evaluate_domain(params, *stack_samples([generate_sample(acdc, s) for s in range(64, 96)],
                                                         "float32"))
        gaps.append(on_cs - on_acdc)
    assert np.mean(gaps) > 0
