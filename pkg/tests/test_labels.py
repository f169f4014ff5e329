import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odics import model as M
from odics.domains import SIM_A_SPACE, SIM_B_SPACE, TARGET_SPACE, generate_sample, preset_by_name
from odics.errors import ConfigurationError, DataError
from odics.labels import LabelMap, apply_map, builtin_maps, load_map, overlap_count, parse_map

T = TARGET_SPACE.id_of


def mapped(space_name, cls):
    m = builtin_maps()[space_name]
    space = SIM_A_SPACE if space_name == "SimA" else SIM_B_SPACE
    return int(apply_map(m, np.array([[space.id_of(cls)]]))[0, 0])


def test_road_line_becomes_road():
    assert mapped("SimA", "Road Line") == T("road")


def test_water_is_dropped():
    assert mapped("SimA", "Water") == 255


def test_van_merges_into_car():
    assert mapped("SimB", "Van") == T("car") == mapped("SimB", "Car")


def test_pedestrian_becomes_person():
    assert mapped("SimA", "Pedestrian") == T("person")


def test_ambiguous_is_dropped():
    assert mapped("SimB", "Ambiguous") == 255


def test_overlap_counts():
    maps = builtin_maps()
    assert overlap_count(maps["SimA"]) == 11
    assert overlap_count(maps["SimB"]) == 15
    assert overlap_count(LabelMap.identity(TARGET_SPACE)) == 19
    assert overlap_count(maps["SimB"]) > overlap_count(maps["SimA"])


def test_every_row_present():
    maps = builtin_maps()
    assert len(maps["SimA"].entries) == 23
    assert len(maps["SimB"].entries) == 31


def test_unknown_source_id_is_data_error():
    with pytest.raises(DataError):
        apply_map(builtin_maps()["SimA"], np.array([[23]]))


def test_ignore_pixels_pass_through():
    assert apply_map(builtin_maps()["SimB"], np.array([[255]]))[0, 0] == 255


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_identity_map_is_idempotent(seed):
    mask = generate_sample(preset_by_name("cs"), seed).mask
    ident = LabelMap.identity(TARGET_SPACE)
    once = apply_map(ident, mask)
    np.testing.assert_array_equal(once, mask)
    np.testing.assert_array_equal(apply_map(ident, once), once)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_sim_masks_map_into_target_space(seed):
    for name, m in builtin_maps().items():
        out = apply_map(m, generate_sample(preset_by_name(name), seed).mask)
        assert ((out < 19) | (out == 255)).all()


def test_text_round_trip(tmp_path):
    for name, m in builtin_maps().items():
        space = SIM_A_SPACE if name == "SimA" else SIM_B_SPACE
        path = tmp_path / f"{name}.map"
        path.write_text(m.to_text())
        assert load_map(path, space) == m


def test_parse_accepts_comments_and_blank_lines():
    text = "# header\n\n" + builtin_maps()["SimA"].to_text().replace("\n", "  # note\n", 1)
    assert parse_map(text, SIM_A_SPACE, TARGET_SPACE) == builtin_maps()["SimA"]


@pytest.mark.parametrize("mutate", [
    lambda t: t.replace("Building -> building", "Bilding -> building"),  # unknown source
    lambda t: t.replace("Building -> building", "Building -> skyscraper"),  # unknown target
    lambda t: t.replace("Building -> building\n", ""),  # missing row
    lambda t: t + "Building -> building\n",  # duplicate row
    lambda t: t.replace("Building -> building", "Building building"),  # malformed
])
def test_parse_is_strict(mutate):
    with pytest.raises(ConfigurationError):
        parse_map(mutate(builtin_maps()["SimA"].to_text()), SIM_A_SPACE, TARGET_SPACE)


def test_map_construction_validation():
    with pytest.raises(ConfigurationError):
        LabelMap(SIM_A_SPACE, TARGET_SPACE, (0,) * 22)
    with pytest.raises(ConfigurationError):
        LabelMap(SIM_A_SPACE, TARGET_SPACE, (19,) + (None,) * 22)


def test_fully_dropped_mask_gives_exactly_zero_gradient():
    m = builtin_maps()["SimA"]
    dropped = [i for i, e in enumerate(m.entries) if e is None]
    rng = np.random.default_rng(0)
    mask = apply_map(m, rng.choice(dropped, size=(2, 8, 8)))
    assert (mask == 255).all()
    params = M.init_model(M.ModelConfig(init_seed=1))
    loss, grads = M.loss_and_grads(params, rng.random((2, 3, 8, 8)), mask)
    assert loss == 0.0
    assert all(not g.any() for g in grads.values())

