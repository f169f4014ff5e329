import numpy as np
import pytest

from odics import model as M
from odics.domains import CANVAS, LabeledSample


def small_batch(n=2, size=8, num_classes=8, seed=0, ignore_frac=0.2):
    rng = np.random.default_rng(seed)
    images = rng.random((n, 3, size, size))
    masks = rng.integers(0, num_classes, (n, size, size))
    masks[rng.random(masks.shape) < ignore_frac] = 255
    return images, masks


def random_samples(n, seed=0, num_classes=19, tag="x", size=CANVAS):
    rng = np.random.default_rng(seed)
    return [LabeledSample(rng.random((3, size, size)), rng.integers(0, num_classes, (size, size)).astype(np.uint8),
                          tag, i) for i in range(n)]


@pytest.fixture
def tiny_model():
    cfg = M.ModelConfig(num_classes=8, hidden_channels=6, init_seed=1)
    params = M.init_model(cfg)
    rng = np.random.default_rng(2)
    for k in params:
        if k.endswith("bias"):
            params[k][:] = 0.1 * rng.standard_normal(params[k].shape)
    return params, cfg


@pytest.fixture
def small_batch_data():
    return small_batch()


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(k for k in results if isinstance(k, int)):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
