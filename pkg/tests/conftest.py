import numpy as np
import pytest
from hypothesis import settings

from fedistil import nn
from fedistil.prng import SplitMix64

settings.register_profile("ci", max_examples=50, deadline=None)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile("ci")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def small_model():
    return nn.model_init([3, 5, 4], SplitMix64(11))


def random_model(layer_sizes, seed, bias_scale=0.1):
    """Glorot weights plus small random biases so no gradient is trivially zero."""
    rng = SplitMix64(seed)
    model = nn.model_init(layer_sizes, rng)
    biases = [bias_scale * rng.normal_array(b.size) for b in model.biases]
    return nn.Model(model.layer_sizes, model.weights, tuple(biases))


def finite_difference(loss_fn, model, h=1e-5):
    """Central differences of ``loss_fn(model)`` for every parameter."""
    arrays = [a.copy() for a in model.arrays()]
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            orig = a[idx]
            a[idx] = orig + h
            plus = loss_fn(nn.Model.from_arrays(model.layer_sizes, arrays))
            a[idx] = orig - h
            minus = loss_fn(nn.Model.from_arrays(model.layer_sizes, arrays))
            a[idx] = orig
            g[idx] = (plus - minus) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for a, b in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
        worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst
