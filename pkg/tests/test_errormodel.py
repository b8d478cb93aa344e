import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rnpe.errormodel import (
    SpikeSlabConfig,
    error_log_likelihood,
    joint_log_likelihood,
    posterior_z_given,
    sample_error,
)

CFG = SpikeSlabConfig()
# densities at zero offset, written out independently of the module
SPIKE_AT_0 = 1.0 / (0.01 * np.sqrt(2 * np.pi))  # 39.8942...
SLAB_AT_0 = 1.0 / (np.pi * 0.25)  # 1.27324...


def test_defaults():
    assert (CFG.rho, CFG.spike_scale, CFG.slab_scale) == (0.5, 0.01, 0.25)
    assert SpikeSlabConfig.from_dict(CFG.to_dict()) == CFG


@pytest.mark.parametrize("kwargs", [{"rho": 1.0}, {"rho": -0.1}, {"spike_scale": 0.0}, {"slab_scale": -1.0}])
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        SpikeSlabConfig(**kwargs)


def test_equal_point_likelihood():
    v = error_log_likelihood(np.array([0.3]), np.array([0.3]), CFG)
    assert v == pytest.approx(np.log(0.5 * SPIKE_AT_0 + 0.5 * SLAB_AT_0), abs=1e-12)
    assert v == pytest.approx(3.0245, abs=1e-4)


def test_far_offset_is_slab_dominated():
    v = error_log_likelihood(np.array([100.0]), np.array([0.0]), CFG)
    cauchy = 1.0 / (np.pi * 0.25 * (1 + (100 / 0.25) ** 2))
    assert np.isfinite(v)
    assert v == pytest.approx(np.log(0.5 * cauchy), abs=1e-12)
    assert v == pytest.approx(-12.434, abs=1e-3)


def test_likelihood_factorises():
    y, x = np.array([0.2, 5.0]), np.array([0.2, 0.0])
    total = error_log_likelihood(y, x, CFG)
    parts = error_log_likelihood(y[:1], x[:1], CFG) + error_log_likelihood(y[1:], x[1:], CFG)
    assert total == pytest.approx(parts, abs=1e-12)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        error_log_likelihood(np.zeros(2), np.zeros(3), CFG)


@pytest.mark.parametrize("d", [1, 2, 5, 10])
def test_marginal_equals_enumeration(d):
    rng = np.random.default_rng(d)
    worst = 0.0
    for _ in range(5):
        x = rng.normal(size=d)
        y = x + np.where(rng.random(d) < 0.5, 0.01 * rng.normal(size=d), rng.standard_cauchy(d))
        terms = [joint_log_likelihood(y, x, np.array(z), CFG) for z in itertools.product((0, 1), repeat=d)]
        brute = np.logaddexp.reduce(terms)
        worst = max(worst, abs(brute - error_log_likelihood(y, x, CFG)))
    assert worst < 1e-10


def test_posterior_at_zero_offset():
    p = posterior_z_given(np.array([1.0]), np.array([1.0]), CFG)[0]
    assert p == pytest.approx(SLAB_AT_0 / (SPIKE_AT_0 + SLAB_AT_0), abs=1e-12)
    assert p == pytest.approx(0.03093, abs=1e-5)


def test_ten_spike_sds_is_slab():
    assert posterior_z_given(np.array([0.1]), np.array([0.0]), CFG)[0] == pytest.approx(1.0, abs=1e-15)


def test_zero_rho_gives_zero_probability():
    cfg = SpikeSlabConfig(rho=0.0)
    np.testing.assert_array_equal(posterior_z_given(np.array([0.0, 3.0, -50.0]), np.zeros(3), cfg), 0.0)
    assert np.isfinite(error_log_likelihood(np.array([0.001]), np.zeros(1), cfg))


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_posterior_monotone_in_offset(a, b):
    lo, hi = sorted((a, b))
    p = posterior_z_given(np.array([lo, hi]), np.zeros(2), CFG)
    assert p[0] <= p[1]


def test_evidence_rule_threshold():
    # near-zero residual is evidence for the spike, a large one for the slab
    p = posterior_z_given(np.array([0.0, 1.0]), np.zeros(2), CFG)
    assert p[0] < CFG.rho < p[1]


def test_sampling_without_slab_stays_in_spike():
    y, z = sample_error(np.zeros((2000, 3)), SpikeSlabConfig(rho=0.0), np.random.default_rng(0))
    assert not z.any()
    assert np.mean(np.abs(y) < 5 * 0.01) > 0.999


def test_sampled_indicator_rate():
    _, z = sample_error(np.zeros(10_000), CFG, np.random.default_rng(1))
    assert z.mean() == pytest.approx(0.5, abs=0.02)


def test_slab_half_mass_within_scale():
    y, z = sample_error(np.zeros(40_000), CFG, np.random.default_rng(2))
    slab = np.abs(y[z == 1])
    assert np.mean(slab < 0.25) == pytest.approx(0.5, abs=0.02)


def test_sampling_preserves_shape_and_is_seeded():
    x = np.random.default_rng(3).normal(size=(4, 5))
    a = sample_error(x, CFG, np.random.default_rng(4))
    b = sample_error(x, CFG, np.random.default_rng(4))
    assert a[0].shape == x.shape and a[1].shape == x.shape
    assert a[0].tobytes() == b[0].tobytes()
