import numpy as np
import pytest

from rnpe import _kernels_py, kernels
from rnpe import diffcore as dc
from rnpe.errormodel import SpikeSlabConfig, error_log_likelihood
from rnpe.flows.bnaf import BnafSpec, bnaf_log_prob, init_bnaf_params, kernel_arrays

try:
    from rnpe import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def _bnaf(dim, seed, activation="leaky_tanh"):
    spec = BnafSpec(dim, block=4, activation=activation)
    pv = init_bnaf_params(spec, np.random.default_rng(seed))
    return spec, pv, kernel_arrays(pv, spec)


def _reference(spec, pv, x, y=None, cfg=SpikeSlabConfig()):
    """Autodiff route: flow log density (+ error model) and its input gradient."""
    p = pv.unpack()

    def f(v):
        out = bnaf_log_prob(p, spec, v)
        if y is None:
            return out
        # error model written with diffcore primitives for the gradient
        r = dc.sub(y, v)
        log_spike = np.log1p(-cfg.rho) - np.log(cfg.spike_scale) - 0.5 * np.log(2 * np.pi) \
            - 0.5 * dc.square(r) / cfg.spike_scale ** 2
        log_slab = np.log(cfg.rho) - np.log(np.pi * cfg.slab_scale) - dc.log(1.0 + dc.square(r) / cfg.slab_scale ** 2)
        pair = dc.concat([dc.reshape(log_spike, (-1, 1)), dc.reshape(log_slab, (-1, 1))], axis=-1)
        return out + dc.sum_(dc.logsumexp(pair, axis=-1))

    return dc.evaluate_with_gradient(f, x)


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("activation", ["leaky_tanh", "tanh", "identity"])
@pytest.mark.parametrize("dim", [1, 3, 6])
def test_python_kernel_matches_autodiff(dim, activation):
    spec, pv, arrays = _bnaf(dim, dim, activation)
    rng = np.random.default_rng(0)
    t = _kernels_py.Target(kernels.KIND_BNAF, arrays)
    for _ in range(5):
        x = rng.normal(size=dim) * 3
        lp, g = t.logp_grad(x)
        ref_lp, ref_g = _reference(spec, pv, x)
        assert lp == pytest.approx(ref_lp, abs=1e-10)
        np.testing.assert_allclose(g, ref_g, atol=1e-10)


def test_python_kernel_with_error_model_matches_autodiff():
    spec, pv, arrays = _bnaf(4, 7)
    rng = np.random.default_rng(1)
    y = rng.normal(size=4)
    cfg = SpikeSlabConfig()
    t = _kernels_py.Target(kernels.KIND_BNAF, arrays, y=y, rho=cfg.rho, sigma=cfg.spike_scale, tau=cfg.slab_scale)
    for _ in range(5):
        x = y + rng.normal(size=4) * 0.05
        lp, g = t.logp_grad(x)
        ref_lp, ref_g = _reference(spec, pv, x, y)
        assert lp == pytest.approx(ref_lp, abs=1e-9)
        np.testing.assert_allclose(g, ref_g, rtol=1e-9, atol=1e-8)
        # value cross-check against the error model module itself
        flow_lp = float(np.asarray(bnaf_log_prob(pv.unpack(), spec, x)))
        assert lp == pytest.approx(flow_lp + error_log_likelihood(y, x, cfg), abs=1e-9)


def test_gaussian_kernel_is_exact():
    mean, cov = np.array([1.0, -2.0]), np.array([[2.0, 0.6], [0.6, 0.5]])
    t = _kernels_py.Target(kernels.KIND_GAUSSIAN, kernels.gaussian_arrays(mean, cov))
    x = np.array([0.3, 0.1])
    lp, g = t.logp_grad(x)
    r = x - mean
    prec = np.linalg.inv(cov)
    expected = -0.5 * r @ prec @ r - np.log(2 * np.pi) - 0.5 * np.log(np.linalg.det(cov))
    assert lp == pytest.approx(expected, abs=1e-12)
    np.testing.assert_allclose(g, -prec @ r, atol=1e-12)


@needs_compiled
@pytest.mark.parametrize("dim", [1, 2, 6, 10])
def test_compiled_matches_fallback(dim):
    _, _, arrays = _bnaf(dim, 11 + dim)
    rng = np.random.default_rng(dim)
    y = rng.normal(size=dim)
    for kw in ({}, {"y": y}):
        a = compiled.Target(kernels.KIND_BNAF, arrays, **kw)
        b = _kernels_py.Target(kernels.KIND_BNAF, arrays, **kw)
        for _ in range(5):
            x = rng.normal(size=dim) * 2
            la, ga = a.logp_grad(x)
            lb, gb = b.logp_grad(x)
            assert la == pytest.approx(lb, abs=1e-11)
            np.testing.assert_allclose(ga, gb, atol=1e-10)


@needs_compiled
def test_compiled_leapfrog_matches_fallback():
    _, _, arrays = _bnaf(3, 5)
    y = np.array([0.1, -0.3, 2.0])
    a = compiled.Target(kernels.KIND_BNAF, arrays, y=y)
    b = _kernels_py.Target(kernels.KIND_BNAF, arrays, y=y)
    x = np.array([0.0, -0.2, 0.5])
    p = np.array([0.4, 1.0, -0.3])
    _, g = b.logp_grad(x)
    ra = a.leapfrog(x, p, g, 0.01, 25)
    rb = b.leapfrog(x, p, g, 0.01, 25)
    np.testing.assert_allclose(ra[0], rb[0], atol=1e-10)
    np.testing.assert_allclose(ra[1], rb[1], atol=1e-9)
    assert ra[3] == pytest.approx(rb[3], abs=1e-9)
    assert ra[4] == rb[4]


def test_leapfrog_is_reversible():
    _, _, arrays = _bnaf(2, 3)
    t = kernels.Target(kernels.KIND_BNAF, arrays)
    x0 = np.array([0.5, -0.5])
    p0 = np.array([1.0, 0.2])
    _, g0 = t.logp_grad(x0)
    x1, p1, g1, _, ok = t.leapfrog(x0, p0, g0, 0.05, 20)
    assert ok
    x2, p2, _, _, _ = t.leapfrog(x1, -np.asarray(p1), g1, 0.05, 20)
    np.testing.assert_allclose(x2, x0, atol=1e-10)
    np.testing.assert_allclose(-np.asarray(p2), p0, atol=1e-10)


def test_mismatched_observation_rejected():
    _, _, arrays = _bnaf(2, 0)
    with pytest.raises(ValueError):
        _kernels_py.Target(kernels.KIND_BNAF, arrays, y=np.zeros(3))
    with pytest.raises(ValueError):
        _kernels_py.Target(7, arrays)
