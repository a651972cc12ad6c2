"""Density estimation: support selection, bandwidths, KDE, panel assembly."""

import numpy as np
import pytest
from scipy.stats import norm as normal_dist

from densfar.errors import (
    BandwidthNonpositive,
    DegenerateSample,
    TooFewObservations,
)
from densfar.grid import GridFunction, inner, make_grid
from densfar.kde import (
    DensityPanel,
    RawPanel,
    bandwidth,
    estimate_panel,
    kde,
    natural_sort_key,
    select_support,
)


# -- raw panel -----------------------------------------------------------------

def test_raw_panel_validation():
    with pytest.raises(ValueError):
        RawPanel(labels=("b", "a"), blocks=(np.ones(3), np.ones(3)))
    with pytest.raises(ValueError):
        RawPanel(labels=("a",), blocks=(np.array([]),))
    with pytest.raises(ValueError):
        RawPanel(labels=("a",), blocks=(np.array([1.0, np.inf]),))


def test_natural_label_order():
    assert natural_sort_key("2") < natural_sort_key("10")
    panel = RawPanel(
        labels=("2", "10"), blocks=(np.ones(2), np.ones(2))
    )
    assert panel.labels == ("2", "10")


# -- select_support -------------------------------------------------------------

def test_select_support_contains_discrete_sample():
    obs = np.tile([-1.0, 0.0, 1.0], 100)
    panel = RawPanel(labels=("1",), blocks=(obs,))
    a, b = select_support(panel, 0.999)
    assert a < -1.0 and b > 1.0


def test_select_support_coverage_precondition():
    panel = RawPanel(labels=("1",), blocks=(np.random.default_rng(0).normal(size=200),))
    with pytest.raises(ValueError):
        select_support(panel, 1.2)
    with pytest.raises(ValueError):
        select_support(panel, 0.4)


def test_select_support_normal_oracle():
    rng = np.random.default_rng(123)
    panel = RawPanel(labels=("1",), blocks=(rng.normal(size=100_000),))
    a, b = select_support(panel, 0.999)
    # Phi^{-1}(0.9995) = 3.2905...
    assert a <= -3.2905 and b >= 3.2905
    assert a >= -4.5 and b <= 4.5


def test_select_support_guards():
    small = RawPanel(labels=("1",), blocks=(np.arange(10.0),))
    with pytest.raises(TooFewObservations):
        select_support(small, 0.999)
    flat = RawPanel(labels=("1",), blocks=(np.zeros(200),))
    with pytest.raises(DegenerateSample):
        select_support(flat, 0.999)


# -- bandwidth --------------------------------------------------------------------

def test_bandwidth_epanechnikov_values():
    # 1024^(1/5) = 4 and 32^(1/5) = 2 make these exact
    assert bandwidth(1.0, 1024, "epanechnikov") == pytest.approx(2.3449 / 4, rel=1e-12)
    assert bandwidth(2.0, 32, "epanechnikov") == pytest.approx(2.3449, rel=1e-12)


def test_bandwidth_normal_constant():
    assert bandwidth(1.0, 1024, "normal") == pytest.approx(1.06 / 4, rel=1e-12)


def test_bandwidth_guards():
    with pytest.raises(TooFewObservations):
        bandwidth(1.0, 1, "epanechnikov")
    with pytest.raises(DegenerateSample):
        bandwidth(0.0, 100, "epanechnikov")
    with pytest.raises(ValueError):
        bandwidth(1.0, 100, "box")


# -- kde ----------------------------------------------------------------------------

def test_kde_spike_at_midpoint():
    g = make_grid(0.0, 1.0, 257)
    f = kde(np.full(50, 0.5), g, "epanechnikov", h=0.1)
    assert inner(g.constant(1.0), f) == pytest.approx(1.0, abs=1e-12)
    assert g.points[np.argmax(f.values)] == pytest.approx(0.5, abs=1e-9)
    assert np.allclose(f.values, f.values[::-1], atol=1e-9)
    assert np.all(f.values >= 0.0)


def test_kde_unit_mass_random_inputs():
    g = make_grid(-2.0, 2.0, 128)
    rng = np.random.default_rng(5)
    for kernel in ("epanechnikov", "normal"):
        f = kde(rng.normal(size=500), g, kernel)
        assert inner(g.constant(1.0), f) == pytest.approx(1.0, abs=1e-12)


def test_kde_supnorm_against_normal_pdf():
    g = make_grid(-4.0, 4.0, 512)
    rng = np.random.default_rng(42)
    f = kde(rng.normal(size=20_000), g, "normal")
    truth = normal_dist.pdf(g.points)
    assert np.abs(f.values - truth).max() < 0.02


def test_kde_guards():
    g = make_grid(0.0, 1.0, 64)
    with pytest.raises(TooFewObservations):
        kde(np.array([0.5]), g, "normal", h=0.1)
    with pytest.raises(BandwidthNonpositive):
        kde(np.array([0.2, 0.8]), g, "normal", h=0.0)
    with pytest.raises(DegenerateSample):
        kde(np.array([50.0, 51.0]), g, "epanechnikov", h=0.01)


def test_kde_scale_equivariance():
    rng = np.random.default_rng(9)
    obs = rng.normal(size=400)
    c = 2.5
    g = make_grid(-4.0, 4.0, 256)
    gc = make_grid(-4.0 * c, 4.0 * c, 256)
    sigma = float(np.std(obs, ddof=1))
    h = bandwidth(sigma, obs.size, "epanechnikov")
    hc = bandwidth(c * sigma, obs.size, "epanechnikov")
    assert hc == pytest.approx(c * h, rel=1e-12)
    f = kde(obs, g, "epanechnikov", h)
    fc = kde(c * obs, gc, "epanechnikov", hc)
    assert np.allclose(fc.values, f.values / c, atol=1e-10)


def test_kde_error_decreases_with_sample_size():
    # desk-scale consistency check: median integrated squared error falls
    # as the per-period sample grows
    g = make_grid(-4.0, 4.0, 256)
    truth = normal_dist.pdf(g.points)
    truth = GridFunction(g, truth / float(np.dot(g.weights, truth)))
    rng = np.random.default_rng(77)
    med = {}
    for n_obs in (250, 1000, 4000):
        ises = []
        for _ in range(20):
            f = kde(rng.normal(size=n_obs), g, "normal")
            diff = f - truth
            ises.append(inner(diff, diff))
        med[n_obs] = np.median(ises)
    assert med[250] > med[1000] > med[4000]


# -- estimate_panel ---------------------------------------------------------------------

def test_estimate_panel_identical_blocks():
    g = make_grid(-3.0, 3.0, 128)
    block = np.random.default_rng(3).normal(size=300)
    panel = RawPanel(labels=("1", "2", "3"), blocks=(block, block, block))
    est = estimate_panel(panel, g, "epanechnikov")
    assert len(est) == 3
    assert np.array_equal(est.densities[0].values, est.densities[1].values)
    assert np.array_equal(est.densities[0].values, est.densities[2].values)


def test_estimate_panel_single_period():
    g = make_grid(-3.0, 3.0, 64)
    panel = RawPanel(
        labels=("only",), blocks=(np.random.default_rng(4).normal(size=100),)
    )
    est = estimate_panel(panel, g)
    assert len(est) == 1


def test_estimate_panel_attaches_period_label():
    g = make_grid(-3.0, 3.0, 64)
    panel = RawPanel(labels=("1", "2"), blocks=(np.random.default_rng(0).normal(size=50), np.zeros(40)))
    with pytest.raises(DegenerateSample, match="period '2'"):
        estimate_panel(panel, g)


def test_estimate_panel_large_panel_shape():
    # shape contract: 212 periods of ~1880 observations -> 212 unit-mass densities
    rng = np.random.default_rng(2024)
    labels = tuple(str(i + 1).zfill(3) for i in range(212))
    blocks = tuple(
        rng.normal(0.0, 0.001, size=rng.integers(1550, 1905)) for _ in range(212)
    )
    panel = RawPanel(labels=labels, blocks=blocks)
    g = make_grid(-0.0043, 0.0043, 256)
    est = estimate_panel(panel, g, "epanechnikov")
    assert len(est) == 212
    one = g.constant(1.0)
    for f in est.densities:
        assert inner(one, f) == pytest.approx(1.0, abs=1e-10)
        assert f.values.min() >= 0.0


def test_density_panel_rejects_bad_mass():
    g = make_grid(0.0, 1.0, 64)
    with pytest.raises(ValueError):
        DensityPanel(grid=g, densities=(g.constant(2.0),), labels=("1",))
