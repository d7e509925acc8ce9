import math

import numpy as np
import pytest
from scipy import optimize

from riesim import models
from riesim.density import GridGeometry
from riesim.models import (
    additive_diffusion,
    fdgd1,
    fdgd2_two_minima,
    fdgd3_himmelblau,
    get_model,
    himmelblau_objective,
    ikeda,
    ikeda_angle,
    list_models,
    lozi,
    ornstein_uhlenbeck_2d,
    rosenzweig_mcarthur_rde,
    rosenzweig_mcarthur_sde,
    two_minima_objective,
)
from riesim.sampling import GaussianSpec, ParamDensitySet


def central_gradient(f, x):
    g = np.empty_like(x)
    for r in range(len(x)):
        h = 1e-5 * (1 + abs(x[r]))
        e = np.zeros_like(x)
        e[r] = h
        g[r] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# frozen from np.roots([4, 0, -6, 1]) in test_two_minima_stationary_points
TWO_MINIMA = [(-1.30084, 0.0), (1.13090, 0.0)]
# frozen from the multi-start oracle in test_himmelblau_minima
HIMMELBLAU_MINIMA = [(3.0, 2.0), (-2.8051, 3.1313), (-3.7793, -3.2832), (3.5844, -1.8481)]


class TestAdditiveDiffusion:
    def test_values(self):
        m = additive_diffusion(0.1)
        assert m(np.array([0.3]), np.array([0.0]))[0] == pytest.approx(0.3)
        assert m(np.array([0.3]), np.array([-0.1]))[0] == pytest.approx(0.2)
        assert (m.R, m.K) == (1, 1)
        assert m.param_densities[0] == GaussianSpec(0.0, 0.1)

    def test_invalid(self):
        with pytest.raises(ValueError):
            additive_diffusion(0.0)


class TestRosenzweigMcArthur:
    def test_steady_state_fixed_point(self):
        m = rosenzweig_mcarthur_rde()
        x = np.array([1 / 3, 8 / 9])
        assert np.max(np.abs(m(x, [1, 1, 0.25]) - x)) < 1e-12

    def test_extinction(self):
        m = rosenzweig_mcarthur_rde()
        for c in ([1, 1, 0.25], [0.7, 1.3, 0.1]):
            np.testing.assert_array_equal(m(np.zeros(2), c), [0.0, 0.0])

    def test_hand_step(self):
        out = rosenzweig_mcarthur_rde()(np.array([0.1, 0.1]), [1, 1, 0.25])
        expect = (0.1 + 0.2 * (0.09 - 0.1 * 0.1 / 1.1), 0.1 + 0.2 * (-0.025 + 0.01 / 1.1))
        np.testing.assert_allclose(out, expect, rtol=1e-14)

    def test_presets(self):
        m = rosenzweig_mcarthur_rde()
        assert m.dt == 0.2
        assert [(c.mean, c.std) for c in m.param_densities] == [(1, 0.01), (1, 0.01), (0.25, 0.01)]

    def test_sde_zero_noise_is_euler(self):
        m = rosenzweig_mcarthur_sde()
        x = np.array([0.4, 0.4])
        f1 = 0.4 * (1 - 0.4 / 1.9) - 1.1 * 0.16 / 1.4
        f2 = -0.31 * 0.4 + 1.1 * 0.16 / 1.4
        np.testing.assert_allclose(m(x, [0, 0]), x + 0.05 * np.array([f1, f2]), rtol=1e-14)
        np.testing.assert_allclose(m.vector_field(x), [f1, f2], rtol=1e-12)

    def test_sde_noise_step(self):
        m = rosenzweig_mcarthur_sde()
        x = np.array([0.4, 0.4])
        sq = math.sqrt(0.05)
        noise = 0.04 * 0.4 * sq
        np.testing.assert_allclose(m(x, [sq, sq]) - m(x, [0, 0]), [noise, noise], rtol=1e-12)

    def test_sde_origin(self):
        np.testing.assert_array_equal(rosenzweig_mcarthur_sde()(np.zeros(2), [1.3, -0.7]), [0, 0])

    def test_sde_wiener_variance(self):
        m = rosenzweig_mcarthur_sde(dt=0.05)
        assert all(c.mean == 0 and c.std == pytest.approx(math.sqrt(0.05)) for c in m.param_densities)

    def test_holling_window_check(self):
        m = rosenzweig_mcarthur_rde()
        assert m.check_geometry(GridGeometry((-1.2, 0), (1, 1), (10, 10)))
        assert m.check_geometry(GridGeometry((-0.5, 0), (1, 1), (10, 10)))
        assert not m.check_geometry(GridGeometry((-0.4, 0), (1, 1), (10, 10)))


class TestFdgd:
    def test_two_minima_gradient_at_origin(self):
        np.testing.assert_array_equal(two_minima_objective().grad(np.zeros(2)), [1.0, 0.0])

    def test_two_minima_stationary_points(self):
        roots = np.sort(np.roots([4, 0, -6, 1]).real)
        np.testing.assert_allclose(roots, [-1.30084, 0.16994, 1.13090], atol=1e-5)
        f = two_minima_objective()
        # second derivative sign: minima, saddle, minima
        curv = 12 * roots ** 2 - 6
        assert curv[0] > 0 and curv[1] < 0 and curv[2] > 0
        for r in roots:
            assert np.linalg.norm(f.grad(np.array([r, 0.0]))) < 1e-12

    def test_himmelblau_gradient_zero(self):
        np.testing.assert_array_equal(himmelblau_objective().grad(np.array([3.0, 2.0])), [0, 0])

    def test_himmelblau_minima(self):
        f = himmelblau_objective()
        found = []
        for x0 in [(4, 4), (-4, 4), (-4, -4), (4, -4)]:
            res = optimize.minimize(lambda x: float(f.f(x)), x0, jac=lambda x: f.grad(x),
                                    method="BFGS", options={"gtol": 1e-12})
            found.append(res.x)
        for expect in HIMMELBLAU_MINIMA:
            d = [np.linalg.norm(np.asarray(expect) - x) for x in found]
            assert min(d) < 1e-4

    @pytest.mark.parametrize("objective", [two_minima_objective(), himmelblau_objective()],
                             ids=lambda o: o.name)
    def test_gradient_finite_differences(self, objective):
        rng = np.random.default_rng(17)
        for x in rng.uniform(-4, 4, (100, 2)):
            ga = objective.grad(x)
            gn = central_gradient(lambda z: float(objective.f(z)), x)
            assert np.linalg.norm(ga - gn) <= 1e-6 * max(np.linalg.norm(ga), 1.0)

    def test_fdgd2_transfer(self):
        m = fdgd2_two_minima()
        x = np.array([0.5, -0.25])
        g = np.array([4 * 0.125 - 3 + 1, -1.0])
        np.testing.assert_allclose(m(x, [0.01, 0.02]), x - 0.075 * g + [0.01, 0.02])
        assert [c.std for c in m.param_densities] == [0.04, 0.04]

    def test_fdgd2_fixed_points(self):
        m = fdgd2_two_minima()
        for r in np.roots([4, 0, -6, 1]).real:
            x = np.array([r, 0.0])
            assert np.max(np.abs(m(x, [0, 0]) - x)) < 1e-12

    def test_fdgd3_transfer(self):
        m = fdgd3_himmelblau()
        assert (m.R, m.K) == (2, 3)
        x = np.array([1.0, 1.0])
        g = himmelblau_objective().grad(x)
        np.testing.assert_allclose(m(x, [0.1, -0.2, 0.012]), x - 0.012 * g + [0.1, -0.2])
        assert [(c.mean, c.std) for c in m.param_densities] == [(0, 0.2), (0, 0.2), (0.01, 0.003)]
        assert np.max(np.abs(m(np.array([3.0, 2.0]), [0, 0, 0.01]) - [3, 2])) < 1e-12

    def test_fdgd1_generic(self):
        # random minimizer location c: F = |x - c|^2 / 2
        params = ParamDensitySet([GaussianSpec(1.0, 0.1), GaussianSpec(-1.0, 0.1)])
        m = fdgd1(lambda x, c: x - c, 0.5, params)
        np.testing.assert_allclose(m(np.array([3.0, 3.0]), [1.0, -1.0]), [2.0, 1.0])


class TestMaps:
    def test_ikeda_origin(self):
        assert ikeda_angle(np.zeros(2)) == pytest.approx(-5.6)
        for u in (0.3, 0.7, 1.1):
            np.testing.assert_allclose(ikeda()(np.zeros(2), [u]), [1.0, 0.0])

    def test_ikeda_hand(self):
        t = 0.4 - 3.0
        np.testing.assert_allclose(ikeda()(np.array([1.0, 0.0]), [0.7]),
                                   [1 + 0.7 * math.cos(t), 0.7 * math.sin(t)], rtol=1e-14)

    def test_lozi_values(self):
        m = lozi()
        np.testing.assert_allclose(m(np.zeros(2), [1.55]), [1, 0])
        np.testing.assert_allclose(m(np.array([1.0, 0.0]), [1.5]), [-0.5, 0.3])
        a = m(np.array([-1.0, 0.0]), [1.5])
        b = m(np.array([1.0, 0.0]), [1.5])
        assert a[0] == b[0] and a[1] == -b[1]

    def test_lozi_kink(self):
        m = lozi()
        h = 1e-6
        f = lambda x1: m(np.array([x1, 0.2]), [1.5])[0]  # noqa: E731
        right = (f(h) - f(0)) / h
        left = (f(0) - f(-h)) / h
        assert right == pytest.approx(-1.5) and left == pytest.approx(1.5)
        assert abs(f(h) - f(-h)) < 1e-5  # continuous across the kink
        # smooth away from x1 = 0
        assert (f(0.5 + h) - f(0.5)) / h == pytest.approx((f(0.5) - f(0.5 - h)) / h, abs=1e-6)


class TestOrnsteinUhlenbeck:
    def test_values(self):
        m = ornstein_uhlenbeck_2d()
        np.testing.assert_array_equal(m(np.zeros(2), [0, 0]), [0, 0])
        np.testing.assert_allclose(m(np.array([1.0, 0.8]), [0, 0]), [0.975, 0.78], rtol=1e-14)
        np.testing.assert_allclose(m(np.zeros(2), [0.1, 0.1]), [0.04, 0.06])

    def test_zero_noise_decay(self):
        m = ornstein_uhlenbeck_2d(dt=0.001)
        x = np.array([1.0, 0.8])
        for _ in range(1000):
            x = m(x, [0, 0])
        np.testing.assert_allclose(x, np.array([1.0, 0.8]) * 0.999 ** 1000)
        np.testing.assert_allclose(x, np.array([1.0, 0.8]) * math.exp(-1), rtol=1e-3)


class TestRegistry:
    def test_eight_models(self):
        assert len(list_models()) == 8
        for name in list_models():
            m = get_model(name)
            assert m.name == name

    def test_unknown_suggests(self):
        with pytest.raises(models.UnknownModelError, match="ikeda"):
            get_model("ikeda_typo")

    def test_vectorized_matches_single(self):
        rng = np.random.default_rng(0)
        for name in list_models():
            m = get_model(name)
            x = rng.uniform(0.1, 0.9, (5, m.R))
            c = m.param_densities.sample(5, rng)
            batch = m.transfer(x, c, 0.0)
            for p in range(5):
                np.testing.assert_allclose(m(x[p], c[p]), batch[p])
