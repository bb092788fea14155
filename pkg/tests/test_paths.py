import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from cevldp import (
    ControlPath,
    DomainError,
    GridPath,
    ModelParams,
    ParameterError,
    TabulatedAlpha,
    cameron_martin_energy,
    control_from_path,
    holder_norm,
    lamperti,
    rate_I,
)

nonneg_paths = hnp.arrays(
    float,
    st.integers(2, 60),
    elements=st.floats(0.0, 1e6, allow_nan=False, allow_infinity=False),
)


class TestModelParams:
    def test_defaults_valid(self):
        p = ModelParams()
        assert p.gamma == 0.5 and p.lamperti_power == 0.5

    @pytest.mark.parametrize(
        "kw",
        [
            dict(gamma=0.4),
            dict(gamma=1.0),
            dict(sigma=0.0),
            dict(x0=0.0),
            dict(x0=-1.0),
            dict(alpha=-0.1),
            dict(beta=math.inf),
        ],
    )
    def test_rejects_invalid(self, kw):
        with pytest.raises(ParameterError):
            ModelParams(**kw)

    def test_scaled_alpha_constant(self):
        p = ModelParams(gamma=0.75, alpha=2.0)
        # eps^(1/(1-gamma)) = 0.5^4
        assert p.scaled_alpha(0.5)(3.0) == pytest.approx(2.0 * 0.5**4)

    def test_scaled_alpha_tabulated_is_exact_rescaling(self):
        tab = TabulatedAlpha([0.0, 1.0, 2.0], [1.0, 2.0, 1.5], lipschitz=1.0, nonneg_radius=1.0)
        p = ModelParams(alpha=tab)
        eps = 0.3
        y = np.linspace(0, 0.5, 7)
        npt.assert_allclose(p.scaled_alpha(eps)(y), eps**2 * tab(y / eps**2))

    def test_tabulated_alpha_checks(self):
        with pytest.raises(ParameterError):
            TabulatedAlpha([0.0, 1.0], [0.0, 5.0], lipschitz=1.0, nonneg_radius=1.0)
        with pytest.raises(ParameterError):
            TabulatedAlpha([0.0, 1.0], [-1.0, -0.5], lipschitz=1.0, nonneg_radius=0.5)
        tab = TabulatedAlpha([0.0, 1.0], [0.0, 1.0], lipschitz=1.0, nonneg_radius=1.0)
        assert tab(5.0) == 1.0 and tab.bound == 1.0


class TestLamperti:
    def test_square_to_identity(self):
        phi = GridPath.from_function(lambda t: t**2, 1.0, 100)
        npt.assert_allclose(lamperti(phi, 0.5).values, phi.times, atol=1e-15)

    def test_zero_path(self):
        z = GridPath(1.0, np.zeros(11))
        assert np.all(lamperti(z, 0.7).values == 0)

    def test_negative_sample_names_index(self):
        with pytest.raises(DomainError, match="index 3"):
            lamperti(GridPath(1.0, [0.0, 1.0, 2.0, -1e-3, 1.0]), 0.5)

    @given(nonneg_paths, st.floats(0.5, 0.95))
    @settings(max_examples=100, deadline=None)
    def test_round_trip(self, v, gamma):
        p = GridPath(1.0, v)
        back = lamperti(lamperti(p, gamma), gamma, "inverse").values
        npt.assert_allclose(back, v, rtol=1e-12, atol=0)


class TestControlFromPath:
    def test_square_gives_unit_control(self):
        p = ModelParams(gamma=0.5, sigma=2.0)
        phi = GridPath.from_function(lambda t: t**2, 1.0, 1000)
        h = control_from_path(phi, p)
        # first interval has a zero left node
        assert h.hdot[0] == 0.0
        npt.assert_allclose(h.hdot[1:], 1.0, atol=1e-12)

    def test_exponential(self):
        p = ModelParams(gamma=0.5, sigma=1.0, beta=1.0)
        phi = GridPath.from_function(lambda t: np.exp(2 * t), 1.0, 2000)
        h = control_from_path(phi, p)
        err = np.max(np.abs(h.hdot - np.exp(h.times)))
        assert err < 5 * phi.dt

    def test_zero_path_zero_control(self):
        h = control_from_path(GridPath(1.0, np.zeros(51)), ModelParams())
        assert np.all(h.hdot == 0)

    @pytest.mark.parametrize("beta", [-1.0, 0.0, 0.5])
    def test_euler_reconstruction_is_first_order(self, beta):
        p = ModelParams(gamma=0.5, sigma=1.5, beta=beta)
        f = lambda t: (0.5 + t + np.sin(3 * t) ** 2) ** 2
        errs = []
        for n in (400, 800, 1600):
            phi = GridPath.from_function(f, 1.0, n)
            hd = control_from_path(phi, p).hdot
            v = phi.values
            x = np.empty_like(v)
            x[0] = v[0]
            for i in range(n):
                x[i + 1] = x[i] + (beta * x[i] + p.sigma * x[i] ** p.gamma * hd[i]) * phi.dt
            errs.append(np.max(np.abs(x - v)))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        npt.assert_allclose(ratios, 2.0, rtol=0.1)

    def test_one_step_identity(self):
        # the control reproduces each step exactly in Lamperti coordinates
        p = ModelParams(gamma=0.75, sigma=0.7, beta=0.3)
        phi = GridPath.from_function(lambda t: 0.1 + t**2, 1.0, 50)
        hd = control_from_path(phi, p).hdot
        psi = phi.values**0.25
        q = 0.25
        nxt = psi[:-1] + (0.3 * q * psi[:-1] + p.sigma * q * hd) * phi.dt
        npt.assert_allclose(nxt, psi[1:], rtol=1e-12)

    def test_energy_converges_to_rate(self):
        p = ModelParams(gamma=0.5, sigma=1.0, beta=0.4)
        f = lambda t: (t + t**2) ** 2
        # exact: (1/2) int_0^1 ((psi' - 0.2 psi) / 0.5)^2, psi = t + t^2
        from scipy.integrate import quad

        exact = 0.5 * quad(lambda t: ((1 + 2 * t - 0.2 * (t + t * t)) / 0.5) ** 2, 0, 1)[0]
        energies = [cameron_martin_energy(control_from_path(GridPath.from_function(f, 1.0, n), p)) for n in (250, 500, 1000)]
        errs = np.abs(np.array(energies) - exact)
        assert errs[2] < errs[1] < errs[0]
        # Richardson extrapolation removes the O(1/N) term
        rich = 2 * energies[2] - energies[1]
        assert abs(rich - exact) < 0.1 * errs[2]
        phi = GridPath.from_function(f, 1.0, 1000)
        assert rate_I(phi, p).value == pytest.approx(energies[2], rel=1e-12)


class TestCameronMartin:
    def test_constant(self):
        assert cameron_martin_energy(ControlPath.constant(1.0, 1.0, 100)) == pytest.approx(0.5)
        assert cameron_martin_energy(ControlPath.constant(0.0, 1.0, 100)) == 0.0

    def test_linear(self):
        n = 1000
        e = cameron_martin_energy(ControlPath.from_function(lambda t: t, 1.0, n))
        assert abs(e - 1 / 6) < 1.0 / n

    @given(st.floats(-10, 10), st.floats(0.1, 5), st.integers(1, 200))
    def test_scaling(self, c, T, n):
        h = ControlPath.constant(c, T, n)
        assert cameron_martin_energy(h) == pytest.approx(0.5 * c * c * T, rel=1e-12, abs=1e-300)

    def test_values_start_at_zero(self):
        h = ControlPath.from_function(lambda t: 1 + t, 2.0, 8)
        v = h.values()
        assert v[0] == 0.0 and v.size == 9
        h2 = ControlPath.from_values(v, 2.0)
        npt.assert_allclose(h2.hdot, h.hdot, rtol=1e-12)


class TestHolder:
    def test_affine(self):
        p = GridPath.from_function(lambda t: t, 1.0, 200)
        assert holder_norm(p, 0.5 - 1e-9) == pytest.approx(1.0, rel=1e-6)

    def test_constant(self):
        assert holder_norm(GridPath(1.0, np.full(30, 4.2)), 0.3) == 0.0

    def test_sqrt_attained_at_origin(self):
        p = GridPath.from_function(np.sqrt, 1.0, 200)
        assert holder_norm(p, 0.5 - 1e-9) == pytest.approx(1.0, rel=1e-6)

    def test_eta_range(self):
        with pytest.raises(ParameterError):
            holder_norm(GridPath(1.0, [0.0, 1.0]), 0.5)

    @given(hnp.arrays(float, st.integers(2, 40), elements=st.floats(0, 1)), st.floats(0.01, 0.48), st.floats(0.01, 0.48))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_eta(self, v, e1, e2):
        # increments bounded by 1 and dt <= 1
        p = GridPath(float(v.size - 1), v)
        lo, hi = sorted((e1, e2))
        assert holder_norm(p, hi) <= holder_norm(p, lo) + 1e-12


class TestCsv:
    def test_grid_path_round_trip(self, tmp_path):
        p = GridPath.from_function(lambda t: np.exp(t) / 3, 2.5, 17)
        p.to_csv(tmp_path / "p.csv")
        assert (tmp_path / "p.csv").read_text().splitlines()[0] == "t,value"
        q = GridPath.from_csv(tmp_path / "p.csv")
        assert q.horizon == pytest.approx(2.5)
        npt.assert_array_equal(q.values, p.values)

    def test_control_round_trip(self, tmp_path):
        h = ControlPath.from_function(lambda t: np.cos(t) / 7, 1.5, 9)
        h.to_csv(tmp_path / "h.csv")
        g = ControlPath.from_csv(tmp_path / "h.csv")
        assert g.matches(1.5, 9)
        npt.assert_array_equal(g.hdot, h.hdot)

    def test_bad_header(self, tmp_path):
        (tmp_path / "x.csv").write_text("a,b\n0,1\n1,2\n")
        with pytest.raises(ParameterError):
            GridPath.from_csv(tmp_path / "x.csv")
