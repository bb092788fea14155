import io
import json
import math

import mpmath as mp
import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from cevldp import (
    ConstraintSpec,
    GridPath,
    ModelParams,
    ParameterError,
    UnsupportedCaseError,
    constant_cT,
    constant_nuT,
    minimize_rate,
    omega_root,
    rate_I,
    terminal_minimizer,
    variational_constants,
)
from cevldp.oracles import cir_critical_exponent


def cT_mp(beta, gamma, sigma, T):
    """128-bit evaluation of the c_T closed form."""
    with mp.workdps(40):
        b, q, s, t = (mp.mpf(x) for x in (beta, 1 - gamma, sigma, T))
        if beta == 0:
            return 1 / (2 * s**2 * q**2 * t)
        e = mp.exp(-2 * b * q * t)
        return b * e / (s**2 * q * (1 - e))


def psi_action_quad(psi, dpsi, a, q, sigma, T):
    return integrate.quad(lambda t: (dpsi(t) - a * psi(t)) ** 2, 0, T, epsabs=1e-14, epsrel=1e-13)[0] / (
        2 * sigma**2 * q * q
    )


class TestConstants:
    def test_cT_values(self):
        assert constant_cT(ModelParams(sigma=2.0), 1.0) == pytest.approx(0.5, abs=1e-12)
        assert constant_cT(ModelParams(beta=1.0), 1.0) == pytest.approx(float(cT_mp(1, 0.5, 1, 1)), rel=1e-13)
        assert constant_cT(ModelParams(beta=1.0), 1.0) == pytest.approx(1.16395, abs=5e-6)

    @pytest.mark.parametrize("beta", [-3.0, -1e-3, -1e-9, 1e-12, 1e-7, 0.2, 4.0])
    @pytest.mark.parametrize("gamma", [0.5, 0.7, 0.9])
    def test_cT_against_mp(self, beta, gamma):
        v = constant_cT(ModelParams(gamma=gamma, sigma=1.3, beta=beta), 0.8)
        assert v == pytest.approx(float(cT_mp(beta, gamma, 1.3, 0.8)), rel=1e-12)

    def test_cT_continuity_at_zero(self):
        a = constant_cT(ModelParams(beta=1e-12), 1.0)
        b = constant_cT(ModelParams(beta=0.0), 1.0)
        assert abs(a / b - 1) < 1e-9

    @given(st.floats(-3, 3), st.floats(0.5, 0.95), st.floats(0.2, 3))
    @settings(max_examples=100, deadline=None)
    def test_cT_decreasing_in_T(self, beta, gamma, sigma):
        p = ModelParams(gamma=gamma, sigma=sigma, beta=beta)
        # for beta < 0, c_T flattens to |beta| / (sigma^2 (1-gamma)); keep the
        # grid where consecutive values differ by more than rounding
        vals = [constant_cT(p, T) for T in np.geomspace(0.05, 5, 25)]
        assert all(v > 0 for v in vals)
        assert all(x > y for x, y in zip(vals, vals[1:]))

    def test_independent_of_alpha_and_x0(self):
        base = ModelParams(gamma=0.5, sigma=1.7, beta=-0.4)
        other = base.with_(alpha=3.0, x0=42.0)
        assert constant_cT(base, 1.3) == constant_cT(other, 1.3)
        assert constant_nuT(base, 1.3) == constant_nuT(other, 1.3)

    def test_omega(self):
        assert omega_root(0.0, 1.0) == pytest.approx(math.pi / 2, abs=1e-12)
        assert omega_root(2.0, 1.0) == 0.0  # T beta / 2 = 1
        w = omega_root(4.0, 1.0)  # T beta / 2 = 2: tanh w = w / 2
        assert math.tanh(w) == pytest.approx(w / 2, abs=1e-12)
        assert w == pytest.approx(1.915, abs=5e-4)

    @given(st.floats(-20, 20).filter(lambda b: abs(b - 2.0) > 1e-9), st.floats(0.1, 5))
    @settings(max_examples=100, deadline=None)
    def test_omega_solves_equation(self, beta, T):
        b = T * beta / 2
        w = omega_root(beta, T)
        if b < 1:
            assert 0 < w < math.pi
            assert abs(w * math.cos(w) - b * math.sin(w)) < 1e-10 * max(1, abs(b))
        elif b > 1:
            assert 0 < w <= b
            assert abs(math.tanh(w) - w / b) < 1e-10

    def test_nuT_values(self):
        assert constant_nuT(ModelParams(sigma=1.0), 1.0) == pytest.approx(math.pi**2 / 2, abs=1e-12)
        assert constant_nuT(ModelParams(sigma=2.0), 1.0) == pytest.approx(math.pi**2 / 8, abs=1e-12)
        assert constant_nuT(ModelParams(sigma=1.0, beta=2.0), 1.0) == pytest.approx(2.0, abs=1e-12)

    def test_nuT_branch_continuity(self):
        lo = constant_nuT(ModelParams(beta=2.0 - 1e-9), 1.0)
        hi = constant_nuT(ModelParams(beta=2.0 + 1e-9), 1.0)
        mid = constant_nuT(ModelParams(beta=2.0), 1.0)
        assert abs(lo - mid) < 1e-8 and abs(hi - mid) < 1e-8

    def test_nuT_equals_critical_exponent(self):
        p = ModelParams(sigma=1.0, beta=-1.0)
        assert constant_nuT(p, 1.0) == pytest.approx(cir_critical_exponent(p, 1.0).u_star, abs=1e-6)

    def test_nuT_unsupported(self):
        with pytest.raises(UnsupportedCaseError):
            constant_nuT(ModelParams(gamma=0.75), 1.0)

    def test_bundle(self):
        c = variational_constants(ModelParams(gamma=0.75), 1.0)
        assert c.nu_T is None and c.c_T > 0


class TestTerminalMinimizer:
    def test_ramp(self):
        r = terminal_minimizer(1.0, ModelParams(sigma=2.0), 1.0, 100)
        npt.assert_allclose(r.psi.values, r.psi.times, atol=1e-15)
        assert r.value == pytest.approx(0.5)

    @pytest.mark.parametrize("beta", [-1.0, 1.0, 5.0])
    def test_value_against_quadrature(self, beta):
        p = ModelParams(gamma=0.5, sigma=1.0, beta=beta)
        r = terminal_minimizer(1.0, p, 1.0)
        a = beta / 2
        psi = lambda t: math.sinh(a * t) / math.sinh(a)
        dpsi = lambda t: a * math.cosh(a * t) / math.sinh(a)
        assert r.value == pytest.approx(psi_action_quad(psi, dpsi, a, 0.5, 1.0, 1.0), rel=1e-9)
        assert r.psi.values[-1] == 1.0
        if beta == 1.0:
            assert r.value == pytest.approx(1.1639534137, abs=1e-9)

    @pytest.mark.parametrize("y", [2.0, 5.0])
    @pytest.mark.parametrize("gamma", [0.5, 0.8])
    def test_homogeneity(self, y, gamma):
        p = ModelParams(gamma=gamma, sigma=0.9, beta=-0.6)
        assert terminal_minimizer(y, p, 1.0).value == pytest.approx(
            y ** (2 * (1 - gamma)) * terminal_minimizer(1.0, p, 1.0).value, rel=1e-12
        )

    def test_no_overflow(self):
        r = terminal_minimizer(1.0, ModelParams(beta=2000.0), 1.0)
        assert np.all(np.isfinite(r.psi.values))

    def test_certificate(self):
        p = ModelParams(gamma=0.6, sigma=1.2, beta=0.7)
        r = terminal_minimizer(3.0, p, 2.0, 500)
        assert abs(rate_I(r.minimizer, p).value - r.value) <= r.quadrature_tolerance


class TestConstraintSpec:
    def test_validation(self):
        with pytest.raises(ParameterError):
            ConstraintSpec("terminal", level=0.0)
        with pytest.raises(ParameterError):
            ConstraintSpec("weighted-average")
        with pytest.raises(ParameterError):
            ConstraintSpec("weighted-average", weights=[1.0, np.nan])
        with pytest.raises(ParameterError):
            ConstraintSpec("terminal", weights=[1.0])
        with pytest.raises(ValueError):
            ConstraintSpec("median")

    def test_weights_length(self):
        with pytest.raises(ParameterError):
            minimize_rate(ConstraintSpec("weighted-average", weights=np.ones(10)), ModelParams(), 100)

    def test_grid_size(self):
        with pytest.raises(ParameterError):
            minimize_rate(ConstraintSpec("terminal"), ModelParams(), 50)


class TestMinimizeRate:
    @pytest.mark.parametrize("beta", [-1.0, 0.0, 1.0])
    @pytest.mark.parametrize("kind", ["terminal", "running-sup"])
    def test_endpoint_kinds(self, kind, beta):
        p = ModelParams(gamma=0.5, sigma=2.0, beta=beta)
        r = minimize_rate(ConstraintSpec(kind), p, 2000)
        assert r.converged
        assert r.value == pytest.approx(constant_cT(p, 1.0), rel=1e-2)
        closed = terminal_minimizer(1.0, p, 1.0, 2000)
        assert np.max(np.abs(r.psi.values - closed.psi.values)) <= 1e-2

    @pytest.mark.parametrize("beta", [-1.0, 0.0, 1.0, 3.0])
    def test_time_average(self, beta):
        p = ModelParams(gamma=0.5, sigma=1.0, beta=beta)
        r = minimize_rate(ConstraintSpec("time-average"), p, 2000)
        assert r.converged
        assert r.value == pytest.approx(constant_nuT(p, 1.0), rel=1e-2)

    def test_time_average_shape(self):
        # beta = 0: psi proportional to sin(pi t / 2)
        r = minimize_rate(ConstraintSpec("time-average"), ModelParams(sigma=1.0), 1000)
        shape = np.sin(0.5 * math.pi * r.psi.times)
        k = np.dot(r.psi.values, shape) / np.dot(shape, shape)
        assert np.max(np.abs(r.psi.values - k * shape)) < 5e-3 * k

    def test_certificate_and_activity(self):
        p = ModelParams(gamma=0.5, sigma=1.0, beta=0.5)
        for spec in (ConstraintSpec("terminal", 2.0), ConstraintSpec("time-average", 3.0)):
            r = minimize_rate(spec, p, 400)
            assert r.converged
            assert abs(rate_I(r.minimizer, p).value - r.value) <= 2 * r.quadrature_tolerance
            phi = r.minimizer.values
            if spec.kind.value == "terminal":
                assert abs(phi[-1] ** 0.5 - spec.level**0.5) < 1e-6
            else:
                assert abs(np.sum(phi[:-1]) * r.minimizer.dt - spec.level) < 1e-6

    def test_homogeneity_nonquadratic(self):
        p = ModelParams(gamma=0.75, sigma=1.0, beta=0.5)
        v1 = minimize_rate(ConstraintSpec("time-average", 1.0), p, 300).value
        v2 = minimize_rate(ConstraintSpec("time-average", 2.0), p, 300).value
        # constraint is homogeneous of degree 4 in psi, the action of degree 2
        assert v2 == pytest.approx(math.sqrt(2.0) * v1, rel=1e-6)

    def test_weighted_point_mass(self):
        # all weight at t = T/2: the problem reduces to a terminal one on [0, T/2]
        n = 400
        w = np.zeros(n + 1)
        w[n // 2] = 1.0
        p = ModelParams(sigma=1.0, beta=0.3)
        r = minimize_rate(ConstraintSpec("weighted-average", 1.0, 1.0, w), p, n)
        assert r.value == pytest.approx(constant_cT(p, 0.5), rel=2e-3)

    def test_weighted_matches_time_average(self):
        n = 500
        w = np.full(n + 1, 1.0 / n)
        w[-1] = 0.0
        p = ModelParams(sigma=1.0, beta=-0.5)
        a = minimize_rate(ConstraintSpec("weighted-average", 1.0, 1.0, w), p, n).value
        b = minimize_rate(ConstraintSpec("time-average"), p, n).value
        assert a == pytest.approx(b, rel=1e-8)

    def test_json(self):
        r = minimize_rate(ConstraintSpec("terminal"), ModelParams(), 100)
        buf = io.StringIO()
        r.to_json(buf)
        d = json.loads(buf.getvalue())
        assert set(d) >= {"value", "converged", "iterations", "minimizer"}
        assert len(d["minimizer"]["values"]) == 101
        assert r.to_dict(inline=False, path_ref="m.csv")["minimizer"] == "m.csv"
