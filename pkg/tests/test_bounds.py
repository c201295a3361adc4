import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from activecert.bounds import (
    BoundCertificate,
    GapInfo,
    ProblemParams,
    _rel_from_gamma,
    angle_certificate,
    bernstein_tail,
    estimate_nu,
    expectation_markov_bound,
    gamma,
    prior_work_samples,
    relative_error_bound,
    required_samples,
    sample_count_real,
    sample_size_certificate,
)
from activecert.errors import ArgumentError, DomainError
from activecert.sampling import builtin_linear, builtin_quadratic

mpmath.mp.dps = 40

A4 = np.diag([2.0, 1.0, 0.5, 0.25])


def params(smoothness=1.0, intdim=1.0, **kw):
    return ProblemParams(L=math.sqrt(smoothness), norm_E=1.0, intdim_E=intdim, **kw)


class TestProblemParams:
    @pytest.mark.parametrize(
        "kw",
        [
            dict(L=0.0, norm_E=1.0, intdim_E=1.0),
            dict(L=1.0, norm_E=2.0, intdim_E=1.0),
            dict(L=1.0, norm_E=1.0, intdim_E=0.5),
            dict(L=1.0, norm_E=1.0, intdim_E=1.0, delta=1.0),
            dict(L=1.0, norm_E=1.0, intdim_E=1.0, delta=4 / math.e),
            dict(L=1.0, norm_E=1.0, intdim_E=1.0, epsilon=1.0),
            dict(L=1.0, norm_E=1.0, intdim_E=1.0, n=0),
            dict(L=1.0, norm_E=1.0, intdim_E=1.0, n=2.5),
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(ArgumentError):
            ProblemParams(**kw)

    def test_from_function(self):
        p = ProblemParams.from_function(builtin_quadratic(A4))
        assert p.norm_E == pytest.approx(4 / 3, rel=1e-15)
        assert p.intdim_E == pytest.approx(1.328125, rel=1e-15)
        assert p.smoothness >= 1.0

    def test_missing_field(self):
        with pytest.raises(ArgumentError, match="delta"):
            relative_error_bound(params(n=10))


class TestBernsteinTail:
    def test_mpmath_value(self):
        cert = bernstein_tail(1.0, 3.0, 0.1, 2.0)
        oracle = 12 * mpmath.exp(-2 / (1 + mpmath.mpf("0.1") * 2 / 3))
        assert cert.intermediates["raw"] == pytest.approx(float(oracle), rel=1e-15)
        assert cert.value == 1.0
        assert cert.assumptions_ok

    def test_decays_monotonically(self):
        vals = [bernstein_tail(1.0, 1.0, 0.1, eps).intermediates["raw"] for eps in np.geomspace(2, 1e3, 60)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))
        finite = [v for v in vals if v > 0]
        assert all(b < a for a, b in zip(finite, finite[1:]))
        assert vals[-1] == 0.0

    def test_doubling_intdim(self):
        a = bernstein_tail(0.3, 2.0, 0.2, 1.5).intermediates["raw"]
        b = bernstein_tail(0.3, 4.0, 0.2, 1.5).intermediates["raw"]
        assert b == 2 * a

    def test_tolerance_violation_reported(self):
        cert = bernstein_tail(1.0, 1.0, 0.3, 0.5)
        assert not cert.assumptions_ok
        assert "sufficient tolerance" in cert.violations[0]

    @pytest.mark.parametrize("args", [(0.0, 1.0, 0.1, 1.0), (1.0, 1.0, 0.0, 1.0), (1.0, 1.0, 0.1, -1.0)])
    def test_argument_errors(self, args):
        with pytest.raises(ArgumentError):
            bernstein_tail(*args)


class TestRelativeErrorBound:
    def test_gamma_map_mpmath(self):
        oracle = mpmath.mpf(1) / 3 + mpmath.sqrt(19) / 3
        assert _rel_from_gamma(1 / 3) == pytest.approx(float(oracle), rel=1e-15)

    def test_large_n_limit(self):
        cert = relative_error_bound(params(n=10**12, delta=0.1))
        assert cert.intermediates["gamma"] < 1e-11
        assert cert.value < 1e-5

    def test_intermediates(self):
        p = ProblemParams(L=2.0, norm_E=1.5, intdim_E=3.0, n=100, delta=0.05)
        cert = relative_error_bound(p)
        im = cert.intermediates
        assert im["beta"] == 4.0 / 100
        assert im["norm_P"] == 4.0 * 1.5 / 100
        assert im["gamma"] == gamma(p)
        assert cert.value == pytest.approx(im["gamma"] + math.sqrt(im["gamma"] * (im["gamma"] + 6)), rel=1e-15)

    def test_strictly_decreasing_in_n(self):
        vals = [relative_error_bound(params(2.0, 10.0, n=n, delta=0.1)).value for n in range(1, 500)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_increasing_in_intdim_and_inverse_delta(self):
        base = relative_error_bound(params(2.0, 3.0, n=50, delta=0.1)).value
        assert relative_error_bound(params(2.0, 3.5, n=50, delta=0.1)).value > base
        assert relative_error_bound(params(2.0, 3.0, n=50, delta=0.05)).value > base

    def test_round_trip_through_bernstein(self):
        p = ProblemParams(L=1.7, norm_E=0.9, intdim_E=4.2, n=321, delta=0.03)
        cert = relative_error_bound(p)
        im = cert.intermediates
        tail = bernstein_tail(im["norm_P"], p.intdim_E, im["beta"], cert.value * p.norm_E)
        assert tail.intermediates["raw"] == pytest.approx(p.delta, rel=1e-9)
        assert tail.assumptions_ok

    def test_pure(self):
        p = params(3.0, 2.0, n=77, delta=0.2)
        assert relative_error_bound(p).to_json() == relative_error_bound(p).to_json()


class TestRequiredSamples:
    def test_example_177(self):
        oracle = mpmath.mpf(8) / (3 * mpmath.mpf("0.25")) * 2 * mpmath.log(4000)
        p = params(2.0, 10.0, epsilon=0.5, delta=0.01)
        assert required_samples(p) == int(mpmath.ceil(oracle)) == 177
        assert sample_count_real(p) == pytest.approx(float(oracle), rel=1e-14)

    def test_example_40(self):
        oracle = mpmath.mpf(32) / 3 * mpmath.log(40)
        assert required_samples(params(epsilon=0.5, delta=0.1)) == int(mpmath.ceil(oracle)) == 40

    def test_halving_epsilon_quadruples(self):
        a = sample_count_real(params(2.0, 5.0, epsilon=0.4, delta=0.1))
        b = sample_count_real(params(2.0, 5.0, epsilon=0.2, delta=0.1))
        assert b == pytest.approx(4 * a, rel=1e-15)

    def test_epsilon_one_rejected(self):
        with pytest.raises(ArgumentError):
            required_samples(params(epsilon=1.0, delta=0.1))

    @pytest.mark.parametrize("c", [0.25, 0.5, 2.0, 8.0, 1024.0])
    def test_scale_invariance(self, c):
        base = ProblemParams(L=1.5, norm_E=0.75, intdim_E=3.0, epsilon=0.3, delta=0.05)
        scaled = ProblemParams(L=1.5 * math.sqrt(c), norm_E=0.75 * c, intdim_E=3.0, epsilon=0.3, delta=0.05)
        assert required_samples(scaled) == required_samples(base)

    @settings(max_examples=200, deadline=None)
    @given(
        smooth=st.floats(1.0, 1e3),
        intdim=st.floats(1.0, 1e3),
        eps=st.floats(1e-3, 0.999),
        delta=st.floats(1e-12, 0.999),
    )
    def test_round_trip_property(self, smooth, intdim, eps, delta):
        p = params(smooth, intdim, epsilon=eps, delta=delta)
        n = required_samples(p)
        cert = relative_error_bound(p.replace(n=n, epsilon=None))
        assert cert.value <= eps
        assert cert.assumptions_ok

    def test_certificate(self):
        cert = sample_size_certificate(params(epsilon=0.5, delta=0.1))
        assert cert.kind == "sample_size" and cert.value == 40.0
        assert cert.intermediates["rel_bound_at_n"] <= 0.5


class TestAngleCertificate:
    def test_half_threshold(self):
        g = GapInfo(1, 1.0, 0.2)
        eps = g.gap / 8
        cert = angle_certificate(params(epsilon=eps, delta=0.1), g)
        assert cert.value == pytest.approx(0.5, rel=1e-15)
        assert cert.assumptions_ok

    def test_arithmetic_example(self):
        cert = angle_certificate(params(epsilon=0.05, delta=0.1), GapInfo(1, 1.0, 0.6))
        assert cert.value == pytest.approx(0.5, rel=1e-14)
        assert cert.intermediates["epsilon_threshold"] == pytest.approx(0.1, rel=1e-14)
        assert cert.assumptions_ok
        assert cert.intermediates["required_n"] == required_samples(params(epsilon=0.05, delta=0.1))

    def test_small_gap(self):
        cert = angle_certificate(params(epsilon=0.05, delta=0.1), GapInfo(1, 1.0, 1.0 - 1e-9))
        assert not cert.assumptions_ok
        assert math.isfinite(cert.value)

    @pytest.mark.parametrize("lam_k1", [1.0, 1.5])
    def test_no_gap(self, lam_k1):
        with pytest.raises(DomainError, match="dominant subspace undefined"):
            angle_certificate(params(epsilon=0.05, delta=0.1), GapInfo(1, 1.0, lam_k1))


class TestExpectationMarkov:
    def test_delta_halved(self):
        a = expectation_markov_bound(params(2.0, 10.0, n=100, delta=0.2)).value
        b = expectation_markov_bound(params(2.0, 10.0, n=100, delta=0.1)).value
        assert b == pytest.approx(2 * a, rel=1e-15)

    def test_worse_than_exponential_at_small_delta(self):
        p = params(2.0, 10.0, n=10_000, delta=1e-6)
        markov = expectation_markov_bound(p)
        rel = relative_error_bound(p)
        assert markov.value > rel.value * p.norm_E
        assert markov.assumptions_ok

    def test_theta_one(self):
        cert = expectation_markov_bound(params(1.0, math.e - 1, n=10, delta=0.5))
        assert cert.intermediates["theta"] == pytest.approx(1.0, rel=1e-15)
        assert not cert.assumptions_ok

    def test_formula_mpmath(self):
        p = ProblemParams(L=1.3, norm_E=0.8, intdim_E=5.0, n=250, delta=0.07)
        L2 = mpmath.mpf(1.3) ** 2
        beta = L2 / 250
        norm_P = L2 * mpmath.mpf(0.8) / 250
        theta = mpmath.log(6)
        oracle = mpmath.mpf(10) / 3 * (mpmath.sqrt(norm_P * theta) + beta * theta) / mpmath.mpf(0.07)
        assert expectation_markov_bound(p).value == pytest.approx(float(oracle), rel=1e-14)


class TestPriorWork:
    def test_example(self):
        cert = prior_work_samples(1.0, 1.0, 1.0, 0.1, 100)
        assert cert.value == pytest.approx(float(100 * mpmath.log(200)), rel=1e-14)
        assert cert.intermediates["branch_nu"] == pytest.approx(100.0, rel=1e-14)
        assert any("implied constant unknown" in n for n in cert.notes)

    def test_equal_branches(self):
        cert = prior_work_samples(1.0, 0.5, 1.0, 0.5, 10)
        assert cert.intermediates["branch_L"] == cert.intermediates["branch_nu"] == 2.0
        assert cert.value == 2.0 * math.log(20)

    @pytest.mark.parametrize("m", [1, 4, 100, 12345])
    def test_m_doubled(self, m):
        a = prior_work_samples(0.7, 0.3, 1.1, 0.2, m).value
        b = prior_work_samples(0.7, 0.3, 1.1, 0.2, 2 * m).value
        assert b / a == pytest.approx(math.log(4 * m) / math.log(2 * m), rel=1e-14)

    def test_negative_nu(self):
        with pytest.raises(ArgumentError):
            prior_work_samples(1.0, -1.0, 1.0, 0.1, 3)


class TestCertificateSerialization:
    def test_json_and_csv(self):
        cert = relative_error_bound(params(2.0, 3.0, n=10, delta=0.1))
        d = json.loads(cert.to_json())
        assert set(d) == {"kind", "value", "assumptions_ok", "assumptions", "intermediates", "notes"}
        assert d["value"] == cert.value
        assert len(cert.csv_header()) == len(cert.csv_row())
        assert float(cert.csv_row()[1]) == cert.value

    def test_unknown_kind(self):
        with pytest.raises(ArgumentError):
            BoundCertificate("nope", 1.0, {})


class TestNu:
    def test_linear_is_zero(self):
        est = estimate_nu(builtin_linear([1.0, -2.0, 3.0]), 1000, seed=1)
        assert est.value == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("c", [0.5, 2.0, 4.0])
    def test_fourth_power_scaling(self, c):
        base = estimate_nu(builtin_quadratic(A4), 20_000, seed=3).value
        scaled = estimate_nu(builtin_quadratic(c * A4), 20_000, seed=3).value
        assert scaled == pytest.approx(c**4 * base, rel=1e-12)

    def test_against_large_reference(self):
        f = builtin_quadratic(A4)
        est = estimate_nu(f, 100_000, seed=17)
        ref = estimate_nu(f, 1_000_000, seed=18)
        # Both runs are noisy; compare against the SE of their difference.
        assert abs(est.value - ref.value) <= 3 * math.hypot(est.stderr, ref.stderr)
        assert est.seed == 17 and est.n_ref == 100_000

    def test_requires_analytic_E(self):
        f = builtin_linear([1.0])
        from activecert.sampling import SampledFunction

        g = SampledFunction(1, f.gradient, f.sample_point, 1.0)
        with pytest.raises(ArgumentError):
            estimate_nu(g, 100, seed=0)
