import math

import numpy as np
import pytest

from sparsekaf import (
    CriterionConfig,
    Dictionary,
    Kernel,
    NormRange,
    condition_number_bound,
    eigen_bounds,
    eigensolve,
    gersgorin_intervals,
    isometry_constant,
    lin_indep_condition,
    spectral_report,
    verify_isometry,
)
from sparsekaf.harness import verification_exit_code
from sparsekaf.spectral import gersgorin_margin

UNIT = NormRange(1.0, 1.0, source="analytic")
KINDS = ("distance", "approximation", "coherence", "babel")


def build_gaussian_dict(kind, threshold, seed, sigma=1.0, max_atoms=None, n=200, spread=3.0, dim=2):
    d = Dictionary(Kernel.gaussian(sigma), CriterionConfig(kind, threshold, max_atoms=max_atoms))
    rng = np.random.default_rng(seed)
    for x in rng.uniform(-spread, spread, size=(n, dim)):
        d.admit(x)
    return d


class TestEigensolve:
    def test_identity(self):
        spec = eigensolve(np.eye(3))
        np.testing.assert_array_equal(spec.values, [1.0, 1.0, 1.0])

    def test_two_by_two_closed_form(self):
        # oracle: eigenvalues of [[1,c],[c,1]] are 1 +- c
        spec = eigensolve([[1.0, 0.5], [0.5, 1.0]])
        np.testing.assert_allclose(spec.values, [1.5, 0.5], atol=1e-14)

    def test_diagonal(self):
        spec = eigensolve(np.diag([4.0, 2.0, 1.0]))
        np.testing.assert_array_equal(spec.values, [4.0, 2.0, 1.0])

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            eigensolve([[1.0, 0.1], [0.0, 1.0]])
        with pytest.raises(ValueError, match="square"):
            eigensolve(np.zeros((2, 3)))

    @pytest.mark.parametrize("seed", range(4))
    def test_invariants_on_random_psd(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 40))
        a = rng.standard_normal((m, m))
        gram = a @ a.T / m
        gram = 0.5 * (gram + gram.T)
        spec = eigensolve(gram)
        fro = np.linalg.norm(gram)
        recon = spec.vectors @ np.diag(spec.values) @ spec.vectors.T
        assert np.linalg.norm(gram - recon) <= 1e-9 * fro
        assert abs(spec.values.sum() - np.trace(gram)) <= 1e-9 * max(abs(np.trace(gram)), 1.0)
        assert spec.values[-1] >= -1e-10
        assert np.all(np.diff(spec.values) <= 0)
        # independent oracle
        np.testing.assert_allclose(spec.values, np.linalg.eigvalsh(gram)[::-1], atol=1e-10)
        assert np.linalg.norm(spec.vectors.T @ spec.vectors - np.eye(m)) <= 1e-10 * m

    def test_deterministic(self):
        gram = np.array([[2.0, 0.3, 0.1], [0.3, 1.0, -0.2], [0.1, -0.2, 0.5]])
        s1, s2 = eigensolve(gram), eigensolve(gram)
        np.testing.assert_array_equal(s1.values, s2.values)
        np.testing.assert_array_equal(s1.vectors, s2.vectors)


class TestGersgorin:
    def test_identity_discs(self):
        assert gersgorin_intervals(np.eye(3)) == [(1.0, 0.0)] * 3

    def test_two_by_two(self):
        discs = gersgorin_intervals([[1.0, 0.5], [0.5, 1.0]])
        assert discs == [(1.0, 0.5), (1.0, 0.5)]
        # eigenvalues 0.5 and 1.5 are exactly the disc endpoints
        for lam in (0.5, 1.5):
            assert gersgorin_margin(np.array([[1.0, 0.5], [0.5, 1.0]]), lam) == 0.0

    @pytest.mark.parametrize("seed", range(3))
    def test_union_covers_spectrum(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 25))
        a = rng.standard_normal((m, m))
        gram = a @ a.T / m + np.diag(rng.uniform(0.5, 2.0, m))
        gram = 0.5 * (gram + gram.T)
        for lam in eigensolve(gram).values:
            assert gersgorin_margin(gram, lam) <= 1e-9


class TestEigenBounds:
    def test_coherence_unit_norm(self):
        assert eigen_bounds("coherence", 0.5, 2, UNIT) == (0.5, 1.5)

    def test_approximation_orthonormal_limit(self):
        assert eigen_bounds("approximation", 1.0, 5, UNIT) == (1.0, 1.0)

    def test_babel_unit_norm(self):
        lo, hi = eigen_bounds("babel", 0.3, 7, UNIT)
        assert (lo, hi) == pytest.approx((0.7, 1.3), abs=1e-15)

    def test_distance_unit_norm(self):
        # oracle: 1 -+ (m-1) sqrt(1-delta^2)
        lo, hi = eigen_bounds("distance", 0.8, 3, UNIT)
        root = math.sqrt(1.0 - 0.64)
        assert lo == pytest.approx(1.0 - 2 * root, abs=1e-15)
        assert hi == pytest.approx(1.0 + 2 * root, abs=1e-15)

    def test_distance_delta_exceeding_R_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            eigen_bounds("distance", 1.5, 2, UNIT)

    def test_general_norm_range(self):
        nr = NormRange(0.8, 1.2)
        lo, hi = eigen_bounds("coherence", 0.1, 3, nr)
        assert lo == pytest.approx(0.8 - 2 * 0.1 * 1.2, abs=1e-15)
        assert hi == pytest.approx(1.2 + 2 * 0.1 * 1.2, abs=1e-15)

    def test_negative_lower_reported_as_is(self):
        lo, _ = eigen_bounds("coherence", 0.9, 10, UNIT)
        assert lo < 0.0  # vacuous, not clamped

    def test_argument_validation(self):
        with pytest.raises(ValueError):
            eigen_bounds("coherence", 1.2, 2, UNIT)
        with pytest.raises(ValueError):
            eigen_bounds("spark", 0.5, 2, UNIT)
        with pytest.raises(ValueError):
            eigen_bounds("babel", 0.5, 0, UNIT)


class TestLinIndepCondition:
    def test_coherence_example(self):
        assert lin_indep_condition("coherence", 0.4, 3, UNIT)  # 0.8 < 1
        assert not lin_indep_condition("coherence", 0.5, 3, UNIT)  # 1.0 < 1 fails

    def test_approximation_boundary(self):
        assert not lin_indep_condition("approximation", 0.0, 4, UNIT)
        assert lin_indep_condition("approximation", 1e-6, 4, UNIT)

    def test_babel_unit_boundary(self):
        assert not lin_indep_condition("babel", 1.0, 4, UNIT)
        assert lin_indep_condition("babel", 0.99, 4, UNIT)

    def test_distance(self):
        # (m-1) R sqrt(R^2 - delta^2) < r^2
        assert lin_indep_condition("distance", math.sqrt(1 - 0.2**2), 3, UNIT)
        assert not lin_indep_condition("distance", 0.1, 30, UNIT)

    def test_true_implies_positive_lower_bound(self):
        nr = NormRange(0.7, 1.5)
        for kind, theta, m in (
            ("distance", 1.2, 3), ("coherence", 0.2, 2), ("babel", 0.5, 6),
        ):
            if lin_indep_condition(kind, theta, m, nr):
                assert eigen_bounds(kind, theta, m, nr)[0] > 0.0


class TestConditionNumberBound:
    def test_coherence_m2(self):
        assert condition_number_bound("coherence", 0.5, 2, UNIT) == pytest.approx(3.0, abs=1e-15)

    def test_approximation_orthonormal(self):
        assert condition_number_bound("approximation", 1.0, 4, UNIT) == pytest.approx(1.0, abs=1e-15)

    def test_babel(self):
        assert condition_number_bound("babel", 0.3, 5, UNIT) == pytest.approx(13.0 / 7.0, rel=1e-14)

    def test_vacuous_denominator_gives_inf(self):
        assert condition_number_bound("coherence", 0.9, 10, UNIT) == math.inf
        assert condition_number_bound("approximation", 0.0, 3, UNIT) == math.inf

    def test_equals_upper_over_lower(self):
        nr = NormRange(0.9, 1.3)
        for kind, theta in (("distance", 1.0), ("approximation", 0.6), ("coherence", 0.15), ("babel", 0.4)):
            lo, hi = eigen_bounds(kind, theta, 4, nr)
            if lo > 0:
                assert condition_number_bound(kind, theta, 4, nr) == pytest.approx(hi / lo, rel=1e-12)


class TestIsometryConstant:
    def test_unit_norm_closed_forms(self):
        # oracle: nu = (m-1)sqrt(1-d^2), 1-d^2, (m-1)g, g
        nu, s = isometry_constant("coherence", 0.2, 4, UNIT)
        assert nu == pytest.approx(0.6, abs=1e-15)
        assert s == 1.0
        nu, s = isometry_constant("approximation", 1.0, 3, UNIT)
        assert nu == 0.0 and s == 1.0
        nu, _ = isometry_constant("distance", 0.6, 3, UNIT)
        assert nu == pytest.approx(2 * math.sqrt(1 - 0.36), rel=1e-14)
        nu, _ = isometry_constant("babel", 0.35, 9, UNIT)
        assert nu == pytest.approx(0.35, abs=1e-15)

    def test_general_babel_formula(self):
        # oracle: (R^2 - r^2 + 2 gamma) / (R^2 + r^2)
        nu, s = isometry_constant("babel", 0.1, 5, NormRange(0.8, 1.2))
        assert nu == pytest.approx(0.3, abs=1e-14)
        assert s == pytest.approx(1.0, abs=1e-15)  # bounds already symmetric about 1

    def test_general_closed_forms_match_bound_midpoints(self):
        nr = NormRange(1.0, 2.0)
        m = 4
        # distance: (R^2-r^2+2(m-1)R sqrt(R^2-delta^2))/(R^2+r^2)
        delta = 1.1
        nu, s = isometry_constant("distance", delta, m, nr)
        expect = (2.0 - 1.0 + 2 * (m - 1) * math.sqrt(2.0) * math.sqrt(2.0 - delta**2)) / 3.0
        assert nu == pytest.approx(expect, rel=1e-13)
        # coherence: (R^2-r^2+2(m-1) g R^2)/(R^2+r^2)
        nu, _ = isometry_constant("coherence", 0.15, m, nr)
        assert nu == pytest.approx((1.0 + 2 * 3 * 0.15 * 2.0) / 3.0, rel=1e-13)
        # approximation: 1 - delta^2/R^2
        nu, s = isometry_constant("approximation", 0.9, m, nr)
        assert nu == pytest.approx(1.0 - 0.81 / 2.0, rel=1e-13)
        assert s == pytest.approx(math.sqrt(2.0), rel=1e-15)  # sqrt((u+l)/2) = R

    def test_rescale_factor_centers_bounds(self):
        nr = NormRange(1.0, 2.0)
        lo, hi = eigen_bounds("babel", 0.5, 5, nr)
        nu, s = isometry_constant("babel", 0.5, 5, nr)
        assert lo / s**2 == pytest.approx(1.0 - nu, rel=1e-13)
        assert hi / s**2 == pytest.approx(1.0 + nu, rel=1e-13)


class TestVerifyIsometry:
    def test_orthonormal_total_isometry(self):
        d = Dictionary.from_atoms(Kernel.linear(), CriterionConfig("coherence", 1.0), np.eye(4))
        lo, hi, dev = verify_isometry(d, trials=500, rng_seed=1)
        assert lo == pytest.approx(1.0, abs=1e-12)
        assert hi == pytest.approx(1.0, abs=1e-12)
        assert dev == pytest.approx(0.0, abs=1e-12)

    def test_two_atom_extremes(self):
        c = 0.5
        atoms = [[1.0, 0.0, 0.0], [c, math.sqrt(1 - c * c), 0.0]]
        d = Dictionary.from_atoms(Kernel.linear(), CriterionConfig("coherence", 1.0), atoms)
        gram = d.gram
        # oracles: alpha=(1,-1) has ratio 1-c; (e1, e2) pair has deviation c
        alpha = np.array([1.0, -1.0])
        assert alpha @ gram @ alpha / (alpha @ alpha) == pytest.approx(1 - c, abs=1e-12)
        e1, e2 = np.eye(2)
        assert abs(e1 @ (gram - np.eye(2)) @ e2) == pytest.approx(c, abs=1e-12)
        lo, hi, dev = verify_isometry(d, trials=10_000, rng_seed=0)
        assert 1 - c - 1e-9 <= lo <= 1 - c + 0.01
        assert 1 + c - 0.01 <= hi <= 1 + c + 1e-9
        assert c - 0.01 <= dev <= c + 1e-9

    def test_rescale_factor_divides_ratios(self):
        d = Dictionary.from_atoms(Kernel.linear(), CriterionConfig("babel", 2.0), 2.0 * np.eye(3))
        lo, hi, dev = verify_isometry(d, trials=100, rng_seed=3, rescale_factor=2.0)
        assert lo == pytest.approx(1.0, abs=1e-12)  # gram = 4 I, rescaled to I
        assert hi == pytest.approx(1.0, abs=1e-12)
        assert dev == pytest.approx(0.0, abs=1e-12)

    def test_deterministic_given_seed(self):
        d = build_gaussian_dict("coherence", 0.6, seed=4, n=60)
        assert verify_isometry(d, 300, rng_seed=9) == verify_isometry(d, 300, rng_seed=9)

    def test_empty_rejected(self):
        d = Dictionary(Kernel.gaussian(1.0), CriterionConfig("coherence", 0.5))
        with pytest.raises(ValueError):
            verify_isometry(d, trials=10)


SOUND_KINDS = ("distance", "coherence", "babel")


class TestContainmentProperties:
    @pytest.mark.parametrize("kind,threshold,seed", [
        ("distance", 0.5, 0), ("distance", 0.9, 1),
        ("approximation", 0.4, 2), ("approximation", 0.7, 3),
        ("coherence", 0.3, 4), ("coherence", 0.8, 5),
        ("babel", 0.6, 6), ("babel", 1.5, 7),
    ])
    def test_sound_bounds_contain_spectrum(self, kind, threshold, seed):
        d = build_gaussian_dict(kind, threshold, seed, sigma=0.8, max_atoms=50)
        assert d.m >= 2
        spec = eigensolve(d.gram)
        nr = NormRange(1.0, 1.0, source="analytic")
        for check_kind in SOUND_KINDS:
            value = d.measure(check_kind)
            lo, hi = eigen_bounds(check_kind, value, d.m, nr)
            assert spec.values[-1] >= lo - 1e-9, check_kind
            assert spec.values[0] <= hi + 1e-9, check_kind
            bound = condition_number_bound(check_kind, value, d.m, nr)
            if math.isfinite(bound) and spec.values[-1] > 0:
                assert spec.values[0] / spec.values[-1] <= bound * (1 + 1e-9), check_kind

    def test_approximation_window_is_not_a_bound(self):
        # two unit-norm atoms with correlation c: spectrum {1-c, 1+c} vs
        # window [1-c^2, 1+c^2]; the report must detect the escape
        c = 0.5
        atoms = [[1.0, 0.0], [c, math.sqrt(1 - c * c)]]
        d = Dictionary.from_atoms(Kernel.linear(), CriterionConfig("approximation", 0.1), atoms)
        value = d.measure("approximation")
        assert value == pytest.approx(math.sqrt(1 - c * c), abs=1e-12)
        lo, hi = eigen_bounds("approximation", value, 2, UNIT)
        spec = eigensolve(d.gram)
        assert spec.values[-1] < lo - 1e-3  # escapes by a wide margin
        assert spec.values[0] > hi + 1e-3
        report = spectral_report(d, trials=100)
        names = {name for name, _ in report.violations}
        assert "approximation:eigen_lower" in names
        assert "approximation:eigen_upper" in names
        assert not any(n.startswith(("distance", "coherence", "babel", "gersgorin")) for n in names)
        assert verification_exit_code(report) == 0  # informational, not a failure

    @pytest.mark.parametrize("seed", range(3))
    def test_rayleigh_sandwich(self, seed):
        d = build_gaussian_dict("coherence", 0.7, seed=seed + 20, n=80)
        spec = eigensolve(d.gram)
        rng = np.random.default_rng(seed)
        for _ in range(50):
            alpha = rng.standard_normal(d.m)
            ratio = alpha @ d.gram @ alpha / (alpha @ alpha)
            assert spec.values[-1] - 1e-9 <= ratio <= spec.values[0] + 1e-9

    @pytest.mark.parametrize("kind,threshold,seed", [
        ("coherence", 0.2, 0), ("babel", 0.4, 1), ("distance", 0.95, 2), ("approximation", 0.5, 3),
    ])
    def test_lin_indep_certificate(self, kind, threshold, seed):
        d = build_gaussian_dict(kind, threshold, seed + 40, max_atoms=4)
        assert d.m >= 2
        nr = NormRange(1.0, 1.0, source="analytic")
        value = d.measure(kind)
        spec = eigensolve(d.gram)
        if lin_indep_condition(kind, value, d.m, nr):
            assert spec.values[-1] > 1e-12
            rng = np.random.default_rng(seed)
            for _ in range(20):
                xi = rng.standard_normal(d.m)
                assert xi @ d.gram @ xi >= (spec.values[-1] - 1e-9) * (xi @ xi)

    def test_spectral_shift_eigenpairs(self):
        d = build_gaussian_dict("coherence", 0.6, seed=77, n=60)
        spec = eigensolve(d.gram)
        shifted = eigensolve(d.gram - np.eye(d.m))
        np.testing.assert_allclose(shifted.values, spec.values - 1.0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(2))
    def test_quasi_isometry_containment_sound_kinds(self, seed):
        d = build_gaussian_dict("coherence", 0.5, seed=seed + 60, n=100)
        nr = NormRange(1.0, 1.0, source="analytic")
        for kind in SOUND_KINDS:
            value = d.measure(kind)
            nu, s = isometry_constant(kind, value, d.m, nr)
            lo, hi, dev = verify_isometry(d, trials=2000, rng_seed=seed, rescale_factor=s)
            assert lo >= 1 - nu - 1e-9
            assert hi <= 1 + nu + 1e-9
            assert dev <= nu + 1e-9


class TestSpectralReport:
    def test_coherence_run_is_clean(self):
        d = build_gaussian_dict("coherence", 0.5, seed=2, n=150)
        report = spectral_report(d, trials=2000, rng_seed=0)
        assert [bs.measure_kind for bs in report.per_measure] == list(KINDS)
        assert verification_exit_code(report) == 0
        sound = {n for n, _ in report.violations if n.split(":")[0] in SOUND_KINDS}
        assert not sound
        coh = report.per_measure[2]
        assert coh.measure_value <= 0.5 + 1e-12
        assert not coh.vacuous_lower or d.m * 0.5 >= 1  # vacuous only for large m

    def test_babel_drift_is_flag_only(self):
        rng = np.random.default_rng(8)
        d = Dictionary(Kernel.gaussian(1.0), CriterionConfig("babel", 0.8))
        for x in rng.uniform(-4, 4, size=(400, 2)):
            d.admit(x)
        report = spectral_report(d, trials=500)
        if d.measure("babel") > 0.8 + 1e-9:
            assert ("babel:admission_threshold" in {n for n, _ in report.violations})
        assert verification_exit_code(report) == 0

    def test_duplicate_direction_dictionary_vacuous_not_violated(self):
        d = Dictionary.from_atoms(
            Kernel.linear(), CriterionConfig("coherence", 1.0), [[1.0, 0.0], [2.0, 0.0]]
        )
        report = spectral_report(d, trials=200)
        coh = report.per_measure[2]
        assert coh.measure_value == pytest.approx(1.0, abs=1e-12)
        assert coh.vacuous_lower
        assert coh.cond_number_bound == math.inf
        assert report.spectrum.cond == math.inf
        assert verification_exit_code(report) == 0
        # approximation measure unavailable (singular sub-gram is fine here:
        # removing either atom leaves a 1x1 system) -> row may be nan or real
        csv = report.to_csv()
        assert csv.startswith("kind,measure,lower,upper,lambda_min,lambda_max,cond,cond_bound,nu,")

    def test_single_atom_report(self):
        d = build_gaussian_dict("coherence", 0.5, seed=3, n=1)
        assert d.m == 1
        report = spectral_report(d, trials=50)
        by_kind = {bs.measure_kind: bs for bs in report.per_measure}
        assert math.isnan(by_kind["coherence"].measure_value)
        assert by_kind["babel"].measure_value == 0.0
        assert verification_exit_code(report) == 0

    def test_csv_schema_and_round_trip(self):
        d = build_gaussian_dict("coherence", 0.5, seed=2, n=60)
        report = spectral_report(d, trials=100, rng_seed=5)
        lines = report.to_csv().strip().split("\n")
        assert lines[0] == (
            "kind,measure,lower,upper,lambda_min,lambda_max,cond,cond_bound,nu,"
            "worst_ratio_low,worst_ratio_high,worst_ip_dev,violated"
        )
        assert len(lines) == 5
        for line in lines[1:]:
            fields = line.split(",")
            assert fields[0] in KINDS
            for value in fields[1:-1]:
                float(value)  # parses (nan/inf included)
            assert fields[-1] in ("0", "1")

    def test_empty_dictionary_rejected(self):
        d = Dictionary(Kernel.gaussian(1.0), CriterionConfig("coherence", 0.5))
        with pytest.raises(ValueError):
            spectral_report(d)
