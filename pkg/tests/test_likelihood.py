import math
from statistics import NormalDist

import numpy as np
import pytest

from npmlmix import (
    CensorMask,
    CensoringDesign,
    Dataset,
    IdentityLocation,
    InvalidArgumentError,
    KernelMatrix,
    MixingMeasure,
    ModelSpec,
    NumericDomainError,
    Observation,
    PkExp,
    SieveBasis,
    SupportViolationError,
    TimeDesign,
    apply_censoring,
    build_kernel_matrix,
    build_sieve_kernel_matrix,
    conditional_log_density,
    contrast_value,
    kl_diagnostic,
    log_likelihood,
    log_likelihood_full,
    simulate_dataset,
)


def single_obs_dataset(spec, y, t):
    return Dataset(spec=spec, observations=(Observation(y, t),), seed=0)


class TestBuildKernelMatrix:
    def test_exact_fit_entry(self, location_spec):
        t = np.array([0.5, 1.5])
        mu = MixingMeasure(np.array([[1.0]]), [1.0])
        ds = single_obs_dataset(location_spec, np.array([1.0, 1.0]), t)
        km = build_kernel_matrix(ds, mu)
        expect = -(location_spec.n / 2) * math.log(2 * math.pi * location_spec.sigma**2)
        assert km.log_k[0, 0] == pytest.approx(expect)

    def test_duplicate_atoms_identical_columns(self, pk_spec, two_point_pk_truth):
        ds = simulate_dataset(pk_spec, two_point_pk_truth, 20, seed=1)
        mu = MixingMeasure(np.array([[1.0, 0.4], [1.0, 0.4]]), [0.5, 0.5])
        km = build_kernel_matrix(ds, mu)
        np.testing.assert_array_equal(km.log_k[:, 0], km.log_k[:, 1])

    def test_pk_entry_hand_value(self):
        spec = ModelSpec(p=2, n=1, sigma=1.0, f=PkExp(), time_design=TimeDesign(((0.5, 1.5),)))
        ds = single_obs_dataset(spec, np.array([1.0]), np.array([1.0]))
        km = build_kernel_matrix(ds, MixingMeasure(np.array([[1.0, 0.0]]), [1.0]))
        assert km.log_k[0, 0] == pytest.approx(-0.5 * math.log(2 * math.pi))
        assert km.log_k[0, 0] == pytest.approx(-0.918939, abs=1e-6)

    def test_matches_scalar_operation(self, pk_spec, two_point_pk_truth):
        ds = simulate_dataset(pk_spec, two_point_pk_truth, 7, seed=2)
        km = build_kernel_matrix(ds, two_point_pk_truth)
        for i, obs in enumerate(ds.observations):
            for j, atom in enumerate(two_point_pk_truth.atoms):
                assert km.log_k[i, j] == pytest.approx(
                    conditional_log_density(pk_spec, atom, obs), rel=1e-12
                )

    def test_censored_matches_scalar_operation(self, pk_spec, two_point_pk_truth):
        ds = simulate_dataset(pk_spec, two_point_pk_truth, 30, seed=3)
        design = CensoringDesign(
            ((CensorMask(4, (0, 2)), 0.4), (CensorMask.full(4), 0.4), (CensorMask.empty(4), 0.2))
        )
        censored = apply_censoring(ds, design, seed=4)
        km = build_kernel_matrix(censored, two_point_pk_truth)
        for i, obs in enumerate(censored.observations):
            for j, atom in enumerate(two_point_pk_truth.atoms):
                assert km.log_k[i, j] == pytest.approx(
                    conditional_log_density(pk_spec, atom, obs), rel=1e-12
                )

    def test_full_mask_censoring_equals_uncensored_exactly(self, pk_spec, two_point_pk_truth):
        ds = simulate_dataset(pk_spec, two_point_pk_truth, 25, seed=5)
        censored = apply_censoring(ds, CensoringDesign(((CensorMask.full(4), 1.0),)), seed=6)
        km_plain = build_kernel_matrix(ds, two_point_pk_truth)
        km_censored = build_kernel_matrix(censored, two_point_pk_truth)
        np.testing.assert_array_equal(km_plain.log_k, km_censored.log_k)

    def test_atom_outside_domain_rejected(self, location_spec, two_point_location_truth):
        ds = simulate_dataset(location_spec, two_point_location_truth, 5, seed=7)
        spec_pk = ModelSpec(
            p=2, n=2, sigma=0.5, f=PkExp(), time_design=location_spec.time_design
        )
        ds_pk = simulate_dataset(
            spec_pk, MixingMeasure(np.array([[1.0, 0.5]]), [1.0]), 5, seed=8
        )
        bad = MixingMeasure(np.array([[1.0, -600.0]]), [1.0])  # exp overflows
        with pytest.raises(InvalidArgumentError):
            build_kernel_matrix(ds_pk, bad)
        del ds

    def test_finite_entries_invariant(self):
        with pytest.raises(InvalidArgumentError):
            KernelMatrix(np.array([[0.0, -np.inf]]))


class TestSieveKernelMatrix:
    def test_uniform_cell_closed_form(self):
        # oracle: integral of the Gaussian kernel against the uniform density
        # on [a, b] is (Phi((y-a)/sigma) - Phi((y-b)/sigma)) / (b-a)
        spec = ModelSpec(
            p=1, n=1, sigma=0.5, f=IdentityLocation(), time_design=TimeDesign(((0.0, 1.0),))
        )
        ds = single_obs_dataset(spec, np.array([0.3]), np.array([0.5]))
        basis = SieveBasis([(0.0, 1.0)], [1])
        km = build_sieve_kernel_matrix(ds, basis, quad_points_per_cell=16)
        Phi = NormalDist().cdf
        exact = (Phi((0.3 - 0.0) / 0.5) - Phi((0.3 - 1.0) / 0.5)) / 1.0
        assert np.exp(km.log_k[0, 0]) == pytest.approx(exact, abs=1e-8)

    def test_point_like_cell_matches_discrete_entry(self):
        spec = ModelSpec(
            p=1, n=1, sigma=0.5, f=IdentityLocation(), time_design=TimeDesign(((0.0, 1.0),))
        )
        ds = single_obs_dataset(spec, np.array([0.4]), np.array([0.5]))
        h = 1e-6
        basis = SieveBasis([(0.7 - h / 2, 0.7 + h / 2)], [1])
        km_sieve = build_sieve_kernel_matrix(ds, basis, 8)
        km_disc = build_kernel_matrix(ds, MixingMeasure(np.array([[0.7]]), [1.0]))
        assert km_sieve.log_k[0, 0] == pytest.approx(km_disc.log_k[0, 0], abs=1e-4)

    def test_quadrature_converged(self, location_spec, two_point_location_truth):
        ds = simulate_dataset(location_spec, two_point_location_truth, 12, seed=9)
        basis = SieveBasis([(0.0, 2.5)], [9])
        km8 = build_sieve_kernel_matrix(ds, basis, 8)
        km16 = build_sieve_kernel_matrix(ds, basis, 16)
        assert np.max(np.abs(km8.log_k - km16.log_k)) < 1e-10

    def test_rejects_zero_quad_points(self, location_spec, two_point_location_truth):
        ds = simulate_dataset(location_spec, two_point_location_truth, 3, seed=10)
        with pytest.raises(InvalidArgumentError):
            build_sieve_kernel_matrix(ds, SieveBasis([(0.0, 2.5)], [3]), 0)

    def test_rejects_censored_dataset(self, pk_spec, two_point_pk_truth):
        ds = simulate_dataset(pk_spec, two_point_pk_truth, 5, seed=11)
        censored = apply_censoring(ds, CensoringDesign(((CensorMask.full(4), 1.0),)), 12)
        with pytest.raises(InvalidArgumentError):
            build_sieve_kernel_matrix(censored, SieveBasis([(0.5, 2.5), (0.1, 1.0)], [3, 3]), 4)


class TestLogLikelihood:
    def test_single_column_average(self):
        log_k = np.log(np.array([[2.0], [3.0], [0.5]]))
        km = KernelMatrix(log_k)
        assert log_likelihood(km, [1.0]) == pytest.approx(np.mean(log_k))

    def test_column_permutation_invariance(self):
        rng = np.random.default_rng(13)
        log_k = rng.normal(size=(6, 4))
        w = rng.exponential(size=4)
        w /= w.sum()
        perm = rng.permutation(4)
        a = log_likelihood(KernelMatrix(log_k), w)
        b = log_likelihood(KernelMatrix(log_k[:, perm]), w[perm])
        assert a == pytest.approx(b, abs=1e-12)

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(14)
        log_k = rng.normal(size=(9, 3))
        w = np.array([0.2, 0.5, 0.3])
        a = log_likelihood(KernelMatrix(log_k), w)
        b = log_likelihood(KernelMatrix(log_k[rng.permutation(9)]), w)
        assert a == pytest.approx(b, abs=1e-12)

    def test_hand_value(self):
        km = KernelMatrix(np.log(np.array([[2.0, 1.0]])))
        assert log_likelihood(km, [0.5, 0.5]) == pytest.approx(math.log(1.5))
        assert log_likelihood(km, [0.5, 0.5]) == pytest.approx(0.405465, abs=1e-6)

    def test_zero_weights_allowed_if_some_positive(self):
        km = KernelMatrix(np.log(np.array([[2.0, 1.0]])))
        assert log_likelihood(km, [1.0, 0.0]) == pytest.approx(math.log(2.0))

    def test_all_zero_weights_rejected(self):
        km = KernelMatrix(np.log(np.array([[2.0, 1.0]])))
        with pytest.raises(InvalidArgumentError):
            log_likelihood(km, [0.0, 0.0])

    def test_underflow_resistant(self):
        km = KernelMatrix(np.array([[-800.0, -810.0]]))
        value = log_likelihood(km, [0.5, 0.5])
        assert math.isfinite(value)
        assert value == pytest.approx(-800.0 + math.log(0.5 * (1 + math.exp(-10.0))))

    def test_concavity_in_weights(self):
        rng = np.random.default_rng(15)
        for _ in range(40):
            km = KernelMatrix(rng.normal(size=(rng.integers(1, 8), 5)))
            w1 = rng.exponential(size=5)
            w1 /= w1.sum()
            w2 = rng.exponential(size=5)
            w2 /= w2.sum()
            for lam in np.linspace(0.1, 0.9, 9):
                mixed = log_likelihood(km, lam * w1 + (1 - lam) * w2)
                assert mixed >= lam * log_likelihood(km, w1) + (1 - lam) * log_likelihood(
                    km, w2
                ) - 1e-10


class TestLogLikelihoodFull:
    def test_unit_box_design_equals_plain(self, two_point_location_truth):
        spec = ModelSpec(
            p=1,
            n=2,
            sigma=0.5,
            f=IdentityLocation(),
            time_design=TimeDesign(((0.0, 1.0), (1.0, 2.0))),
        )
        ds = simulate_dataset(spec, two_point_location_truth, 15, seed=16)
        km = build_kernel_matrix(ds, two_point_location_truth)
        w = two_point_location_truth.weights
        assert log_likelihood_full(ds, km, w) == pytest.approx(log_likelihood(km, w))

    def test_constant_shift(self, two_point_location_truth):
        spec = ModelSpec(
            p=1,
            n=2,
            sigma=0.5,
            f=IdentityLocation(),
            time_design=TimeDesign(((0.0, 2.0), (2.0, 3.0))),  # psi = 0.5 on the box
        )
        ds = simulate_dataset(spec, two_point_location_truth, 10, seed=17)
        km = build_kernel_matrix(ds, two_point_location_truth)
        w = two_point_location_truth.weights
        assert log_likelihood_full(ds, km, w) == pytest.approx(
            log_likelihood(km, w) + math.log(0.5)
        )

    def test_same_argmax(self, two_point_location_truth):
        spec = ModelSpec(
            p=1,
            n=2,
            sigma=0.5,
            f=IdentityLocation(),
            time_design=TimeDesign(((0.0, 2.0), (2.0, 3.0))),
        )
        ds = simulate_dataset(spec, two_point_location_truth, 30, seed=18)
        km = build_kernel_matrix(ds, two_point_location_truth)
        w1, w2 = np.array([0.7, 0.3]), np.array([0.2, 0.8])
        plain = [log_likelihood(km, w) for w in (w1, w2)]
        full = [log_likelihood_full(ds, km, w) for w in (w1, w2)]
        assert np.argmax(plain) == np.argmax(full)

    def test_support_violation(self, two_point_location_truth):
        spec = ModelSpec(
            p=1,
            n=1,
            sigma=0.5,
            f=IdentityLocation(),
            time_design=TimeDesign(((0.0, 1.0),)),
        )
        obs = Observation([1.0], [2.0])  # outside the design box
        ds = Dataset(spec=spec, observations=(obs,), seed=0)
        km = build_kernel_matrix(ds, two_point_location_truth)
        with pytest.raises(SupportViolationError):
            log_likelihood_full(ds, km, two_point_location_truth.weights)

    def test_censored_adds_mask_probabilities(self, pk_spec, two_point_pk_truth):
        ds = simulate_dataset(pk_spec, two_point_pk_truth, 20, seed=19)
        design = CensoringDesign(((CensorMask(4, (0, 1)), 0.25), (CensorMask.full(4), 0.75)))
        censored = apply_censoring(ds, design, seed=20)
        km = build_kernel_matrix(censored, two_point_pk_truth)
        w = two_point_pk_truth.weights
        log_p = np.mean(
            [math.log(design.probability_of(o.mask)) for o in censored.observations]
        )
        log_psi = np.mean(
            [math.log(pk_spec.time_design.density(o.t)) for o in censored.observations]
        )
        assert log_likelihood_full(censored, km, w) == pytest.approx(
            log_likelihood(km, w) + log_psi + log_p
        )


class TestContrastValue:
    def test_zero_at_equal_weights(self):
        rng = np.random.default_rng(21)
        km = KernelMatrix(rng.normal(size=(8, 3)))
        w = rng.exponential(size=3)
        w /= w.sum()
        for tag in ("log", "t-1", "1-1/t"):
            assert contrast_value(km, w, w, tag) == 0.0

    def test_scalar_values_at_ratio_two(self):
        km = KernelMatrix(np.log(np.array([[2.0, 1.0]])))
        w_mu, w_hat = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        assert contrast_value(km, w_mu, w_hat, "log") == pytest.approx(0.6931, abs=1e-4)
        assert contrast_value(km, w_mu, w_hat, "t-1") == pytest.approx(1.0)
        assert contrast_value(km, w_mu, w_hat, "1-1/t") == pytest.approx(0.5)

    def test_t_minus_1_is_mean_ratio_minus_one(self):
        rng = np.random.default_rng(22)
        km = KernelMatrix(rng.normal(size=(6, 3)))
        w_mu = np.array([0.2, 0.3, 0.5])
        w_hat = np.array([0.4, 0.4, 0.2])
        from npmlmix import row_log_mixture

        ratios = np.exp(row_log_mixture(km, w_mu) - row_log_mixture(km, w_hat))
        assert contrast_value(km, w_mu, w_hat, "t-1") == pytest.approx(np.mean(ratios) - 1.0)

    def test_unknown_tag_rejected(self):
        km = KernelMatrix(np.zeros((1, 1)))
        with pytest.raises(InvalidArgumentError):
            contrast_value(km, [1.0], [1.0], "sqrt")

    def test_overflowing_ratio_rejected(self):
        km = KernelMatrix(np.array([[800.0, -800.0]]))
        with pytest.raises(NumericDomainError):
            contrast_value(km, [1.0, 0.0], [0.0, 1.0], "t-1")


class TestKlDiagnostic:
    def test_zero_at_truth(self, location_spec, two_point_location_truth):
        value = kl_diagnostic(
            location_spec, two_point_location_truth, two_point_location_truth, 2000, seed=23
        )
        assert value == 0.0

    def test_nonnegative_up_to_mc_error(self, location_spec, two_point_location_truth):
        other = MixingMeasure(np.array([[0.5], [2.0]]), [0.5, 0.5])
        M = 20000
        value = kl_diagnostic(location_spec, two_point_location_truth, other, M, seed=24)
        assert value >= -4 / math.sqrt(M)

    def test_gaussian_closed_form(self):
        # oracle: KL between N(d, 1) and N(0, 1) is d^2 / 2
        spec = ModelSpec(
            p=1, n=1, sigma=1.0, f=IdentityLocation(), time_design=TimeDesign(((0.0, 1.0),))
        )
        truth = MixingMeasure(np.array([[1.0]]), [1.0])
        other = MixingMeasure(np.array([[0.0]]), [1.0])
        value = kl_diagnostic(spec, truth, other, 100000, seed=25)
        assert value == pytest.approx(0.5, abs=0.02)


class TestCensoredEdgeCases:
    def test_full_likelihood_requires_recorded_design(self, pk_spec, two_point_pk_truth):
        from npmlmix import CensoredObservation, Dataset

        ds = simulate_dataset(pk_spec, two_point_pk_truth, 5, seed=30)
        rows = tuple(
            CensoredObservation(o.y, o.t, CensorMask.full(4)) for o in ds.observations
        )
        bare = Dataset(spec=pk_spec, observations=rows, seed=0)
        km = build_kernel_matrix(bare, two_point_pk_truth)
        with pytest.raises(InvalidArgumentError):
            log_likelihood_full(bare, km, two_point_pk_truth.weights)

    def test_conditional_density_accepts_plain_tuple(self, pk_spec):
        import math

        from npmlmix import conditional_log_density, project_mask

        s = np.array([1.2, 0.4])
        t = np.array([0.3, 0.8, 1.3, 1.8])
        y = np.array([1.0, 0.9, 0.8, 0.7])
        mask = CensorMask(4, (1, 3))
        via_tuple = conditional_log_density(pk_spec, s, (project_mask(y, mask), t, mask))
        assert math.isfinite(via_tuple)
