import numpy as np
import pytest

from isingnet.baselines import (
    CovarianceMatrix,
    SingularCovarianceError,
    default_ridge,
    import_external_matrix,
    inverse_covariance_model,
    model_from_covariance,
    random_coupling_model,
    sample_covariance,
)
from isingnet.core import IsingModel, SampleBatch, exact_moments, random_model
from isingnet.sampler import MCConfig, sample_chain


class TestSampleCovariance:
    def test_hand_case(self):
        # two samples (0,0), (1,1): mean 0.5, unbiased covariance all 0.5
        batch = SampleBatch(samples=np.array([[0, 0], [1, 1]]))
        cov = sample_covariance(batch)
        assert np.allclose(cov.mean, [0.5, 0.5])
        assert np.allclose(cov.c, 0.5)

    def test_against_numpy_oracle(self):
        rng = np.random.default_rng(3)
        xs = rng.integers(0, 2, size=(200, 5))
        cov = sample_covariance(SampleBatch(samples=xs))
        assert np.allclose(cov.c, np.cov(xs.astype(float), rowvar=False), atol=1e-12)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            sample_covariance(SampleBatch(samples=np.array([[0, 1]])))

    def test_covariance_validation(self):
        with pytest.raises(ValueError, match="symmetric"):
            CovarianceMatrix(c=np.array([[1.0, 0.5], [0.2, 1.0]]),
                             mean=np.zeros(2))


class TestModelFromCovariance:
    def test_independent_spins_recovered(self):
        # independent spins with mean m: C diagonal, u = 0 after zeroing
        # the diagonal, and h = -logit(m)
        m = 0.3
        c = np.diag([m * (1 - m)] * 3)
        cov = CovarianceMatrix(c=c, mean=np.full(3, m))
        model = model_from_covariance(cov, ridge=0.0)
        assert np.allclose(model.u, 0.0)
        assert np.allclose(model.h, -np.log(m / (1 - m)))

    def test_singular_refused_with_sites(self):
        c = np.diag([0.25, 0.0, 0.25])
        cov = CovarianceMatrix(c=c, mean=np.array([0.5, 1.0, 0.5]))
        with pytest.raises(SingularCovarianceError) as err:
            model_from_covariance(cov, ridge=0.0)
        assert err.value.sites == [1]

    def test_small_ridge_consistent_with_zero(self):
        # well-conditioned covariance: tiny ridge barely moves the answer
        rng = np.random.default_rng(0)
        a = rng.normal(size=(4, 4))
        c = a @ a.T + 0.5 * np.eye(4)
        cov = CovarianceMatrix(c=c, mean=np.full(4, 0.4))
        m0 = model_from_covariance(cov, ridge=0.0)
        m1 = model_from_covariance(cov, ridge=1e-10)
        assert np.max(np.abs(m0.u - m1.u)) < 1e-8
        assert np.max(np.abs(m0.h - m1.h)) < 1e-8

    def test_negative_ridge_rejected(self):
        cov = CovarianceMatrix(c=np.eye(2), mean=np.full(2, 0.5))
        with pytest.raises(ValueError):
            model_from_covariance(cov, ridge=-1.0)

    def test_default_ridge_value(self):
        c = np.diag([1.0, 2.0, 3.0])
        assert default_ridge(c) == pytest.approx(1e-4 * 6.0 / 3.0)


class TestInverseCovarianceEstimator:
    def test_sign_convention_weak_coupling(self):
        # at high temperature the estimator recovers the effective
        # couplings of the generating model with the right sign
        truth = random_model(6, 0.3, 0.3, 0.3, 0.5, seed=2)
        batch = sample_chain(truth, MCConfig(burn_in_sweeps=500, seed=1), 50_000)
        est = inverse_covariance_model(batch)
        eh, eu = truth.effective_params()
        iu = np.triu_indices(6, k=1)
        r = np.corrcoef(est.u[iu], eu[iu])[0, 1]
        assert r > 0.8

    def test_provenance_recorded(self):
        truth = random_model(4, 0.5, 1.0, 1.0, 1.0, seed=0)
        batch = sample_chain(truth, MCConfig(burn_in_sweeps=50, seed=1), 500)
        est = inverse_covariance_model(batch)
        assert est.meta["source_batch_id"] == batch.batch_id
        assert est.beta == 1.0

    def test_exact_covariance_route_agrees(self):
        # feeding the enumeration-exact covariance through the same
        # formula matches the estimator run on its own covariance object
        truth = random_model(5, 0.3, 0.5, 0.5, 1.0, seed=3)
        mean, c = exact_moments(truth)
        cov = CovarianceMatrix(c=c, mean=mean)
        a = model_from_covariance(cov, ridge=1e-6)
        b = model_from_covariance(CovarianceMatrix(c=c.copy(), mean=mean.copy()),
                                  ridge=1e-6)
        assert np.array_equal(a.u, b.u)


class TestRandomCouplingModel:
    def test_multiset_preserved(self):
        ref = random_model(8, 0.4, 1.0, 1.0, 2.0, seed=1)
        null = random_coupling_model(ref, seed=0)
        iu = np.triu_indices(8, k=1)
        assert sorted(null.u[iu]) == pytest.approx(sorted(ref.u[iu]))
        assert sorted(null.h) == pytest.approx(sorted(ref.h))
        assert null.beta == ref.beta

    def test_actually_shuffles(self):
        ref = random_model(10, 0.0, 1.0, 1.0, 1.0, seed=2)
        null = random_coupling_model(ref, seed=0)
        iu = np.triu_indices(10, k=1)
        assert not np.array_equal(null.u[iu], ref.u[iu])

    def test_deterministic(self):
        ref = random_model(6, 0.3, 1.0, 1.0, 1.0, seed=5)
        a = random_coupling_model(ref, seed=9)
        b = random_coupling_model(ref, seed=9)
        assert np.array_equal(a.u, b.u)
        assert np.array_equal(a.h, b.h)

    def test_symmetry_invariant(self):
        ref = random_model(7, 0.3, 1.0, 1.0, 1.0, seed=6)
        null = random_coupling_model(ref, seed=1)
        assert np.array_equal(null.u, null.u.T)
        assert np.all(np.diag(null.u) == 0.0)


class TestImportExternalMatrix:
    def test_round_trip(self, tmp_path):
        mat = np.arange(9, dtype=float).reshape(3, 3)
        path = tmp_path / "mat.txt"
        np.savetxt(path, mat)
        assert np.allclose(import_external_matrix(str(path)), mat)

    def test_rejects_non_square(self, tmp_path):
        path = tmp_path / "mat.txt"
        np.savetxt(path, np.ones((2, 3)))
        with pytest.raises(ValueError, match="square"):
            import_external_matrix(str(path))
