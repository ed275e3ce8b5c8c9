import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anchored_transfer.baseline import pca_truncate
from anchored_transfer.covmodel import (
    MAX_COHERENCE,
    CovSpec,
    evaluate_trial,
    generate_instance,
    sample_covariance,
)
from anchored_transfer.matcore import is_orthonormal, numerical_rank
from anchored_transfer.metrics import MethodEstimate, MetricsRecord


def test_identity_growth():
    spec = CovSpec(p1=6, p2=6, r1=2, delta_r=0, delta_s=0, s1=3)
    inst = generate_instance(spec, 0)
    np.testing.assert_array_equal(inst.sigma1, inst.sigma2)


@pytest.mark.parametrize("trial", range(4))
def test_instance_invariants(trial):
    spec = CovSpec()
    inst = generate_instance(spec, trial)
    for m in (inst.sigma1, inst.sigma2, inst.l2, inst.s2):
        np.testing.assert_array_equal(m, m.T)
    assert np.linalg.eigvalsh(inst.sigma2).min() >= -1e-10
    assert np.sum(np.linalg.eigvalsh(inst.l2) > 1e-10) == spec.r2
    assert numerical_rank(inst.l2, 1e-10) == spec.r2
    assert np.count_nonzero(inst.s2) == spec.s2
    assert np.count_nonzero(inst.s2 - np.diag(np.diag(inst.s2))) == 0
    assert np.max(np.abs(inst.l2 + inst.s2 - inst.sigma2)) <= 1e-12
    assert np.max(np.abs(inst.l1 + inst.s1 - inst.sigma1)) <= 1e-12
    innovation = inst.l2.copy()
    innovation[:10, :10] -= inst.l1
    assert numerical_rank(innovation, 1e-10) == spec.delta_r
    u_emb = inst.u2_true[:, :spec.r1]
    assert np.max(np.abs(u_emb.T @ innovation)) <= 1e-10
    assert "sparse_change_ok" in inst.meta
    assert is_orthonormal(inst.u2_true)
    assert inst.coherence <= MAX_COHERENCE


def test_instance_reproducible():
    a = generate_instance(CovSpec(master_seed=3), 5)
    b = generate_instance(CovSpec(master_seed=3), 5)
    assert a.sigma2.tobytes() == b.sigma2.tobytes()


def test_spec_validation():
    with pytest.raises(ValueError):
        CovSpec(p1=10, p2=8)
    with pytest.raises(ValueError):
        CovSpec(n2_grid=(50, 30))
    with pytest.raises(ValueError):
        CovSpec(p1=10, p2=12, delta_s=5)


def test_sample_zero_sigma():
    assert not sample_covariance(np.zeros((3, 3)), 10, 1).any()


def test_sample_exactly_symmetric():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 6))
    c = sample_covariance(a @ a.T, 17, 5)
    assert c.tobytes() == c.T.copy().tobytes()


def test_sample_law_of_large_numbers():
    c = sample_covariance(np.eye(2), 1_000_000, 12345)
    assert np.max(np.abs(c - np.eye(2))) < 0.01


def test_sample_unbiased():
    # per-entry variance of the sample covariance is (s_ii s_jj + s_ij^2) / n, at most 2/50
    # here; averaged over 200 seeds that gives a standard error of 0.0141, so 3 sigma is 0.042
    sigma = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, 0.3], [0.2, 0.3, 1.0]])
    mean = np.mean([sample_covariance(sigma, 50, s) for s in range(200)], axis=0)
    assert np.max(np.abs(mean - sigma)) <= 0.05


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_sample_psd(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((4, 4))
    assert np.linalg.eigvalsh(sample_covariance(a @ a.T, n, seed)).min() > -1e-9


def test_evaluate_perfect_and_zero():
    inst = generate_instance(CovSpec(), 0)
    recs = evaluate_trial(inst, {
        "transfer": MethodEstimate(inst.l2, inst.s2),
        "pca": MethodEstimate(np.zeros_like(inst.l2), np.zeros_like(inst.l2)),
    }, 30, 0)
    t, p = recs
    assert t.err_L_fro == 0 and t.err_S_fro == 0 and t.err_Theta_fro == 0
    assert t.sin_theta < 1e-12
    assert p.err_L_fro == pytest.approx(np.linalg.norm(inst.l2), rel=1e-15)


def test_pca_full_rank_noiseless():
    inst = generate_instance(CovSpec(), 1)
    full = pca_truncate(inst.sigma2, 50)
    rec = evaluate_trial(inst, {"pca": MethodEstimate(full, np.zeros_like(full))}, 30, 0)[0]
    assert rec.err_Theta_fro < 1e-10


def test_record_validation():
    with pytest.raises(ValueError):
        MetricsRecord("covariance", "other", 1, 0, 0.0, 0.0, 0.0, 0.0, 1, True)
    with pytest.raises(ValueError):
        MetricsRecord("covariance", "pca", 1, 0, -1.0, 0.0, 0.0, 0.0, 1, True)
