import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anchored_transfer.baseline import altproj_lowrank_sparse, pca_truncate
from anchored_transfer.matcore import full_svd
from anchored_transfer.project import AnchoredBasis
from anchored_transfer.transfer import TransferConfig, transfer_altproj


def test_rank_one_input():
    y = np.outer([1.0, 2.0, 3.0], [1.0, -1.0])
    res = altproj_lowrank_sparse(y, 1, 0)
    assert np.max(np.abs(res.l_hat - y)) < 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_noiseless_recovery(seed):
    rng = np.random.default_rng(seed)
    # flat (incoherent) factors and well-separated spikes
    u, _ = np.linalg.qr(rng.standard_normal((30, 2)))
    l = (u * [10.0, 8.0]) @ u.T
    s = np.zeros((30, 30))
    idx = rng.choice(900, 4, replace=False)
    s.ravel()[idx] = rng.choice([-1.0, 1.0], 4) * rng.uniform(2.0, 4.0, 4)
    res = altproj_lowrank_sparse(l + s, 2, 4)
    assert np.linalg.norm(res.l_hat - l) < 1e-6
    assert np.linalg.norm(res.s_hat - s) < 1e-6


def test_zero_input():
    res = altproj_lowrank_sparse(np.zeros((4, 4)), 2, 3)
    assert not res.l_hat.any() and not res.s_hat.any()


def test_full_rank():
    y = np.random.default_rng(1).standard_normal((4, 3))
    assert np.max(np.abs(altproj_lowrank_sparse(y, 3, 0).l_hat - y)) < 1e-8
    assert np.max(np.abs(pca_truncate(y, 3) - y)) < 1e-8


def test_pca_diagonal():
    np.testing.assert_allclose(pca_truncate(np.diag([5.0, 3.0, 1.0]), 2), np.diag([5.0, 3.0, 0.0]), atol=1e-15)


def test_pca_zero():
    assert not pca_truncate(np.zeros((3, 3)), 2).any()


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.integers(0, 4))
def test_pca_eckart_young(seed, rank):
    y = np.random.default_rng(seed).standard_normal((5, 4))
    s = full_svd(y).s
    err = np.linalg.norm(y - pca_truncate(y, rank))
    assert err == pytest.approx(np.sqrt(np.sum(s[rank:] ** 2)), abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(0, 6))
def test_bitwise_identity_with_empty_anchor_transfer(seed, rank, sparsity):
    y = np.random.default_rng(seed).standard_normal((8, 7))
    base = altproj_lowrank_sparse(y, rank, sparsity)
    tr = transfer_altproj(y, AnchoredBasis.empty(8, 7, rank), np.zeros((8, 7)), TransferConfig(rank, sparsity))
    assert base.l_hat.tobytes() == tr.l_hat2.value.tobytes()
    assert base.s_hat.tobytes() == tr.s_hat2.tobytes()
    assert base.iterations == tr.iterations


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_one_iteration_without_sparsity_is_pca(seed, rank):
    y = np.random.default_rng(seed).standard_normal((6, 5))
    res = altproj_lowrank_sparse(y, rank, 0, max_iterations=1)
    np.testing.assert_allclose(res.l_hat, pca_truncate(y, rank), atol=1e-12)
