"""Tests for the overlapping decomposition layouts and transfer operators."""

import numpy as np
import pytest

from raspen.decomposition import (
    build_1d_layout,
    build_2d_layout,
    coarse_prolong,
    coarse_restrict_mean,
    coarse_restrict_sum,
    prolong,
    restrict,
    restricted_prolong,
)


def test_1d_blocks_no_overlap():
    lay = build_1d_layout(9, 3, 0)
    assert [s.owned.tolist() for s in lay.subdomains] == [
        [0, 1, 2],
        [3, 4, 5],
        [6, 7, 8],
    ]
    for s in lay.subdomains:
        assert s.overlap.tolist() == s.owned.tolist()
        assert s.owned_local.tolist() == [0, 1, 2]


def test_1d_blocks_one_layer():
    lay = build_1d_layout(9, 3, 1)
    assert lay.subdomains[0].overlap.tolist() == [0, 1, 2, 3]
    assert lay.subdomains[1].overlap.tolist() == [2, 3, 4, 5, 6]
    assert lay.subdomains[2].overlap.tolist() == [5, 6, 7, 8]
    assert lay.subdomains[1].owned_local.tolist() == [1, 2, 3]
    # owned blocks still partition the cells
    allowned = np.concatenate([s.owned for s in lay.subdomains])
    assert sorted(allowned.tolist()) == list(range(9))


def test_1d_uneven_blocks():
    lay = build_1d_layout(10, 3, 1)
    sizes = [len(s.owned) for s in lay.subdomains]
    assert sizes == [4, 3, 3]
    assert sum(sizes) == 10


def test_1d_rejects_swallowing_overlap():
    with pytest.raises(ValueError):
        build_1d_layout(9, 3, 4)
    with pytest.raises(ValueError):
        build_1d_layout(12, 4, 5)
    # an overlap may reach exactly to a neighbour's far edge
    build_1d_layout(9, 3, 3)
    # single subdomain has no neighbours to swallow
    build_1d_layout(5, 1, 4)


def test_2d_layout_enumeration():
    lay = build_2d_layout(8, 8, 2, 1)
    assert lay.n_subdomains == 4
    # subdomain 0 owns the lower-left 4x4 block, row-major cell ids
    s0 = lay.subdomains[0]
    expect = [j * 8 + i for j in range(4) for i in range(4)]
    assert s0.owned.tolist() == expect
    # its overlap is the 5x5 block (clipped at the boundary on two sides)
    expect = [j * 8 + i for j in range(5) for i in range(5)]
    assert s0.overlap.tolist() == expect
    # subdomain 3 (top-right) overlap extends down and left
    s3 = lay.subdomains[3]
    expect = [j * 8 + i for j in range(3, 8) for i in range(3, 8)]
    assert s3.overlap.tolist() == expect


def test_2d_rejects_bad_shapes():
    with pytest.raises(ValueError):
        build_2d_layout(9, 8, 2, 1)
    with pytest.raises(ValueError):
        build_2d_layout(8, 8, 2, 5)


@pytest.mark.parametrize(
    "M,I,k",
    [(9, 3, 0), (9, 3, 1), (10, 3, 2), (100, 8, 3), (60, 10, 1)],
)
def test_partition_of_unity_1d(M, I, k):
    lay = build_1d_layout(M, I, k)
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = rng.standard_normal(M)
        acc = np.zeros(M)
        for i in range(I):
            acc += restricted_prolong(lay, i, restrict(lay, i, v))
        assert np.array_equal(acc, v)


@pytest.mark.parametrize("N,k", [(2, 1), (4, 1), (2, 2)])
def test_partition_of_unity_2d(N, k):
    lay = build_2d_layout(16, 16, N, k)
    rng = np.random.default_rng(1)
    for _ in range(10):
        v = rng.standard_normal(lay.n_cells)
        acc = np.zeros(lay.n_cells)
        for i in range(lay.n_subdomains):
            acc += restricted_prolong(lay, i, restrict(lay, i, v))
        assert np.array_equal(acc, v)


def test_restrict_prolong_identity():
    # R_i P_i = I on each subdomain
    lay = build_1d_layout(20, 4, 2)
    rng = np.random.default_rng(2)
    for i in range(4):
        w = rng.standard_normal(len(lay.subdomains[i].overlap))
        assert np.array_equal(restrict(lay, i, prolong(lay, i, w)), w)


def test_coarse_restrictions():
    lay = build_1d_layout(9, 3, 0)
    v = np.arange(9.0)
    assert np.allclose(coarse_restrict_mean(lay, v), [1.0, 4.0, 7.0])
    assert coarse_restrict_sum(lay, np.ones(9)).tolist() == [3.0, 3.0, 3.0]
    # mean restriction reproduces coarse-constant-per-block vectors
    blocks = coarse_prolong(lay, np.array([2.0, -1.0, 5.0]))
    assert np.allclose(
        coarse_restrict_mean(lay, np.repeat([2.0, -1.0, 5.0], 3)),
        [2.0, -1.0, 5.0],
    )
    assert blocks.shape == (9,)


def _interp_1d(nodes, vals, x, ends):
    """Reference piecewise-linear interpolant with pinned or constant ends."""
    y0 = 0.0 if ends[0] == "zero" else vals[0]
    y1 = 0.0 if ends[1] == "zero" else vals[-1]
    xs = np.concatenate(([0.0], nodes, [1.0]))
    ys = np.concatenate(([y0], vals, [y1]))
    return np.interp(x, xs, ys)


def test_coarse_prolong_1d_oracle():
    # default boundary data (0, 1): pinned to 0 at x=0, constant toward x=L
    lay = build_1d_layout(12, 3, 1)
    # zero data at both ends: pinned to 0 on both sides
    lay00 = build_1d_layout(12, 3, 1, dirichlet=(0.0, 0.0))
    centers = (np.arange(12) + 0.5) / 12
    nodes = np.array([lay.coarse_cells[i].mean() + 0.5 for i in range(3)]) / 12
    rng = np.random.default_rng(3)
    for _ in range(5):
        v0 = rng.standard_normal(3)
        want = _interp_1d(nodes, v0, centers, ("zero", "const"))
        assert np.allclose(coarse_prolong(lay, v0), want, atol=1e-14)
        want00 = _interp_1d(nodes, v0, centers, ("zero", "zero"))
        assert np.allclose(coarse_prolong(lay00, v0), want00, atol=1e-14)


def test_coarse_prolong_2d_boundary_rules():
    # with nonzero boundary data, constants prolong to 1 everywhere
    lay = build_2d_layout(8, 8, 2, 1)
    z = coarse_prolong(lay, np.ones(4)).reshape(8, 8)
    assert np.allclose(z, 1.0)
    # with zero boundary data the value decays toward the Dirichlet edge x=1
    lay0 = build_2d_layout(8, 8, 2, 1, dirichlet_value=0.0)
    z0 = coarse_prolong(lay0, np.ones(4)).reshape(8, 8)
    # y-direction is Neumann on both sides: rows repeat outside the node band
    assert np.allclose(z0[0], z0[1])
    assert np.allclose(z0[-1], z0[-2])
    # left of the first x-node the value is constant 1
    assert np.allclose(z0[:, 0], 1.0)
    assert np.allclose(z0[:, 1], 1.0)
    # toward x=1 it interpolates linearly from 1 at the last node to 0 at x=1
    xc = (np.arange(8) + 0.5) / 8
    xlast = (1 + 0.5) / 2  # second node of two
    want = (1.0 - xc[-1]) / (1.0 - xlast)
    assert np.allclose(z0[:, -1], want)


def test_coarse_prolong_2d_separable_oracle():
    # a bilinear P0 reproduces products of the 1D interpolants
    lay = build_2d_layout(8, 8, 4, 1)
    xc = (np.arange(8) + 0.5) / 8
    xn = (np.arange(4) + 0.5) / 4
    rng = np.random.default_rng(4)
    ax, ay = rng.standard_normal(4), rng.standard_normal(4)
    v0 = np.outer(ay, ax).ravel()  # coarse DOF (cx, cy) -> cy*N + cx
    got = coarse_prolong(lay, v0).reshape(8, 8)

    def wx(x):
        if x <= xn[0]:
            return np.array([1.0, 0, 0, 0])
        if x >= xn[-1]:
            return np.array([0, 0, 0, 1.0])
        j = np.searchsorted(xn, x) - 1
        t = (x - xn[j]) / (xn[j + 1] - xn[j])
        out = np.zeros(4)
        out[j], out[j + 1] = 1 - t, t
        return out

    def wy(y):
        if y <= xn[0]:
            return np.array([1.0, 0, 0, 0])
        if y >= xn[-1]:
            return np.array([0, 0, 0, 1.0])
        j = np.searchsorted(xn, y) - 1
        t = (y - xn[j]) / (xn[j + 1] - xn[j])
        out = np.zeros(4)
        out[j], out[j + 1] = 1 - t, t
        return out

    for jy in range(8):
        for ix in range(8):
            want = (wy(xc[jy]) @ ay) * (wx(xc[ix]) @ ax)
            assert got[jy, ix] == pytest.approx(want, abs=1e-14)


def test_shape_validation():
    lay = build_1d_layout(9, 3, 1)
    with pytest.raises(ValueError):
        restrict(lay, 0, np.zeros(8))
    with pytest.raises(ValueError):
        prolong(lay, 0, np.zeros(3))
    with pytest.raises(ValueError):
        coarse_prolong(lay, np.zeros(4))
