"""Tests for the 1D multiwavelet basis and its tensor-product evaluation."""

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from mrdg.basis import (
    MAX_DEGREE,
    build_basis,
    gauss_quadrature,
    scaling_values,
)


# ---------------------------------------------------------------- quadrature


def test_gauss_quadrature_small_orders():
    t1, w1 = gauss_quadrature(1)
    np.testing.assert_allclose(t1, [0.5])
    np.testing.assert_allclose(w1, [1.0])
    t2, w2 = gauss_quadrature(2)
    np.testing.assert_allclose(sorted(t2), [0.5 - 0.5 / np.sqrt(3), 0.5 + 0.5 / np.sqrt(3)])
    np.testing.assert_allclose(w2, [0.5, 0.5])


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 13, 20])
def test_gauss_quadrature_monomial_exactness(n):
    """Order n integrates x^p exactly for all p <= 2n-1."""
    t, w = gauss_quadrature(n)
    assert np.all(w > 0)
    assert abs(np.sum(w) - 1.0) < 1e-14
    assert np.all((t > 0) & (t < 1))
    for p in range(2 * n):
        assert abs(w @ t**p - 1.0 / (p + 1)) < 1e-13


def test_gauss_quadrature_x9():
    t, w = gauss_quadrature(5)
    assert abs(w @ t**9 - 0.1) < 1e-14


@pytest.mark.parametrize("n", [0, -1, 21])
def test_gauss_quadrature_rejects_bad_order(n):
    with pytest.raises(ValueError):
        gauss_quadrature(n)


# ------------------------------------------------------------------- scaling


@pytest.mark.parametrize("k", [0, 1, 2, 3, 6])
def test_scaling_functions_are_orthonormal_legendre(k):
    """scaling_values(k, t)[..., p] equals sqrt(2p+1) P_p(2t - 1)."""
    t = np.linspace(0.0, 1.0, 11)
    vals = scaling_values(k, t)
    for p in range(k + 1):
        coef = np.zeros(p + 1)
        coef[p] = 1.0
        ref = np.sqrt(2 * p + 1) * np.polynomial.legendre.legval(2 * t - 1, coef)
        np.testing.assert_allclose(vals[:, p], ref, atol=1e-13)


def test_polynomial_reproduction():
    """Scaling coefficients of t^p reconstruct t^p pointwise for p <= k."""
    rng = np.random.default_rng(7)
    for k in range(MAX_DEGREE + 1):
        t, w = gauss_quadrature(k + 2)
        vals = scaling_values(k, t)
        x = rng.uniform(0, 1, size=20)
        for p in range(k + 1):
            coeffs = vals.T @ (w * t**p)
            recon = scaling_values(k, x) @ coeffs
            np.testing.assert_allclose(recon, x**p, atol=1e-12)


# ------------------------------------------------------------------ wavelets


def test_haar_mother_wavelet():
    b = build_basis(0)
    vals = b.mother_values(np.array([0.1, 0.49, 0.51, 0.9]))
    np.testing.assert_allclose(vals[:, 0], [-1.0, -1.0, 1.0, 1.0], atol=1e-14)
    # one-sided midpoint values
    assert b.mother_values(np.array([0.5]), side=-1)[0, 0] == pytest.approx(-1.0)
    assert b.mother_values(np.array([0.5]), side=+1)[0, 0] == pytest.approx(1.0)


@pytest.mark.parametrize("k", range(MAX_DEGREE + 1))
def test_function_counts(k):
    b = build_basis(k)
    assert b.wav_left.shape == (k + 1, k + 1)
    assert b.wav_right.shape == (k + 1, k + 1)
    assert scaling_values(k, np.array([0.3])).shape == (1, k + 1)


@pytest.mark.parametrize("k", range(MAX_DEGREE + 1))
def test_reference_gram_matrix_is_identity(k):
    """All 2(k+1) reference functions are orthonormal on [0,1] to 1e-12."""
    t, w = gauss_quadrature(k + 2)
    # integrate separately on each half where every function is polynomial
    cols = []
    for lo in (0.0, 0.5):
        x = lo + 0.5 * t
        sv = scaling_values(k, x)
        wv = build_basis(k).mother_values(x)
        cols.append((np.hstack([sv, wv]), 0.5 * w))
    gram = sum(v.T @ (ww[:, None] * v) for v, ww in cols)
    np.testing.assert_allclose(gram, np.eye(2 * (k + 1)), atol=1e-12)


@pytest.mark.parametrize("k", range(MAX_DEGREE + 1))
def test_wavelets_orthogonal_to_low_degree_polynomials(k):
    b = build_basis(k)
    t, w = gauss_quadrature(2 * k + 2)
    for p in range(k + 1):
        moments = np.zeros(k + 1)
        for lo in (0.0, 0.5):
            x = lo + 0.5 * t
            moments += 0.5 * (w * x**p) @ b.mother_values(x)
        np.testing.assert_allclose(moments, 0.0, atol=1e-13)


@pytest.mark.parametrize("k", range(MAX_DEGREE + 1))
def test_wavelet_right_endpoint_positive(k):
    b = build_basis(k)
    vals = b.mother_values(np.array([1.0]), side=-1)
    assert np.all(vals > 0)


def test_build_basis_rejects_bad_degree():
    with pytest.raises(ValueError):
        build_basis(-1)
    with pytest.raises(ValueError):
        build_basis(MAX_DEGREE + 1)


# ------------------------------------------------------------------- eval_1d


def test_eval_1d_constant_mode():
    b = build_basis(2)
    assert b.eval_1d(0, 0, 0, 0.3) == pytest.approx(1.0)


def test_eval_1d_outside_support_is_zero():
    # (level 3, cell 2) is supported on [0.5, 0.75]
    b = build_basis(2)
    for i in range(3):
        assert b.eval_1d(i, 3, 2, 0.1) == 0.0
        assert b.eval_1d(i, 3, 2, 0.8) == 0.0
    # the support boundary is one-sided
    assert b.eval_1d(0, 3, 2, 0.5, side=+1) != 0.0
    assert b.eval_1d(0, 3, 2, 0.5, side=-1) == 0.0
    assert b.eval_1d(0, 3, 2, 0.75, side=-1) != 0.0
    assert b.eval_1d(0, 3, 2, 0.75, side=+1) == 0.0


def test_eval_1d_rejects_bad_indices():
    b = build_basis(1)
    with pytest.raises(ValueError):
        b.eval_1d(2, 0, 0, 0.5)
    with pytest.raises(ValueError):
        b.eval_1d(0, 0, 1, 0.5)  # level 0 has a single cell
    with pytest.raises(ValueError):
        b.eval_1d(0, 3, 4, 0.5)  # level 3 has cells 0..3


def _level_wavelets_by_constrained_null_space(k, level, cell):
    """Construct the level-`level` wavelets on one cell from scratch.

    Works directly on the cell [a, b] at the target level (no rescaling of
    reference functions): represents candidates in an orthonormal piecewise
    Legendre basis on the two half-cells, then walks the same constrained
    null-space cascade used for the reference construction — function i
    has vanishing moments against x^p for p <= k+i and is orthogonal to the
    functions after it; sign fixed by positivity at the right end.
    """
    width = 2.0 ** -(level - 1)
    a = cell * width
    halves = [(a, a + width / 2), (a + width / 2, a + width)]
    t, w = gauss_quadrature(2 * k + 4)
    # orthonormal basis of the candidate space: mapped Legendre per half
    nodes, weights, vander = [], [], []
    for lo, hi in halves:
        h = hi - lo
        nodes.append(lo + h * t)
        weights.append(h * w)
        vander.append(scaling_values(k, t) / np.sqrt(h))
    nb = 2 * (k + 1)

    def piece_dot(poly_vals):
        # inner products of a function given by values on the nodes
        out = np.zeros(nb)
        for half in range(2):
            block = vander[half].T @ (weights[half] * poly_vals[half])
            out[half * (k + 1) : (half + 1) * (k + 1)] = block
        return out

    moment_rows = []
    for p in range(2 * k + 2):
        # cell-local monomials ((x-a)/width)^p: same span as x^p, but well
        # conditioned on a short cell far from the origin
        moment_rows.append(piece_dot([((nodes[0] - a) / width) ** p, ((nodes[1] - a) / width) ** p]))
    moment_rows = np.array(moment_rows)

    wavelets = [None] * (k + 1)
    for i in range(k, -1, -1):
        rows = [moment_rows[: k + i + 1]]
        rows += [wavelets[q][None, :] for q in range(i + 1, k + 1)]
        stacked = np.vstack(rows)
        _, s, vt = np.linalg.svd(stacked)
        assert stacked.shape[0] == nb - 1
        vec = vt[-1]
        assert np.max(np.abs(stacked @ vec)) < 1e-12  # truly in the null space
        # value at the right end of the cell (limit from the left)
        right_val = (scaling_values(k, np.array([1.0]))[0] / np.sqrt(width / 2)) @ vec[k + 1 :]
        wavelets[i] = vec * np.sign(right_val)

    def evaluate(i, x):
        lo, hi = halves[0]
        if a <= x <= a + width / 2:
            half, (lo, hi) = 0, halves[0]
        else:
            half, (lo, hi) = 1, halves[1]
        loc = scaling_values(k, np.array([(x - lo) / (hi - lo)]))[0] / np.sqrt(hi - lo)
        return loc @ wavelets[i][half * (k + 1) : (half + 1) * (k + 1)]

    return evaluate, (a, a + width)


def test_eval_1d_matches_per_level_construction():
    """Level-4 dilates match a from-scratch constrained construction."""
    k, level, cell = 2, 4, 5
    b = build_basis(k)
    oracle, (a, bnd) = _level_wavelets_by_constrained_null_space(k, level, cell)
    rng = np.random.default_rng(42)
    pts = rng.uniform(0, 1, size=50)
    for i in range(k + 1):
        for x in pts:
            want = oracle(i, x) if a < x < bnd else 0.0
            assert b.eval_1d(i, level, cell, float(x)) == pytest.approx(want, abs=1e-11)


def test_dyadic_scaling_between_levels():
    """A level l+1 dilate is sqrt(2) times the level-l one under x -> 2x - q."""
    rng = np.random.default_rng(3)
    for k in (0, 1, 3):
        b = build_basis(k)
        for _ in range(20):
            l = int(rng.integers(1, 5))
            j = int(rng.integers(0, 2**l))  # cell index at level l+1
            q, jp = divmod(j, max(2 ** (l - 1), 1))
            i = int(rng.integers(0, k + 1))
            # x inside the level-(l+1) support, away from breakpoints
            width = 2.0**-l
            x = (j + rng.uniform(0.05, 0.45)) * width
            lhs = b.eval_1d(i, l + 1, j, x)
            rhs = np.sqrt(2.0) * b.eval_1d(i, l, jp, 2 * x - q)
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


# ------------------------------------------------------------------- eval_nd


def test_eval_nd_constant_block():
    b = build_basis(1)
    assert b.eval_nd((0, 0, 0), (0, 0, 0), (0, 0, 0), (0.2, 0.5, 0.9)) == pytest.approx(1.0)


def test_eval_nd_zero_outside_any_support():
    b = build_basis(1)
    # dimension 2 support is [0.5, 1.0] (level 2, cell 1)
    assert b.eval_nd((0, 0), (0, 2), (0, 1), (0.3, 0.2)) == 0.0


def test_eval_nd_dimension_mismatch():
    b = build_basis(1)
    with pytest.raises(ValueError):
        b.eval_nd((0, 0), (0,), (0, 0), (0.3, 0.2))


def test_2d_gram_matrix_low_levels():
    """All 2D tensor functions with levels <= 2, k=1 are orthonormal."""
    k = 1
    b = build_basis(k)
    blocks = [(0, 0), (1, 0), (2, 0), (2, 1)]
    funcs = [(i, l, j) for (l, j) in blocks for i in range(k + 1)]
    # tensor quadrature on the uniform width-1/4 grid (a refinement of every
    # breakpoint of the functions involved)
    t, w = gauss_quadrature(k + 2)
    nodes = np.concatenate([(c + t) / 4 for c in range(4)])
    weights = np.concatenate([w / 4 for _ in range(4)])
    vals = np.array([[b.eval_1d(i, l, j, float(x)) for x in nodes] for (i, l, j) in funcs])
    gram1 = (vals * weights) @ vals.T
    gram2 = np.kron(gram1, gram1)  # tensor structure of products
    np.testing.assert_allclose(gram1, np.eye(len(funcs)), atol=1e-12)
    np.testing.assert_allclose(gram2, np.eye(len(funcs) ** 2), atol=1e-11)


# --------------------------------------------------------------------- norms


def test_haar_norms():
    b = build_basis(0)
    l1, l2, linf = b.norms_1d(0, 1)
    assert (l1, l2, linf) == pytest.approx((1.0, 1.0, 1.0))


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_norms_match_dense_sampling(k):
    b = build_basis(k)
    npts = 2000
    for i in range(k + 1):
        for level in (1, 2, 4):
            width = 1.0 / max(2 ** (level - 1), 1)
            # midpoint sampling per smooth half, never straddling the jump
            l1_num = 0.0
            linf_num = 0.0
            for lo in (0.0, width / 2):
                h = (width / 2) / npts
                xs = lo + h * (np.arange(npts) + 0.5)
                vals = np.array([b.eval_1d(i, level, 0, float(xx)) for xx in xs])
                l1_num += h * np.sum(np.abs(vals))
                linf_num = max(
                    linf_num,
                    np.max(np.abs(vals)),
                    abs(b.eval_1d(i, level, 0, lo, side=+1)),
                    abs(b.eval_1d(i, level, 0, lo + width / 2, side=-1)),
                )
            l1, l2, linf = b.norms_1d(i, level)
            assert l2 == 1.0
            np.testing.assert_allclose(linf, linf_num, rtol=1e-5)
            np.testing.assert_allclose(l1, l1_num, rtol=1e-4)


def test_l1_norm_dyadic_ratio():
    b = build_basis(2)
    for i in range(3):
        for level in (1, 2, 3):
            assert b.norms_1d(i, level + 1)[0] / b.norms_1d(i, level)[0] == pytest.approx(
                2**-0.5
            )
            assert b.norms_1d(i, level + 1)[2] / b.norms_1d(i, level)[2] == pytest.approx(
                2**0.5
            )


def test_nd_norms_are_products():
    b = build_basis(1)
    l1, l2, linf = b.norms_nd((1, 0), (2, 3))
    a1 = b.norms_1d(1, 2)
    a2 = b.norms_1d(0, 3)
    assert l1 == pytest.approx(a1[0] * a2[0])
    assert l2 == 1.0
    assert linf == pytest.approx(a1[2] * a2[2])
