"""Orthonormal multiwavelet basis on dyadic partitions of the unit interval.

The approximation space at level n is spanned by piecewise polynomials of
degree <= k on the 2^n dyadic cells of [0, 1].  Level 0 carries the
orthonormalized Legendre polynomials; each finer level adds a detail space
spanned by dilated/translated copies of k+1 mother wavelets, piecewise
polynomial on [0, 1/2] and [1/2, 1], orthogonal to all polynomials of degree
<= k.  Everything here is exact polynomial arithmetic up to machine rounding;
no interpolation is involved.

Objects are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_DEGREE = 6

__all__ = [
    "MAX_DEGREE",
    "MultiwaveletBasis",
    "build_basis",
    "gauss_quadrature",
    "scaling_values",
    "scaling_derivatives",
]


def gauss_quadrature(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule with n points mapped to [0, 1].

    Exact for polynomials of degree <= 2n - 1.  Weights sum to one.
    """
    if not 1 <= n <= 20:
        raise ValueError(f"quadrature order must be in [1, 20], got {n}")
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def scaling_values(k: int, t: np.ndarray) -> np.ndarray:
    """Values of the k+1 orthonormal shifted Legendre polynomials on [0, 1].

    Returns an array of shape t.shape + (k+1,); column p holds
    sqrt(2p+1) * P_p(2t - 1).
    """
    t = np.asarray(t, dtype=float)
    s = 2.0 * t - 1.0
    out = np.empty(t.shape + (k + 1,))
    out[..., 0] = 1.0
    if k >= 1:
        out[..., 1] = s
    for p in range(1, k):
        out[..., p + 1] = ((2 * p + 1) * s * out[..., p] - p * out[..., p - 1]) / (p + 1)
    out *= np.sqrt(2.0 * np.arange(k + 1) + 1.0)
    return out


def scaling_derivatives(k: int, t: np.ndarray) -> np.ndarray:
    """First derivatives (in t) of the functions from scaling_values."""
    t = np.asarray(t, dtype=float)
    s = 2.0 * t - 1.0
    p_vals = np.empty(t.shape + (k + 1,))
    d_vals = np.empty(t.shape + (k + 1,))
    p_vals[..., 0] = 1.0
    d_vals[..., 0] = 0.0
    if k >= 1:
        p_vals[..., 1] = s
        d_vals[..., 1] = 1.0
    for p in range(1, k):
        p_vals[..., p + 1] = ((2 * p + 1) * s * p_vals[..., p] - p * p_vals[..., p - 1]) / (p + 1)
        # P'_{p+1}(s) = P'_{p-1}(s) + (2p+1) P_p(s)
        d_vals[..., p + 1] = d_vals[..., p - 1] + (2 * p + 1) * p_vals[..., p]
    # chain rule: d/dt = 2 d/ds
    return 2.0 * np.sqrt(2.0 * np.arange(k + 1) + 1.0) * d_vals


def _legendre_series(coeffs_in_l_basis: np.ndarray, lo: float, hi: float):
    """numpy Legendre series for sum_p c_p * lhat_p on [lo, hi].

    lhat_p is the orthonormal Legendre basis of L2([lo, hi]).
    """
    scale = np.sqrt(2.0 * np.arange(len(coeffs_in_l_basis)) + 1.0) / np.sqrt(hi - lo)
    return np.polynomial.legendre.Legendre(coeffs_in_l_basis * scale, domain=[lo, hi])


def _piecewise_norms(pieces: list[tuple[np.ndarray, float, float]]) -> tuple[float, float]:
    """(L1, Linf) norms of a piecewise polynomial given per-piece expansions."""
    l1 = 0.0
    linf = 0.0
    for coeffs, lo, hi in pieces:
        series = _legendre_series(coeffs, lo, hi)
        roots = series.roots()
        cuts = [lo, hi]
        for r in roots:
            if abs(r.imag) < 1e-12 and lo < r.real < hi:
                cuts.append(float(r.real))
        cuts.sort()
        anti = series.integ()
        for a, b in zip(cuts[:-1], cuts[1:]):
            l1 += abs(anti(b) - anti(a))
        crit = [lo, hi]
        for r in series.deriv().roots():
            if abs(r.imag) < 1e-12 and lo < r.real < hi:
                crit.append(float(r.real))
        linf = max(linf, max(abs(series(c)) for c in crit))
    return l1, linf


@dataclass(frozen=True)
class MultiwaveletBasis:
    """The k+1 scaling functions and k+1 mother wavelets for one degree k.

    Scaling functions are the orthonormal shifted Legendre polynomials on
    [0, 1].  Mother wavelets are stored as coefficient vectors in the
    orthonormal Legendre bases of the two half-intervals (``wav_left`` /
    ``wav_right``, rows indexed by wavelet, columns by local polynomial
    index), normalized so that the limit value at x -> 1- is strictly
    positive.  Dilates follow v_{i,l}^j(x) = 2^{(l-1)/2} w_i(2^{l-1} x - j)
    for level l >= 1, supported on the dyadic cell of level l-1 with index j.
    """

    k: int
    wav_left: np.ndarray
    wav_right: np.ndarray
    scal_l1: np.ndarray = field(repr=False, default=None)
    scal_linf: np.ndarray = field(repr=False, default=None)
    wav_l1: np.ndarray = field(repr=False, default=None)
    wav_linf: np.ndarray = field(repr=False, default=None)

    # -- evaluation ---------------------------------------------------------

    def mother_values(self, t: np.ndarray, side: int = 1) -> np.ndarray:
        """Mother wavelet one-sided values on [0, 1]; shape t.shape + (k+1,).

        side=+1 takes the limit from the right at the midpoint breakpoint,
        side=-1 from the left.  Values outside [0, 1] are not meaningful.
        """
        t = np.asarray(t, dtype=float)
        use_right = (t > 0.5) | ((t == 0.5) & (side > 0))
        lv = scaling_values(self.k, 2.0 * t) * np.sqrt(2.0)
        rv = scaling_values(self.k, 2.0 * t - 1.0) * np.sqrt(2.0)
        left = lv @ self.wav_left.T
        right = rv @ self.wav_right.T
        return np.where(use_right[..., None], right, left)

    def eval_1d(self, i: int, level: int, cell: int, x: float, side: int = 1) -> float:
        """One-sided value of basis function (i, level, cell) at x in [0, 1].

        i indexes the k+1 functions of a block (0-based); level 0 means the
        scaling functions (cell must be 0); level >= 1 means the wavelet
        dilates supported on the level-(level-1) dyadic cell with index
        ``cell``.  side=+1 evaluates lim_{y->x+}, side=-1 lim_{y->x-}; the
        value is zero when the one-sided neighbourhood lies outside the
        support.
        """
        self._check_index(i, level, cell)
        if level == 0:
            return float(scaling_values(self.k, np.array(x))[..., i])
        scale = 2.0 ** (level - 1)
        t = scale * x - cell
        inside = (t >= 0.0 and t < 1.0) if side > 0 else (t > 0.0 and t <= 1.0)
        if not inside:
            return 0.0
        val = self.mother_values(np.array(t), side)[..., i]
        return float(np.sqrt(scale) * val)

    def eval_nd(
        self,
        i_vec: tuple[int, ...],
        l_vec: tuple[int, ...],
        j_vec: tuple[int, ...],
        x_vec: tuple[float, ...],
        side_vec: tuple[int, ...] | None = None,
    ) -> float:
        """Tensor-product basis value: product of eval_1d over dimensions."""
        d = len(l_vec)
        if not (len(i_vec) == len(j_vec) == len(x_vec) == d):
            raise ValueError("i_vec, l_vec, j_vec, x_vec must share one length")
        if side_vec is None:
            side_vec = (1,) * d
        out = 1.0
        for m in range(d):
            out *= self.eval_1d(i_vec[m], l_vec[m], j_vec[m], x_vec[m], side_vec[m])
            if out == 0.0:
                return 0.0
        return out

    # -- norms --------------------------------------------------------------

    def norms_1d(self, i: int, level: int) -> tuple[float, float, float]:
        """(L1, L2, Linf) norms of any level-``level`` dilate of function i.

        Norms depend on the level only through the dyadic scaling: for
        level >= 1, L1 shrinks by 2^{-(level-1)/2} and Linf grows by
        2^{+(level-1)/2}; L2 is always one.
        """
        if not 0 <= i <= self.k:
            raise ValueError(f"function index {i} outside [0, {self.k}]")
        if level < 0:
            raise ValueError("level must be nonnegative")
        if level == 0:
            return float(self.scal_l1[i]), 1.0, float(self.scal_linf[i])
        s = 2.0 ** ((level - 1) / 2.0)
        return float(self.wav_l1[i]) / s, 1.0, float(self.wav_linf[i]) * s

    def norms_nd(
        self, i_vec: tuple[int, ...], l_vec: tuple[int, ...]
    ) -> tuple[float, float, float]:
        """(L1, L2, Linf) norms of a tensor-product basis function."""
        l1 = linf = 1.0
        for i, lev in zip(i_vec, l_vec):
            a, _, c = self.norms_1d(i, lev)
            l1 *= a
            linf *= c
        return l1, 1.0, linf

    # -- internals ----------------------------------------------------------

    def _check_index(self, i: int, level: int, cell: int) -> None:
        if not 0 <= i <= self.k:
            raise ValueError(f"function index {i} outside [0, {self.k}]")
        if level < 0:
            raise ValueError("level must be nonnegative")
        n_cells = max(2 ** (level - 1), 1) if level >= 1 else 1
        if not 0 <= cell < n_cells:
            raise ValueError(f"cell {cell} outside [0, {n_cells}) at level {level}")


def _mother_coefficients(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Construct the mother wavelets by the moment-cascade Gram-Schmidt.

    Candidate space: piecewise degree-<=k polynomials on the two halves of
    [0, 1], coordinates taken in the orthonormal Legendre bases of the halves
    so that Euclidean and L2 inner products agree.  Wavelet i is the unit
    vector orthogonal to all polynomials of degree <= k+i and to wavelets
    i+1..k; its sign is fixed by a positive limit at the right endpoint.
    """
    dim = 2 * (k + 1)
    n = 2 * k + 2  # integrates degree 4k+3 exactly; moments need 3k+1
    t, w = gauss_quadrature(n)
    half = np.sqrt(2.0) * scaling_values(k, t)  # values of lhat_p(2x) at x = t/2
    # moment constraints expressed against the orthonormal Legendre functions
    # of degree <= 2k+1 (same span as the monomials, perfectly conditioned)
    moments = np.empty((2 * k + 2, dim))
    moments[:, : k + 1] = 0.5 * (w[:, None] * scaling_values(2 * k + 1, t / 2.0)).T @ half
    moments[:, k + 1 :] = 0.5 * (w[:, None] * scaling_values(2 * k + 1, (t + 1.0) / 2.0)).T @ half

    right_end = np.sqrt(2.0) * np.sqrt(2.0 * np.arange(k + 1) + 1.0)  # lhat_p(2x-1) at x=1
    wavelets = np.zeros((k + 1, dim))
    for i in range(k, -1, -1):
        rows = [moments[: k + i + 1]]
        for j in range(i + 1, k + 1):
            rows.append(wavelets[j][None, :])
        constraints = np.vstack(rows)
        _, sing, vh = np.linalg.svd(constraints)
        null_dim = dim - np.sum(sing > 1e-12 * sing[0])
        if null_dim != 1:
            raise RuntimeError(f"wavelet construction degenerate at k={k}, i={i}")
        vec = vh[-1]
        endpoint = vec[k + 1 :] @ right_end
        if abs(endpoint) < 1e-9:
            raise RuntimeError(f"wavelet {i} has zero right-endpoint limit at k={k}")
        if endpoint < 0:
            vec = -vec
        wavelets[i] = vec
    return wavelets[:, : k + 1].copy(), wavelets[:, k + 1 :].copy()


def build_basis(k: int) -> MultiwaveletBasis:
    """Build the degree-k basis (0 <= k <= MAX_DEGREE) with its norm tables."""
    if not 0 <= k <= MAX_DEGREE:
        raise ValueError(f"degree k must be in [0, {MAX_DEGREE}], got {k}")
    wav_left, wav_right = _mother_coefficients(k)

    scal_l1 = np.empty(k + 1)
    scal_linf = np.empty(k + 1)
    for p in range(k + 1):
        unit = np.zeros(k + 1)
        unit[p] = 1.0
        scal_l1[p], scal_linf[p] = _piecewise_norms([(unit, 0.0, 1.0)])

    wav_l1 = np.empty(k + 1)
    wav_linf = np.empty(k + 1)
    for i in range(k + 1):
        wav_l1[i], wav_linf[i] = _piecewise_norms(
            [(wav_left[i], 0.0, 0.5), (wav_right[i], 0.5, 1.0)]
        )
    return MultiwaveletBasis(
        k=k,
        wav_left=wav_left,
        wav_right=wav_right,
        scal_l1=scal_l1,
        scal_linf=scal_linf,
        wav_l1=wav_l1,
        wav_linf=wav_linf,
    )
