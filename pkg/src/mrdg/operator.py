"""Semi-discrete transport operator on a frozen multiresolution space.

The weak residual of u_t + div(a u) = 0 against every active basis function:
volume terms are integrated box by box on the induced partition (where the
solution and the test functions are plain tensor polynomials), interface
terms piece by piece on the box skeleton with one-sided traces and a
numerical flux.  Boundary conditions are periodic or zero-inflow; the latter
is realized by a zero ghost trace, which the flux formula turns into pure
outflow at exits and zero inflow at entries.

The advection field is supplied per component together with per-dimension
speed bounds; the bounds are audited against every sampled node value and
feed the Lax-Friedrichs dissipation rate.  All geometry is solved on the
unit cube: a field given on a physical box enters the unit-cube equation
divided by the box widths, which this module handles internally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .basis import MultiwaveletBasis, scaling_values
from .domain import Domain
from .space import FrozenSpace
from .table import ElementTable

__all__ = [
    "VelocityField",
    "constant_field",
    "numerical_flux",
    "apply_dg_operator",
    "eval_solution",
    "eval_cell_centers",
]

FLUX_CHOICES = ("upwind", "lf")


@dataclass(frozen=True)
class VelocityField:
    """Advection velocity a(t, x) with certified per-dimension speed bounds.

    components[m] maps (t, X) with X of shape (..., d) to a_m values of shape
    (...) (scalars broadcast).  bounds maps t to an array (d,) with
    c_m >= sup |a_m| at time t; every residual evaluation checks the bound
    against the nodes it actually samples and raises if it is violated.
    """

    components: tuple[Callable, ...]
    bounds: Callable[[float], np.ndarray]

    @property
    def d(self) -> int:
        return len(self.components)

    def __call__(self, t: float, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        cols = [
            np.broadcast_to(np.asarray(c(t, X), dtype=float), X.shape[:-1])
            for c in self.components
        ]
        return np.stack(cols, axis=-1)

    def bound(self, t: float) -> np.ndarray:
        b = np.asarray(self.bounds(t), dtype=float)
        if b.shape != (self.d,):
            raise ValueError("bounds must return one speed per dimension")
        return b


def constant_field(a: Sequence[float]) -> VelocityField:
    a = tuple(float(x) for x in a)
    comps = tuple((lambda t, X, v=v: v) for v in a)
    bnd = np.array([abs(v) for v in a])
    return VelocityField(comps, lambda t: bnd)


def numerical_flux(
    u_minus,
    u_plus,
    a_minus,
    a_plus,
    kind: str = "upwind",
    alpha=None,
):
    """Single-valued interface flux for f(u) = a u and unit normal toward +.

    upwind: central average plus |a| upwinding (requires one sign of a);
    lf: central average plus alpha/2 times the jump, alpha >= sup |a|.
    """
    central = 0.5 * (np.asarray(a_minus) * u_minus + np.asarray(a_plus) * u_plus)
    jump = np.asarray(u_minus) - np.asarray(u_plus)
    if kind == "upwind":
        rate = np.abs(0.5 * (np.asarray(a_minus) + np.asarray(a_plus)))
    elif kind == "lf":
        if alpha is None:
            raise ValueError("lf flux requires alpha")
        rate = alpha
    else:
        raise ValueError(f"unknown flux kind {kind!r}")
    return central + 0.5 * rate * jump


def _contract_nodes(G: np.ndarray, mats: list[np.ndarray], space: FrozenSpace) -> np.ndarray:
    """Integrate node values G (B, nq^d) against tensor test polynomials.

    mats[m] is (nq, k+1); returns (B, (k+1)^d) with C-order blocks.
    """
    T = G.reshape((G.shape[0],) + space._nodes_shape)
    for m, M in enumerate(mats):
        T = np.moveaxis(
            np.einsum("qp,b...q->b...p", M, np.moveaxis(T, 1 + m, -1)), -1, 1 + m
        )
    return T.reshape(G.shape[0], -1)


def _face_traces(space: FrozenSpace, fs, Ubox: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """One-sided solution values at the face-piece quadrature nodes."""
    disc = space.disc
    d = space.d
    n_t = disc.nq ** (d - 1)
    out = []
    for box_ids, vts, scale, tvec in (
        (fs.minus_box, fs.vt_minus, fs.scale_minus, disc.trace1),
        (fs.plus_box, fs.vt_plus, fs.scale_plus, disc.trace0),
    ):
        vals = np.zeros((len(box_ids), n_t))
        live = np.nonzero(box_ids >= 0)[0]
        if len(live):
            T = Ubox[box_ids[live]].reshape((-1,) + space._tensor_shape)
            T = np.moveaxis(T, 1 + m, -1) @ tvec  # remove the normal dim
            for ti in range(d - 1):
                M = vts[ti][live]
                T = np.moveaxis(
                    np.einsum("fqi,f...i->f...q", M, np.moveaxis(T, 1 + ti, -1)),
                    -1,
                    1 + ti,
                )
            vals[live] = scale[live, None] * T.reshape(len(live), -1)
        out.append(vals)
    return out[0], out[1]


def _accumulate_face(
    space: FrozenSpace, fs, rv: np.ndarray, common: np.ndarray, m: int, side: str
) -> None:
    """Add sign * integral(common * trace of test) to the side's box rows."""
    disc = space.disc
    d = space.d
    if side == "minus":
        order, seg, boxes = fs.order_minus, fs.seg_minus, fs.box_minus_unique
        vts, scale, tvec, sign = fs.vt_minus, fs.scale_minus, disc.trace1, -1.0
    else:
        order, seg, boxes = fs.order_plus, fs.seg_plus, fs.box_plus_unique
        vts, scale, tvec, sign = fs.vt_plus, fs.scale_plus, disc.trace0, 1.0
    if len(order) == 0:
        return
    T = common[order].reshape((len(order),) + (disc.nq,) * (d - 1))
    for ti in range(d - 1):
        M = vts[ti][order]
        T = np.moveaxis(
            np.einsum("fqi,f...q->f...i", M, np.moveaxis(T, 1 + ti, -1)), -1, 1 + ti
        )
    full = np.moveaxis(np.einsum("p,f...->f...p", tvec, T), -1, 1 + m)
    contrib = (sign * scale[order])[:, None] * full.reshape(len(order), -1)
    rv[boxes] += np.add.reduceat(contrib, seg, axis=0)


def apply_dg_operator(
    space: FrozenSpace,
    U: np.ndarray,
    field: VelocityField,
    t: float = 0.0,
    flux: str = "upwind",
) -> np.ndarray:
    """Flat residual vector of the semi-discrete weak form at time t."""
    if flux not in FLUX_CHOICES:
        raise ValueError(f"unknown flux kind {flux!r}")
    disc = space.disc
    d = space.d
    widths = space.domain.widths
    bound = field.bound(t)
    alpha_unit = bound / widths  # dissipation rates on the unit cube

    Ubox = space.realize(U)
    uvals = space.node_values(Ubox)  # (B, nt), physical values
    A = field(t, space.vol_nodes_phys)  # (B, nt, d)
    test_scale = 2.0 ** (space.box_n.sum(axis=1) / 2.0)
    base = (space.box_measure * test_scale)[:, None] * space.vol_wts[None, :] * uvals

    rv = np.zeros((space.n_boxes, space.block))
    for m in range(d):
        am = A[:, :, m]
        if np.abs(am).max(initial=0.0) > bound[m] * (1.0 + 1e-12) + 1e-300:
            raise ValueError(f"speed bound violated in dimension {m}")
        mats = [disc.V] * d
        mats[m] = disc.dV
        G = base * (am / widths[m])
        rv += space.box_two_pow[:, m][:, None] * _contract_nodes(G, mats, space)

    wt = np.ones(1)
    if d > 1:
        wg = np.meshgrid(*([disc.wq] * (d - 1)), indexing="ij")
        wt = np.prod(np.stack([g.reshape(-1) for g in wg]), axis=0)
    for m in range(d):
        fs = space.faces[m]
        if len(fs.minus_box) == 0:
            continue
        u_minus, u_plus = _face_traces(space, fs, Ubox, m)
        Xf = space.domain.to_physical(fs.nodes_unit)
        af = field(t, Xf)[:, :, m] / widths[m]
        if np.abs(af).max(initial=0.0) > alpha_unit[m] * (1.0 + 1e-12) + 1e-300:
            raise ValueError(f"speed bound violated on faces of dimension {m}")
        if flux == "upwind":
            if af.size and af.min() < 0.0 < af.max():
                raise ValueError(
                    "upwind flux needs a single-signed velocity component "
                    f"on the faces of dimension {m}; use the lf flux"
                )
            fhat = numerical_flux(u_minus, u_plus, af, af, "upwind")
        else:
            fhat = numerical_flux(u_minus, u_plus, af, af, "lf", alpha_unit[m])
        common = fs.measure[:, None] * wt[None, :] * fhat
        _accumulate_face(space, fs, rv, common, m, "minus")
        _accumulate_face(space, fs, rv, common, m, "plus")

    return space.gather(rv)


# ------------------------------------------------------------------ sampling


def eval_solution(
    table: ElementTable,
    basis: MultiwaveletBasis,
    x_vec: Sequence[float],
    side_vec: Sequence[int] | None = None,
) -> float:
    """Point value of the stored expansion at x in the unit cube.

    side_vec picks the one-sided limit per dimension at dyadic breakpoints
    (+1 from the right, -1 from the left; default +1).
    """
    d = table.d
    if side_vec is None:
        side_vec = (1,) * d
    total = 0.0
    for key in table.sorted_keys():
        levels, cells = key
        factors = []
        dead = False
        for m in range(d):
            vals = np.array(
                [
                    basis.eval_1d(i, levels[m], cells[m], float(x_vec[m]), side_vec[m])
                    for i in range(table.k + 1)
                ]
            )
            if not vals.any():
                dead = True
                break
            factors.append(vals)
        if dead:
            continue
        block = table.elements[key].coeffs.reshape((table.k + 1,) * d)
        for f in factors:
            block = np.tensordot(f, block, axes=(0, 0))
        total += float(block)
    return total


def eval_cell_centers(
    table: ElementTable, basis: MultiwaveletBasis, level: int
) -> np.ndarray:
    """Expansion values at the centers of the uniform level grid, shape (2^level,)*d.

    Cell centers never sit on dyadic breakpoints, so no one-sided choices
    arise.  This walks the element table directly (independent of the box
    partition route used by the residual assembly).
    """
    d = table.d
    k = table.k
    n = 1 << level
    centers = (np.arange(n) + 0.5) / n
    out = np.zeros((n,) * d)
    for key in table.sorted_keys():
        levels, cells = key
        factors = []
        slices = []
        for m in range(d):
            l, j = levels[m], cells[m]
            if l == 0:
                factors.append(scaling_values(k, centers).T)  # (k+1, n)
                slices.append(slice(0, n))
            else:
                width = 1 << (level - l + 1)
                start = j * width
                t = centers[start : start + width] * (1 << (l - 1)) - j
                vals = basis.mother_values(t).T * 2.0 ** ((l - 1) / 2.0)
                factors.append(vals)  # (k+1, width)
                slices.append(slice(start, start + width))
        block = table.elements[key].coeffs.reshape((k + 1,) * d)
        for f in factors:
            block = np.moveaxis(np.tensordot(block, f, axes=(0, 0)), -1, d - 1)
        # after d contractions the axes are back in dimension order
        out[tuple(slices)] += block
    return out
