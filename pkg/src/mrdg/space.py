"""Frozen geometric realization of an active multiresolution set.

Everything the residual assembly needs is derived once per active-set epoch:

* a disjoint partition of the domain into dyadic boxes, fine enough that every
  active basis function restricted to any box is a plain tensor polynomial
  (boxes are split past every wavelet breakpoint of every overlapping
  element);
* scatter/gather tables mapping hierarchical element coefficients to local
  orthonormal Legendre coefficients per box and back (the two directions are
  exact transposes of each other);
* for each dimension, the face pieces of the box skeleton together with the
  trace tables needed to evaluate one-sided solution values and to
  accumulate flux integrals back onto box functionals.

All level/cell arithmetic is integer; all quadrature weights and restriction
tables are built from the reference interval once per (degree, depth) pair,
so repeated epochs share them.  Box coordinates use plain mesh levels: box
(n, c) is the cell [c 2^-n, (c+1) 2^-n] per dimension.  An element key dim
(l, j) occupies support cell (max(l-1,0), j) and, for l >= 1, has its
breakpoint on the level-l grid, hence the split rule "box finer than l".

A consequence of the table's hole-freedom (every element's full ancestor
closure is active, including the strips that are level 0 in all but one
dimension) is that per-dimension resolution requirements depend on that
coordinate alone, so the partition is a tensor product of one-dimensional
partitions and interior faces always meet with equal transverse cells.  The
trace tables still cover the general mismatched case for robustness.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .basis import MultiwaveletBasis, build_basis, gauss_quadrature, scaling_values
from .domain import Domain
from .table import ElementKey

__all__ = ["Discretization", "build_discretization", "FrozenSpace"]

BoundaryKind = str  # "periodic" | "zero"


@dataclass(frozen=True)
class Discretization:
    """Reference tables shared by every epoch of one (degree, depth) pair.

    rest_all stacks the restriction matrices (element function -> local box
    Legendre coefficients, one (k+1)x(k+1) block per (kind, level-gap, cell))
    and vt_all the trace Vandermondes (local Legendre values at mapped
    quadrature nodes).  Index dictionaries translate geometric offsets into
    rows of those stacks.
    """

    k: int
    max_level: int
    basis: MultiwaveletBasis
    tq: np.ndarray  # (nq,) reference quadrature nodes
    wq: np.ndarray  # (nq,)
    V: np.ndarray  # (nq, k+1) scaling values at nodes
    dV: np.ndarray  # (nq, k+1) scaling derivatives at nodes
    trace0: np.ndarray  # (k+1,) values at 0
    trace1: np.ndarray  # (k+1,) values at 1
    rest_all: np.ndarray  # (Q, k+1, k+1)
    rest_scal: dict  # (n, c) -> row of rest_all
    rest_wav: dict  # (delta, r) -> row of rest_all
    vt_all: np.ndarray  # (QV, nq, k+1)
    vt_idx: dict  # (delta, off) -> row of vt_all

    @property
    def nq(self) -> int:
        return len(self.tq)


@lru_cache(maxsize=None)
def build_discretization(k: int, max_level: int) -> Discretization:
    basis = build_basis(k)
    nq = k + 2
    tq, wq = gauss_quadrature(nq)
    V = scaling_values(k, tq)
    from .basis import scaling_derivatives

    dV = scaling_derivatives(k, tq)
    trace0 = scaling_values(k, np.array([0.0]))[0]
    trace1 = scaling_values(k, np.array([1.0]))[0]

    rest_mats: list[np.ndarray] = []
    rest_scal: dict = {}
    rest_wav: dict = {}
    # scaling-function restrictions: box at depth n, cell c inside [0,1]
    for n in range(max_level + 1):
        for c in range(2**n):
            m = 2.0 ** (-n / 2.0) * np.einsum(
                "q,qp,qi->pi", wq, V, scaling_values(k, (tq + c) * 2.0**-n)
            )
            rest_scal[(n, c)] = len(rest_mats)
            rest_mats.append(m)
    # wavelet restrictions: box at gap delta >= 1 below the support cell,
    # local cell r; the mapped interval stays inside one smooth half
    for delta in range(1, max_level + 1):
        for r in range(2**delta):
            wv = basis.mother_values((tq + r) * 2.0**-delta)
            m = 2.0 ** (-delta / 2.0) * np.einsum("q,qp,qi->pi", wq, V, wv)
            rest_wav[(delta, r)] = len(rest_mats)
            rest_mats.append(m)
    rest_all = np.stack(rest_mats)

    vt_mats: list[np.ndarray] = []
    vt_idx: dict = {}
    for delta in range(max_level + 1):
        for off in range(2**delta):
            vt_idx[(delta, off)] = len(vt_mats)
            vt_mats.append(scaling_values(k, (tq + off) * 2.0**-delta))
    vt_all = np.stack(vt_mats)

    return Discretization(
        k=k,
        max_level=max_level,
        basis=basis,
        tq=tq,
        wq=wq,
        V=V,
        dV=dV,
        trace0=trace0,
        trace1=trace1,
        rest_all=rest_all,
        rest_scal=rest_scal,
        rest_wav=rest_wav,
        vt_all=vt_all,
        vt_idx=vt_idx,
    )


def _apply_factor(C: np.ndarray, M: np.ndarray, axis: int) -> np.ndarray:
    """Contract batched tensors C (P, a1..ad) with per-row matrices M (P, o, i)
    along tensor axis `axis` (0-based among the a-axes)."""
    C2 = np.moveaxis(C, 1 + axis, -1)
    out = np.einsum("poi,p...i->p...o", M, C2)
    return np.moveaxis(out, -1, 1 + axis)


def _nested_cells(n_a, c_a, n_b, c_b):
    """True where dyadic cells (n_a, c_a) and (n_b, c_b) overlap (are nested)."""
    n_a = np.asarray(n_a)
    c_a = np.asarray(c_a)
    n_b = np.asarray(n_b)
    c_b = np.asarray(c_b)
    a_in_b = (n_a >= n_b) & ((c_a >> np.maximum(n_a - n_b, 0)) == c_b)
    b_in_a = (n_b > n_a) & ((c_b >> np.maximum(n_b - n_a, 0)) == c_a)
    return a_in_b | b_in_a


class _FaceSet:
    """Face pieces of one coordinate direction (built by FrozenSpace)."""

    __slots__ = (
        "minus_box",
        "plus_box",
        "scale_minus",
        "scale_plus",
        "measure",
        "vt_minus",
        "vt_plus",
        "nodes_unit",
        "order_minus",
        "seg_minus",
        "box_minus_unique",
        "order_plus",
        "seg_plus",
        "box_plus_unique",
    )


class FrozenSpace:
    """Assembly-ready geometry for one active element set.

    The element order is the canonical sorted key order; the flat coefficient
    vector is the concatenation of (k+1)^d blocks in that order.
    """

    def __init__(
        self,
        disc: Discretization,
        keys: list[ElementKey],
        domain: Domain,
        bc: tuple[BoundaryKind, ...],
    ):
        self.disc = disc
        self.keys = list(keys)
        self.domain = domain
        self.bc = tuple(bc)
        self.d = len(keys[0][0])
        if len(self.bc) != self.d:
            raise ValueError("one boundary kind per dimension required")
        for b in self.bc:
            if b not in ("periodic", "zero"):
                raise ValueError(f"unknown boundary kind {b!r}")
        self.key_index = {key: idx for idx, key in enumerate(self.keys)}
        self.n_elements = len(self.keys)
        self.block = (disc.k + 1) ** self.d
        self.n_dof = self.n_elements * self.block

        self._el = np.array([k[0] for k in self.keys], dtype=np.int64)  # (E, d)
        self._ej = np.array([k[1] for k in self.keys], dtype=np.int64)
        self._es = np.maximum(self._el - 1, 0)

        self._build_partition()
        self._build_pair_tables()
        self._build_volume_tables()
        self._faces = [self._build_faces(m) for m in range(self.d)]

    # ------------------------------------------------------------ partition

    def _build_partition(self) -> None:
        d = self.d
        E = self.n_elements
        box_n = np.zeros((1, d), dtype=np.int64)
        box_c = np.zeros((1, d), dtype=np.int64)
        pair_b = np.zeros(E, dtype=np.int64)
        pair_e = np.arange(E, dtype=np.int64)

        while True:
            need = self._el[pair_e] > box_n[pair_b]  # (P, d)
            rows = need.any(axis=1)
            if not rows.any():
                break
            first_dim = np.argmax(need, axis=1)
            # split each box along the lowest dimension any of its pairs needs
            split_dim = np.full(len(box_n), d, dtype=np.int64)
            np.minimum.at(split_dim, pair_b[rows], first_dim[rows])
            split = split_dim < d

            n_boxes = len(box_n)
            new_index = np.full(n_boxes, -1, dtype=np.int64)
            keep = ~split
            new_index[keep] = np.arange(keep.sum())
            base = keep.sum()
            split_ids = np.nonzero(split)[0]
            first_child = base + 2 * np.arange(len(split_ids))
            child_arr = np.full(n_boxes, -1, dtype=np.int64)
            child_arr[split_ids] = first_child

            nb_n = [box_n[keep]]
            nb_c = [box_c[keep]]
            sn = box_n[split_ids].copy()
            sc = box_c[split_ids].copy()
            dims = split_dim[split_ids]
            rows_i = np.arange(len(split_ids))
            for half in (0, 1):
                cn = sn.copy()
                cc = sc.copy()
                cn[rows_i, dims] += 1
                cc[rows_i, dims] = 2 * sc[rows_i, dims] + half
                nb_n.append(cn)
                nb_c.append(cc)
            # children interleaved: first all half-0 then half-1; fix ordering
            new_n = np.vstack([nb_n[0], np.empty((2 * len(split_ids), d), dtype=np.int64)])
            new_c = np.vstack([nb_c[0], np.empty((2 * len(split_ids), d), dtype=np.int64)])
            new_n[base + 0 :: 2][: len(split_ids)] = nb_n[1]
            new_n[base + 1 :: 2][: len(split_ids)] = nb_n[2]
            new_c[base + 0 :: 2][: len(split_ids)] = nb_c[1]
            new_c[base + 1 :: 2][: len(split_ids)] = nb_c[2]

            # remap pairs of kept boxes; re-derive pairs of split boxes
            kept_pairs = keep[pair_b]
            pb_keep = new_index[pair_b[kept_pairs]]
            pe_keep = pair_e[kept_pairs]

            sp_mask = ~kept_pairs
            sp_b = pair_b[sp_mask]
            sp_e = pair_e[sp_mask]
            sp_dim = split_dim[sp_b]
            child0 = child_arr[sp_b]
            pn = box_n[sp_b, sp_dim] + 1
            base_c = 2 * box_c[sp_b, sp_dim]
            es = self._es[sp_e, sp_dim]
            ej = self._ej[sp_e, sp_dim]
            keep0 = _nested_cells(pn, base_c, es, ej)
            keep1 = _nested_cells(pn, base_c + 1, es, ej)
            pb_new = np.concatenate([child0[keep0], (child0 + 1)[keep1]])
            pe_new = np.concatenate([sp_e[keep0], sp_e[keep1]])

            box_n = new_n
            box_c = new_c
            pair_b = np.concatenate([pb_keep, pb_new])
            pair_e = np.concatenate([pe_keep, pe_new])

        # canonical box order: levels, then cells, dimension-major
        order = np.lexsort(tuple(box_c[:, m] for m in range(d - 1, -1, -1))
                           + tuple(box_n[:, m] for m in range(d - 1, -1, -1)))
        rank = np.empty(len(order), dtype=np.int64)
        rank[order] = np.arange(len(order))
        self.box_n = box_n[order]
        self.box_c = box_c[order]
        self.n_boxes = len(self.box_n)
        self._pair_b = rank[pair_b]
        self._pair_e = pair_e

    # ---------------------------------------------------------- pair tables

    def _build_pair_tables(self) -> None:
        disc = self.disc
        P = len(self._pair_b)
        order = np.lexsort((self._pair_e, self._pair_b))
        self._pair_b = self._pair_b[order]
        self._pair_e = self._pair_e[order]

        # closed-form row indices matching the construction order in
        # build_discretization: scaling rows first (level-major), then
        # wavelet rows (gap-major)
        wav_base = (1 << (disc.max_level + 1)) - 1
        el = self._el[self._pair_e]
        ej = self._ej[self._pair_e]
        bn = self.box_n[self._pair_b]
        bcell = self.box_c[self._pair_b]
        self._pair_mats = []
        for m in range(self.d):
            scal = el[:, m] == 0
            idx = np.empty(P, dtype=np.int64)
            idx[scal] = (1 << bn[scal, m]) - 1 + bcell[scal, m]
            wav = ~scal
            delta = bn[wav, m] - el[wav, m] + 1
            r = bcell[wav, m] - (ej[wav, m] << delta)
            idx[wav] = wav_base + (1 << delta) - 2 + r
            self._pair_mats.append(disc.rest_all[idx])

        # scatter accumulates by box (pairs are already box-sorted)
        self._scat_seg = np.searchsorted(self._pair_b, np.arange(self.n_boxes))
        # gather accumulates by element
        self._gorder = np.lexsort((self._pair_b, self._pair_e))
        self._gath_seg = np.searchsorted(
            self._pair_e[self._gorder], np.arange(self.n_elements)
        )

    # -------------------------------------------------------- volume tables

    def _build_volume_tables(self) -> None:
        disc = self.disc
        d = self.d
        nq = disc.nq
        grids = np.meshgrid(*([disc.tq] * d), indexing="ij")
        ref_nodes = np.stack([g.reshape(-1) for g in grids], axis=-1)  # (nt, d)
        wgrids = np.meshgrid(*([disc.wq] * d), indexing="ij")
        self.vol_wts = np.prod(np.stack([g.reshape(-1) for g in wgrids]), axis=0)
        widths = 2.0 ** -self.box_n.astype(float)  # (B, d)
        lo = self.box_c * widths
        self.vol_nodes_unit = lo[:, None, :] + widths[:, None, :] * ref_nodes[None, :, :]
        self.vol_nodes_phys = self.domain.to_physical(self.vol_nodes_unit)
        self.box_measure = np.prod(widths, axis=1)  # (B,)
        self.box_two_pow = 2.0 ** self.box_n.astype(float)  # (B, d)
        self._tensor_shape = (disc.k + 1,) * d
        self._nodes_shape = (nq,) * d

    # --------------------------------------------------------------- faces

    def _build_faces(self, m: int) -> _FaceSet:
        disc = self.disc
        d = self.d
        trans = [t for t in range(d) if t != m]
        S = int(self.box_n[:, m].max())
        pos_minus = (self.box_c[:, m] + 1) << (S - self.box_n[:, m])
        pos_plus = self.box_c[:, m] << (S - self.box_n[:, m])
        periodic = self.bc[m] == "periodic"
        if periodic:
            pos_minus = np.where(pos_minus == (1 << S), 0, pos_minus)

        pm_box: list[np.ndarray] = []
        pp_box: list[np.ndarray] = []
        plevels: list[np.ndarray] = []
        pcells: list[np.ndarray] = []
        positions: list[np.ndarray] = []

        interior = np.unique(np.concatenate([pos_minus, pos_plus]))
        for pos in interior.tolist():
            mi = np.nonzero(pos_minus == pos)[0]
            pi = np.nonzero(pos_plus == pos)[0]
            if len(mi) == 0 and len(pi) == 0:
                continue
            boundary_minus = (not periodic) and pos == (1 << S)
            boundary_plus = (not periodic) and pos == 0
            if len(pi) == 0 and not boundary_minus:
                continue  # no jump: plane interior to spanning boxes
            if len(mi) == 0 and not boundary_plus:
                continue
            if boundary_minus or boundary_plus:
                src = mi if boundary_minus else pi
                n_pc = self.box_n[src][:, trans]
                c_pc = self.box_c[src][:, trans]
                pm_box.append(src if boundary_minus else np.full(len(src), -1, np.int64))
                pp_box.append(np.full(len(src), -1, np.int64) if boundary_minus else src)
                plevels.append(n_pc)
                pcells.append(c_pc)
                positions.append(np.full(len(src), pos, dtype=np.int64))
                continue
            # all-pairs nested intersection over transverse dims
            ok = np.ones((len(mi), len(pi)), dtype=bool)
            for t in trans:
                ok &= _nested_cells(
                    self.box_n[mi, t][:, None],
                    self.box_c[mi, t][:, None],
                    self.box_n[pi, t][None, :],
                    self.box_c[pi, t][None, :],
                )
            ii, jj = np.nonzero(ok)
            bm = mi[ii]
            bp = pi[jj]
            if trans:
                # the piece is the finer side's cell in each transverse dim
                n_pc = np.maximum(self.box_n[bm][:, trans], self.box_n[bp][:, trans])
                finer_is_minus = self.box_n[bm][:, trans] >= self.box_n[bp][:, trans]
                c_pc = np.where(
                    finer_is_minus,
                    self.box_c[bm][:, trans],
                    self.box_c[bp][:, trans],
                )
            else:
                n_pc = np.zeros((len(bm), 0), dtype=np.int64)
                c_pc = np.zeros((len(bm), 0), dtype=np.int64)
            pm_box.append(bm)
            pp_box.append(bp)
            plevels.append(n_pc)
            pcells.append(c_pc)
            positions.append(np.full(len(bm), pos, dtype=np.int64))

        fs = _FaceSet()
        if pm_box:
            fs.minus_box = np.concatenate(pm_box)
            fs.plus_box = np.concatenate(pp_box)
            pl = np.vstack(plevels)
            pc = np.vstack(pcells)
            pos_arr = np.concatenate(positions)
        else:
            fs.minus_box = np.zeros(0, dtype=np.int64)
            fs.plus_box = np.zeros(0, dtype=np.int64)
            pl = np.zeros((0, d - 1), dtype=np.int64)
            pc = np.zeros((0, d - 1), dtype=np.int64)
            pos_arr = np.zeros(0, dtype=np.int64)
        F = len(fs.minus_box)

        def side_tables(box_ids):
            live = box_ids >= 0
            scale = np.ones(F)
            scale[live] = 2.0 ** (self.box_n[box_ids[live]].sum(axis=1) / 2.0)
            vts = []
            for ti, t in enumerate(trans):
                idx = np.zeros(F, dtype=np.int64)
                delta = pl[live, ti] - self.box_n[box_ids[live], t]
                off = pc[live, ti] - (self.box_c[box_ids[live], t] << delta)
                idx[live] = (1 << delta) - 1 + off
                vts.append(disc.vt_all[idx])
            return scale, vts

        fs.scale_minus, fs.vt_minus = side_tables(fs.minus_box)
        fs.scale_plus, fs.vt_plus = side_tables(fs.plus_box)
        fs.measure = 2.0 ** -(pl.sum(axis=1).astype(float)) if F else np.zeros(0)

        # face node coordinates (unit cube), transverse tensor grid
        nq = disc.nq
        n_t = nq ** len(trans)
        nodes = np.empty((F, n_t, d))
        nodes[:, :, m] = (pos_arr / float(1 << S))[:, None]
        if trans:
            tg = np.meshgrid(*([disc.tq] * len(trans)), indexing="ij")
            tg = np.stack([g.reshape(-1) for g in tg], axis=-1)  # (n_t, d-1)
            widths = 2.0 ** -pl.astype(float)
            los = pc * widths
            for ti, t in enumerate(trans):
                nodes[:, :, t] = los[:, ti, None] + widths[:, ti, None] * tg[None, :, ti]
        fs.nodes_unit = nodes

        def accum_order(box_ids):
            live = np.nonzero(box_ids >= 0)[0]
            order = live[np.argsort(box_ids[live], kind="stable")]
            sorted_boxes = box_ids[order]
            uniq, seg = np.unique(sorted_boxes, return_index=True)
            return order, seg, uniq

        fs.order_minus, fs.seg_minus, fs.box_minus_unique = accum_order(fs.minus_box)
        fs.order_plus, fs.seg_plus, fs.box_plus_unique = accum_order(fs.plus_box)
        return fs

    # ----------------------------------------------------------- transforms

    def blocks_from_flat(self, U: np.ndarray) -> np.ndarray:
        return U.reshape(self.n_elements, self.block)

    def realize(self, U: np.ndarray) -> np.ndarray:
        """Hierarchical coefficients -> local Legendre blocks per box (B, bs)."""
        blocks = self.blocks_from_flat(U)
        C = blocks[self._pair_e].reshape((-1,) + self._tensor_shape)
        for m in range(self.d):
            C = _apply_factor(C, self._pair_mats[m], m)
        C = C.reshape(len(self._pair_e), self.block)
        return np.add.reduceat(C, self._scat_seg, axis=0)

    def gather(self, rv: np.ndarray) -> np.ndarray:
        """Adjoint of realize: per-box functionals -> flat element residual."""
        G = rv[self._pair_b].reshape((-1,) + self._tensor_shape)
        for m in range(self.d):
            G = _apply_factor(G, np.swapaxes(self._pair_mats[m], 1, 2), m)
        G = G.reshape(len(self._pair_b), self.block)[self._gorder]
        return np.add.reduceat(G, self._gath_seg, axis=0).reshape(-1)

    def node_values(self, Ubox: np.ndarray) -> np.ndarray:
        """Solution values at the volume quadrature nodes, shape (B, nt)."""
        C = Ubox.reshape((self.n_boxes,) + self._tensor_shape)
        for m in range(self.d):
            C = np.moveaxis(
                np.einsum("qi,p...i->p...q", self.disc.V, np.moveaxis(C, 1 + m, -1)),
                -1,
                1 + m,
            )
        scale = 2.0 ** (self.box_n.sum(axis=1) / 2.0)
        return scale[:, None] * C.reshape(self.n_boxes, -1)

    def integrate(self, node_vals: np.ndarray) -> float:
        """Integral over the unit cube of values given at the volume nodes."""
        return float(self.box_measure @ (node_vals @ self.vol_wts))

    # ----------------------------------------------------------- restriction

    def restrict(self, kept_keys: list[ElementKey]) -> "FrozenSpace":
        """Same geometry, fewer elements (coarsened table, removals only).

        The partition stays valid (merely finer than necessary) and faces on
        which nothing jumps any more integrate to zero identically, so only
        the pair tables and the element indexing change.
        """
        sub = object.__new__(FrozenSpace)
        sub.disc = self.disc
        sub.domain = self.domain
        sub.bc = self.bc
        sub.d = self.d
        sub.keys = list(kept_keys)
        sub.key_index = {key: idx for idx, key in enumerate(sub.keys)}
        sub.n_elements = len(sub.keys)
        sub.block = self.block
        sub.n_dof = sub.n_elements * self.block
        sub._el = np.array([k[0] for k in sub.keys], dtype=np.int64)
        sub._ej = np.array([k[1] for k in sub.keys], dtype=np.int64)
        sub._es = np.maximum(sub._el - 1, 0)

        remap = np.full(self.n_elements, -1, dtype=np.int64)
        for key in kept_keys:
            remap[self.key_index[key]] = sub.key_index[key]
        live = remap[self._pair_e] >= 0
        sub._pair_b = self._pair_b[live]
        sub._pair_e = remap[self._pair_e[live]]
        sub._pair_mats = [mat[live] for mat in self._pair_mats]
        order = np.lexsort((sub._pair_e, sub._pair_b))
        sub._pair_b = sub._pair_b[order]
        sub._pair_e = sub._pair_e[order]
        sub._pair_mats = [mat[order] for mat in sub._pair_mats]
        sub._scat_seg = np.searchsorted(sub._pair_b, np.arange(self.n_boxes))
        sub._gorder = np.lexsort((sub._pair_b, sub._pair_e))
        sub._gath_seg = np.searchsorted(
            sub._pair_e[sub._gorder], np.arange(sub.n_elements)
        )

        for name in (
            "box_n",
            "box_c",
            "n_boxes",
            "vol_wts",
            "vol_nodes_unit",
            "vol_nodes_phys",
            "box_measure",
            "box_two_pow",
            "_tensor_shape",
            "_nodes_shape",
            "_faces",
        ):
            setattr(sub, name, getattr(self, name))
        return sub

    @property
    def faces(self):
        return self._faces
