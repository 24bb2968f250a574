"""Adaptive time stepping: predict, refine, advance, coarsen.

One adaptive step consists of four stages.  A forward-Euler prediction on the
current active set guides refinement: every element whose predicted block
exceeds the threshold gets its missing children (zero-initialized, ancestors
restored as needed).  The solution is then advanced from the old state with
the three-stage strong-stability-preserving Runge-Kutta scheme on the frozen
enlarged set; when first-stage reuse is on, the prediction doubles as stage
one for the elements that already existed (the residual entry of a basis
function does not depend on which superset of the active set carries it, so
the copy is exact up to roundoff).  Finally, leaves whose blocks fall below
the coarsening threshold are removed until none remain.

The step size follows the predicted resolution: dt = cfl / sum_m(c_m / h_m)
with h_m the finest anticipated cell width of dimension m, one level below
the current maximum but never beyond the depth cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .basis import MultiwaveletBasis
from .domain import Domain, unit_domain
from .operator import VelocityField, apply_dg_operator
from .projection import ThresholdConfig, element_indicator, flag_indicator
from .space import FrozenSpace, build_discretization
from .table import ElementTable, children

__all__ = [
    "StepConfig",
    "compute_dt",
    "rk3",
    "rk3_step",
    "screen_and_refine",
    "coarsen",
    "evolve_step",
    "fixed_step",
    "flat_coeffs",
    "store_coeffs",
]


@dataclass(frozen=True)
class StepConfig:
    thresholds: ThresholdConfig
    cfl: float = 0.1
    flux: str = "upwind"
    reuse_first_stage: bool = True

    def __post_init__(self):
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError("cfl must lie in (0, 1]")


def compute_dt(
    table: ElementTable,
    speeds: np.ndarray,
    domain: Domain,
    cfl: float,
) -> float:
    """Time step for the anticipated post-refinement resolution.

    speeds are physical per-dimension bounds; the finest width of dimension m
    is widths[m] * 2^-min(lmax_m + 1, depth cap).
    """
    speeds = np.asarray(speeds, dtype=float)
    lmax = table.max_levels()
    denom = 0.0
    for m in range(table.d):
        target = min(lmax[m] + 1, table.max_level)
        h = domain.widths[m] * 2.0**-target
        denom += speeds[m] / h
    if denom <= 0.0:
        raise ValueError("all speed bounds are zero; no finite time step")
    return cfl / denom


def flat_coeffs(space: FrozenSpace, table: ElementTable) -> np.ndarray:
    U = np.empty(space.n_dof)
    bs = space.block
    for i, key in enumerate(space.keys):
        U[i * bs : (i + 1) * bs] = table.elements[key].coeffs
    return U


def store_coeffs(space: FrozenSpace, U: np.ndarray, table: ElementTable) -> None:
    bs = space.block
    for i, key in enumerate(space.keys):
        table.elements[key].coeffs[:] = U[i * bs : (i + 1) * bs]


def rk3(U: np.ndarray, t: float, dt: float, resid) -> np.ndarray:
    """Three-stage strong-stability-preserving Runge-Kutta step."""
    u1 = U + dt * resid(t, U)
    u2 = 0.75 * U + 0.25 * (u1 + dt * resid(t + dt, u1))
    return U / 3.0 + (2.0 / 3.0) * (u2 + dt * resid(t + 0.5 * dt, u2))


def rk3_step(
    space: FrozenSpace,
    U: np.ndarray,
    field: VelocityField,
    t: float,
    dt: float,
    flux: str,
) -> np.ndarray:
    return rk3(U, t, dt, lambda tt, V: apply_dg_operator(space, V, field, tt, flux))


def screen_and_refine(
    table: ElementTable,
    pred_blocks: dict,
    thresholds: ThresholdConfig,
    basis: MultiwaveletBasis,
) -> list:
    """Add the missing children of every element flagged on the prediction.

    One pass over a snapshot of the active set; blocks absent from
    pred_blocks count as zero.  Returns the added keys (zero-initialized).
    """
    added = []
    for key in table.sorted_keys():
        block = pred_blocks.get(key)
        if block is None:
            continue
        if flag_indicator(block, key[0], basis, thresholds.norm) > thresholds.epsilon:
            for child in children(key, table.max_level):
                if child not in table:
                    added.extend(table.insert_with_ancestors(child))
    return added


def coarsen(
    table: ElementTable,
    thresholds: ThresholdConfig,
    basis: MultiwaveletBasis,
) -> list:
    """Repeatedly drop leaves below the coarsening threshold; returns removals."""
    removed = []
    while True:
        doomed = [
            key
            for key in table.sorted_leaves()
            if any(key[0])
            and element_indicator(table.elements[key].coeffs, key[0], basis, thresholds.norm)
            < thresholds.eta
        ]
        if not doomed:
            return removed
        for key in doomed:
            table.remove_leaf(key)
            removed.append(key)


def evolve_step(
    table: ElementTable,
    field: VelocityField,
    t: float,
    config: StepConfig,
    basis: MultiwaveletBasis,
    domain: Domain | None = None,
    bc: tuple[str, ...] | None = None,
    space: FrozenSpace | None = None,
    dt_max: float | None = None,
):
    """One adaptive step; mutates table, returns (t_new, space_next, stats)."""
    d = table.d
    if domain is None:
        domain = unit_domain(d)
    if bc is None:
        bc = ("periodic",) * d
    disc = build_discretization(table.k, table.max_level)
    if space is None or space.keys != table.sorted_keys():
        space = FrozenSpace(disc, table.sorted_keys(), domain, bc)

    dt = compute_dt(table, field.bound(t), domain, config.cfl)
    if dt_max is not None:
        dt = min(dt, dt_max)

    # stage 1: forward-Euler prediction on the current set
    U0 = flat_coeffs(space, table)
    U_pred = U0 + dt * apply_dg_operator(space, U0, field, t, config.flux)
    bs = space.block
    pred_blocks = {
        key: U_pred[i * bs : (i + 1) * bs] for i, key in enumerate(space.keys)
    }

    # stage 2: refine where the prediction carries detail
    added = screen_and_refine(table, pred_blocks, config.thresholds, basis)

    # stage 3: advance the old state on the frozen enlarged set
    space_p = FrozenSpace(disc, table.sorted_keys(), domain, bc)
    U0_p = flat_coeffs(space_p, table)
    if config.reuse_first_stage and not added:
        u1 = U_pred  # nothing was added; the prediction is stage one verbatim
    else:
        u1 = U0_p + dt * apply_dg_operator(space_p, U0_p, field, t, config.flux)
        if config.reuse_first_stage:
            added_set = set(added)
            old = np.array([key not in added_set for key in space_p.keys])
            u1[np.repeat(old, bs)] = np.concatenate(
                [pred_blocks[key] for key in space_p.keys if key not in added_set]
            )
    u2 = 0.75 * U0_p + 0.25 * (
        u1 + dt * apply_dg_operator(space_p, u1, field, t + dt, config.flux)
    )
    u3 = U0_p / 3.0 + (2.0 / 3.0) * (
        u2 + dt * apply_dg_operator(space_p, u2, field, t + 0.5 * dt, config.flux)
    )
    store_coeffs(space_p, u3, table)

    # stage 4: coarsen and restrict the frozen geometry to the survivors
    removed = coarsen(table, config.thresholds, basis)
    space_next = space_p.restrict(table.sorted_keys()) if removed else space_p
    stats = {
        "dt": dt,
        "added": len(added),
        "removed": len(removed),
        "dof": len(table) * bs,
    }
    return t + dt, space_next, stats


def fixed_step(
    table: ElementTable,
    field: VelocityField,
    t: float,
    config: StepConfig,
    domain: Domain | None = None,
    bc: tuple[str, ...] | None = None,
    space: FrozenSpace | None = None,
    dt_max: float | None = None,
):
    """One step on a static multiresolution set (no refinement, no coarsening)."""
    d = table.d
    if domain is None:
        domain = unit_domain(d)
    if bc is None:
        bc = ("periodic",) * d
    if space is None:
        disc = build_discretization(table.k, table.max_level)
        space = FrozenSpace(disc, table.sorted_keys(), domain, bc)
    dt = compute_dt(table, field.bound(t), domain, config.cfl)
    if dt_max is not None:
        dt = min(dt, dt_max)
    U = flat_coeffs(space, table)
    U = rk3_step(space, U, field, t, dt, config.flux)
    store_coeffs(space, U, table)
    return t + dt, space, {"dt": dt, "dof": space.n_dof}
