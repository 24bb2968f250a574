"""Hash-table storage for the active set of multiresolution elements.

An element key is a pair of d-vectors (levels, cells).  Per dimension the
cell index ranges over 0 <= j < max(2^(l-1), 1).  The table maintains the
set of active elements together with a leaf table and child counts, and
enforces the structural invariants: no holes (every parent of an active
element is active), leaf bookkeeping consistent with child counts, the
level-0 root permanently present, and all indices in range.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterator

import numpy as np

ElementKey = tuple[tuple[int, ...], tuple[int, ...]]

__all__ = [
    "ElementKey",
    "StructuralError",
    "Element",
    "ElementTable",
    "children",
    "parents",
    "key_bytes",
    "cells_at_level",
    "root_key",
]


class StructuralError(Exception):
    """Violation of a structural precondition or invariant of the table."""


def cells_at_level(level: int) -> int:
    """Number of admissible cell indices at a 1D level."""
    return max(2 ** (level - 1), 1)


def root_key(d: int) -> ElementKey:
    return ((0,) * d, (0,) * d)


def validate_key(key: ElementKey, max_level: int | None = None) -> None:
    levels, cells = key
    if len(levels) != len(cells) or not levels:
        raise StructuralError(f"malformed key {key}")
    for l, j in zip(levels, cells):
        if l < 0 or (max_level is not None and l > max_level):
            raise StructuralError(f"level {l} out of range in {key}")
        if not 0 <= j < cells_at_level(l):
            raise StructuralError(f"cell {j} out of range at level {l} in {key}")


def children(key: ElementKey, max_level: int) -> list[ElementKey]:
    """Direct children of a key, capped at max_level.

    Per dimension m with l_m + 1 <= max_level: the level-0 parent has one
    child (level 1, cell 0); deeper parents split their cell in two.  The
    list is ordered by dimension, then by child cell.
    """
    levels, cells = key
    out: list[ElementKey] = []
    for m, (l, j) in enumerate(zip(levels, cells)):
        if l + 1 > max_level:
            continue
        child_cells = (0,) if l == 0 else (2 * j, 2 * j + 1)
        new_levels = levels[:m] + (l + 1,) + levels[m + 1 :]
        for cj in child_cells:
            out.append((new_levels, cells[:m] + (cj,) + cells[m + 1 :]))
    return out


def parents(key: ElementKey) -> list[ElementKey]:
    """Direct parents of a key (one per dimension with l_m >= 1)."""
    levels, cells = key
    out: list[ElementKey] = []
    for m, (l, j) in enumerate(zip(levels, cells)):
        if l == 0:
            continue
        pj = 0 if l - 1 == 0 else j // 2
        out.append((levels[:m] + (l - 1,) + levels[m + 1 :], cells[:m] + (pj,) + cells[m + 1 :]))
    return out


def key_bytes(key: ElementKey) -> bytes:
    """Canonical encoding: d, then levels, then cells, as unsigned LE 16-bit.

    Used as the deterministic sort key for every traversal and dump.
    """
    levels, cells = key
    d = len(levels)
    return struct.pack(f"<{2 * d + 1}H", d, *levels, *cells)


@dataclass
class Element:
    """One active element: key, coefficient block, child bookkeeping."""

    key: ElementKey
    coeffs: np.ndarray
    child_count: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.child_count == 0


@dataclass
class ElementTable:
    """Active element set with leaf table and structural invariants.

    Not thread-safe for writes; reads may be shared.  Iteration helpers
    return keys sorted by the canonical byte encoding so that every
    traversal of the same set is identical.
    """

    d: int
    k: int
    max_level: int
    elements: dict[ElementKey, Element] = dc_field(default_factory=dict)
    leaves: set[ElementKey] = dc_field(default_factory=set)

    @property
    def block_size(self) -> int:
        return (self.k + 1) ** self.d

    def __len__(self) -> int:
        return len(self.elements)

    def __contains__(self, key: ElementKey) -> bool:
        return key in self.elements

    @classmethod
    def with_root(cls, d: int, k: int, max_level: int) -> "ElementTable":
        table = cls(d=d, k=k, max_level=max_level)
        rk = root_key(d)
        table.elements[rk] = Element(rk, np.zeros(table.block_size))
        table.leaves.add(rk)
        return table

    # -- mutation -----------------------------------------------------------

    def insert(self, key: ElementKey, coeffs: np.ndarray | None = None) -> Element:
        """Insert a new element whose parents are all present.

        The caller guarantees hole-freedom; this verifies it and raises
        StructuralError otherwise (also on duplicates or bad indices).
        New elements are leaves; parent child counts are incremented and
        parents leave the leaf table.
        """
        validate_key(key, self.max_level)
        if key in self.elements:
            raise StructuralError(f"duplicate insert of {key}")
        pars = parents(key)
        for p in pars:
            if p not in self.elements:
                raise StructuralError(f"hole: parent {p} of {key} not present")
        if coeffs is None:
            coeffs = np.zeros(self.block_size)
        else:
            coeffs = np.asarray(coeffs, dtype=float)
            if coeffs.shape != (self.block_size,):
                raise StructuralError(
                    f"coefficient block must have shape ({self.block_size},)"
                )
        elem = Element(key, coeffs)
        self.elements[key] = elem
        self.leaves.add(key)
        for p in pars:
            parent = self.elements[p]
            parent.child_count += 1
            self.leaves.discard(p)
        return elem

    def insert_with_ancestors(
        self, key: ElementKey, coeff_fn: Callable[[ElementKey], np.ndarray] | None = None
    ) -> list[ElementKey]:
        """Insert key plus any missing ancestors, deepest-last.

        coeff_fn supplies the coefficient block for each newly created
        element (defaults to zeros).  Returns the newly inserted keys in
        insertion order.
        """
        if key in self.elements:
            return []
        added: list[ElementKey] = []
        stack = [key]
        while stack:
            top = stack[-1]
            missing = [p for p in parents(top) if p not in self.elements]
            if missing:
                stack.extend(missing)
                continue
            stack.pop()
            if top in self.elements:
                continue
            self.insert(top, coeff_fn(top) if coeff_fn is not None else None)
            added.append(top)
        return added

    def remove_leaf(self, key: ElementKey) -> None:
        """Remove a leaf element; never the level-0 root.

        Parents whose last child disappears become leaves again.
        """
        if key not in self.elements:
            raise StructuralError(f"cannot remove absent element {key}")
        if key not in self.leaves:
            raise StructuralError(f"cannot remove non-leaf element {key}")
        if sum(key[0]) == 0:
            raise StructuralError("the level-0 root element is permanent")
        del self.elements[key]
        self.leaves.discard(key)
        for p in parents(key):
            parent = self.elements[p]
            parent.child_count -= 1
            if parent.child_count == 0:
                self.leaves.add(p)

    # -- queries ------------------------------------------------------------

    def sorted_keys(self) -> list[ElementKey]:
        return sorted(self.elements, key=key_bytes)

    def sorted_leaves(self) -> list[ElementKey]:
        return sorted(self.leaves, key=key_bytes)

    def __iter__(self) -> Iterator[Element]:
        for key in self.sorted_keys():
            yield self.elements[key]

    def max_levels(self) -> tuple[int, ...]:
        """Per-dimension maximum level over the active set."""
        out = [0] * self.d
        for levels, _ in self.elements:
            for m, l in enumerate(levels):
                if l > out[m]:
                    out[m] = l
        return tuple(out)

    def audit(self) -> None:
        """Brute-force check of all structural invariants; raises on failure."""
        for key, elem in self.elements.items():
            validate_key(key, self.max_level)
            for p in parents(key):
                if p not in self.elements:
                    raise StructuralError(f"audit: hole above {key}: missing {p}")
            n_children = sum(1 for c in children(key, self.max_level) if c in self.elements)
            if n_children != elem.child_count:
                raise StructuralError(
                    f"audit: {key} child_count {elem.child_count} != actual {n_children}"
                )
            if (elem.child_count == 0) != (key in self.leaves):
                raise StructuralError(f"audit: leaf table inconsistent at {key}")
        if root_key(self.d) not in self.elements:
            raise StructuralError("audit: level-0 root element missing")
        for key in self.leaves:
            if key not in self.elements:
                raise StructuralError(f"audit: stale leaf entry {key}")

    # -- dumps ---------------------------------------------------------------

    def dump_elements_csv(self, path: str) -> None:
        """Write `l1..ld,j1..jd,block_l2` rows sorted by canonical encoding."""
        d = self.d
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [f"l{m + 1}" for m in range(d)] + [f"j{m + 1}" for m in range(d)] + ["block_l2"]
            )
            for key in self.sorted_keys():
                elem = self.elements[key]
                norm = float(np.linalg.norm(elem.coeffs))
                writer.writerow(list(key[0]) + list(key[1]) + [f"{norm:.17g}"])

    def dump_coeffs_csv(self, path: str) -> None:
        """Auxiliary dump with full coefficient blocks (one column per entry)."""
        d = self.d
        nb = self.block_size
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [f"l{m + 1}" for m in range(d)]
                + [f"j{m + 1}" for m in range(d)]
                + [f"c{i}" for i in range(nb)]
            )
            for key in self.sorted_keys():
                elem = self.elements[key]
                writer.writerow(
                    list(key[0]) + list(key[1]) + [f"{c:.17g}" for c in elem.coeffs]
                )
