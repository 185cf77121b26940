"""Topology scoring of binary voxel masks.

A mask is treated as a union of closed unit cubes. The Euler
characteristic is counted directly from the cubical complex
(vertices - edges + faces - cubes). Component counts use the matching
connectivity pair: 26-connectivity for foreground, 6-connectivity for
the background, which keeps b0/b2 consistent with the complex so that
``euler == b0 - b1 + b2`` is an internal cross-check rather than a
definition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .datamodel import DEFAULT_SCHEMA

#: Anatomically expected Euler characteristic per ranked tissue code.
#: All targets come from expected component counts (no tunnels or
#: cavities); the cortical grey matter is expected in two components.
DEFAULT_EC_TARGETS = dict(DEFAULT_SCHEMA.ec_targets)

_STRUCT_26 = np.ones((3, 3, 3), dtype=bool)
_STRUCT_6 = ndimage.generate_binary_structure(3, 1)


class TopologyConsistencyError(RuntimeError):
    """b1 came out negative, which signals a connectivity-convention bug."""


@dataclass(frozen=True)
class TopologySummary:
    """Betti numbers (components, tunnels, cavities) plus the Euler number."""

    b0: int
    b1: int
    b2: int
    euler: int

    def __post_init__(self) -> None:
        if min(self.b0, self.b1, self.b2) < 0:
            raise ValueError(f"negative Betti number in {(self.b0, self.b1, self.b2)}")
        if self.euler != self.b0 - self.b1 + self.b2:
            raise ValueError(
                f"euler {self.euler} != b0 - b1 + b2 = {self.b0 - self.b1 + self.b2}"
            )


def _pair_or(arr: np.ndarray, axis: int) -> np.ndarray:
    """OR of adjacent entries along one axis (length shrinks by one)."""
    lo = [slice(None)] * arr.ndim
    hi = [slice(None)] * arr.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return arr[tuple(lo)] | arr[tuple(hi)]


def euler_characteristic(mask: np.ndarray) -> int:
    """Euler characteristic of the union of closed unit voxels.

    Counts distinct vertices, edges, square faces and cubes of the
    complex: V - E + F - C. Empty masks give 0.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 3:
        raise ValueError(f"mask must be 3D, got shape {mask.shape}")
    cubes = int(np.count_nonzero(mask))
    if cubes == 0:
        return 0
    padded = np.zeros(tuple(s + 2 for s in mask.shape), dtype=bool)
    padded[1:-1, 1:-1, 1:-1] = mask

    fx = _pair_or(padded, 0)
    fy = _pair_or(padded, 1)
    fz = _pair_or(padded, 2)
    faces = int(fx.sum()) + int(fy.sum()) + int(fz.sum())

    exy = _pair_or(fx, 1)   # paired over x and y -> z-directed edges
    exz = _pair_or(fx, 2)   # x and z -> y-directed edges
    eyz = _pair_or(fy, 2)   # y and z -> x-directed edges
    edges = int(exy.sum()) + int(exz.sum()) + int(eyz.sum())

    vertices = int(_pair_or(exy, 2).sum())
    return vertices - edges + faces - cubes


def _component_count(mask: np.ndarray, structure: np.ndarray) -> int:
    if not mask.any():
        return 0
    _, count = ndimage.label(mask, structure=structure)
    return int(count)


def _cavity_count(mask: np.ndarray) -> int:
    """6-connected background components that do not touch the grid boundary."""
    background = ~mask
    if not background.any():
        return 0
    labels, count = ndimage.label(background, structure=_STRUCT_6)
    if count == 0:
        return 0
    touching: set[int] = set()
    for axis in range(3):
        lo = np.take(labels, 0, axis=axis)
        hi = np.take(labels, labels.shape[axis] - 1, axis=axis)
        touching.update(int(v) for v in np.unique(lo) if v)
        touching.update(int(v) for v in np.unique(hi) if v)
    return count - len(touching)


def betti_numbers(mask: np.ndarray) -> TopologySummary:
    """Component/tunnel/cavity counts for a binary mask.

    b0 counts 26-connected foreground components, b2 counts enclosed
    6-connected background pockets, and b1 falls out of the Euler
    identity. A negative b1 is impossible for consistent conventions and
    raises :class:`TopologyConsistencyError`.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 3:
        raise ValueError(f"mask must be 3D, got shape {mask.shape}")
    euler = euler_characteristic(mask)
    b0 = _component_count(mask, _STRUCT_26)
    b2 = _cavity_count(mask)
    b1 = b0 + b2 - euler
    if b1 < 0:
        raise TopologyConsistencyError(
            f"b1 = {b0} + {b2} - {euler} < 0; foreground/background connectivity conventions disagree"
        )
    return TopologySummary(b0=b0, b1=b1, b2=b2, euler=euler)


def euler_difference(
    pred_mask: np.ndarray,
    code: int,
    targets: dict[int, int] | None = None,
) -> int:
    """Absolute gap between the prediction's Euler number and the fixed target.

    An empty prediction scores ``|0 - target|``; whether such fully
    missing labels additionally trigger ranking penalties is decided at
    aggregation time.
    """
    targets = DEFAULT_EC_TARGETS if targets is None else targets
    if code not in targets:
        raise KeyError(f"no Euler target for label code {code}")
    return abs(euler_characteristic(pred_mask) - int(targets[code]))
