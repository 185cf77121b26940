"""Synthetic label volumes with known geometry, plus brute-force oracles.

The phantoms have analytically known topology and the oracles recompute
distances and component counts by direct enumeration. Both are
deliberately slow (the oracles are quadratic and capped at 32 cubed) and
exist to cross-check the production kernels.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .datamodel import LabelVolume
from .segmetrics import surface_voxels

PHANTOM_KINDS = ("SolidBall", "HollowSphere", "Torus", "NestedShells", "TwoComponents")

ORACLE_VOXEL_CAP = 32 ** 3

_OFFSETS_6 = np.array(
    [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)], dtype=np.int64
)
_OFFSETS_26 = np.array(
    [(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1) if (i, j, k) != (0, 0, 0)],
    dtype=np.int64,
)


class PhantomSpecError(ValueError):
    """Shape does not fit inside the requested grid with a one-voxel margin."""


class OracleScopeError(ValueError):
    """Input is larger than the brute-force oracles are allowed to handle."""


@dataclass(frozen=True)
class PhantomSpec:
    """Recipe for a deterministic synthetic label volume.

    ``radii`` are in voxel units and mean, per kind: SolidBall (r,);
    HollowSphere (outer, inner); Torus (ring, tube); TwoComponents
    (r1, r2) centred apart along x; NestedShells seven descending radii,
    one per label code 1..7 from the outermost shell inwards.
    """

    kind: str
    dims: tuple[int, int, int] = (48, 48, 48)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    radii: tuple[float, ...] = ()
    center: tuple[float, float, float] | None = None
    label: int = 1

    def __post_init__(self) -> None:
        if self.kind not in PHANTOM_KINDS:
            raise PhantomSpecError(f"unknown phantom kind {self.kind!r}")
        if min(self.dims) < 3:
            raise PhantomSpecError(f"dims {self.dims} too small for any phantom")
        expected = {"SolidBall": 1, "HollowSphere": 2, "Torus": 2, "TwoComponents": 2, "NestedShells": 7}
        if self.radii and len(self.radii) != expected[self.kind]:
            raise PhantomSpecError(
                f"{self.kind} needs {expected[self.kind]} radii, got {len(self.radii)}"
            )


def _default_radii(spec: PhantomSpec) -> tuple[float, ...]:
    scale = (min(spec.dims) - 3) / 2.0
    if spec.kind == "SolidBall":
        return (0.55 * scale,)
    if spec.kind == "HollowSphere":
        return (0.60 * scale, 0.35 * scale)
    if spec.kind == "Torus":
        return (0.55 * scale, 0.22 * scale)
    if spec.kind == "TwoComponents":
        return (0.28 * scale, 0.22 * scale)
    # NestedShells: seven strictly decreasing radii with >= 2 voxel gaps
    outer = scale
    return tuple(outer * (7 - i) / 7.0 for i in range(7))


def generate(spec: PhantomSpec) -> LabelVolume:
    """Voxelize the spec: a voxel is set iff its center satisfies the shape."""
    nx, ny, nz = spec.dims
    cx, cy, cz = spec.center if spec.center is not None else ((nx - 1) / 2.0, (ny - 1) / 2.0, (nz - 1) / 2.0)
    radii = spec.radii if spec.radii else _default_radii(spec)
    ii, jj, kk = np.indices(spec.dims, dtype=float)
    dx, dy, dz = ii - cx, jj - cy, kk - cz
    dist = np.sqrt(dx * dx + dy * dy + dz * dz)
    grid = np.zeros(spec.dims, dtype=np.uint8)

    if spec.kind == "SolidBall":
        grid[dist <= radii[0]] = spec.label
    elif spec.kind == "HollowSphere":
        outer, inner = radii
        if inner >= outer:
            raise PhantomSpecError(f"inner radius {inner} must be below outer {outer}")
        grid[(dist <= outer) & (dist > inner)] = spec.label
    elif spec.kind == "Torus":
        ring, tube = radii
        radial = np.sqrt(dx * dx + dy * dy) - ring
        grid[(radial * radial + dz * dz) <= tube * tube] = spec.label
    elif spec.kind == "TwoComponents":
        r1, r2 = radii
        gap = 2.0  # keep components separated beyond diagonal adjacency
        c1 = cx - (r2 + gap / 2.0 + 1.0)
        c2 = cx + (r1 + gap / 2.0 + 1.0)
        d1 = np.sqrt((ii - c1) ** 2 + dy * dy + dz * dz)
        d2 = np.sqrt((ii - c2) ** 2 + dy * dy + dz * dz)
        grid[d1 <= r1] = spec.label
        grid[d2 <= r2] = spec.label
    else:  # NestedShells
        rs = list(radii)
        if any(rs[i] <= rs[i + 1] for i in range(len(rs) - 1)):
            raise PhantomSpecError(f"NestedShells radii must strictly decrease, got {rs}")
        for code in range(1, 8):
            outer = rs[code - 1]
            inner = rs[code] if code < 7 else -1.0
            grid[(dist <= outer) & (dist > inner)] = code

    if _touches_boundary(grid != 0):
        raise PhantomSpecError(f"{spec.kind} with radii {tuple(radii)} overflows dims {spec.dims}")
    affine = np.diag([spec.spacing[0], spec.spacing[1], spec.spacing[2], 1.0])
    return LabelVolume(data=grid, spacing=spec.spacing, affine=affine)


def _touches_boundary(mask: np.ndarray) -> bool:
    return bool(
        mask[0].any() or mask[-1].any()
        or mask[:, 0].any() or mask[:, -1].any()
        or mask[:, :, 0].any() or mask[:, :, -1].any()
    )


def _check_oracle_size(*masks: np.ndarray) -> None:
    for m in masks:
        if m.size > ORACLE_VOXEL_CAP:
            raise OracleScopeError(f"oracle capped at {ORACLE_VOXEL_CAP} voxels, got {m.size}")


def _min_dists(from_pts: np.ndarray, to_pts: np.ndarray) -> np.ndarray:
    """Nearest-point distance from each row of from_pts to to_pts, chunked."""
    out = np.empty(len(from_pts))
    step = 512
    for lo in range(0, len(from_pts), step):
        chunk = from_pts[lo:lo + step]
        d2 = ((chunk[:, None, :] - to_pts[None, :, :]) ** 2).sum(axis=2)
        out[lo:lo + step] = np.sqrt(d2.min(axis=1))
    return out


def brute_hausdorff(
    pred: np.ndarray,
    ref: np.ndarray,
    spacing: tuple[float, float, float],
    percentile: float = 95.0,
) -> float:
    """All-pairs surface-distance percentile; same pooling rule as hd95."""
    pred = np.asarray(pred, dtype=bool)
    ref = np.asarray(ref, dtype=bool)
    _check_oracle_size(pred, ref)
    if not pred.any() or not ref.any():
        raise ValueError("brute_hausdorff needs two non-empty masks")
    sp = np.argwhere(surface_voxels(pred)).astype(float) * np.asarray(spacing)
    sr = np.argwhere(surface_voxels(ref)).astype(float) * np.asarray(spacing)
    pooled = np.concatenate([_min_dists(sp, sr), _min_dists(sr, sp)])
    return float(np.percentile(pooled, percentile))


def brute_components(mask: np.ndarray, connectivity: int) -> int:
    """Flood-fill component count under 6- or 26-connectivity."""
    if connectivity not in (6, 26):
        raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")
    mask = np.asarray(mask, dtype=bool)
    _check_oracle_size(mask)
    offsets = _OFFSETS_6 if connectivity == 6 else _OFFSETS_26
    seen = np.zeros(mask.shape, dtype=bool)
    dims = mask.shape
    count = 0
    for seed in np.argwhere(mask):
        si, sj, sk = (int(v) for v in seed)
        if seen[si, sj, sk]:
            continue
        count += 1
        seen[si, sj, sk] = True
        queue = deque([(si, sj, sk)])
        while queue:
            i, j, k = queue.popleft()
            for di, dj, dk in offsets:
                ni, nj, nk = i + int(di), j + int(dj), k + int(dk)
                if 0 <= ni < dims[0] and 0 <= nj < dims[1] and 0 <= nk < dims[2]:
                    if mask[ni, nj, nk] and not seen[ni, nj, nk]:
                        seen[ni, nj, nk] = True
                        queue.append((ni, nj, nk))
    return count


def brute_edt(mask: np.ndarray, spacing: tuple[float, float, float]) -> np.ndarray:
    """Nearest-site scan: exact distances by direct minimisation."""
    mask = np.asarray(mask, dtype=bool)
    _check_oracle_size(mask)
    if not mask.any():
        raise ValueError("distance transform of an empty mask is undefined")
    sites = np.argwhere(mask).astype(float) * np.asarray(spacing)
    grid = np.indices(mask.shape).reshape(3, -1).T.astype(float) * np.asarray(spacing)
    return _min_dists(grid, sites).reshape(mask.shape)
