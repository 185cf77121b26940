"""Per-label segmentation metrics: overlap, volume, surface distance, topology.

Conventions (also recorded in run manifests):

* Dice and volume similarity are 1.0 when both masks are empty and 0.0
  when exactly one is empty, matching the ranking penalty for missing
  labels.
* HD95 pools both directed surface-distance multisets and takes a single
  95th percentile with linear interpolation at index ``p * (n - 1) / 100``.
  Distances run between surface-voxel centers in world millimetres.
* The distance transform is exact and separable (per-axis lower-envelope
  passes on squared distances), honouring anisotropic spacing.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .datamodel import DEFAULT_SCHEMA, LabelSchema, LabelVolume, binary_mask
from .topology import euler_difference

MISSING = None  # marker for undefined HD95 (empty mask); rendered as an empty CSV cell

METRIC_NAMES = ("dice", "vs", "hd95", "ed")

METRIC_CSV_COLUMNS = ("case_id", "label", "dice", "vs", "hd95", "ed")


class PairingError(ValueError):
    """Prediction and reference volumes do not form a comparable pair."""


@dataclass(frozen=True)
class MetricRecord:
    """Scores of one (case, tissue label) pair; the atom of ranking."""

    case_id: str
    label: int
    dice: float
    vs: float
    hd95: float | None
    ed: int


def _check_same_shape(pred: np.ndarray, ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=bool)
    ref = np.asarray(ref, dtype=bool)
    if pred.shape != ref.shape:
        raise ValueError(f"mask shape mismatch: {pred.shape} vs {ref.shape}")
    return pred, ref


def dice(pred: np.ndarray, ref: np.ndarray) -> float:
    """Voxel-overlap agreement, 2|P & G| / (|P| + |G|)."""
    pred, ref = _check_same_shape(pred, ref)
    p = int(np.count_nonzero(pred))
    g = int(np.count_nonzero(ref))
    if p + g == 0:
        return 1.0
    inter = int(np.count_nonzero(pred & ref))
    return 2.0 * inter / (p + g)


def volume_similarity(pred: np.ndarray, ref: np.ndarray) -> float:
    """Region-size agreement, 1 - ||P| - |G|| / (|P| + |G|)."""
    pred, ref = _check_same_shape(pred, ref)
    p = int(np.count_nonzero(pred))
    g = int(np.count_nonzero(ref))
    if p + g == 0:
        return 1.0
    return 1.0 - abs(p - g) / (p + g)


def surface_voxels(mask: np.ndarray) -> np.ndarray:
    """Voxels of the mask with at least one face-adjacent background voxel.

    Out-of-bounds neighbours count as background, so voxels on the grid
    boundary are surface.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 3:
        raise ValueError(f"mask must be 3D, got shape {mask.shape}")
    padded = np.zeros(tuple(s + 2 for s in mask.shape), dtype=bool)
    padded[1:-1, 1:-1, 1:-1] = mask
    interior = (
        padded[:-2, 1:-1, 1:-1] & padded[2:, 1:-1, 1:-1]
        & padded[1:-1, :-2, 1:-1] & padded[1:-1, 2:, 1:-1]
        & padded[1:-1, 1:-1, :-2] & padded[1:-1, 1:-1, 2:]
    )
    return mask & ~interior


@njit(cache=True)
def _envelope_pass(rows: np.ndarray, step2: float) -> None:  # pragma: no cover - jitted
    """One separable pass of the exact squared-distance transform.

    ``rows`` holds squared distances (inf where not yet reachable) and is
    updated in place along the last axis. Parabolas rooted at infinite
    values are skipped; a line with no finite entries stays infinite.
    """
    nlines, n = rows.shape
    v = np.empty(n, np.int64)
    z = np.empty(n + 1, np.float64)
    out = np.empty(n, np.float64)
    for li in range(nlines):
        row = rows[li]
        k = -1
        for q in range(n):
            fq = row[q]
            if fq == np.inf:
                continue
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -np.inf
                z[1] = np.inf
                continue
            p = v[k]
            s = ((fq - row[p]) / step2 + q * q - p * p) / (2.0 * (q - p))
            while k >= 0 and s <= z[k]:
                k -= 1
                if k >= 0:
                    p = v[k]
                    s = ((fq - row[p]) / step2 + q * q - p * p) / (2.0 * (q - p))
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -np.inf
            else:
                k += 1
                v[k] = q
                z[k] = s
            z[k + 1] = np.inf
        if k < 0:
            continue  # whole line unreachable in this pass
        j = 0
        for q in range(n):
            while z[j + 1] < q:
                j += 1
            p = v[j]
            out[q] = (q - p) * (q - p) * step2 + row[p]
        row[:] = out


def edt(mask: np.ndarray, spacing: tuple[float, float, float]) -> np.ndarray:
    """Exact Euclidean distance (mm) from every voxel center to the mask.

    Distances are measured to the nearest true-voxel center with
    anisotropic spacing honoured exactly.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 3:
        raise ValueError(f"mask must be 3D, got shape {mask.shape}")
    if not mask.any():
        raise ValueError("distance transform of an empty mask is undefined")
    sq = np.where(mask, 0.0, np.inf)
    for axis in range(3):
        moved = np.moveaxis(sq, axis, -1)
        shape = moved.shape
        flat = np.ascontiguousarray(moved).reshape(-1, shape[-1])
        _envelope_pass(flat, float(spacing[axis]) ** 2)
        sq = np.moveaxis(flat.reshape(shape), -1, axis)
    return np.sqrt(sq)


def _bounding_slices(mask: np.ndarray) -> tuple[slice, slice, slice]:
    idx = np.nonzero(mask)
    return tuple(slice(int(ax.min()), int(ax.max()) + 1) for ax in idx)  # type: ignore[return-value]


def _union_slices(a: np.ndarray, b: np.ndarray) -> tuple[slice, slice, slice]:
    sa = _bounding_slices(a)
    sb = _bounding_slices(b)
    return tuple(
        slice(min(x.start, y.start), max(x.stop, y.stop)) for x, y in zip(sa, sb)
    )  # type: ignore[return-value]


def hd95(
    pred: np.ndarray,
    ref: np.ndarray,
    spacing: tuple[float, float, float],
    percentile: float = 95.0,
) -> float | None:
    """Robust symmetric surface distance in millimetres.

    Pools the two directed surface-distance multisets (prediction surface
    to reference surface and vice versa) and returns their 95th
    percentile. Returns the MISSING marker when either mask is empty; the
    ranking stage turns that into a penalty.
    """
    pred, ref = _check_same_shape(pred, ref)
    if not pred.any() or not ref.any():
        return MISSING
    # Distances are sampled only at surface voxels, so both transforms can
    # run on the joint bounding box without changing any sampled value.
    box = _union_slices(pred, ref)
    sp = surface_voxels(pred[box])
    sr = surface_voxels(ref[box])
    dist_to_ref = edt(sr, spacing)
    dist_to_pred = edt(sp, spacing)
    pooled = np.concatenate([dist_to_ref[sp], dist_to_pred[sr]])
    return float(np.percentile(pooled, percentile))


def evaluate_case(
    case_id: str,
    pred: LabelVolume,
    ref: LabelVolume,
    schema: LabelSchema = DEFAULT_SCHEMA,
) -> list[MetricRecord]:
    """All four metrics for every ranked label of one volume pair."""
    if pred.dims != ref.dims:
        raise PairingError(f"case {case_id}: dims {pred.dims} != reference dims {ref.dims}")
    if not np.allclose(pred.affine, ref.affine, atol=1e-3):
        raise PairingError(f"case {case_id}: prediction and reference affines differ beyond 1e-3")
    records = []
    for code in schema.ranked_codes:
        pm = binary_mask(pred, code, schema)
        rm = binary_mask(ref, code, schema)
        records.append(
            MetricRecord(
                case_id=case_id,
                label=code,
                dice=dice(pm, rm),
                vs=volume_similarity(pm, rm),
                hd95=hd95(pm, rm, ref.spacing),
                ed=euler_difference(pm, code, schema.ec_targets),
            )
        )
    return records


def label_was_missing(record: MetricRecord) -> bool:
    """Heuristic missing-label signature used by the penalty rules.

    HD95 is undefined when a mask is empty; the both-empty case is a
    correct prediction of absence (dice and vs are 1), anything else with
    an undefined HD95 means one side lacked the label entirely.
    """
    return record.hd95 is MISSING and not (record.dice == 1.0 and record.vs == 1.0)


def write_metric_csv(records: list[MetricRecord], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [r.case_id, r.label, repr(r.dice), repr(r.vs), "" if r.hd95 is MISSING else repr(r.hd95), r.ed]
            )


def read_metric_csv(path: str | Path) -> list[MetricRecord]:
    records = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRIC_CSV_COLUMNS:
            raise ValueError(f"{path}: metric CSV header {reader.fieldnames} != {METRIC_CSV_COLUMNS}")
        for row in reader:
            records.append(
                MetricRecord(
                    case_id=row["case_id"],
                    label=int(row["label"]),
                    dice=float(row["dice"]),
                    vs=float(row["vs"]),
                    hd95=MISSING if row["hd95"] == "" else float(row["hd95"]),
                    ed=int(row["ed"]),
                )
            )
    return records


def write_metric_json(records: list[MetricRecord], path: str | Path, manifest_hash: str | None = None) -> None:
    doc = {"records": [asdict(r) for r in records]}
    if manifest_hash is not None:
        doc["manifest_hash"] = manifest_hash
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
