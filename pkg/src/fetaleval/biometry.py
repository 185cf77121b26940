"""Biometry task machinery: landmark measurements, MAPE, reference baselines.

Each of the five measurements is a linear caliper: the Euclidean distance
in world millimetres between its two landmark endpoints. Landmarks arrive
either as explicit world-space points or as single-voxel (or small blob)
codes in a label volume, in which case the endpoint is the world position
of the blob centroid.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datamodel import DEFAULT_SCHEMA, LabelSchema, LabelVolume, Point3, apply_affine

MEASUREMENT_KINDS = ("LCC", "HV", "bBIP", "sBIP", "TCD")

BIOMETRY_CSV_COLUMNS = ("case_id", "kind", "value_mm")

#: Expert two-observer agreement (MAPE, percent) used as an upper-bound
#: reference when reading leaderboards; not reproducible without the
#: private annotations, so these are documentation constants only.
INTER_RATER_REFERENCE_MAPE = {"LCC": 9.59, "HV": 8.04, "bBIP": 3.28, "sBIP": 1.49, "TCD": 4.89}


class MeasurementError(ValueError):
    pass


class FitError(ValueError):
    pass


def _check_kind(kind: str) -> str:
    if kind not in MEASUREMENT_KINDS:
        raise MeasurementError(f"unknown measurement kind {kind!r}")
    return kind


@dataclass(frozen=True)
class LandmarkSet:
    """Named endpoint pairs for one case, world millimetres."""

    case_id: str
    pairs: dict[str, tuple[Point3, Point3]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for kind, (a, b) in self.pairs.items():
            _check_kind(kind)
            if a.distance_to(b) <= 0.0:
                raise MeasurementError(f"case {self.case_id}: {kind} endpoints coincide")


@dataclass(frozen=True)
class BiometryRecord:
    """One measurement value for one case; value is None when missing."""

    case_id: str
    kind: str
    value_mm: float | None

    def __post_init__(self) -> None:
        _check_kind(self.kind)
        if self.value_mm is not None:
            if not math.isfinite(self.value_mm) or self.value_mm <= 0:
                raise MeasurementError(
                    f"case {self.case_id}: {self.kind} value {self.value_mm!r} must be finite and positive"
                )


def measure(landmarks: LandmarkSet, kind: str) -> float | None:
    """Caliper reading in mm, or None when the pair was not annotated."""
    _check_kind(kind)
    pair = landmarks.pairs.get(kind)
    if pair is None:
        return None
    return pair[0].distance_to(pair[1])


def measure_all(landmarks: LandmarkSet) -> list[BiometryRecord]:
    return [
        BiometryRecord(landmarks.case_id, kind, measure(landmarks, kind))
        for kind in MEASUREMENT_KINDS
    ]


def landmarks_from_label_volume(
    volume: LabelVolume,
    case_id: str,
    schema: LabelSchema = DEFAULT_SCHEMA,
) -> LandmarkSet:
    """Extract endpoint pairs from landmark codes in a label volume.

    Each endpoint is the world position of the centroid of its code's
    voxels. A pair is present only when both codes occupy at least one
    voxel.
    """
    pairs: dict[str, tuple[Point3, Point3]] = {}
    for kind, (code_a, code_b) in schema.landmark_codes.items():
        _check_kind(kind)
        ends = []
        for code in (code_a, code_b):
            idx = np.argwhere(volume.data == code)
            if len(idx) == 0:
                ends = []
                break
            ends.append(apply_affine(volume.affine, idx.mean(axis=0)))
        if ends:
            pairs[kind] = (ends[0], ends[1])
    return LandmarkSet(case_id=case_id, pairs=pairs)


@dataclass(frozen=True)
class MapeResult:
    """MAPE over matched pairs plus bookkeeping for the penalty rules.

    ``n_ref`` counts pairs with a reference value (the denominator
    population); pairs whose reference is missing are excluded entirely.
    ``n_missing_pred`` counts pairs the prediction failed to provide;
    those are flagged here and penalised at ranking time. ``value`` is
    None when no complete pair exists.
    """

    value: float | None
    n_ref: int
    n_scored: int
    n_missing_pred: int


def _index(records: list[BiometryRecord]) -> dict[tuple[str, str], float | None]:
    out: dict[tuple[str, str], float | None] = {}
    for r in records:
        key = (r.case_id, r.kind)
        if key in out:
            raise MeasurementError(f"duplicate record for {key}")
        out[key] = r.value_mm
    return out


def mape(pred: list[BiometryRecord], ref: list[BiometryRecord]) -> MapeResult:
    """Mean absolute percentage error over matched (case, kind) pairs."""
    pred_idx = _index(pred)
    errors = []
    n_ref = 0
    n_missing = 0
    for r in ref:
        if r.value_mm is None:
            continue
        n_ref += 1
        pv = pred_idx.get((r.case_id, r.kind))
        if pv is None:
            n_missing += 1
            continue
        errors.append(abs(r.value_mm - pv) / r.value_mm)
    if n_ref == 0:
        raise MeasurementError("MAPE undefined: no reference values to compare against")
    value = 100.0 * float(np.mean(errors)) if errors else None
    return MapeResult(value=value, n_ref=n_ref, n_scored=len(errors), n_missing_pred=n_missing)


def mape_by_kind(
    pred: list[BiometryRecord], ref: list[BiometryRecord]
) -> tuple[dict[str, MapeResult], MapeResult]:
    """Per-kind MAPE plus the pooled overall MAPE (single mean over all pairs)."""
    per_kind = {}
    for kind in MEASUREMENT_KINDS:
        kind_ref = [r for r in ref if r.kind == kind]
        if not any(r.value_mm is not None for r in kind_ref):
            continue
        per_kind[kind] = mape([r for r in pred if r.kind == kind], kind_ref)
    overall = mape(pred, ref)
    return per_kind, overall


def inter_rater_mape(
    rater_a: list[BiometryRecord], rater_b: list[BiometryRecord]
) -> tuple[dict[str, MapeResult], MapeResult]:
    """Observer-vs-observer MAPE over pairs where both raters measured.

    Rater A plays the prediction role against rater B as reference;
    pairs missing on either side are excluded rather than penalised.
    """
    a_idx = _index(rater_a)
    both = [
        r for r in rater_b
        if r.value_mm is not None and a_idx.get((r.case_id, r.kind)) is not None
    ]
    if not both:
        raise MeasurementError("inter-rater MAPE undefined: raters share no measured pairs")
    paired_a = [
        BiometryRecord(r.case_id, r.kind, a_idx[(r.case_id, r.kind)]) for r in both
    ]
    return mape_by_kind(paired_a, both)


@dataclass(frozen=True)
class GaBaseline:
    """Per-kind univariate linear regression on gestational age."""

    coefficients: dict[str, tuple[float, float]]  # kind -> (intercept mm, slope mm/week)

    def predict(self, kind: str, ga_weeks: float) -> float:
        _check_kind(kind)
        if kind not in self.coefficients:
            raise FitError(f"no fitted coefficients for {kind}")
        beta0, beta1 = self.coefficients[kind]
        return beta0 + beta1 * ga_weeks


def fit_ga_baseline(train: dict[str, list[tuple[float, float]]]) -> GaBaseline:
    """Ordinary least squares of measurement value on gestational age.

    ``train`` maps each kind to (ga_weeks, value_mm) samples; each kind
    needs at least two distinct gestational ages.
    """
    coefficients = {}
    for kind, samples in train.items():
        _check_kind(kind)
        if len(samples) < 2:
            raise FitError(f"{kind}: need at least 2 training samples, got {len(samples)}")
        ga = np.array([s[0] for s in samples], dtype=float)
        y = np.array([s[1] for s in samples], dtype=float)
        if np.ptp(ga) == 0.0:
            raise FitError(f"{kind}: gestational ages are all equal, slope is unidentifiable")
        design = np.column_stack([np.ones_like(ga), ga])
        (beta0, beta1), *_ = np.linalg.lstsq(design, y, rcond=None)
        coefficients[kind] = (float(beta0), float(beta1))
    return GaBaseline(coefficients=coefficients)


def read_biometry_csv(path: str | Path) -> list[BiometryRecord]:
    """Parse ``case_id,kind,value_mm`` rows; an empty value means missing."""
    records = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != BIOMETRY_CSV_COLUMNS:
            raise ValueError(f"{path}: biometry CSV header {reader.fieldnames} != {BIOMETRY_CSV_COLUMNS}")
        for lineno, row in enumerate(reader, start=2):
            raw = row["value_mm"].strip()
            try:
                records.append(
                    BiometryRecord(
                        case_id=row["case_id"].strip(),
                        kind=row["kind"].strip(),
                        value_mm=None if raw == "" else float(raw),
                    )
                )
            except (ValueError, MeasurementError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return records


def write_biometry_csv(records: list[BiometryRecord], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(BIOMETRY_CSV_COLUMNS)
        for r in records:
            writer.writerow([r.case_id, r.kind, "" if r.value_mm is None else repr(r.value_mm)])


def read_landmarks_json(path: str | Path) -> list[LandmarkSet]:
    """Parse landmark JSON: one object or a list of objects.

    Schema: ``{"case_id": ..., "landmarks": {"LCC": [[x,y,z],[x,y,z]], ...}}``
    with coordinates in world millimetres.
    """
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    docs = raw if isinstance(raw, list) else [raw]
    out = []
    for doc in docs:
        pairs = {}
        for kind, (a, b) in doc.get("landmarks", {}).items():
            pairs[_check_kind(kind)] = (
                Point3(float(a[0]), float(a[1]), float(a[2])),
                Point3(float(b[0]), float(b[1]), float(b[2])),
            )
        out.append(LandmarkSet(case_id=str(doc["case_id"]), pairs=pairs))
    return out
