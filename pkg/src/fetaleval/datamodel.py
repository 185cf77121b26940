"""Core value types shared by all evaluation stages.

Label volumes are dense 3D integer grids with a voxel-to-world affine.
A :class:`LabelSchema` pins the label code/name convention; unknown codes
in input volumes are a hard error rather than being silently remapped,
because silent remaps corrupt rankings.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SITES = ("KISPI", "VIEN", "CHUV", "UCSF", "KCL")
SR_METHODS = ("MIALSRTK", "IRTK", "NiftyMIC", "SVRTK")
CONDITIONS = ("Neurotypical", "Pathological")

#: Quality scores below this value flag a poor-quality case.
POOR_QUALITY_THRESHOLD = 1.0

METADATA_COLUMNS = ("case_id", "site", "sr_method", "ga_weeks", "condition", "quality", "in_domain")

_TISSUE_NAMES = ("Background", "eCSF", "GM", "WM", "VM", "CBM", "SGM", "BSM")

_DEFAULT_EC_TARGETS = {1: 1, 2: 2, 3: 1, 4: 1, 5: 1, 6: 1, 7: 1}

_DEFAULT_LANDMARK_CODES = {
    "LCC": (1, 2),
    "HV": (3, 4),
    "bBIP": (5, 6),
    "sBIP": (7, 8),
    "TCD": (9, 10),
}


class SchemaError(ValueError):
    """Raised when a label schema or a volume's codes violate the schema."""


@dataclass(frozen=True)
class TissueLabel:
    """One label code with its anatomical name."""

    code: int
    name: str

    def __post_init__(self) -> None:
        if self.code < 0 or self.code > 255:
            raise SchemaError(f"label code {self.code} outside uint8 range")


@dataclass(frozen=True)
class LabelSchema:
    """Label code convention: names, ranking-eligible codes, topology targets.

    ``ranked_codes`` are the labels that participate in metric aggregation
    (background is excluded by default). ``ec_targets`` maps each ranked
    code to the anatomically expected Euler characteristic.
    ``landmark_codes`` maps measurement names to the pair of single-voxel
    label codes marking the measurement endpoints.
    """

    labels: tuple[TissueLabel, ...]
    ranked_codes: tuple[int, ...]
    ec_targets: dict[int, int] = field(default_factory=dict)
    landmark_codes: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        codes = [lab.code for lab in self.labels]
        if len(set(codes)) != len(codes):
            raise SchemaError("duplicate label codes in schema")
        if sorted(codes) != list(range(len(codes))):
            raise SchemaError("label codes must be contiguous starting at 0")
        names = [lab.name for lab in self.labels]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate label names in schema")
        for code in self.ranked_codes:
            if code not in codes:
                raise SchemaError(f"ranked code {code} not defined in schema")
        for code in self.ec_targets:
            if code not in codes:
                raise SchemaError(f"EC target for undefined code {code}")

    @property
    def codes(self) -> tuple[int, ...]:
        return tuple(lab.code for lab in self.labels)

    def name_of(self, code: int) -> str:
        for lab in self.labels:
            if lab.code == code:
                return lab.name
        raise SchemaError(f"unknown label code {code}")

    @classmethod
    def from_json(cls, path: str | Path) -> "LabelSchema":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        labels = tuple(TissueLabel(int(e["code"]), str(e["name"])) for e in raw["labels"])
        ranked = tuple(int(c) for c in raw.get("ranked", ()))
        targets = {int(k): int(v) for k, v in raw.get("ec_targets", {}).items()}
        landmarks = {str(k): (int(v[0]), int(v[1])) for k, v in raw.get("landmarks", {}).items()}
        return cls(labels=labels, ranked_codes=ranked, ec_targets=targets, landmark_codes=landmarks)

    def to_json(self, path: str | Path) -> None:
        doc = {
            "labels": [{"code": lab.code, "name": lab.name} for lab in self.labels],
            "ranked": list(self.ranked_codes),
            "ec_targets": {str(k): v for k, v in self.ec_targets.items()},
            "landmarks": {k: list(v) for k, v in self.landmark_codes.items()},
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def default_schema() -> LabelSchema:
    """The standard seven-tissue convention plus background."""
    return LabelSchema(
        labels=tuple(TissueLabel(i, n) for i, n in enumerate(_TISSUE_NAMES)),
        ranked_codes=tuple(range(1, 8)),
        ec_targets=dict(_DEFAULT_EC_TARGETS),
        landmark_codes=dict(_DEFAULT_LANDMARK_CODES),
    )


DEFAULT_SCHEMA = default_schema()


@dataclass(frozen=True)
class Point3:
    """A point in world space, millimetres."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        for v in (self.x, self.y, self.z):
            if not math.isfinite(v):
                raise ValueError(f"non-finite point component {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def distance_to(self, other: "Point3") -> float:
        return float(np.linalg.norm(self.as_array() - other.as_array()))


def _column_norms(affine: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.asarray(affine, dtype=float)[:3, :3], axis=0)


@dataclass(frozen=True)
class LabelVolume:
    """Dense 3D label grid with voxel spacing and a voxel-index-to-world affine.

    Immutable after construction (the underlying arrays are marked
    read-only), so instances are safe to share across workers.
    """

    data: np.ndarray
    spacing: tuple[float, float, float]
    affine: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"label grid must be 3D with positive dims, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.integer):
            raise ValueError(f"label grid must be integer, got dtype {data.dtype}")
        if data.dtype != np.uint8:
            if data.min() < 0 or data.max() > 255:
                raise ValueError("label codes outside uint8 range")
            data = data.astype(np.uint8)
        affine = np.array(self.affine, dtype=float)
        if affine.shape != (4, 4):
            raise ValueError(f"affine must be 4x4, got shape {affine.shape}")
        if not np.allclose(affine[3], [0.0, 0.0, 0.0, 1.0], atol=1e-9):
            raise ValueError("affine bottom row must be [0, 0, 0, 1]")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be three positive values, got {self.spacing}")
        norms = _column_norms(affine)
        if np.max(np.abs(norms - np.asarray(spacing))) > 1e-4:
            raise ValueError(
                f"spacing {spacing} disagrees with affine column norms {tuple(norms)} beyond 1e-4 mm"
            )
        if data is self.data or data.base is not None:
            data = data.copy()
        data.setflags(write=False)
        affine.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "affine", affine)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    def validate_codes(self, schema: LabelSchema) -> None:
        """Hard error on any voxel code not defined by the schema."""
        present = np.unique(self.data)
        unknown = sorted(int(c) for c in present if int(c) not in schema.codes)
        if unknown:
            raise SchemaError(f"volume contains codes {unknown} not defined in the label schema")


def apply_affine(affine: np.ndarray, ijk) -> Point3:
    """Map a (possibly fractional) voxel index through an affine."""
    v = np.asarray(affine, dtype=float) @ np.array([ijk[0], ijk[1], ijk[2], 1.0])
    return Point3(float(v[0]), float(v[1]), float(v[2]))


def world_coords(volume: LabelVolume, index: tuple[int, int, int]) -> Point3:
    """World-space position of a voxel index; raises on out-of-bounds."""
    i, j, k = (int(v) for v in index)
    nx, ny, nz = volume.dims
    if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nz):
        raise IndexError(f"index {(i, j, k)} out of bounds for dims {volume.dims}")
    return apply_affine(volume.affine, (i, j, k))


def binary_mask(volume: LabelVolume, code: int, schema: LabelSchema = DEFAULT_SCHEMA) -> np.ndarray:
    """Boolean grid, true exactly where the volume carries ``code``."""
    if code not in schema.codes:
        raise SchemaError(f"label code {code} not defined in the label schema")
    return volume.data == code


@dataclass(frozen=True)
class CaseMetadata:
    """Per-case covariates used for stratified and domain-shift analyses."""

    case_id: str
    site: str
    sr_method: str
    ga_weeks: float
    condition: str
    quality: float
    in_domain: bool

    def __post_init__(self) -> None:
        if self.site not in SITES:
            raise ValueError(f"case {self.case_id}: unknown site {self.site!r}")
        if self.sr_method not in SR_METHODS:
            raise ValueError(f"case {self.case_id}: unknown SR method {self.sr_method!r}")
        if not 15.0 <= self.ga_weeks <= 42.0:
            raise ValueError(f"case {self.case_id}: gestational age {self.ga_weeks} outside [15, 42]")
        if self.condition not in CONDITIONS:
            raise ValueError(f"case {self.case_id}: unknown condition {self.condition!r}")
        if not 0.0 <= self.quality <= 4.0:
            raise ValueError(f"case {self.case_id}: quality {self.quality} outside [0, 4]")

    @property
    def is_poor_quality(self) -> bool:
        return self.quality < POOR_QUALITY_THRESHOLD

    @property
    def site_sr(self) -> str:
        return f"{self.site}-{self.sr_method}"


def read_metadata_csv(path: str | Path) -> dict[str, CaseMetadata]:
    """Parse the case-metadata table (UTF-8 CSV, header fixed).

    Expected header: ``case_id,site,sr_method,ga_weeks,condition,quality,in_domain``
    with condition in {neurotypical, pathological} and in_domain in {0, 1}.
    """
    path = Path(path)
    out: dict[str, CaseMetadata] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        got = tuple(reader.fieldnames or ())
        if got != METADATA_COLUMNS:
            raise ValueError(f"metadata header {got} != expected {METADATA_COLUMNS}")
        for lineno, row in enumerate(reader, start=2):
            case_id = row["case_id"].strip()
            cond = row["condition"].strip().lower()
            if cond not in ("neurotypical", "pathological"):
                raise ValueError(f"{path}:{lineno}: condition {row['condition']!r} not recognised")
            dom = row["in_domain"].strip()
            if dom not in ("0", "1"):
                raise ValueError(f"{path}:{lineno}: in_domain must be 0 or 1, got {dom!r}")
            try:
                meta = CaseMetadata(
                    case_id=case_id,
                    site=row["site"].strip(),
                    sr_method=row["sr_method"].strip(),
                    ga_weeks=float(row["ga_weeks"]),
                    condition=cond.capitalize(),
                    quality=float(row["quality"]),
                    in_domain=dom == "1",
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            if case_id in out:
                raise ValueError(f"{path}:{lineno}: duplicate case_id {case_id!r}")
            out[case_id] = meta
    return out
