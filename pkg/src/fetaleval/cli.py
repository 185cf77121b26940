"""Command-line surface: evaluate, rank, biometry, baseline-ga, stats,
domain-shift, phantom.

Every run writes a manifest recording the tool version, the metric
conventions, seeds and inputs; tabular outputs are RFC-4180 CSV with a
JSON mirror that embeds the manifest hash. The hash covers everything
except wall-clock time, so reruns with identical inputs produce
byte-identical tables.

Exit codes: 0 clean, 2 completed with per-case failures, 1 fatal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .biometry import (
    BiometryRecord,
    MapeResult,
    fit_ga_baseline,
    inter_rater_mape,
    landmarks_from_label_volume,
    mape_by_kind,
    measure_all,
    read_biometry_csv,
    read_landmarks_json,
    write_biometry_csv,
)
from .datamodel import DEFAULT_SCHEMA, LabelSchema, LabelVolume, read_metadata_csv
from .domainshift import (
    EnsembleConfig,
    conditional_mean,
    fit_ensemble,
    shapley,
    top_k_target_frame,
)
from .nifti import read_volume, write_volume
from .phantoms import PhantomSpec, generate
from .ranking import (
    GA_BASELINE_NAME,
    INTER_RATER_NAME,
    BiometryEntry,
    aggregate_biometry,
    aggregate_segmentation,
    write_biometry_leaderboard,
    write_segmentation_leaderboard,
)
from .segmetrics import evaluate_case, read_metric_csv, write_metric_csv, write_metric_json
from .stats import bonferroni, mann_whitney_u, pearson_permutation, wilcoxon_signed_rank

CONVENTIONS = {
    "hd95": "pooled directed surface-distance multisets, 95th percentile, linear interpolation at p*(n-1)/100",
    "distances": "surface-voxel-center to surface-voxel-center in world mm, exact separable distance transform",
    "surface": "face adjacency (6-neighbourhood); out-of-bounds counts as background",
    "connectivity": "26-connected foreground components, 6-connected background cavities",
    "euler": "closed-cube cubical complex, vertices - edges + faces - cubes",
    "missing_scores": "higher-better -> 0.0; lower-better -> 2x maximum present in the sub-ranking",
    "case_aggregation": "scores averaged per (team, label, metric) across cases before ranking",
    "ties": "fractional ranks within columns; competition ranking on the final ordering",
    "biometry_overall": "overall MAPE pooled over all matched measurement pairs",
}


class CliError(Exception):
    pass


def _load_schema(path: str | None) -> LabelSchema:
    if path is None:
        return DEFAULT_SCHEMA
    return LabelSchema.from_json(path)


def _manifest(command: str, inputs: dict, seed: int, workers: int) -> dict:
    core = {
        "tool": "fetaleval",
        "version": __version__,
        "command": command,
        "conventions": CONVENTIONS,
        "inputs": inputs,
        "seed": seed,
        "workers": workers,
    }
    digest = hashlib.sha256(json.dumps(core, sort_keys=True).encode("utf-8")).hexdigest()
    core["manifest_hash"] = digest
    return core


def _write_manifest(manifest: dict, out_dir: Path, elapsed_s: float) -> None:
    doc = dict(manifest)
    doc["wall_clock_s"] = round(elapsed_s, 3)  # excluded from the hash on purpose
    (out_dir / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--schema", default=None, help="label schema JSON (default: built-in convention)")
    parser.add_argument("--workers", type=int, default=1, help="worker processes for per-case work")
    parser.add_argument("--seed", type=int, default=42, help="seed for all randomised steps")


def _case_ids_in(directory: Path) -> list[str]:
    ids = set()
    for path in directory.iterdir():
        name = path.name
        for suffix in (".nii.gz", ".nii"):
            if name.endswith(suffix):
                ids.add(name[: -len(suffix)])
                break
    return sorted(ids)


def _volume_path(directory: Path, case_id: str) -> Path | None:
    for suffix in (".nii.gz", ".nii"):
        candidate = directory / f"{case_id}{suffix}"
        if candidate.exists():
            return candidate
    return None


def _empty_like(ref: LabelVolume) -> LabelVolume:
    return LabelVolume(
        data=np.zeros(ref.dims, dtype=np.uint8), spacing=ref.spacing, affine=ref.affine
    )


def _evaluate_task(task: tuple) -> tuple[str, str, list | None, str | None]:
    """Worker: evaluate one (team, case). Returns records or an error message."""
    team, case_id, pred_path, ref_path, schema_json = task
    schema = LabelSchema.from_json(schema_json) if schema_json else DEFAULT_SCHEMA
    try:
        ref = read_volume(ref_path, schema=schema)
    except Exception as exc:  # reference problems are fatal, reported upwards
        return team, case_id, None, f"reference unreadable: {exc}"
    failure = None
    if pred_path is None:
        pred = _empty_like(ref)  # missing submission file counts as an empty label map
    else:
        try:
            pred = read_volume(pred_path, schema=schema)
        except Exception as exc:
            pred = _empty_like(ref)
            failure = f"{exc}"
    try:
        records = evaluate_case(case_id, pred, ref, schema)
    except Exception as exc:
        return team, case_id, None, f"evaluation failed: {exc}"
    return team, case_id, records, failure


def cmd_evaluate(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    ref_dir = Path(args.reference)
    sub_dir = Path(args.submissions)
    out_dir = Path(args.out)
    if not ref_dir.is_dir():
        raise CliError(f"reference directory {ref_dir} does not exist")
    if not sub_dir.is_dir():
        raise CliError(f"submissions directory {sub_dir} does not exist")
    if args.metadata and not Path(args.metadata).exists():
        raise CliError(f"metadata CSV {args.metadata} does not exist")
    schema = _load_schema(args.schema)
    case_ids = _case_ids_in(ref_dir)
    if not case_ids:
        raise CliError(f"no NIfTI volumes found in {ref_dir}")
    teams = sorted(p.name for p in sub_dir.iterdir() if p.is_dir())
    if not teams:
        raise CliError(f"no team subdirectories found in {sub_dir}")

    manifest = _manifest(
        "evaluate",
        {
            "reference": str(ref_dir),
            "submissions": str(sub_dir),
            "metadata": args.metadata,
            "schema": args.schema,
            "cases": case_ids,
            "teams": teams,
        },
        args.seed,
        args.workers,
    )

    tasks = []
    for team in teams:
        for case_id in case_ids:
            pred = _volume_path(sub_dir / team, case_id)
            ref = _volume_path(ref_dir, case_id)
            tasks.append((team, case_id, str(pred) if pred else None, str(ref), args.schema))

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_evaluate_task, tasks))
    else:
        results = [_evaluate_task(t) for t in tasks]

    records_by_team: dict[str, list] = {team: [] for team in teams}
    failures = []
    for team, case_id, records, failure in results:
        if records is None:
            raise CliError(f"case {case_id}: {failure}")
        if failure is not None:
            failures.append({"team": team, "case_id": case_id, "error": failure})
        records_by_team[team].extend(records)

    metrics_dir = out_dir / "metrics"
    metrics_dir.mkdir(parents=True, exist_ok=True)
    for team in teams:
        records = sorted(records_by_team[team], key=lambda r: (r.case_id, r.label))
        write_metric_csv(records, metrics_dir / f"{team}.csv")
        write_metric_json(records, metrics_dir / f"{team}.json", manifest["manifest_hash"])
    manifest["failures"] = sorted(failures, key=lambda f: (f["team"], f["case_id"]))
    _write_manifest(manifest, out_dir, time.perf_counter() - t0)
    if failures:
        print(f"evaluate: {len(failures)} case(s) failed and were penalised as empty", file=sys.stderr)
        return 2
    return 0


def _read_records_by_team(metrics_dir: Path) -> dict[str, list]:
    records = {}
    for path in sorted(metrics_dir.glob("*.csv")):
        records[path.stem] = read_metric_csv(path)
    if not records:
        raise CliError(f"no metric CSVs found in {metrics_dir}")
    return records


MAPE_CSV_COLUMNS = ("team", "kind", "mape", "n_ref", "n_scored", "n_missing_pred")


def _write_mape_table(rows: list[dict], out_dir: Path, manifest_hash: str) -> None:
    with (out_dir / "mape.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MAPE_CSV_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row["team"],
                    row["kind"],
                    "" if row["mape"] is None else repr(row["mape"]),
                    row["n_ref"],
                    row["n_scored"],
                    row["n_missing_pred"],
                ]
            )
    (out_dir / "mape.json").write_text(
        json.dumps({"rows": rows, "manifest_hash": manifest_hash}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def _read_mape_table(path: Path) -> dict[str, dict[str, MapeResult]]:
    out: dict[str, dict[str, MapeResult]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MAPE_CSV_COLUMNS:
            raise CliError(f"{path}: MAPE table header {reader.fieldnames} != {MAPE_CSV_COLUMNS}")
        for row in reader:
            result = MapeResult(
                value=None if row["mape"] == "" else float(row["mape"]),
                n_ref=int(row["n_ref"]),
                n_scored=int(row["n_scored"]),
                n_missing_pred=int(row["n_missing_pred"]),
            )
            out.setdefault(row["team"], {})[row["kind"]] = result
    return out


def _reference_biometry(args: argparse.Namespace, schema: LabelSchema) -> list[BiometryRecord]:
    if args.reference_values:
        return read_biometry_csv(args.reference_values)
    refs: list[BiometryRecord] = []
    lm_dir = Path(args.reference_landmarks)
    if not lm_dir.is_dir():
        raise CliError(f"landmark directory {lm_dir} does not exist")
    for case_id in _case_ids_in(lm_dir):
        volume = read_volume(_volume_path(lm_dir, case_id))
        refs.extend(measure_all(landmarks_from_label_volume(volume, case_id, schema)))
    for path in sorted(lm_dir.glob("*.json")):
        for lm in read_landmarks_json(path):
            refs.extend(measure_all(lm))
    if not refs:
        raise CliError(f"no landmark volumes or JSON files found in {lm_dir}")
    return refs


def cmd_biometry(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    schema = _load_schema(args.schema)
    if not args.reference_values and not args.reference_landmarks:
        raise CliError("one of --reference-values or --reference-landmarks is required")
    ref = _reference_biometry(args, schema)

    submissions: dict[str, list[BiometryRecord]] = {}
    if args.submissions:
        sub_dir = Path(args.submissions)
        if not sub_dir.is_dir():
            raise CliError(f"submissions directory {sub_dir} does not exist")
        for team_dir in sorted(p for p in sub_dir.iterdir() if p.is_dir()):
            table = team_dir / "biometry.csv"
            if table.exists():
                submissions[team_dir.name] = read_biometry_csv(table)
    for extra in args.extra or []:
        name, _, path = extra.partition("=")
        if not path:
            raise CliError(f"--extra expects NAME=CSV, got {extra!r}")
        submissions[name] = read_biometry_csv(path)
    if not submissions:
        raise CliError("no biometry submissions found")

    manifest = _manifest(
        "biometry",
        {
            "reference_values": args.reference_values,
            "reference_landmarks": args.reference_landmarks,
            "submissions": sorted(submissions),
            "schema": args.schema,
        },
        args.seed,
        args.workers,
    )

    rows = []
    for team in sorted(submissions):
        per_kind, overall = mape_by_kind(submissions[team], ref)
        for kind, result in per_kind.items():
            rows.append({"team": team, "kind": kind, **result.__dict__, "mape": result.value})
        rows.append({"team": team, "kind": "ALL", **overall.__dict__, "mape": overall.value})
    if args.rater_a and args.rater_b:
        per_kind, overall = inter_rater_mape(read_biometry_csv(args.rater_a), read_biometry_csv(args.rater_b))
        for kind, result in per_kind.items():
            rows.append({"team": INTER_RATER_NAME, "kind": kind, **result.__dict__, "mape": result.value})
        rows.append({"team": INTER_RATER_NAME, "kind": "ALL", **overall.__dict__, "mape": overall.value})
    for row in rows:
        row.pop("value", None)
    _write_mape_table(rows, out_dir, manifest["manifest_hash"])
    _write_manifest(manifest, out_dir, time.perf_counter() - t0)
    return 0


def cmd_rank(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    schema = _load_schema(args.schema)
    if args.task == "seg":
        metrics_dir = Path(args.metrics)
        if not metrics_dir.is_dir():
            raise CliError(f"metrics directory {metrics_dir} does not exist")
        manifest = _manifest("rank-seg", {"metrics": str(metrics_dir), "schema": args.schema}, args.seed, args.workers)
        table = aggregate_segmentation(_read_records_by_team(metrics_dir), schema)
        write_segmentation_leaderboard(
            table, out_dir / "leaderboard.csv", out_dir / "leaderboard.json", manifest["manifest_hash"]
        )
    else:
        mape_path = Path(args.mape)
        if not mape_path.exists():
            raise CliError(f"MAPE table {mape_path} does not exist")
        manifest = _manifest("rank-biometry", {"mape": str(mape_path)}, args.seed, args.workers)
        by_team = _read_mape_table(mape_path)
        entries = []
        for team in sorted(by_team):
            per_kind = {k: v for k, v in by_team[team].items() if k != "ALL"}
            entries.append(
                BiometryEntry(
                    name=team,
                    per_kind=per_kind,
                    overall=by_team[team].get("ALL"),
                    baseline=team in (GA_BASELINE_NAME, INTER_RATER_NAME),
                    rank_eligible=team != INTER_RATER_NAME,
                )
            )
        board = aggregate_biometry(entries)
        write_biometry_leaderboard(
            board, out_dir / "leaderboard.csv", out_dir / "leaderboard.json", manifest["manifest_hash"]
        )
    _write_manifest(manifest, out_dir, time.perf_counter() - t0)
    return 0


def cmd_baseline_ga(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_values = read_biometry_csv(args.train_values)
    train_meta = read_metadata_csv(args.train_metadata)
    test_meta = read_metadata_csv(args.test_metadata)
    manifest = _manifest(
        "baseline-ga",
        {
            "train_values": args.train_values,
            "train_metadata": args.train_metadata,
            "test_metadata": args.test_metadata,
        },
        args.seed,
        args.workers,
    )
    samples: dict[str, list[tuple[float, float]]] = {}
    for record in train_values:
        if record.value_mm is None or record.case_id not in train_meta:
            continue
        samples.setdefault(record.kind, []).append((train_meta[record.case_id].ga_weeks, record.value_mm))
    if not samples:
        raise CliError("no usable training samples (check case ids against metadata)")
    baseline = fit_ga_baseline(samples)
    predictions = [
        BiometryRecord(case_id, kind, baseline.predict(kind, test_meta[case_id].ga_weeks))
        for case_id in sorted(test_meta)
        for kind in sorted(samples)
    ]
    write_biometry_csv(predictions, out_dir / "ga_predictions.csv")
    (out_dir / "ga_model.json").write_text(
        json.dumps(
            {
                "coefficients": {k: list(v) for k, v in baseline.coefficients.items()},
                "manifest_hash": manifest["manifest_hash"],
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    _write_manifest(manifest, out_dir, time.perf_counter() - t0)
    return 0


def _read_columns(path: Path, names: list[str]) -> dict[str, np.ndarray]:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [n for n in names if n not in (reader.fieldnames or [])]
        if missing:
            raise CliError(f"{path}: columns {missing} not found (have {reader.fieldnames})")
        cols: dict[str, list[float]] = {n: [] for n in names}
        for row in reader:
            for n in names:
                cell = row[n].strip()
                if cell != "":
                    cols[n].append(float(cell))
    return {n: np.array(v) for n, v in cols.items()}


def cmd_stats(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cols = _read_columns(Path(args.csv), [args.col_a, args.col_b])
    a, b = cols[args.col_a], cols[args.col_b]
    manifest = _manifest(
        "stats",
        {"csv": args.csv, "col_a": args.col_a, "col_b": args.col_b, "test": args.test, "n_perm": args.n_perm},
        args.seed,
        args.workers,
    )
    if args.test == "wilcoxon":
        result = wilcoxon_signed_rank(a, b)
    elif args.test == "mannwhitney":
        result = mann_whitney_u(a, b)
    else:
        result = pearson_permutation(a, b, n_perm=args.n_perm, seed=args.seed)
    doc = {
        "test": args.test,
        "statistic": result.statistic,
        "p_value": result.p_value,
        "n": list(result.n),
        "method": result.method,
        "significant_at_0.05": result.p_value < 0.05,
        "manifest_hash": manifest["manifest_hash"],
    }
    if args.bonferroni_m:
        doc["p_value_bonferroni"] = bonferroni([result.p_value], args.bonferroni_m)[0]
    (out_dir / "test_result.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_manifest(manifest, out_dir, time.perf_counter() - t0)
    return 0


def cmd_domain_shift(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    schema = _load_schema(args.schema)
    metrics_dir = Path(args.metrics)
    if not metrics_dir.is_dir():
        raise CliError(f"metrics directory {metrics_dir} does not exist")
    metadata = read_metadata_csv(args.metadata)
    records_by_team = _read_records_by_team(metrics_dir)
    ranking = aggregate_segmentation(records_by_team, schema)
    order = np.argsort(ranking.mean_rank, kind="stable")
    top_teams = [ranking.teams[i] for i in order[: args.top_k]]
    manifest = _manifest(
        "domain-shift",
        {
            "metrics": str(metrics_dir),
            "metadata": args.metadata,
            "metric": args.metric,
            "factor": args.factor,
            "top_k": args.top_k,
            "top_teams": top_teams,
            "surrogate": {
                "n_trees": args.n_trees,
                "max_depth": args.max_depth,
                "min_leaf": args.min_leaf,
            },
        },
        args.seed,
        args.workers,
    )
    frame = top_k_target_frame(records_by_team, metadata, args.metric, top_teams)

    deviations = conditional_mean(frame, args.factor)
    with (out_dir / "deviations.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["factor", "bin", "count", "mean", "deviation"])
        for dev in deviations:
            writer.writerow([dev.factor, dev.label, dev.count, repr(dev.mean), repr(dev.deviation)])
    (out_dir / "deviations.json").write_text(
        json.dumps(
            {"bins": [dev.__dict__ for dev in deviations], "manifest_hash": manifest["manifest_hash"]},
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )

    config = EnsembleConfig(
        n_trees=args.n_trees, max_depth=args.max_depth, min_leaf=args.min_leaf, seed=args.seed
    )
    model = fit_ensemble(frame, config)
    background = frame.features
    with (out_dir / "attributions.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "prediction", "baseline", "quality", "ga_weeks", "condition"])
        for i, case_id in enumerate(frame.case_ids):
            attribution = shapley(model, background, background[i], seed=args.seed)
            writer.writerow(
                [case_id, repr(attribution.prediction), repr(attribution.baseline)]
                + [repr(float(v)) for v in attribution.values]
            )
    _write_manifest(manifest, out_dir, time.perf_counter() - t0)
    return 0


def cmd_phantom(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dims = tuple(int(v) for v in args.dims.split(","))
    spacing = tuple(float(v) for v in args.spacing.split(","))
    radii = tuple(float(v) for v in args.radii.split(",")) if args.radii else ()
    spec = PhantomSpec(kind=args.kind, dims=dims, spacing=spacing, radii=radii, label=args.label)
    volume = generate(spec)
    manifest = _manifest(
        "phantom",
        {"kind": args.kind, "dims": dims, "spacing": spacing, "radii": radii, "label": args.label},
        args.seed,
        args.workers,
    )
    write_volume(volume, out_dir / f"{args.kind}.nii.gz")
    _write_manifest(manifest, out_dir, time.perf_counter() - t0)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fetaleval",
        description="Evaluation toolkit for fetal brain MRI segmentation and biometry",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score every team against the reference volumes")
    p.add_argument("--reference", required=True, help="directory of reference label volumes")
    p.add_argument("--submissions", required=True, help="directory with one subdirectory per team")
    p.add_argument("--metadata", default=None, help="case metadata CSV")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rank", help="aggregate metric tables into a leaderboard")
    p.add_argument("--task", choices=("seg", "biometry"), default="seg")
    p.add_argument("--metrics", default=None, help="metrics directory from an evaluate run (seg)")
    p.add_argument("--mape", default=None, help="mape.csv from a biometry run (biometry)")
    _add_common(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("biometry", help="score biometry submissions against the reference")
    p.add_argument("--reference-values", default=None, help="reference biometry CSV")
    p.add_argument("--reference-landmarks", default=None, help="directory of landmark volumes/JSON")
    p.add_argument("--submissions", default=None, help="directory with <team>/biometry.csv")
    p.add_argument("--extra", action="append", help="extra entry as NAME=CSV (e.g. the [GA] baseline)")
    p.add_argument("--rater-a", default=None, help="first observer CSV for the inter-rater bound")
    p.add_argument("--rater-b", default=None, help="second observer CSV for the inter-rater bound")
    _add_common(p)
    p.set_defaults(func=cmd_biometry)

    p = sub.add_parser("baseline-ga", help="fit and apply the gestational-age regression baseline")
    p.add_argument("--train-values", required=True, help="training biometry CSV")
    p.add_argument("--train-metadata", required=True, help="training metadata CSV (provides GA)")
    p.add_argument("--test-metadata", required=True, help="test metadata CSV to predict for")
    _add_common(p)
    p.set_defaults(func=cmd_baseline_ga)

    p = sub.add_parser("stats", help="run one statistical test on two CSV columns")
    p.add_argument("--csv", required=True)
    p.add_argument("--col-a", required=True)
    p.add_argument("--col-b", required=True)
    p.add_argument("--test", choices=("wilcoxon", "mannwhitney", "pearson"), required=True)
    p.add_argument("--n-perm", type=int, default=9999)
    p.add_argument("--bonferroni-m", type=int, default=0, help="also report Bonferroni-adjusted p for family size m")
    _add_common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("domain-shift", help="conditional means and Shapley attributions")
    p.add_argument("--metrics", required=True, help="metrics directory from an evaluate run")
    p.add_argument("--metadata", required=True, help="case metadata CSV")
    p.add_argument("--metric", choices=("dice", "vs", "hd95", "ed"), default="dice")
    p.add_argument("--factor", choices=("quality", "ga_weeks", "condition", "site_sr"), default="quality")
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--min-leaf", type=int, default=5)
    _add_common(p)
    p.set_defaults(func=cmd_domain_shift)

    p = sub.add_parser("phantom", help="write a synthetic label volume")
    p.add_argument("--kind", required=True, choices=("SolidBall", "HollowSphere", "Torus", "NestedShells", "TwoComponents"))
    p.add_argument("--dims", default="48,48,48")
    p.add_argument("--spacing", default="1,1,1")
    p.add_argument("--radii", default=None, help="comma-separated radii in voxels (kind-specific)")
    p.add_argument("--label", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_phantom)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
