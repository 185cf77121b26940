"""Challenge ranking protocol: sub-rankings, penalties, rank aggregation.

Pipeline for segmentation: per-case records are averaged per
(team, label, metric) across cases, each (label, metric) column is
imputed for missing entries and ranked with fractional ties, the column
ranks are averaged into a mean rank, and final places use competition
ranking (ties share the minimum place, the next place skips).

Penalty rules for missing results: a higher-is-better score (Dice, VS)
is set to 0; a lower-is-better score (HD95, ED, MAPE) is set to double
the maximum of the scores present in that sub-ranking, which guarantees
last place there.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .biometry import MEASUREMENT_KINDS, MapeResult
from .datamodel import DEFAULT_SCHEMA, LabelSchema
from .segmetrics import METRIC_NAMES, MetricRecord, label_was_missing

#: Conventional names for the two non-competing reference rows of the
#: biometry leaderboard.
GA_BASELINE_NAME = "[GA]"
INTER_RATER_NAME = "[inter-rater]"


class Direction(Enum):
    HIGHER_BETTER = "higher"
    LOWER_BETTER = "lower"


METRIC_DIRECTIONS = {
    "dice": Direction.HIGHER_BETTER,
    "vs": Direction.HIGHER_BETTER,
    "hd95": Direction.LOWER_BETTER,
    "ed": Direction.LOWER_BETTER,
    "mape": Direction.LOWER_BETTER,
}


class RankingError(ValueError):
    pass


class EmptyColumnError(RankingError):
    """A lower-is-better column has no present value to anchor the penalty."""


def impute_missing(scores: np.ndarray, direction: Direction) -> np.ndarray:
    """Fill NaN entries with the §-style worst-case penalty values.

    Higher-is-better scores become 0.0. Lower-is-better scores become
    twice the maximum present score; if nothing is present the column
    cannot be anchored and :class:`EmptyColumnError` is raised.
    """
    scores = np.asarray(scores, dtype=float).copy()
    missing = np.isnan(scores)
    if not missing.any():
        return scores
    if direction is Direction.HIGHER_BETTER:
        scores[missing] = 0.0
        return scores
    if missing.all():
        raise EmptyColumnError("all scores missing in a lower-is-better column")
    scores[missing] = 2.0 * np.nanmax(scores)
    return scores


def rank_scores(scores: np.ndarray, direction: Direction) -> np.ndarray:
    """Fractional ranks: best score gets 1, ties share the average position."""
    scores = np.asarray(scores, dtype=float)
    if np.isnan(scores).any():
        raise RankingError("rank_scores requires imputation to run first (NaN present)")
    keyed = scores if direction is Direction.LOWER_BETTER else -scores
    order = np.argsort(keyed, kind="stable")
    ranks = np.empty(len(scores), dtype=float)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and keyed[order[j + 1]] == keyed[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def competition_ranks(values: np.ndarray) -> np.ndarray:
    """Standard competition ranking of values where lower is better.

    Ties share the minimum place and the following place skips the tied
    count (1, 2, 2, 4, ...).
    """
    values = np.asarray(values, dtype=float)
    return np.array([1 + int(np.sum(values < v)) for v in values], dtype=int)


@dataclass(frozen=True)
class RankTable:
    """Ranks per column plus aggregated placement for every team."""

    teams: tuple[str, ...]
    columns: tuple[str, ...]
    scores: np.ndarray         # imputed scores, teams x columns
    ranks: np.ndarray          # fractional ranks, teams x columns
    mean_rank: np.ndarray
    final_rank: np.ndarray     # competition ranks, int

    def row(self, team: str) -> int:
        return self.teams.index(team)


def rank_matrix(
    teams: list[str],
    columns: list[str],
    scores: np.ndarray,
    directions: list[Direction],
) -> RankTable:
    """Impute, rank per column, and aggregate mean/final ranks.

    Lower-is-better columns with no present value are dropped with a
    warning since the penalty has no anchor there.
    """
    if len(teams) < 2:
        raise RankingError(f"ranking needs at least 2 teams, got {len(teams)}")
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (len(teams), len(columns)):
        raise RankingError(f"score matrix shape {scores.shape} != ({len(teams)}, {len(columns)})")
    kept_cols = []
    kept_scores = []
    kept_ranks = []
    for ci, (name, direction) in enumerate(zip(columns, directions)):
        try:
            filled = impute_missing(scores[:, ci], direction)
        except EmptyColumnError:
            warnings.warn(f"column {name!r} has no present score; dropped from ranking")
            continue
        kept_cols.append(name)
        kept_scores.append(filled)
        kept_ranks.append(rank_scores(filled, direction))
    if not kept_cols:
        raise RankingError("no rankable columns left")
    ranks = np.column_stack(kept_ranks)
    mean_rank = ranks.mean(axis=1)
    return RankTable(
        teams=tuple(teams),
        columns=tuple(kept_cols),
        scores=np.column_stack(kept_scores),
        ranks=ranks,
        mean_rank=mean_rank,
        final_rank=competition_ranks(mean_rank),
    )


def _case_ids(records: list[MetricRecord]) -> set[str]:
    return {r.case_id for r in records}


def mean_scores_by_label(
    records_by_team: dict[str, list[MetricRecord]],
    schema: LabelSchema = DEFAULT_SCHEMA,
) -> tuple[list[str], list[str], np.ndarray, list[Direction]]:
    """Cross-case mean score per (team, label, metric).

    Dice and VS are always defined per case (missing labels contribute
    their 0 penalty scores). HD95 is averaged over cases where it is
    defined. ED is averaged over cases where the label was actually
    segmented: for fully missing labels the ranking treats ED as a
    missing value so the doubled-maximum penalty applies, mirroring the
    HD95 treatment. Entries with no contributing case become NaN.
    """
    teams = sorted(records_by_team)
    if len(teams) < 2:
        raise RankingError(f"ranking needs at least 2 teams, got {len(teams)}")
    base_cases = _case_ids(records_by_team[teams[0]])
    for team in teams[1:]:
        if _case_ids(records_by_team[team]) != base_cases:
            raise RankingError(
                f"team {team!r} was evaluated on a different case set than {teams[0]!r}"
            )
    columns = []
    directions = []
    for code in schema.ranked_codes:
        for metric in METRIC_NAMES:
            columns.append(f"{schema.name_of(code)}:{metric}")
            directions.append(METRIC_DIRECTIONS[metric])
    matrix = np.full((len(teams), len(columns)), np.nan)
    for ti, team in enumerate(teams):
        by_label: dict[int, list[MetricRecord]] = {}
        for rec in records_by_team[team]:
            by_label.setdefault(rec.label, []).append(rec)
        for li, code in enumerate(schema.ranked_codes):
            recs = by_label.get(code, [])
            if not recs:
                continue
            dices = [r.dice for r in recs]
            vss = [r.vs for r in recs]
            hds = [r.hd95 for r in recs if r.hd95 is not None]
            eds = [r.ed for r in recs if not label_was_missing(r)]
            col = li * len(METRIC_NAMES)
            matrix[ti, col + 0] = float(np.mean(dices))
            matrix[ti, col + 1] = float(np.mean(vss))
            matrix[ti, col + 2] = float(np.mean(hds)) if hds else np.nan
            matrix[ti, col + 3] = float(np.mean(eds)) if eds else np.nan
    return teams, columns, matrix, directions


def aggregate_segmentation(
    records_by_team: dict[str, list[MetricRecord]],
    schema: LabelSchema = DEFAULT_SCHEMA,
) -> RankTable:
    """Full segmentation ranking from per-case records."""
    teams, columns, matrix, directions = mean_scores_by_label(records_by_team, schema)
    return rank_matrix(teams, columns, matrix, directions)


@dataclass(frozen=True)
class BiometryEntry:
    """One leaderboard row: a team or one of the reference baselines.

    ``baseline`` rows never receive a final competition rank;
    ``rank_eligible`` controls whether the row takes part in the
    per-measurement sub-rankings (the regression baseline does, the
    inter-rater bound does not).
    """

    name: str
    per_kind: dict[str, MapeResult] = field(default_factory=dict)
    overall: MapeResult | None = None
    baseline: bool = False
    rank_eligible: bool = True


@dataclass(frozen=True)
class BiometryLeaderboard:
    entries: tuple[BiometryEntry, ...]
    kinds: tuple[str, ...]
    per_kind_scores: np.ndarray   # entries x kinds, NaN where not eligible/missing
    per_kind_ranks: np.ndarray    # NaN for rank-ineligible rows
    overall_mape: np.ndarray      # NaN when undefined pre-imputation
    final_rank: np.ndarray        # 0 marks non-competing rows


def aggregate_biometry(entries: list[BiometryEntry]) -> BiometryLeaderboard:
    """Per-measurement sub-rankings plus the final MAPE ordering.

    A rank-eligible entry with no valid score for some measurement gets
    the doubled-maximum penalty there. Final competition ranks order the
    non-baseline entries by overall MAPE; baseline rows are carried in
    the table but marked non-competing (rank 0).
    """
    names = [e.name for e in entries]
    if len(names) != len(set(names)):
        raise RankingError("duplicate entry names in biometry ranking")
    competing = [e for e in entries if not e.baseline]
    if len(competing) < 2:
        raise RankingError(f"biometry ranking needs at least 2 competing teams, got {len(competing)}")
    kinds = tuple(k for k in MEASUREMENT_KINDS if any(k in e.per_kind for e in entries))
    n = len(entries)

    raw = np.full((n, len(kinds)), np.nan)
    for ei, entry in enumerate(entries):
        for ki, kind in enumerate(kinds):
            res = entry.per_kind.get(kind)
            if res is not None and res.value is not None:
                raw[ei, ki] = res.value

    eligible = np.array([e.rank_eligible for e in entries], dtype=bool)
    ranks = np.full((n, len(kinds)), np.nan)
    scores = raw.copy()
    for ki in range(len(kinds)):
        col = raw[eligible, ki]
        try:
            filled = impute_missing(col, Direction.LOWER_BETTER)
        except EmptyColumnError:
            warnings.warn(f"measurement {kinds[ki]!r} has no valid score; dropped from sub-ranking")
            continue
        scores[eligible, ki] = filled
        ranks[eligible, ki] = rank_scores(filled, Direction.LOWER_BETTER)

    overall = np.array(
        [e.overall.value if e.overall is not None and e.overall.value is not None else np.nan for e in entries]
    )
    comp_mask = ~np.array([e.baseline for e in entries], dtype=bool)
    comp_overall = impute_missing(overall[comp_mask], Direction.LOWER_BETTER)
    final = np.zeros(n, dtype=int)
    final[comp_mask] = competition_ranks(comp_overall)
    overall_filled = overall.copy()
    overall_filled[comp_mask] = comp_overall
    return BiometryLeaderboard(
        entries=tuple(entries),
        kinds=kinds,
        per_kind_scores=scores,
        per_kind_ranks=ranks,
        overall_mape=overall_filled,
        final_rank=final,
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def write_segmentation_leaderboard(
    table: RankTable, csv_path: str | Path, json_path: str | Path, manifest_hash: str | None = None
) -> None:
    """Emit leaderboard.csv plus its JSON mirror, ordered by final rank."""
    order = np.lexsort((np.array(table.teams), table.mean_rank))
    header = ["team"] + [f"rank:{c}" for c in table.columns] + ["mean_rank", "final_rank"]
    with Path(csv_path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in order:
            writer.writerow(
                [table.teams[i]]
                + [_fmt(r) for r in table.ranks[i]]
                + [_fmt(table.mean_rank[i]), int(table.final_rank[i])]
            )
    doc = {
        "columns": list(table.columns),
        "teams": [
            {
                "team": table.teams[i],
                "scores": {c: float(s) for c, s in zip(table.columns, table.scores[i])},
                "ranks": {c: float(r) for c, r in zip(table.columns, table.ranks[i])},
                "mean_rank": float(table.mean_rank[i]),
                "final_rank": int(table.final_rank[i]),
            }
            for i in order
        ],
    }
    if manifest_hash is not None:
        doc["manifest_hash"] = manifest_hash
    Path(json_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_biometry_leaderboard(
    board: BiometryLeaderboard, csv_path: str | Path, json_path: str | Path, manifest_hash: str | None = None
) -> None:
    order = np.argsort(np.where(np.isnan(board.overall_mape), np.inf, board.overall_mape), kind="stable")
    header = (
        ["team"]
        + [f"mape:{k}" for k in board.kinds]
        + [f"rank:{k}" for k in board.kinds]
        + ["final_mape", "final_rank"]
    )
    with Path(csv_path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in order:
            entry = board.entries[i]
            row = [entry.name]
            row += ["" if math.isnan(v) else _fmt(v) for v in board.per_kind_scores[i]]
            row += ["" if math.isnan(v) else _fmt(v) for v in board.per_kind_ranks[i]]
            row.append("" if math.isnan(board.overall_mape[i]) else _fmt(board.overall_mape[i]))
            row.append("*" if entry.baseline else str(int(board.final_rank[i])))
            writer.writerow(row)
    doc = {
        "kinds": list(board.kinds),
        "entries": [
            {
                "team": board.entries[i].name,
                "baseline": board.entries[i].baseline,
                "rank_eligible": board.entries[i].rank_eligible,
                "mape": {
                    k: (None if math.isnan(v) else float(v))
                    for k, v in zip(board.kinds, board.per_kind_scores[i])
                },
                "ranks": {
                    k: (None if math.isnan(v) else float(v))
                    for k, v in zip(board.kinds, board.per_kind_ranks[i])
                },
                "final_mape": None if math.isnan(board.overall_mape[i]) else float(board.overall_mape[i]),
                "final_rank": None if board.entries[i].baseline else int(board.final_rank[i]),
            }
            for i in order
        ],
    }
    if manifest_hash is not None:
        doc["manifest_hash"] = manifest_hash
    Path(json_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
