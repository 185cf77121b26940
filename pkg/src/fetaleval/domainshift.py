"""Domain-shift analysis: conditional-mean profiles and Shapley attribution.

Per-case targets are the metric value averaged over the top-k teams.
Conditional means show how a factor bin deviates from the global
expectation; attributions come from exact interventional Shapley values
of a bagged regression-tree surrogate fit on the three image-level
features (quality, gestational age, condition). The site/SR factor stays
available for conditional means but is excluded from attribution because
its dependence on the other variables would distort the values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .datamodel import CaseMetadata
from .segmetrics import MetricRecord, label_was_missing

FEATURE_NAMES = ("quality", "ga_weeks", "condition")

GA_BIN_EDGES = tuple(float(e) for e in range(18, 37, 2))
QUALITY_BIN_EDGES = tuple(0.5 * i for i in range(9))


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class FactorFrame:
    """Per-case covariates plus the target metric value."""

    case_ids: tuple[str, ...]
    quality: np.ndarray
    ga_weeks: np.ndarray
    condition: np.ndarray   # 0 neurotypical, 1 pathological
    site_sr: tuple[str, ...]
    target: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.case_ids)
        for name in ("quality", "ga_weeks", "condition", "target"):
            arr = getattr(self, name)
            if len(arr) != n:
                raise AnalysisError(f"{name} has {len(arr)} entries for {n} cases")
        if len(self.site_sr) != n:
            raise AnalysisError(f"site_sr has {len(self.site_sr)} entries for {n} cases")

    def __len__(self) -> int:
        return len(self.case_ids)

    @property
    def features(self) -> np.ndarray:
        """Image-level feature matrix in FEATURE_NAMES order."""
        return np.column_stack([self.quality, self.ga_weeks, self.condition])


def top_k_target_frame(
    records_by_team: dict[str, list[MetricRecord]],
    metadata: dict[str, CaseMetadata],
    metric: str,
    top_teams: list[str],
) -> FactorFrame:
    """Build the analysis frame: target = metric averaged over top-k teams.

    Per case, every defined per-label value of the chosen metric from the
    listed teams is pooled into one mean. Cases without metadata or
    without any defined value are dropped.
    """
    if metric not in ("dice", "vs", "hd95", "ed"):
        raise AnalysisError(f"unknown metric {metric!r}")
    for team in top_teams:
        if team not in records_by_team:
            raise AnalysisError(f"team {team!r} has no records")
    pooled: dict[str, list[float]] = {}
    for team in top_teams:
        for rec in records_by_team[team]:
            if metric == "hd95":
                if rec.hd95 is None:
                    continue
                value = rec.hd95
            elif metric == "ed":
                if label_was_missing(rec):
                    continue
                value = float(rec.ed)
            else:
                value = getattr(rec, metric)
            pooled.setdefault(rec.case_id, []).append(float(value))
    case_ids = sorted(cid for cid in pooled if cid in metadata)
    if not case_ids:
        raise AnalysisError("no case has both metric records and metadata")
    metas = [metadata[cid] for cid in case_ids]
    return FactorFrame(
        case_ids=tuple(case_ids),
        quality=np.array([m.quality for m in metas]),
        ga_weeks=np.array([m.ga_weeks for m in metas]),
        condition=np.array([1.0 if m.condition == "Pathological" else 0.0 for m in metas]),
        site_sr=tuple(m.site_sr for m in metas),
        target=np.array([float(np.mean(pooled[cid])) for cid in case_ids]),
    )


@dataclass(frozen=True)
class BinDeviation:
    factor: str
    label: str
    count: int
    mean: float
    deviation: float


def conditional_mean(frame: FactorFrame, factor: str, edges=None) -> list[BinDeviation]:
    """Deviation of each factor bin's mean target from the global mean.

    Numeric factors use half-open bins [lo, hi) from ``edges``;
    categorical factors get one bin per level. Empty bins are omitted.
    The quality grid covers the closed range [0, 4], so its last bin
    additionally includes the right edge; the gestational-age grid stays
    half-open.
    """
    if len(frame) == 0:
        raise AnalysisError("empty frame")
    global_mean = float(frame.target.mean())
    out: list[BinDeviation] = []
    if factor in ("condition", "site_sr"):
        values = (
            ["Pathological" if c else "Neurotypical" for c in frame.condition]
            if factor == "condition"
            else list(frame.site_sr)
        )
        for level in sorted(set(values)):
            sel = np.array([v == level for v in values])
            mean = float(frame.target[sel].mean())
            out.append(BinDeviation(factor, level, int(sel.sum()), mean, mean - global_mean))
        return out
    if factor == "ga_weeks":
        values_arr = frame.ga_weeks
        edges = GA_BIN_EDGES if edges is None else tuple(edges)
        close_last = False
    elif factor == "quality":
        values_arr = frame.quality
        edges = QUALITY_BIN_EDGES if edges is None else tuple(edges)
        close_last = True
    else:
        raise AnalysisError(f"unknown factor {factor!r}")
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (values_arr >= lo) & (values_arr < hi)
        if close_last and hi == edges[-1]:
            sel |= values_arr == hi
        if not sel.any():
            continue
        mean = float(frame.target[sel].mean())
        out.append(BinDeviation(factor, f"[{lo:g},{hi:g})", int(sel.sum()), mean, mean - global_mean))
    return out


@dataclass(frozen=True)
class TreeNode:
    """Axis-aligned binary split or a leaf (when feature is None)."""

    value: float
    n: int
    feature: int | None = None
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    def predict_one(self, x: np.ndarray) -> float:
        node = self
        while node.feature is not None:
            node = node.left if x[node.feature] <= node.threshold else node.right  # type: ignore[assignment]
        return node.value


@dataclass(frozen=True)
class EnsembleConfig:
    n_trees: int = 100
    max_depth: int = 4
    min_leaf: int = 5
    seed: int = 42


@dataclass(frozen=True)
class TreeEnsemble:
    """Bagged regression trees; the prediction is the mean tree output."""

    trees: tuple[TreeNode, ...]
    config: EnsembleConfig
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(len(X))
        for tree in self.trees:
            out += np.array([tree.predict_one(row) for row in X])
        return out / len(self.trees)


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[int, float] | None:
    """Variance-reducing split with the lowest total squared error.

    Candidates are midpoints between consecutive distinct feature values;
    both sides must keep at least ``min_leaf`` rows. Ties resolve to the
    first candidate in (feature, threshold) scan order.
    """
    n = len(y)
    parent_sse = float(((y - y.mean()) ** 2).sum())
    best: tuple[int, float] | None = None
    best_sse = parent_sse - 1e-12
    for fi in range(X.shape[1]):
        order = np.argsort(X[:, fi], kind="stable")
        xs = X[order, fi]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys ** 2)
        total_sum = csum[-1]
        total_sq = csq[-1]
        for cut in range(min_leaf, n - min_leaf + 1):
            if xs[cut - 1] == xs[cut]:
                continue
            left_sse = csq[cut - 1] - csum[cut - 1] ** 2 / cut
            right_n = n - cut
            right_sum = total_sum - csum[cut - 1]
            right_sse = (total_sq - csq[cut - 1]) - right_sum ** 2 / right_n
            sse = float(left_sse + right_sse)
            if sse < best_sse:
                best_sse = sse
                best = (fi, float((xs[cut - 1] + xs[cut]) / 2.0))
    return best


def _grow(X: np.ndarray, y: np.ndarray, depth: int, config: EnsembleConfig) -> TreeNode:
    value = float(y.mean())
    if depth >= config.max_depth or len(y) < 2 * config.min_leaf or np.ptp(y) == 0.0:
        return TreeNode(value=value, n=len(y))
    split = _best_split(X, y, config.min_leaf)
    if split is None:
        return TreeNode(value=value, n=len(y))
    fi, thr = split
    mask = X[:, fi] <= thr
    return TreeNode(
        value=value,
        n=len(y),
        feature=fi,
        threshold=thr,
        left=_grow(X[mask], y[mask], depth + 1, config),
        right=_grow(X[~mask], y[~mask], depth + 1, config),
    )


def fit_ensemble(frame: FactorFrame, config: EnsembleConfig = EnsembleConfig()) -> TreeEnsemble:
    """Bootstrap-bagged CART regression on the image-level features.

    Each tree gets its own child seed, so the fit is deterministic for a
    given configuration regardless of how trees are scheduled.
    """
    n = len(frame)
    if n < 20:
        raise AnalysisError(f"need at least 20 records to fit, got {n}")
    if n < config.min_leaf:
        raise AnalysisError(f"fewer records ({n}) than min_leaf ({config.min_leaf})")
    X = frame.features
    y = frame.target.astype(float)
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_trees)
    trees = []
    for child in seeds:
        rng = np.random.default_rng(child)
        idx = rng.integers(0, n, size=n)
        trees.append(_grow(X[idx], y[idx], 0, config))
    return TreeEnsemble(trees=tuple(trees), config=config)


@dataclass(frozen=True)
class ShapleyAttribution:
    """Exact interventional attribution; baseline + sum equals f(x)."""

    feature_names: tuple[str, ...]
    values: np.ndarray
    baseline: float
    prediction: float


def shapley(
    model: TreeEnsemble,
    background: np.ndarray,
    x: np.ndarray,
    max_background: int = 200,
    seed: int = 42,
) -> ShapleyAttribution:
    """Brute-force Shapley values over all feature coalitions.

    The coalition value v(S) replaces the features in S of every
    background row with x's values and averages the model prediction.
    With three features the 8 coalition values are computed exactly; no
    sampling approximation is involved (the background may be subsampled
    for speed, deterministically under ``seed``).
    """
    background = np.atleast_2d(np.asarray(background, dtype=float))
    x = np.asarray(x, dtype=float).ravel()
    d = len(x)
    if background.shape[1] != d:
        raise AnalysisError(f"background has {background.shape[1]} features, x has {d}")
    if len(background) == 0:
        raise AnalysisError("background must be non-empty")
    if len(background) > max_background:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(background), size=max_background, replace=False))
        background = background[keep]

    all_features = tuple(range(d))
    v: dict[frozenset, float] = {}
    for size in range(d + 1):
        for subset in combinations(all_features, size):
            z = background.copy()
            for fi in subset:
                z[:, fi] = x[fi]
            v[frozenset(subset)] = float(model.predict(z).mean())

    values = np.zeros(d)
    for fi in all_features:
        others = [f for f in all_features if f != fi]
        for size in range(d):
            weight = math.factorial(size) * math.factorial(d - size - 1) / math.factorial(d)
            for subset in combinations(others, size):
                s = frozenset(subset)
                values[fi] += weight * (v[s | {fi}] - v[s])
    return ShapleyAttribution(
        feature_names=model.feature_names,
        values=values,
        baseline=v[frozenset()],
        prediction=v[frozenset(all_features)],
    )
