"""Hide-and-recover accuracy curves, rank correlation and tree-distance profiles."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .dataset import TRUE, UNKNOWN, FeatureMatrix
from .errors import ConfigError, ValidationError
from .flat import ChainSummary
from .search import (
    FilterSpec,
    candidate_key,
    enumerate_pairs,
    rank,
    score_candidates,
)
from .trees import LanguageTree, leaf_distance_matrix

log = logging.getLogger(__name__)

DEFAULT_K_GRID = tuple(2**i for i in range(1, 11))
PAPER_OFFSET = 2


@dataclass(frozen=True, eq=False)
class Fold:
    """Known cells masked for one evaluation round.

    ``hidden`` rows are (language, feature) index pairs in row-major order;
    ``truth`` holds their values and is never visible to inference.
    """

    seed: int
    fraction: float
    hidden: np.ndarray
    truth: np.ndarray

    def __len__(self):
        return len(self.hidden)


def make_fold(matrix: FeatureMatrix, fraction: float = 0.10, seed: int = 0) -> tuple[FeatureMatrix, Fold]:
    """Hide ``round(fraction * known)`` known cells chosen uniformly without replacement."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"fraction must lie in (0, 1), got {fraction}")
    known = np.flatnonzero(matrix.known.ravel())
    count = int(round(fraction * len(known)))
    if count == 0:
        raise ConfigError(f"fraction {fraction} of {len(known)} known cells hides nothing")
    rng = np.random.default_rng(seed)
    flat_idx = np.sort(rng.choice(known, size=count, replace=False))
    cells = matrix.cells.copy()
    truth = cells.ravel()[flat_idx].copy()
    cells.ravel()[flat_idx] = UNKNOWN
    rows, cols = np.unravel_index(flat_idx, matrix.shape)
    hidden = np.stack([rows, cols], axis=1).astype(np.int64)
    return matrix.with_cells(cells), Fold(int(seed), float(fraction), hidden, truth.astype(np.int8))


@dataclass
class Prediction:
    """Predictions for the hidden cells some candidate covers."""

    predictions: dict = field(default_factory=dict)
    correct: int = 0
    covered: int = 0
    hidden: int = 0
    count_uncovered: bool = False

    @property
    def accuracy(self) -> float:
        denom = self.hidden if self.count_uncovered else self.covered
        return self.correct / denom if denom else float("nan")


def predict_hidden(summaries: Sequence[ChainSummary], fold: Fold, count_uncovered: bool = False) -> Prediction:
    """Predict hidden cells from imputed-cell marginals averaged over the given summaries.

    A cell is predicted true when its averaged marginal exceeds 0.5, so an
    exact 0.5 predicts false. Cells no summary imputes are left out of the
    accuracy unless ``count_uncovered`` (then they count as wrong).
    """
    truth = {(int(l), int(f)): int(t) for (l, f), t in zip(fold.hidden, fold.truth)}
    marginals: dict[tuple[int, int], list[float]] = {}
    for s in summaries:
        for lang, feat, p in s.imputed_cells():
            if (lang, feat) in truth:
                marginals.setdefault((lang, feat), []).append(p)
    out = Prediction(hidden=len(truth), count_uncovered=count_uncovered)
    for key in sorted(marginals):
        # fsum is exact, so the average does not depend on candidate order
        bit = int(math.fsum(marginals[key]) / len(marginals[key]) > 0.5)
        out.predictions[key] = bit
        out.covered += 1
        out.correct += int(bit == (truth[key] == TRUE))
    return out


@dataclass
class AccuracyCurve:
    """Per-fold accuracies, shape (folds, len(k_values)), for each model."""

    k_values: tuple[int, ...]
    accuracies: dict[str, np.ndarray]
    covered: dict[str, np.ndarray]

    def mean(self, model: str) -> np.ndarray:
        return _nan_stat(self.accuracies[model], np.mean)

    def std(self, model: str) -> np.ndarray:
        return _nan_stat(self.accuracies[model], np.std)

    def rows(self):
        """CSV rows in (k, model) order; undefined accuracies are written empty."""
        for i, k in enumerate(self.k_values):
            for model, acc in self.accuracies.items():
                col = acc[:, i]
                ok = ~np.isnan(col)
                mean = f"{col[ok].mean():.6f}" if ok.any() else ""
                std = f"{col[ok].std():.6f}" if ok.any() else ""
                yield [k, model, mean, std, int(ok.sum()), int(self.covered[model][:, i].sum())]


CURVE_COLUMNS = ("k", "model", "mean_accuracy", "std_accuracy", "folds", "covered_cells")


def _nan_stat(acc: np.ndarray, fn) -> np.ndarray:
    out = np.full(acc.shape[1], np.nan)
    for i in range(acc.shape[1]):
        col = acc[:, i]
        col = col[~np.isnan(col)]
        if col.size:
            out[i] = fn(col)
    return out


def write_curve(path, curve: AccuracyCurve) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        w.writerows(curve.rows())


def fold_accuracies(
    ranked_summaries: Mapping[str, Sequence[ChainSummary]],
    fold: Fold,
    k_values: Sequence[int],
    count_uncovered: bool = False,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Accuracy and covered-cell count at each k, per model, for one fold.

    ``ranked_summaries[model]`` lists that model's summaries in rank order.
    """
    out = {}
    for model, ordered in ranked_summaries.items():
        acc = np.full(len(k_values), np.nan)
        cov = np.zeros(len(k_values), dtype=np.int64)
        for i, k in enumerate(k_values):
            kk = min(k, len(ordered))
            pred = predict_hidden(ordered[:kk], fold, count_uncovered)
            acc[i] = pred.accuracy
            cov[i] = pred.covered
        out[model] = (acc, cov)
    return out


def evaluate(
    matrix: FeatureMatrix,
    models: Sequence[str],
    *,
    folds: int = 10,
    fraction: float = 0.10,
    k_values: Sequence[int] = DEFAULT_K_GRID,
    filt: FilterSpec = FilterSpec(),
    blocklist=(),
    hyper=None,
    trees: Mapping[str, LanguageTree] | None = None,
    seed: int = 0,
    workers: int = 1,
    count_uncovered: bool = False,
) -> AccuracyCurve:
    """Run the hide-and-recover protocol over ``folds`` folds.

    Each fold masks cells, enumerates candidates on the masked matrix, scores
    them with every model and predicts the hidden cells from the top ``k``.
    The random baseline ranks at random and predicts from flat-model chains.
    """
    trees = dict(trees or {})
    k_values = tuple(sorted(int(k) for k in k_values))
    acc = {m: np.full((folds, len(k_values)), np.nan) for m in models}
    cov = {m: np.zeros((folds, len(k_values)), dtype=np.int64) for m in models}
    warned = False
    for f in range(folds):
        fold_seed = int(np.random.SeedSequence([seed, f]).generate_state(1)[0])
        masked, fold = make_fold(matrix, fraction, fold_seed)
        cands = enumerate_pairs(masked, filt, blocklist)
        if not cands:
            log.warning("fold %d: no candidate passes the filters", f)
            continue
        if k_values[-1] > len(cands) and not warned:
            log.warning("k clamped to the %d available candidates", len(cands))
            warned = True
        scored: dict[str, list[ChainSummary]] = {}
        ordered = {}
        for model in models:
            kind = "flat" if model == "random" else model
            if kind not in scored:
                scored[kind] = score_candidates(masked, cands, kind, hyper=hyper, tree=trees.get(kind),
                                                workers=workers)
            summaries = scored[kind]
            by_key = {candidate_key(masked, c): s for c, s in zip(cands, summaries)}
            ranked = rank(masked, cands, [s.score for s in summaries], model, seed=fold_seed)
            ordered[model] = [by_key[r.key] for r in ranked]
        for model, (a, c) in fold_accuracies(ordered, fold, k_values, count_uncovered).items():
            acc[model][f] = a
            cov[model][f] = c
    return AccuracyCurve(k_values, acc, cov)


def kendall_tau(list_a: Sequence, list_b: Sequence) -> tuple[float, float]:
    """Kendall's tau between two rankings of the same items.

    Returns the standard coefficient in [-1, 1] and its rescaling to [0, 1]
    (the fraction of concordant pairs).
    """
    if len(set(list_a)) != len(list_a) or len(set(list_b)) != len(list_b):
        raise ValidationError("rankings contain duplicate ids")
    if set(list_a) != set(list_b):
        diff = len(set(list_a) ^ set(list_b))
        raise ValidationError(f"rankings cover different items ({diff} ids in only one list)")
    if len(list_a) < 2:
        raise ValidationError("need at least two items to compare rankings")
    pos_b = {item: i for i, item in enumerate(list_b)}
    tau = float(stats.kendalltau(np.arange(len(list_a)), [pos_b[x] for x in list_a]).statistic)
    # without ties C - D is an integer; snapping it removes scipy's rounding
    # so identical and reversed rankings give exactly 1 and 0
    n_pairs = len(list_a) * (len(list_a) - 1) // 2
    c_minus_d = round(tau * n_pairs)
    return c_minus_d / n_pairs, (c_minus_d + n_pairs) / (2 * n_pairs)


@dataclass(frozen=True)
class DistanceRow:
    distance_a: int
    mean_distance_b: float
    pairs: int

    @property
    def paper_distance_a(self) -> int:
        return self.distance_a - PAPER_OFFSET

    @property
    def paper_mean_distance_b(self) -> float:
        return self.mean_distance_b - PAPER_OFFSET


def tree_distance_profile(tree_a: LanguageTree, tree_b: LanguageTree) -> list[DistanceRow]:
    """Mean distance in ``tree_b`` of language pairs grouped by their distance in ``tree_a``.

    Distances count edges; the ``paper_*`` properties subtract 2 so that
    siblings sit at distance 0.
    """
    la, lb = tree_a.languages, tree_b.languages
    if la != lb:
        raise ValidationError(f"trees cover different languages ({len(la ^ lb)} in only one tree)")
    langs = sorted(la)
    da = leaf_distance_matrix(tree_a, langs)
    db = leaf_distance_matrix(tree_b, langs)
    iu = np.triu_indices(len(langs), k=1)
    da, db = da[iu], db[iu]
    rows = []
    for d in np.unique(da):
        sel = da == d
        rows.append(DistanceRow(int(d), float(db[sel].mean()), int(sel.sum())))
    return rows

