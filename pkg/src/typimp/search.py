"""Candidate implication enumeration, support filtering, scoring and ranking."""

from __future__ import annotations

import csv
import hashlib
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataset import TRUE, FeatureMatrix, case_view
from .errors import ConfigError, ParseError
from .flat import ChainSummary, FlatHyper, run_flat
from .hier import HierHyper, run_hier
from .trees import LanguageTree

log = logging.getLogger(__name__)

MODELS = ("flat", "hier-phylo", "hier-areal", "random")


@dataclass(frozen=True)
class FilterSpec:
    """Support thresholds; every comparison is ``>=``.

    ``min_conditional`` bounds the share of languages with the implicand true
    among those where the implicant(s) hold and the implicand is known.
    """

    min_both_known: int = 250
    min_joint_true: int = 15
    min_conditional: float = 0.5

    def __post_init__(self):
        if self.min_both_known < 0 or self.min_joint_true < 0:
            raise ConfigError("filter counts must be nonnegative")
        if not 0.0 <= self.min_conditional <= 1.0:
            raise ConfigError("min_conditional must lie in [0, 1]")

    @property
    def conditional_fraction(self) -> Fraction:
        # via str so that 0.1 means 1/10, not its binary neighbour
        return Fraction(str(self.min_conditional))

    def passes(self, both_known: int, joint_true: int, antecedent_true: int) -> bool:
        if both_known < self.min_both_known or joint_true < self.min_joint_true:
            return False
        frac = self.conditional_fraction
        return joint_true * frac.denominator >= frac.numerator * antecedent_true


@dataclass(frozen=True)
class Candidate:
    """One implication to score: feature indices plus its support counts.

    ``antecedent_true`` counts languages where every implicant is true and
    the implicand is known; ``both_known`` those where all features are known.
    """

    implicants: tuple[int, ...]
    implicand: int
    both_known: int
    joint_true: int
    antecedent_true: int

    @property
    def features(self) -> tuple[int, ...]:
        return (*self.implicants, self.implicand)

    @property
    def conditional_rate(self) -> float:
        return self.joint_true / self.antecedent_true if self.antecedent_true else 0.0


def read_blocklist(path) -> set[tuple[str, str]]:
    """Parse ``implicant_id -> implicand_id`` lines; ``#`` starts a comment."""
    banned = set()
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split("->")]
        if len(parts) != 2 or not all(parts):
            raise ParseError(f"expected 'feature -> feature', got {raw!r}", lineno)
        banned.add((parts[0], parts[1]))
    return banned


def _blocked_pairs(matrix: FeatureMatrix, blocklist: Iterable[tuple[str, str]]) -> set[tuple[int, int]]:
    ids = {f.id: i for i, f in enumerate(matrix.features)}
    out = set()
    for a, b in blocklist:
        if a in ids and b in ids:
            out.add((ids[a], ids[b]))
        else:
            log.warning("blocklist entry %s -> %s names an unknown feature", a, b)
    return out


def _indicators(matrix: FeatureMatrix):
    true = (matrix.cells == TRUE).astype(np.float64)
    known = matrix.known.astype(np.float64)
    return true, known


def pair_counts(matrix: FeatureMatrix):
    """(both_known, joint_true, antecedent_true) matrices indexed [f1, f2]."""
    true, known = _indicators(matrix)
    both = known.T @ known
    joint = true.T @ true
    ante = true.T @ known
    return both.round().astype(np.int64), joint.round().astype(np.int64), ante.round().astype(np.int64)


def _same_raw_matrix(matrix: FeatureMatrix) -> np.ndarray:
    raw = np.asarray(matrix.raw_codes)
    return raw[:, None] == raw[None, :]


def enumerate_pairs(matrix: FeatureMatrix, filt: FilterSpec = FilterSpec(), blocklist=()) -> list[Candidate]:
    """Ordered pairs (f1 implies f2) passing every filter, in (f1, f2) order."""
    both, joint, ante = pair_counts(matrix)
    same = _same_raw_matrix(matrix)
    blocked = _blocked_pairs(matrix, blocklist)
    out = []
    F = matrix.n_features
    for i in range(F):
        for j in range(F):
            if same[i, j] or (i, j) in blocked:
                continue
            b, t, a = int(both[i, j]), int(joint[i, j]), int(ante[i, j])
            if filt.passes(b, t, a):
                out.append(Candidate((i,), j, b, t, a))
    log.info("%d of %d ordered pairs pass the filters", len(out), F * (F - 1))
    return out


def enumerate_triples(matrix: FeatureMatrix, filt: FilterSpec = FilterSpec(), blocklist=()) -> list[Candidate]:
    """Two implicants (unordered, index-sorted) jointly implying a third feature."""
    true, known = _indicators(matrix)
    same = _same_raw_matrix(matrix)
    blocked = _blocked_pairs(matrix, blocklist)
    out = []
    F = matrix.n_features
    for a in range(F):
        partners = np.arange(a + 1, F)
        partners = partners[~same[a, partners]]
        if partners.size == 0:
            continue
        conj_true = true[:, [a]] * true[:, partners]
        conj_known = known[:, [a]] * known[:, partners]
        both = (conj_known.T @ known).round().astype(np.int64)
        joint = (conj_true.T @ true).round().astype(np.int64)
        ante = (conj_true.T @ known).round().astype(np.int64)
        for r, b in enumerate(partners):
            for c in range(F):
                if same[a, c] or same[b, c] or (a, c) in blocked or (b, c) in blocked:
                    continue
                counts = int(both[r, c]), int(joint[r, c]), int(ante[r, c])
                if filt.passes(*counts):
                    out.append(Candidate((a, int(b)), c, *counts))
    log.info("%d triples pass the filters", len(out))
    return out


def candidate_key(matrix: FeatureMatrix, cand: Candidate) -> tuple[tuple[str, ...], str]:
    return tuple(matrix.features[i].id for i in cand.implicants), matrix.features[cand.implicand].id


def candidate_seed(global_seed: int, implicant_ids: Sequence[str], implicand_id: str) -> int:
    """Stable per-candidate seed, independent of scheduling and of Python's hash salt."""
    text = f"{int(global_seed)}|{';'.join(implicant_ids)}|{implicand_id}"
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


# Worker-process globals, installed once per process by _init_worker.
_CTX: dict = {}


def _init_worker(matrix, tree, hyper, model):
    _CTX.update(matrix=matrix, tree=tree, hyper=hyper, model=model)


def _score_one(cand: Candidate) -> ChainSummary:
    matrix, tree, hyper, model = _CTX["matrix"], _CTX["tree"], _CTX["hyper"], _CTX["model"]
    imp, tgt = candidate_key(matrix, cand)
    h = replace(hyper, seed=candidate_seed(hyper.seed, imp, tgt))
    case = case_view(matrix, cand.implicants, cand.implicand)
    if model == "flat":
        return run_flat(case, h)
    summary = run_hier(case, tree, h)
    summary.model = model
    return summary


def score_candidates(
    matrix: FeatureMatrix,
    candidates: Sequence[Candidate],
    model: str,
    *,
    hyper: FlatHyper | None = None,
    tree: LanguageTree | None = None,
    workers: int = 1,
) -> list[ChainSummary]:
    """Run one chain per candidate; results follow ``candidates`` order.

    The random baseline has no model of its own and is scored with the flat
    sampler (its summaries are only used for predictions).
    """
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}; expected one of {', '.join(MODELS)}")
    kind = "flat" if model in ("flat", "random") else model
    if kind != "flat" and tree is None:
        raise ConfigError(f"model {model} needs a tree")
    if hyper is None:
        hyper = FlatHyper() if kind == "flat" else HierHyper()
    if kind != "flat" and not isinstance(hyper, HierHyper):
        hyper = HierHyper(**{k: getattr(hyper, k) for k in FlatHyper.__dataclass_fields__})
    if workers <= 1 or len(candidates) < 2:
        _init_worker(matrix, tree, hyper, kind)
        try:
            return [_score_one(c) for c in candidates]
        finally:
            _CTX.clear()
    chunk = max(1, len(candidates) // (workers * 8))
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(matrix, tree, hyper, kind)) as ex:
        return list(ex.map(_score_one, candidates, chunksize=chunk))


@dataclass(frozen=True)
class RankedImplication:
    rank: int
    model: str
    implicants: tuple[str, ...]
    implicand: str
    score: float
    both_known: int
    joint_true: int
    conditional_rate: float

    @property
    def key(self) -> tuple[tuple[str, ...], str]:
        return self.implicants, self.implicand


def rank(
    matrix: FeatureMatrix,
    candidates: Sequence[Candidate],
    scores: Sequence[float] | None,
    model: str,
    seed: int = 0,
) -> list[RankedImplication]:
    """Order candidates by score, then joint support, then feature ids.

    For ``model == "random"`` the scores are ignored: the candidates are
    shuffled with ``seed`` and every score is 0.5.
    """
    keyed = [(candidate_key(matrix, c), c) for c in candidates]
    if model == "random":
        keyed.sort(key=lambda kc: (kc[0][0], kc[0][1]))
        order = np.random.default_rng(seed).permutation(len(keyed))
        rows = [(keyed[i][0], keyed[i][1], 0.5) for i in order]
    else:
        if scores is None or len(scores) != len(candidates):
            raise ValueError("need one score per candidate")
        rows = [(k, c, float(s)) for (k, c), s in zip(keyed, scores)]
        rows.sort(key=lambda r: (-r[2], -r[1].joint_true, r[0][0], r[0][1]))
    return [
        RankedImplication(i + 1, model, k[0], k[1], s, c.both_known, c.joint_true, c.conditional_rate)
        for i, (k, c, s) in enumerate(rows)
    ]


def implicant_frequency(ranked: Sequence[RankedImplication], k: int) -> Counter:
    """How often each feature appears as an implicant among the top ``k``."""
    if not 0 <= k <= len(ranked):
        raise ValueError(f"k={k} outside [0, {len(ranked)}]")
    counts = Counter()
    for r in ranked[:k]:
        counts.update(r.implicants)
    return counts


RANKED_COLUMNS = ("rank", "model", "implicants", "implicand", "score", "both_known", "joint_true",
                  "conditional_rate")


def write_ranked(path, ranked: Sequence[RankedImplication]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(RANKED_COLUMNS)
        for r in ranked:
            w.writerow([r.rank, r.model, ";".join(r.implicants), r.implicand, f"{r.score:.6f}", r.both_known,
                        r.joint_true, f"{r.conditional_rate:.6f}"])


def read_ranked(path) -> list[RankedImplication]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or tuple(header) != RANKED_COLUMNS:
            raise ParseError(f"bad header, expected {' '.join(RANKED_COLUMNS)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(RANKED_COLUMNS):
                raise ParseError(f"expected {len(RANKED_COLUMNS)} fields, got {len(row)}", lineno)
            try:
                out.append(RankedImplication(int(row[0]), row[1], tuple(row[2].split(";")), row[3],
                                             float(row[4]), int(row[5]), int(row[6]), float(row[7])))
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
    return out
