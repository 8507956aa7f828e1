"""Forward samplers for synthetic datasets with known ground truth.

Synthetic matrices carry one binary column per raw feature (value ``yes``),
so no column is the complement of another. Written out as a raw CSV, each
feature takes the values ``yes``/``no`` and re-parsing yields both
one-vs-rest columns.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import BinaryFeature, FeatureMatrix, Language, UNKNOWN, write_raw_csv
from .errors import ValidationError
from .hier import sigmoid

GLOBAL = "global"


@dataclass(frozen=True)
class Planted:
    """``f1`` implies ``f2`` everywhere, inside one family, or inside a set of families."""

    f1: int
    f2: int
    scope: str | int | tuple[int, ...] = GLOBAL

    @property
    def families(self) -> tuple[int, ...]:
        if self.scope == GLOBAL:
            return ()
        return (self.scope,) if isinstance(self.scope, int) else tuple(self.scope)

    def binds(self, family: np.ndarray) -> np.ndarray:
        """Mask of languages bound by the implication under flat forward sampling."""
        if self.scope == GLOBAL:
            return np.ones(len(family), dtype=np.int8)
        return np.isin(family, self.families).astype(np.int8)


@dataclass(frozen=True)
class SynthSpec:
    """Shape and noise of a synthetic dataset.

    ``pi`` is one prior for every feature or a per-feature sequence;
    ``family_pi`` (families x features) overrides it family by family, which
    is how a family confound is set up. Per-language noise rates are
    Beta(kappa * noise, kappa * (1 - noise)).
    """

    languages: int = 200
    families: int = 4
    features: int = 20
    planted: tuple[Planted, ...] = ()
    pi: float | tuple[float, ...] = 0.3
    noise: float = 0.05
    missing: float = 0.3
    kappa: float = 10.0
    seed: int = 0
    family_pi: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.languages < 1 or self.features < 1 or self.families < 1:
            raise ValidationError("languages, features and families must be positive")
        if self.families > self.languages:
            raise ValidationError(f"{self.families} families need at least as many languages")
        for name in ("noise", "missing"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")
        pis = np.atleast_1d(np.asarray(self.pi, dtype=float))
        if pis.size not in (1, self.features) or ((pis < 0) | (pis > 1)).any():
            raise ValidationError("pi must be one probability or one per feature")
        if self.family_pi is not None:
            fp = np.asarray(self.family_pi, dtype=float)
            if fp.shape != (self.families, self.features) or ((fp < 0) | (fp > 1)).any():
                raise ValidationError("family_pi must be a families x features table of probabilities")
        for p in self.planted:
            if not (0 <= p.f1 < self.features and 0 <= p.f2 < self.features):
                raise ValidationError(f"planted implication {p.f1}->{p.f2} names a feature out of range")
            if p.f1 == p.f2:
                raise ValidationError(f"planted implication {p.f1}->{p.f2} is a self-loop")
            if p.scope != GLOBAL and not (
                isinstance(p.scope, (int, tuple)) and p.families
                and all(isinstance(f, int) and 0 <= f < self.families for f in p.families)
            ):
                raise ValidationError(f"planted scope {p.scope!r} is neither 'global' nor family indices")

    @property
    def pi_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.pi, dtype=float), (self.features,)).copy()

    def language_pi(self, family: np.ndarray) -> np.ndarray:
        """Feature priors per language, shape (languages, features)."""
        if self.family_pi is None:
            return np.broadcast_to(self.pi_vector, (len(family), self.features))
        return np.asarray(self.family_pi, dtype=float)[family]


@dataclass
class GroundTruth:
    """Every latent behind a synthetic matrix.

    ``clean`` holds the noise-free values, ``errors`` the flipped cells and
    ``missing`` the masked ones; the observed matrix is recovered by
    :func:`recompute_cells`. Tree-model extras are empty for flat data.
    """

    spec: SynthSpec
    family: np.ndarray
    clean: np.ndarray
    errors: np.ndarray
    eps_n: np.ndarray
    missing: np.ndarray
    obedience: dict = field(default_factory=dict)
    node_strengths: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        spec = asdict(self.spec)
        spec["planted"] = [asdict(p) for p in self.spec.planted]
        return {
            "spec": spec,
            "family": self.family.tolist(),
            "clean": self.clean.tolist(),
            "errors": self.errors.tolist(),
            "eps_n": self.eps_n.tolist(),
            "missing": self.missing.tolist(),
            "obedience": {k: v.tolist() for k, v in self.obedience.items()},
            "node_strengths": {k: v for k, v in self.node_strengths.items()},
        }


def recompute_cells(truth: GroundTruth) -> np.ndarray:
    """Observed cells implied by the ground truth."""
    observed = truth.clean ^ truth.errors
    return np.where(truth.missing, UNKNOWN, observed).astype(np.int8)


def _topological_order(n: int, edges: Sequence[tuple[int, int]]) -> list[int]:
    indeg = np.zeros(n, dtype=int)
    out: dict[int, list[int]] = {}
    for a, b in edges:
        indeg[b] += 1
        out.setdefault(a, []).append(b)
    ready = [i for i in range(n) if indeg[i] == 0]
    order = []
    while ready:
        i = ready.pop(0)
        order.append(i)
        for j in out.get(i, []):
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(j)
    if len(order) != n:
        stuck = sorted(int(i) for i in np.flatnonzero(indeg > 0))
        raise ValidationError(f"planted implications form a cycle through features {stuck}")
    return order


def _families(spec: SynthSpec) -> np.ndarray:
    return np.arange(spec.languages) * spec.families // spec.languages


def _languages(spec: SynthSpec, family: np.ndarray, rng: np.random.Generator, subfamilies=2, genera=2):
    # family blobs spread along the equator, tight enough to cluster cleanly
    centres = np.linspace(-150.0, 150.0, spec.families)
    langs = []
    for n in range(spec.languages):
        f = int(family[n])
        members = np.flatnonzero(family == f)
        pos = int(np.searchsorted(members, n))
        s = pos * subfamilies // len(members)
        g = (pos * subfamilies * genera // len(members)) % genera
        lat = float(np.clip(rng.normal(0.0, 3.0), -90, 90))
        lon = float(np.clip(centres[f] + rng.normal(0.0, 3.0), -180, 180))
        langs.append(Language(
            id=f"L{n:04d}", name=f"Lang{n}", latitude=round(lat, 4), longitude=round(lon, 4),
            family_path=(f"fam{f}", f"fam{f}.s{s}", f"fam{f}.s{s}.g{g}"),
        ))
    return langs


def _finish(spec, rng, family, clean, obedience=None, strengths=None):
    F = spec.features
    eps_n = rng.beta(spec.kappa * max(spec.noise, 1e-12), spec.kappa * max(1.0 - spec.noise, 1e-12),
                     size=spec.languages) if spec.noise > 0 else np.zeros(spec.languages)
    errors = (rng.random((spec.languages, F)) < eps_n[:, None]).astype(np.int8)
    missing = rng.random((spec.languages, F)) < spec.missing
    truth = GroundTruth(spec, family, clean.astype(np.int8), errors, eps_n, missing,
                        obedience or {}, strengths or {})
    langs = _languages(spec, family, rng)
    features = [BinaryFeature(f"feat{j:02d}", "yes") for j in range(F)]
    return FeatureMatrix(langs, features, recompute_cells(truth)), truth


def _forced_values(spec, rng, family, obeys):
    """Draw features from their priors, then force implicands in topological order.

    ``obeys[i]`` is a boolean mask of languages bound by planted implication i.
    """
    order = _topological_order(spec.features, [(p.f1, p.f2) for p in spec.planted])
    clean = (rng.random((spec.languages, spec.features)) < spec.language_pi(family)).astype(np.int8)
    for j in order:
        for i, p in enumerate(spec.planted):
            if p.f2 == j:
                clean[:, j] |= clean[:, p.f1] & obeys[i]
    return clean


def generate_flat(spec: SynthSpec) -> tuple[FeatureMatrix, GroundTruth]:
    """Forward-sample the flat model; family-scoped implications bind their families only."""
    rng = np.random.default_rng(spec.seed)
    family = _families(spec)
    obeys = [p.binds(family) for p in spec.planted]
    clean = _forced_values(spec, rng, family, obeys)
    return _finish(spec, rng, family, clean, {f"{p.f1}->{p.f2}": o for p, o in zip(spec.planted, obeys)})


@dataclass(frozen=True)
class TreeShape:
    """Tree strengths for :func:`generate_hier`.

    Globally planted implications draw the root from ``root_strength`` (a
    fixed value, or N(0, sigma2) when None). Family-scoped ones pin the named
    families' nodes at ``+family_strength`` and the others at the negative.
    """

    sigma2: float = 1.0
    root_strength: float | None = 4.0
    family_strength: float = 4.0
    subfamilies: int = 2
    genera: int = 2


def generate_hier(spec: SynthSpec, shape: TreeShape = TreeShape()) -> tuple[FeatureMatrix, GroundTruth]:
    """Forward-sample the tree model over the family/subfamily/genus hierarchy.

    Each planted implication gets its own strengths: family nodes, then
    subfamilies, genera and languages, each Gaussian around its parent.
    Obedience bits are Bernoulli(sigmoid(language strength)).
    """
    if spec.languages < spec.families * shape.subfamilies * shape.genera:
        raise ValidationError(
            f"{spec.languages} languages cannot fill {spec.families} families x {shape.subfamilies} "
            f"subfamilies x {shape.genera} genera"
        )
    rng = np.random.default_rng(spec.seed)
    family = _families(spec)
    sd = float(np.sqrt(shape.sigma2))
    obeys, strengths = [], {}
    for p in spec.planted:
        if p.scope == GLOBAL:
            root = shape.root_strength if shape.root_strength is not None else rng.normal(0.0, sd)
            fam = rng.normal(root, sd, size=spec.families)
        else:
            root = 0.0
            inside = np.isin(np.arange(spec.families), p.families)
            fam = np.where(inside, shape.family_strength, -shape.family_strength)
        u = np.empty(spec.languages)
        for f in range(spec.families):
            members = np.flatnonzero(family == f)
            sub = rng.normal(fam[f], sd, size=shape.subfamilies)
            gen = rng.normal(np.repeat(sub, shape.genera), sd)
            slot = np.arange(len(members)) * shape.subfamilies * shape.genera // len(members)
            u[members] = rng.normal(gen[slot], sd)
        z = (rng.random(spec.languages) < sigmoid(u)).astype(np.int8)
        obeys.append(z)
        strengths[f"{p.f1}->{p.f2}"] = {"root": float(root), "families": fam.tolist(), "leaves": u.tolist()}
    clean = _forced_values(spec, rng, family, obeys)
    return _finish(spec, rng, family, clean, {f"{p.f1}->{p.f2}": o for p, o in zip(spec.planted, obeys)},
                   strengths)


def write_synthetic(matrix: FeatureMatrix, truth: GroundTruth, csv_path, json_path=None) -> None:
    """Raw CSV (values ``yes``/``no``, empty when missing) plus a ground-truth JSON sidecar."""
    text = {1: "yes", 0: "no", UNKNOWN: None}
    columns = {f.raw: [text[int(v)] for v in matrix.cells[:, j]] for j, f in enumerate(matrix.features)}
    write_raw_csv(csv_path, matrix.languages, columns)
    if json_path is None:
        json_path = Path(csv_path).with_suffix(".truth.json")
    Path(json_path).write_text(json.dumps(truth.to_json()), encoding="utf-8")
