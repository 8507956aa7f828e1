"""Language/feature database ingestion.

Raw tables are read from CSV, optionally merged (several raw values mapped to
one), then expanded one-vs-rest into a ternary matrix of binary features:
``1`` true, ``0`` false, ``-1`` unknown.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, ValidationError

LEADING_COLUMNS = ("id", "name", "latitude", "longitude", "family", "subfamily", "genus")
MISSING_MARKERS = ("", "?")

TRUE, FALSE, UNKNOWN = 1, 0, -1


@dataclass(frozen=True)
class Language:
    id: str
    name: str
    latitude: float | None = None
    longitude: float | None = None
    family_path: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise ValidationError("language id must be nonempty")
        if (self.latitude is None) != (self.longitude is None):
            raise ValidationError(f"language {self.id!r}: latitude and longitude must both be known or both unknown")
        if self.latitude is not None and not -90.0 <= self.latitude <= 90.0:
            raise ValidationError(f"language {self.id!r}: latitude {self.latitude} out of range")
        if self.longitude is not None and not -180.0 <= self.longitude <= 180.0:
            raise ValidationError(f"language {self.id!r}: longitude {self.longitude} out of range")

    @property
    def located(self) -> bool:
        return self.latitude is not None


@dataclass(frozen=True, order=True)
class BinaryFeature:
    """Binary feature ``raw == value`` derived from a multi-valued raw feature."""

    raw: str
    value: str

    @property
    def id(self) -> str:
        return f"{self.raw}={self.value}"

    def __str__(self):
        return self.id


@dataclass(frozen=True)
class MergeRule:
    feature: str
    source_values: frozenset[str]
    target_value: str

    def __post_init__(self):
        object.__setattr__(self, "source_values", frozenset(self.source_values))
        if not self.source_values:
            raise ValidationError(f"merge rule for {self.feature!r} has no source values")


class FeatureMatrix:
    """Immutable ternary language x binary-feature matrix.

    Parameters
    ----------
    languages : sequence of Language
    features : sequence of BinaryFeature
    cells : array-like, shape (n_languages, n_features)
        Entries in {1, 0, -1}; -1 marks an unknown cell.
    """

    def __init__(self, languages: Sequence[Language], features: Sequence[BinaryFeature], cells):
        self.languages = tuple(languages)
        self.features = tuple(features)
        cells = np.array(cells, dtype=np.int8).reshape(len(self.languages), len(self.features))
        if not np.isin(cells, (TRUE, FALSE, UNKNOWN)).all():
            raise ValidationError("matrix cells must be 1, 0 or -1")
        cells.setflags(write=False)
        self.cells = cells

        self._lang_index = {}
        for i, lang in enumerate(self.languages):
            if lang.id in self._lang_index:
                raise ValidationError(f"duplicate language id {lang.id!r}")
            self._lang_index[lang.id] = i
        self._feat_index = {f.id: j for j, f in enumerate(self.features)}
        if len(self._feat_index) != len(self.features):
            raise ValidationError("duplicate binary feature")

        raw_names = sorted({f.raw for f in self.features})
        raw_code = {name: k for k, name in enumerate(raw_names)}
        self.raw_codes = np.array([raw_code[f.raw] for f in self.features], dtype=np.int64)
        self.raw_codes.setflags(write=False)
        self._check_partition()

    def _check_partition(self):
        for code in np.unique(self.raw_codes):
            cols = self.cells[:, self.raw_codes == code]
            if ((cols == TRUE).sum(axis=1) > 1).any():
                raw = self.features[int(np.flatnonzero(self.raw_codes == code)[0])].raw
                raise ValidationError(f"raw feature {raw!r} has more than one true value for a language")

    @property
    def shape(self):
        return self.cells.shape

    @property
    def n_languages(self) -> int:
        return len(self.languages)

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def known(self) -> np.ndarray:
        return self.cells != UNKNOWN

    def language_index(self, language_id: str) -> int:
        try:
            return self._lang_index[language_id]
        except KeyError:
            raise KeyError(f"unknown language id {language_id!r}") from None

    def feature_index(self, feature_id: str) -> int:
        try:
            return self._feat_index[feature_id]
        except KeyError:
            raise KeyError(f"unknown feature {feature_id!r}") from None

    def same_raw(self, i: int, j: int) -> bool:
        return bool(self.raw_codes[i] == self.raw_codes[j])

    def with_cells(self, cells) -> "FeatureMatrix":
        """Copy with replaced cells (same languages and features)."""
        return FeatureMatrix(self.languages, self.features, cells)

    def __eq__(self, other):
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.languages == other.languages
            and self.features == other.features
            and np.array_equal(self.cells, other.cells)
        )

    def __repr__(self):
        density = self.known.mean() if self.cells.size else 0.0
        return f"FeatureMatrix({self.n_languages} languages x {self.n_features} features, {density:.1%} known)"


@dataclass(frozen=True, eq=False)
class PairCase:
    """Languages relevant to one candidate implication.

    ``features`` lists the implicant column(s) first and the implicand last, so
    a plain pair has two entries and a conditioned implication has three.
    Rows in which every value is unknown are never present.
    """

    features: tuple[int, ...]
    languages: np.ndarray
    values: np.ndarray = field(repr=False)

    @property
    def f1_index(self) -> int:
        return self.features[0]

    @property
    def f2_index(self) -> int:
        return self.features[-1]

    @property
    def implicants(self) -> tuple[int, ...]:
        return self.features[:-1]

    @property
    def implicand(self) -> int:
        return self.features[-1]

    @property
    def n_rows(self) -> int:
        return len(self.languages)

    def restrict(self, language_indices: Iterable[int]) -> "PairCase":
        keep = np.isin(self.languages, np.fromiter(language_indices, dtype=np.int64))
        return PairCase(self.features, self.languages[keep], self.values[keep])


# --------------------------------------------------------------------------
# raw tables


def _parse_coordinate(text: str, line: int, what: str) -> float | None:
    if text.strip() in MISSING_MARKERS:
        return None
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"bad {what} {text!r}", line) from None
    if not math.isfinite(value):
        raise ParseError(f"bad {what} {text!r}", line)
    return value


def _family_path(family: str, subfamily: str, genus: str) -> tuple[str, ...]:
    if not family:
        return ()
    labels = [family, subfamily, genus]
    while not labels[-1]:
        labels.pop()
    # interior gaps inherit the label above them
    for i in range(1, len(labels)):
        labels[i] = labels[i] or labels[i - 1]
    return tuple(labels)


def read_raw_table(path) -> tuple[list[Language], list[str], dict[str, list[str | None]]]:
    """Read the raw CSV into languages, raw feature names and per-feature columns."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        header = [h.strip() for h in header]
        if tuple(header[: len(LEADING_COLUMNS)]) != LEADING_COLUMNS:
            raise ParseError(f"header must start with {','.join(LEADING_COLUMNS)}", 1)
        names = header[len(LEADING_COLUMNS):]
        if len(set(names)) != len(names) or any(not n for n in names):
            raise ParseError("feature column names must be unique and nonempty", 1)

        languages = []
        columns: dict[str, list[str | None]] = {n: [] for n in names}
        seen = set()
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", line)
            lid, name, lat, lon, fam, sub, gen = (c.strip() for c in row[: len(LEADING_COLUMNS)])
            if lid in seen:
                raise ValidationError(f"duplicate language id {lid!r} (line {line})")
            seen.add(lid)
            try:
                lang = Language(
                    id=lid,
                    name=name,
                    latitude=_parse_coordinate(lat, line, "latitude"),
                    longitude=_parse_coordinate(lon, line, "longitude"),
                    family_path=_family_path(fam, sub, gen),
                )
            except ValidationError as exc:
                raise ValidationError(f"{exc} (line {line})") from None
            languages.append(lang)
            for n, cell in zip(names, row[len(LEADING_COLUMNS):]):
                cell = cell.strip()
                columns[n].append(None if cell in MISSING_MARKERS else cell)
    return languages, names, columns


def read_merge_rules(path) -> list[MergeRule]:
    """Parse ``feature<TAB>v1|v2|...<TAB>target`` lines; ``#`` starts a comment."""
    rules = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError("merge rule needs 3 tab-separated fields", line_no)
            feature, sources, target = (p.strip() for p in parts)
            values = frozenset(v.strip() for v in sources.split("|") if v.strip())
            if not feature or not target or not values:
                raise ParseError("empty field in merge rule", line_no)
            rules.append(MergeRule(feature, values, target))
    return rules


def validate_merges(feature_names: Iterable[str], rules: Sequence[MergeRule]) -> None:
    names = set(feature_names)
    claimed: dict[str, set[str]] = {}
    for rule in rules:
        if rule.feature not in names:
            raise ValidationError(f"merge rule {rule} names unknown feature {rule.feature!r}")
        taken = claimed.setdefault(rule.feature, set())
        overlap = taken & rule.source_values
        if overlap:
            raise ValidationError(f"merge rule {rule} overlaps earlier rules on values {sorted(overlap)}")
        taken |= rule.source_values


def apply_merges(columns: dict[str, list[str | None]], rules: Sequence[MergeRule]) -> dict[str, list[str | None]]:
    """Replace every value in a rule's source set by its target value."""
    validate_merges(columns, rules)
    mapping: dict[str, dict[str, str]] = {}
    for rule in rules:
        m = mapping.setdefault(rule.feature, {})
        for v in rule.source_values:
            m[v] = rule.target_value
    out = {}
    for name, col in columns.items():
        m = mapping.get(name)
        out[name] = list(col) if m is None else [None if v is None else m.get(v, v) for v in col]
    return out


def binarize(
    languages: Sequence[Language], names: Sequence[str], columns: dict[str, list[str | None]]
) -> FeatureMatrix:
    """One-vs-rest expansion; raw features with fewer than two values are dropped."""
    features = []
    blocks = []
    for name in names:
        col = columns[name]
        values = sorted({v for v in col if v is not None})
        if len(values) < 2:
            continue
        known = np.array([v is not None for v in col])
        for value in values:
            block = np.full(len(col), UNKNOWN, dtype=np.int8)
            block[known] = [v == value for v in col if v is not None]
            features.append(BinaryFeature(name, value))
            blocks.append(block)
    cells = np.stack(blocks, axis=1) if blocks else np.zeros((len(languages), 0), dtype=np.int8)
    return FeatureMatrix(languages, features, cells)


def parse_dataset(path, merge_rules: Sequence[MergeRule] = ()) -> FeatureMatrix:
    """Read the raw CSV, apply merges, then binarize one-vs-rest."""
    languages, names, columns = read_raw_table(path)
    columns = apply_merges(columns, merge_rules)
    return binarize(languages, names, columns)


def write_raw_csv(path, languages: Sequence[Language], columns: dict[str, Sequence[str | None]]) -> None:
    """Write languages and raw feature columns in the input CSV format."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*LEADING_COLUMNS, *columns])
        for i, lang in enumerate(languages):
            writer.writerow([*_language_fields(lang), *("" if col[i] is None else col[i] for col in columns.values())])


def _language_fields(lang: Language) -> list[str]:
    path = list(lang.family_path) + [""] * (3 - len(lang.family_path))
    coord = lambda x: "" if x is None else repr(x)  # noqa: E731
    return [lang.id, lang.name, coord(lang.latitude), coord(lang.longitude), *path[:3]]


# --------------------------------------------------------------------------
# ternary matrix format: two header rows (raw names, then values)

_VALUE_ROW_MARK = "#value"
_CELL_TEXT = {TRUE: "1", FALSE: "0", UNKNOWN: ""}


def write_matrix(matrix: FeatureMatrix, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*LEADING_COLUMNS, *(f.raw for f in matrix.features)])
        writer.writerow([_VALUE_ROW_MARK, *[""] * (len(LEADING_COLUMNS) - 1), *(f.value for f in matrix.features)])
        for lang, row in zip(matrix.languages, matrix.cells):
            writer.writerow([*_language_fields(lang), *(_CELL_TEXT[int(c)] for c in row)])


def read_matrix(path) -> FeatureMatrix:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        raw = next(reader, None)
        values = next(reader, None)
        if raw is None or tuple(raw[: len(LEADING_COLUMNS)]) != LEADING_COLUMNS:
            raise ParseError("bad matrix header", 1)
        if values is None or values[0] != _VALUE_ROW_MARK or len(values) != len(raw):
            raise ParseError("missing value header row", 2)
        k = len(LEADING_COLUMNS)
        features = [BinaryFeature(r, v) for r, v in zip(raw[k:], values[k:])]
        languages, rows = [], []
        lookup = {"1": TRUE, "0": FALSE, "": UNKNOWN, "?": UNKNOWN}
        for row in reader:
            line = reader.line_num
            if len(row) != len(raw):
                raise ParseError(f"expected {len(raw)} fields, found {len(row)}", line)
            lid, name, lat, lon, fam, sub, gen = row[:k]
            languages.append(
                Language(
                    lid,
                    name,
                    _parse_coordinate(lat, line, "latitude"),
                    _parse_coordinate(lon, line, "longitude"),
                    _family_path(fam, sub, gen),
                )
            )
            try:
                rows.append([lookup[c] for c in row[k:]])
            except KeyError as exc:
                raise ParseError(f"bad cell {exc.args[0]!r}", line) from None
    cells = np.array(rows, dtype=np.int8).reshape(len(languages), len(features))
    return FeatureMatrix(languages, features, cells)


# --------------------------------------------------------------------------
# candidate views


def case_view(matrix: FeatureMatrix, implicants: Sequence[int], implicand: int) -> PairCase:
    """Rows for one candidate implication, dropping languages with every value unknown."""
    cols = (*implicants, implicand)
    if len(set(cols)) != len(cols):
        raise ValidationError(f"implication uses the same feature twice: {[matrix.features[c].id for c in cols]}")
    for a in range(len(cols)):
        for b in range(a + 1, len(cols)):
            if matrix.same_raw(cols[a], cols[b]):
                raise ValidationError(
                    f"{matrix.features[cols[a]].id} and {matrix.features[cols[b]].id} derive from the same raw "
                    "feature; their implication is a tautology of the one-vs-rest encoding"
                )
    values = matrix.cells[:, list(cols)]
    keep = np.flatnonzero((values != UNKNOWN).any(axis=1))
    return PairCase(tuple(int(c) for c in cols), keep.astype(np.int64), np.ascontiguousarray(values[keep]))


def pair_view(matrix: FeatureMatrix, f1: int, f2: int) -> PairCase:
    """The 2 x N view for the ordered pair ``f1 => f2``."""
    return case_view(matrix, (f1,), f2)
