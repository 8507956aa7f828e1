"""Language hierarchies: phylogenetic (family paths) and areal (coordinate clustering)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataset import FeatureMatrix, Language
from .errors import ParseError, ValidationError

PHYLO_DEPTH = 4


@dataclass(frozen=True)
class Node:
    id: int
    label: str
    parent: int | None
    children: tuple[int, ...]
    language: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.language is not None


class LanguageTree:
    """Rooted tree whose leaves carry language indices. Node 0 is the root."""

    def __init__(self, nodes: Sequence[Node], language_ids: Sequence[str] | None = None):
        self.nodes = tuple(nodes)
        self.language_ids = tuple(language_ids) if language_ids is not None else None
        if not self.nodes or self.nodes[0].parent is not None:
            raise ValidationError("node 0 must be the root")
        self._leaf = {}
        depth = np.zeros(len(self.nodes), dtype=np.int64)
        parent = np.full(len(self.nodes), -1, dtype=np.int64)
        for pos, node in enumerate(self.nodes):
            if node.id != pos:
                raise ValidationError(f"node at position {pos} has id {node.id}")
            if node.parent is not None:
                parent[node.id] = node.parent
            if node.is_leaf:
                if node.children:
                    raise ValidationError(f"leaf {node.id} has children")
                if node.language in self._leaf:
                    raise ValidationError(f"language {node.language} appears at more than one leaf")
                self._leaf[node.language] = node.id
        for node in self._preorder():
            if node.parent is not None:
                depth[node.id] = depth[node.parent] + 1
        self.parent = parent
        self.depth = depth
        self.parent.setflags(write=False)
        self.depth.setflags(write=False)

    def _preorder(self):
        stack = [0]
        while stack:
            node = self.nodes[stack.pop()]
            yield node
            stack.extend(reversed(node.children))

    @property
    def root(self) -> Node:
        return self.nodes[0]

    @property
    def languages(self) -> frozenset[int]:
        return frozenset(self._leaf)

    @property
    def internal_nodes(self) -> list[int]:
        return [n.id for n in self.nodes if not n.is_leaf]

    def leaf_of(self, language: int) -> int:
        try:
            return self._leaf[language]
        except KeyError:
            raise LookupError(f"language {language} is not in the tree") from None

    def preorder(self) -> list[Node]:
        return list(self._preorder())

    def summary(self) -> dict:
        leaf_depths = sorted({int(self.depth[n]) for n in self._leaf.values()})
        branching = [len(self.nodes[i].children) for i in self.internal_nodes]
        return {
            "internal_nodes": len(self.internal_nodes),
            "leaves": len(self._leaf),
            "root_children": len(self.root.children),
            "leaf_depths": leaf_depths,
            "max_branching": max(branching) if branching else 0,
            "mean_branching": float(np.mean(branching)) if branching else 0.0,
        }

    def distance(self, a: int, b: int) -> int:
        return tree_distance(self, a, b)


class _Builder:
    def __init__(self, root_label="root"):
        self.labels = [root_label]
        self.parents: list[int | None] = [None]
        self.children: list[list[int]] = [[]]
        self.language: list[int | None] = [None]

    def add(self, parent: int, label: str, language: int | None = None) -> int:
        idx = len(self.labels)
        self.labels.append(label)
        self.parents.append(parent)
        self.children.append([])
        self.language.append(language)
        self.children[parent].append(idx)
        return idx

    def build(self, language_ids=None) -> LanguageTree:
        nodes = [
            Node(i, self.labels[i], self.parents[i], tuple(self.children[i]), self.language[i])
            for i in range(len(self.labels))
        ]
        return LanguageTree(nodes, language_ids)


# --------------------------------------------------------------------------
# phylogenetic tree


def build_phylo_tree(matrix: FeatureMatrix) -> LanguageTree:
    """Root -> family -> subfamily -> genus -> language, missing levels padded by repetition."""
    missing = [lang.id for lang in matrix.languages if not lang.family_path or not lang.family_path[0]]
    if missing:
        shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
        raise ValidationError(f"{len(missing)} languages have no family: {shown}")
    b = _Builder()
    index: dict[tuple[str, ...], int] = {}
    for i, lang in enumerate(matrix.languages):
        path = list(lang.family_path[: PHYLO_DEPTH - 1])
        while len(path) < PHYLO_DEPTH - 1:
            path.append(path[-1])
        parent = 0
        for level in range(len(path)):
            key = tuple(path[: level + 1])
            if key not in index:
                index[key] = b.add(parent, path[level])
            parent = index[key]
        b.add(parent, lang.id, language=i)
    return b.build([lang.id for lang in matrix.languages])


# --------------------------------------------------------------------------
# areal tree


@dataclass(frozen=True)
class ClusterSpec:
    macro_count: int = 6
    micro_count: int = 25
    seed: int = 0
    max_iterations: int = 100
    micro_mode: str = "per-macro"  # or "total": micro_count split across macro clusters

    def __post_init__(self):
        if self.macro_count < 1 or self.micro_count < 1 or self.max_iterations < 1:
            raise ValidationError("cluster counts and max_iterations must be >= 1")
        if self.micro_mode not in ("per-macro", "total"):
            raise ValidationError(f"unknown micro_mode {self.micro_mode!r}")


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [points[rng.integers(len(points))]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(len(points))
        else:
            idx = rng.choice(len(points), p=d2 / total)
        centers.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=float)


def kmeans(points, k: int, rng: np.random.Generator, max_iterations: int = 100) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; returns cluster labels.

    ``k`` is reduced to the number of distinct points when there are fewer.
    Empty clusters are reseeded with the point farthest from its centroid.
    """
    points = np.asarray(points, dtype=float)
    k = min(k, len(np.unique(points, axis=0)))
    centers = _kmeanspp_init(points, k, rng)
    labels = np.full(len(points), -1)
    for _ in range(max_iterations):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = d2.argmin(axis=1)
        counts = np.bincount(new, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            own = d2[np.arange(len(points)), new]
            far = int(own.argmax())
            new[far] = empty
            centers[empty] = points[far]
            counts = np.bincount(new, minlength=k)
        if np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            centers[c] = points[labels == c].mean(axis=0)
    return _canonical_labels(labels)


def _canonical_labels(labels: np.ndarray) -> np.ndarray:
    # number clusters by first appearance so output does not depend on center order
    order = {}
    for lab in labels:
        order.setdefault(int(lab), len(order))
    return np.array([order[int(lab)] for lab in labels], dtype=np.int64)


def _split_total(total: int, sizes: Sequence[int]) -> list[int]:
    sizes = np.asarray(sizes, dtype=float)
    total = max(total, len(sizes))
    share = 1 + (total - len(sizes)) * sizes / sizes.sum()
    alloc = np.floor(share).astype(int)
    for i in np.argsort(-(share - alloc), kind="stable")[: total - alloc.sum()]:
        alloc[i] += 1
    return [int(min(a, s)) for a, s in zip(alloc, sizes)]


def build_areal_tree(matrix: FeatureMatrix, spec: ClusterSpec = ClusterSpec()) -> LanguageTree:
    """Root -> macro-cluster -> micro-cluster -> language over located languages."""
    located = [i for i, lang in enumerate(matrix.languages) if lang.located]
    if len(located) < spec.macro_count:
        raise ValidationError(
            f"areal tree needs {spec.macro_count} located languages, found {len(located)} "
            f"({spec.macro_count - len(located)} short)"
        )
    pts = np.array([[matrix.languages[i].latitude, matrix.languages[i].longitude] for i in located])
    rng = np.random.default_rng(spec.seed)
    macro = kmeans(pts, spec.macro_count, rng, spec.max_iterations)
    n_macro = macro.max() + 1
    sizes = [int((macro == c).sum()) for c in range(n_macro)]
    if spec.micro_mode == "total":
        micro_k = _split_total(spec.micro_count, sizes)
    else:
        micro_k = [min(spec.micro_count, s) for s in sizes]

    b = _Builder()
    for c in range(n_macro):
        members = np.flatnonzero(macro == c)
        mnode = b.add(0, f"macro-{c}")
        micro = kmeans(pts[members], micro_k[c], rng, spec.max_iterations)
        for d in range(micro.max() + 1):
            unode = b.add(mnode, f"macro-{c}/micro-{d}")
            for idx in members[micro == d]:
                lang = located[idx]
                b.add(unode, matrix.languages[lang].id, language=lang)
    return b.build([lang.id for lang in matrix.languages])


# --------------------------------------------------------------------------
# distances and export


def tree_distance(tree: LanguageTree, a: int, b: int) -> int:
    """Number of edges on the path between the leaves of languages ``a`` and ``b``."""
    x, y = tree.leaf_of(a), tree.leaf_of(b)
    dist = 0
    depth, parent = tree.depth, tree.parent
    while depth[x] > depth[y]:
        x, dist = parent[x], dist + 1
    while depth[y] > depth[x]:
        y, dist = parent[y], dist + 1
    while x != y:
        x, y, dist = parent[x], parent[y], dist + 2
    return int(dist)


def leaf_distance_matrix(tree: LanguageTree, languages: Sequence[int]) -> np.ndarray:
    """Pairwise edge distances between the given languages (vectorised ancestor walk)."""
    leaves = np.array([tree.leaf_of(l) for l in languages], dtype=np.int64)
    # ancestor chains padded with -1; compare level by level from the root side
    max_depth = int(tree.depth[leaves].max()) if len(leaves) else 0
    chains = np.full((len(leaves), max_depth + 1), -1, dtype=np.int64)
    for row, leaf in enumerate(leaves):
        node = leaf
        while node >= 0:
            chains[row, tree.depth[node]] = node
            node = tree.parent[node]
    depths = tree.depth[leaves]
    common = np.zeros((len(leaves), len(leaves)), dtype=np.int64)
    for level in range(max_depth + 1):
        col = chains[:, level]
        same = (col[:, None] == col[None, :]) & (col[:, None] >= 0)
        common += same
    lca_depth = common - 1
    return depths[:, None] + depths[None, :] - 2 * lca_depth


def write_tree(tree: LanguageTree, path) -> None:
    Path(path).write_text(tree_to_text(tree), encoding="utf-8")


def tree_to_text(tree: LanguageTree) -> str:
    lines = []
    for node in tree.preorder():
        depth = int(tree.depth[node.id])
        if node.is_leaf:
            lid = tree.language_ids[node.language] if tree.language_ids else str(node.language)
            lines.append(f"{depth}\t@{lid}")
        else:
            lines.append(f"{depth}\t{node.label}")
    return "\n".join(lines) + "\n"


def tree_from_text(text: str, language_ids: Sequence[str]) -> LanguageTree:
    index = {lid: i for i, lid in enumerate(language_ids)}
    b = None
    stack: list[int] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            depth_text, label = line.split("\t", 1)
            depth = int(depth_text)
        except ValueError:
            raise ParseError("expected depth<TAB>label", line_no) from None
        if b is None:
            if depth != 0 or label.startswith("@"):
                raise ParseError("first line must be the root at depth 0", line_no)
            b = _Builder(label)
            stack = [0]
            continue
        if depth < 1 or depth > len(stack):
            raise ParseError(f"depth {depth} does not follow its parent", line_no)
        del stack[depth:]
        parent = stack[-1]
        if b.language[parent] is not None:
            raise ParseError("leaf cannot have children", line_no)
        if label.startswith("@"):
            lid = label[1:]
            if lid not in index:
                raise ParseError(f"unknown language id {lid!r}", line_no)
            stack.append(b.add(parent, lid, language=index[lid]))
        else:
            stack.append(b.add(parent, label))
    if b is None:
        raise ParseError("empty tree", 1)
    return b.build(language_ids)


def read_tree(path, language_ids: Sequence[str]) -> LanguageTree:
    return tree_from_text(Path(path).read_text(encoding="utf-8"), language_ids)


def languages_in(tree: LanguageTree, languages: Iterable[int]) -> list[int]:
    have = tree.languages
    return [l for l in languages if l in have]
