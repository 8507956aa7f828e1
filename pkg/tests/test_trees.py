import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_matrix
from typimp.errors import ParseError, ValidationError
from typimp.trees import (
    ClusterSpec,
    _Builder,
    build_areal_tree,
    build_phylo_tree,
    kmeans,
    leaf_distance_matrix,
    read_tree,
    tree_distance,
    tree_to_text,
    write_tree,
)


def blobs(n=100, k=6, seed=0, spread=0.5):
    rng = np.random.default_rng(seed)
    centres = [(-60 + 25 * i, -150 + 55 * i) for i in range(k)]
    label = np.arange(n) % k
    lat = np.clip([centres[c][0] + rng.normal(0, spread) for c in label], -89, 89)
    lon = np.clip([centres[c][1] + rng.normal(0, spread) for c in label], -179, 179)
    return list(zip(lat, lon)), label


class TestPhylo:
    def test_single_language_chain(self):
        m = make_matrix([[1]], families=[("Fam",)])
        tree = build_phylo_tree(m)
        assert len(tree.internal_nodes) == 4
        assert tree.depth[tree.leaf_of(0)] == 4

    def test_two_families(self):
        m = make_matrix([[1], [0], [1]], families=[("A", "a1"), ("A", "a2", "g"), ("B",)])
        tree = build_phylo_tree(m)
        assert len(tree.root.children) == 2
        assert tree.summary()["leaf_depths"] == [4]

    def test_padding_keeps_shared_prefix(self):
        m = make_matrix([[1], [1]], families=[("A", "s"), ("A", "s", "g")])
        tree = build_phylo_tree(m)
        # the padded path A/s/s differs from A/s/g only at genus level
        assert tree_distance(tree, 0, 1) == 4

    def test_missing_family_rejected(self):
        m = make_matrix([[1], [1]], families=[("A",), ()])
        with pytest.raises(ValidationError, match="no family"):
            build_phylo_tree(m)


class TestAreal:
    def test_blobs_recovered_for_any_seed(self):
        coords, label = blobs()
        m = make_matrix(np.ones((100, 1)), coords=coords)
        for seed in range(5):
            tree = build_areal_tree(m, ClusterSpec(6, 1, seed=seed))
            assert len(tree.root.children) == 6
            for macro in tree.root.children:
                micro = tree.nodes[macro].children
                assert len(micro) == 1
                langs = [tree.nodes[l].language for l in tree.nodes[micro[0]].children]
                assert len(set(label[langs])) == 1

    def test_kmeans_matches_brute_force_assignment(self):
        coords, label = blobs(n=30, k=3, seed=2)
        got = kmeans(np.array(coords), 3, np.random.default_rng(0))
        # best relabelling over all permutations agrees everywhere
        best = max(sum(p[g] == t for g, t in zip(got, label)) for p in itertools.permutations(range(3)))
        assert best == 30

    def test_six_languages_are_singletons(self):
        coords = [(0, 0), (10, 10), (20, 20), (30, 30), (40, 40), (50, 50)]
        tree = build_areal_tree(make_matrix(np.ones((6, 1)), coords=coords), ClusterSpec(6, 25))
        for macro in tree.root.children:
            assert len(tree.nodes[macro].children) == 1
        assert tree.summary()["internal_nodes"] == 13

    def test_deterministic(self):
        coords, _ = blobs(n=60, seed=3, spread=20)
        m = make_matrix(np.ones((60, 1)), coords=coords)
        assert tree_to_text(build_areal_tree(m, ClusterSpec(seed=4))) == tree_to_text(
            build_areal_tree(m, ClusterSpec(seed=4)))

    def test_default_spec_node_count(self):
        coords, _ = blobs(n=400, seed=1, spread=15)
        tree = build_areal_tree(make_matrix(np.ones((400, 1)), coords=coords))
        count = tree.summary()["internal_nodes"]
        assert count >= 7
        total = build_areal_tree(make_matrix(np.ones((400, 1)), coords=coords),
                                 ClusterSpec(micro_mode="total")).summary()["internal_nodes"]
        assert total == 1 + 6 + 25 - 1 or total == 1 + 6 + 25

    def test_unlocated_languages_left_out(self):
        coords = [(0, 0), (1, 1), (None, None), (50, 50)]
        tree = build_areal_tree(make_matrix(np.ones((4, 1)), coords=coords), ClusterSpec(2, 1))
        assert tree.languages == {0, 1, 3}

    def test_too_few_located(self):
        with pytest.raises(ValidationError, match="located"):
            build_areal_tree(make_matrix(np.ones((2, 1)), coords=[(0, 0), (1, 1)]), ClusterSpec(3, 1))

    def test_bad_spec(self):
        with pytest.raises(ValidationError):
            ClusterSpec(0, 1)


def seven_node_tree():
    b = _Builder()
    m1, m2 = b.add(0, "m1"), b.add(0, "m2")
    u1, u2 = b.add(m1, "u1"), b.add(m2, "u2")
    b.add(u1, "a", language=0)
    b.add(u1, "b", language=1)
    b.add(u2, "c", language=2)
    return b.build(["a", "b", "c"])


class TestDistance:
    def test_siblings(self):
        assert tree_distance(seven_node_tree(), 0, 1) == 2

    def test_identity(self):
        assert tree_distance(seven_node_tree(), 2, 2) == 0

    def test_different_macro_nodes(self):
        assert tree_distance(seven_node_tree(), 0, 2) == 6

    def test_hand_built_macro_level(self):
        # leaves hanging directly off two macro nodes: leaf-macro-root-macro-leaf
        b = _Builder()
        m1, m2 = b.add(0, "m1"), b.add(0, "m2")
        b.add(m1, "a", language=0)
        b.add(m1, "b", language=1)
        b.add(m2, "c", language=2)
        b.add(m2, "d", language=3)
        tree = b.build(list("abcd"))
        assert len(tree.nodes) == 7
        assert tree_distance(tree, 0, 3) == 4

    def test_matrix_agrees_with_pairwise(self):
        tree = seven_node_tree()
        d = leaf_distance_matrix(tree, [0, 1, 2])
        for a in range(3):
            for b in range(3):
                assert d[a, b] == tree_distance(tree, a, b)


@st.composite
def random_trees(draw):
    n_internal = draw(st.integers(1, 8))
    b = _Builder()
    nodes = [0]
    for i in range(1, n_internal):
        nodes.append(b.add(draw(st.sampled_from(nodes)), f"n{i}"))
    n_leaves = draw(st.integers(1, 10))
    for i in range(n_leaves):
        b.add(draw(st.sampled_from(nodes)), f"L{i}", language=i)
    return b.build([f"L{i}" for i in range(n_leaves)]), n_leaves


@settings(max_examples=60, deadline=None)
@given(random_trees())
def test_distance_is_a_metric(tree_and_n):
    tree, n = tree_and_n
    d = leaf_distance_matrix(tree, list(range(n)))
    assert (np.diag(d) == 0).all()
    assert (d == d.T).all()
    for a, b, c in itertools.product(range(n), repeat=3):
        assert d[a, c] <= d[a, b] + d[b, c]


def test_text_round_trip(tmp_path):
    tree = seven_node_tree()
    path = tmp_path / "t.tree"
    write_tree(tree, path)
    again = read_tree(path, ["a", "b", "c"])
    assert tree_to_text(again) == tree_to_text(tree)


def test_text_unknown_language(tmp_path):
    path = tmp_path / "t.tree"
    path.write_text("0\troot\n1\t@zz\n", encoding="utf-8")
    with pytest.raises(ParseError, match="line 2"):
        read_tree(path, ["a"])
