import numpy as np
import pytest

from fringetries.asymptotics import mean_overlay
from fringetries.exceptions import EmptyTree, LimitExceeded, ShapeDependence, UnaryNode, UsageError
from fringetries.functionals import (
    TollFunction,
    brute_force_independence,
    evaluate_additive,
    evaluate_by_definition,
    evaluate_tree,
    independence_number,
    matching_number,
    parse_functionals,
    phi_alpha,
    phi_geq,
    phi_internal,
    phi_k,
    phi_leaf,
    phi_p,
    phi_shape,
    pullback,
    toll_value,
)
from fringetries.source import replicate_rng
from fringetries.trees import (
    KeySet,
    Node,
    PatriciaTrie,
    Trie,
    build_patricia,
    build_trie,
    compress,
    enumerate_patricia_shapes,
    fringe,
    shape_probability,
    shape_string,
)

BUILT_IN = [phi_k(1), phi_k(2), phi_k(3), phi_geq(2), phi_geq(3), phi_internal(), phi_leaf(), phi_alpha(), phi_p()]


def random_tree(d, n, seed, index=0, builder=build_patricia):
    return builder(KeySet.from_source(d, n, replicate_rng(seed, index)))


def leaf_toll(view):
    return float(view.leaves)


def prefix_toll(view):
    return float(len(view.node.prefix))


def test_five_key_values(five_keys):
    pat = build_patricia(five_keys)
    values = evaluate_additive((phi_k(2), phi_geq(2), phi_leaf(), phi_internal(), phi_alpha()), pat)
    np.testing.assert_array_equal(values, [2, 4, 5, 4, 6])
    assert matching_number(pat) == 3
    assert brute_force_independence(pat) == 6


def test_pullback_on_five_key_trie(five_keys):
    trie = build_trie(five_keys)
    assert evaluate_additive(pullback(phi_k(2)), trie)[0] == 2
    # without the pullback the unary node above "110" is counted as well
    assert evaluate_additive(phi_k(2), trie)[0] == 3


def test_pullback_is_zero_at_unary_root():
    trie = build_trie(KeySet.from_strings(["100", "101"]))
    assert len(trie.root.children) == 1
    assert toll_value(pullback(phi_k(2)), trie) == 0.0
    assert toll_value(phi_k(2), trie) == 1.0


def test_lone_leaf():
    leaf = PatriciaTrie(Node(key=0), 2)
    assert evaluate_additive(phi_internal(), leaf)[0] == 0
    assert independence_number(leaf) == 1
    assert matching_number(leaf) == 0
    assert toll_value(pullback(phi_leaf()), leaf) == phi_leaf().chi == 1.0


def test_chi():
    assert phi_k(2).chi == 0.0
    assert phi_k(1).chi == 1.0
    assert phi_geq(1).chi == 1.0
    assert phi_geq(2).chi == 0.0
    assert phi_leaf().chi == 1.0
    assert phi_internal().chi == 0.0
    assert phi_alpha().chi == 1.0
    assert pullback(phi_k(2)).chi == 0.0


def test_empty_tree():
    empty = PatriciaTrie(None, 2)
    np.testing.assert_array_equal(evaluate_additive(BUILT_IN, empty), np.zeros(len(BUILT_IN)))
    assert toll_value(phi_alpha(), empty) == 0.0
    with pytest.raises(EmptyTree):
        matching_number(empty)


@pytest.mark.parametrize("seed", range(10))
def test_single_pass_matches_definition(seed, binary, skewed, ternary):
    d = (binary, skewed, ternary)[seed % 3]
    tree = random_tree(d, 2 + 3 * seed, seed)
    tolls = BUILT_IN + [TollFunction("leaves", leaf_toll)]
    for phi, value in zip(tolls, evaluate_additive(tolls, tree)):
        assert value == evaluate_by_definition(phi, tree), phi.name


@pytest.mark.parametrize("seed", range(10))
def test_recursion_identity(seed, skewed):
    tree = random_tree(skewed, 5 + seed, seed, builder=build_trie)
    for phi in BUILT_IN:
        total = evaluate_additive(phi, tree)[0]
        children = sum(evaluate_additive(phi, fringe(tree, (a,)))[0] for a in tree.root.children)
        assert total == toll_value(phi, tree) + children


@pytest.mark.parametrize("seed", range(30))
def test_pullback_identity(seed, binary, skewed, ternary):
    d = (binary, skewed, ternary)[seed % 3]
    rng = replicate_rng(seed, 99)
    trie = random_tree(d, int(rng.integers(1, 51)), seed, builder=build_trie)
    tolls = [phi_k(2), phi_internal(), phi_alpha(), phi_geq(3), phi_leaf(), phi_p()]
    patricia_values = evaluate_additive(tolls, compress(trie))
    trie_values = evaluate_additive([pullback(phi) for phi in tolls], trie)
    np.testing.assert_array_equal(patricia_values, trie_values)
    # the per-node rule path agrees with the vectorised one
    assert evaluate_by_definition(pullback(phi_alpha()), trie) == trie_values[2]


@pytest.mark.parametrize("seed", range(10))
def test_size_counts_telescope(seed, ternary):
    tree = random_tree(ternary, 40, seed)
    for k in range(1, 8):
        phi_eq, phi_ge, phi_next = evaluate_additive((phi_k(k), phi_geq(k), phi_geq(k + 1)), tree)
        assert phi_eq == phi_ge - phi_next


@pytest.mark.parametrize("seed", range(40))
def test_independence_number_matches_brute_force(seed, binary, skewed, ternary):
    d = (binary, skewed, ternary)[seed % 3]
    tree = random_tree(d, 1 + seed % 10, seed)
    assert independence_number(tree) == brute_force_independence(tree)


def test_independence_on_general_trees():
    path = Trie(Node({0: Node({0: Node(key=0)})}), 2)
    assert brute_force_independence(path) == 2
    assert independence_number(path) == 2
    star = Trie(Node({0: Node(key=0), 1: Node(key=1)}), 2)
    assert independence_number(star) == 2
    assert matching_number(star) == 1


def test_brute_force_limit(skewed):
    big = random_tree(skewed, 20, 1)
    assert big.node_count > 25
    with pytest.raises(LimitExceeded):
        brute_force_independence(big)


@pytest.mark.parametrize("seed", range(5))
def test_monotone_in_keys(seed, binary):
    keys = KeySet.from_source(binary, 60, replicate_rng(seed, 0))
    previous = np.zeros(3)
    for n in range(1, 61, 5):
        values = evaluate_additive((phi_geq(2), phi_geq(4), phi_alpha()), build_patricia(keys.subset(n)))
        assert np.all(values >= previous)
        previous = values


def test_phi_shape(binary):
    shapes = enumerate_patricia_shapes(3, 2)
    tree = random_tree(binary, 30, 4)
    counts = evaluate_additive([phi_shape(s) for s in shapes], tree)
    assert counts.sum() == evaluate_additive(phi_k(3), tree)[0]
    with pytest.raises(UnaryNode):
        phi_shape(Trie(Node({0: Node({0: Node(), 1: Node()})}), 2))


def test_prefix_dependent_tolls_cannot_be_pulled_back():
    with pytest.raises(ShapeDependence):
        pullback(TollFunction("prefix", prefix_toll, shape_only=False))


def test_evaluate_tree_sizes(five_keys):
    pat = build_patricia(five_keys)
    result = evaluate_tree((phi_k(2), phi_alpha()), pat, k_max=3)
    np.testing.assert_array_equal(result.sizes, [5, 2, 1, 1])
    np.testing.assert_array_equal(result.root, [0.0, 1.0])
    assert result.sizes.sum() == pat.node_count


def test_parse_functionals():
    names = [phi.name for phi in parse_functionals("k=2, k=3,internal,alpha,geq=5,leaf")]
    assert names == ["k=2", "k=3", "internal", "alpha", "geq=5", "leaf"]


@pytest.mark.parametrize("text", ["", "k", "k=x", "size", "geq=0"])
def test_parse_functionals_errors(text):
    with pytest.raises((UsageError, ValueError)):
        parse_functionals(text)


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("source", ["binary", "ternary"])
def test_enumerated_shapes_evaluate_like_built_trees(k, source, request):
    d = request.getfixturevalue(source)
    for shape in enumerate_patricia_shapes(k, d.alphabet_size):
        assert evaluate_additive(phi_leaf(), shape)[0] == k
        assert independence_number(shape) == brute_force_independence(shape)
        toll = phi_shape(shape)
        assert toll.param == (k, shape_string(shape))
        assert evaluate_additive(toll, shape)[0] == 1
        if k >= 2:
            expected = shape_probability(shape, d) * mean_overlay(d, phi_k(k), 1.0)
            assert mean_overlay(d, toll, 1.0) == pytest.approx(expected)


def test_shared_node_objects_count_once_per_position():
    leaf = Node()
    cherry = Node({0: leaf, 1: leaf})
    tree = PatriciaTrie(Node({0: cherry, 1: leaf}), 2)
    np.testing.assert_array_equal(evaluate_additive((phi_leaf(), phi_k(2), phi_alpha()), tree), [3, 1, 3])
    assert brute_force_independence(tree) == 3
    twins = PatriciaTrie(Node({0: cherry, 1: cherry}), 2)
    assert independence_number(twins) == brute_force_independence(twins) == 4


@pytest.mark.slow
def test_pullback_identity_at_scale(binary, skewed, ternary):
    sources = (binary, skewed, ternary)
    tolls = [phi_k(2), phi_internal(), phi_alpha(), phi_geq(3)]
    pulled = [pullback(phi) for phi in tolls]
    for i in range(10_000):
        rng = replicate_rng(2024, i)
        keys = KeySet.from_source(sources[i % 3], int(rng.integers(1, 51)), rng)
        trie = build_trie(keys)
        assert compress(trie) == build_patricia(keys)
        np.testing.assert_array_equal(evaluate_additive(tolls, compress(trie)), evaluate_additive(pulled, trie))


@pytest.mark.slow
def test_independence_number_at_scale(binary, skewed, ternary):
    sources = (binary, skewed, ternary)
    for i in range(1000):
        rng = replicate_rng(2025, i)
        tree = build_patricia(KeySet.from_source(sources[i % 3], int(rng.integers(1, 11)), rng))
        assert evaluate_additive(phi_alpha(), tree)[0] == brute_force_independence(tree)
