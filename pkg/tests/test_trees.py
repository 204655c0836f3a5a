import math

import numpy as np
import pytest

from fringetries.exceptions import DepthExceeded, EmptyTree, InvalidPath, LimitExceeded, PrefixViolation, UnaryNode
from fringetries.source import SourceDistribution, replicate_rng, rho
from fringetries.trees import (
    KeySet,
    Node,
    PatriciaTrie,
    Trie,
    build_patricia,
    build_trie,
    compress,
    enumerate_patricia_shapes,
    expand,
    fringe,
    prefix_law,
    shape_probability,
    shape_string,
)


def random_keys(d, n, seed, index=0):
    return KeySet.from_source(d, n, replicate_rng(seed, index))


def test_five_key_trie(five_keys):
    trie = build_trie(five_keys)
    assert isinstance(trie, Trie)
    assert trie.node_count == 11
    assert trie.leaf_count == 5
    assert list(trie.root.children) == [1]
    assert shape_string(trie) == "(.,(((*,*),*),((*,*),.)))"


def test_five_key_patricia(five_keys):
    pat = build_patricia(five_keys)
    assert isinstance(pat, PatriciaTrie)
    assert pat.node_count == 9
    assert pat.internal_count == 4
    assert pat.root.prefix == (1,)
    assert pat.root.children[0].prefix == ()
    assert pat.root.children[1].prefix == (0,)
    assert shape_string(pat) == "(((*,*),*),(*,*))"
    labels = sorted(five_keys.label(node.key) for _, node in pat.leaves())
    assert labels == sorted(["1000", "1001", "1010", "1100", "1101"])


def test_leaf_paths_spell_keys(five_keys):
    pat = build_patricia(five_keys)
    for path, leaf in pat.leaves():
        label = five_keys.label(leaf.key)
        assert label.startswith("1")
        assert label[1] == str(path[0])


def test_compress_and_expand_are_inverse(five_keys):
    trie = build_trie(five_keys)
    pat = build_patricia(five_keys)
    assert compress(trie) == pat
    assert expand(pat) == trie
    assert compress(pat) == pat


@pytest.mark.parametrize("seed", range(20))
def test_patricia_is_compressed_trie(seed, binary, skewed, ternary):
    d = (binary, skewed, ternary)[seed % 3]
    keys = random_keys(d, 1 + seed * 7, seed)
    trie = build_trie(keys)
    pat = build_patricia(keys)
    assert compress(trie) == pat
    assert shape_string(trie, compressed=True) == shape_string(pat)
    assert pat.leaf_count == len(keys)
    assert all(len(node.children) != 1 for _, node in pat.paths())


def test_small_key_sets():
    empty = KeySet.from_strings([])
    assert build_trie(empty).is_empty
    assert build_patricia(empty).is_empty
    single = KeySet.from_strings(["0110"])
    assert build_trie(single).root == Node(key=0)
    assert build_patricia(single).root == Node(key=0)
    pair = build_patricia(KeySet.from_strings(["0"]  + ["1"]))
    assert pair.node_count == 3


@pytest.mark.parametrize("keys", [["10", "101"], ["01", "01"], ["", "1"]])
def test_prefix_violations(keys):
    with pytest.raises(PrefixViolation):
        KeySet.from_strings(keys)


def test_characters_outside_alphabet():
    with pytest.raises(PrefixViolation):
        KeySet.from_strings(["02", "1"], alphabet_size=2)


@pytest.mark.parametrize("builder", [build_trie, build_patricia])
def test_depth_exceeded(builder):
    keys = KeySet.from_strings(["0000000001", "0000000000"])
    builder(keys)
    with pytest.raises(DepthExceeded) as info:
        builder(keys, max_depth=5)
    assert info.value.depth == 5
    assert "max_depth" in str(info.value)


def test_nested_subsets_share_keys(skewed):
    keys = random_keys(skewed, 200, 3)
    small = build_patricia(keys.subset(50))
    again = build_patricia(keys.subset(50))
    assert small == again
    assert {node.key for _, node in small.leaves()} == set(range(50))
    with pytest.raises(ValueError):
        keys.subset(201)


def test_lazy_keys_grow_past_first_block():
    d = SourceDistribution((0.01, 0.99))
    keys = random_keys(d, 300, 1)
    pat = build_patricia(keys)
    assert keys.materialized_width > 32
    assert compress(build_trie(keys)) == pat


def test_fringe(five_keys):
    pat = build_patricia(five_keys)
    left = fringe(pat, "0")
    assert isinstance(left, PatriciaTrie)
    assert left.leaf_count == 3
    assert left.root.prefix == ()
    assert fringe(pat, (1,)).root.prefix == ()
    assert fringe(pat, "") == PatriciaTrie(Node(children=pat.root.children), 2)
    with pytest.raises(InvalidPath):
        fringe(pat, "0000")
    with pytest.raises(InvalidPath):
        fringe(PatriciaTrie(None, 2), "")


@pytest.mark.parametrize("k, m, count", [(1, 2, 1), (2, 2, 1), (3, 2, 2), (4, 2, 5), (5, 2, 14), (2, 3, 3), (3, 3, 19)])
def test_enumerate_patricia_shapes(k, m, count):
    shapes = enumerate_patricia_shapes(k, m)
    assert len(shapes) == count
    assert len({shape_string(s) for s in shapes}) == count
    for shape in shapes:
        assert shape.leaf_count == k
        assert all(len(node.children) != 1 for _, node in shape.paths())


@pytest.mark.parametrize("k", [0, 11])
def test_enumeration_limits(k):
    with pytest.raises(LimitExceeded):
        enumerate_patricia_shapes(k, 2)


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_shape_probabilities_sum_to_one(k, any_source):
    total = math.fsum(shape_probability(s, any_source) for s in enumerate_patricia_shapes(k, any_source.alphabet_size))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_three_key_shapes_are_equally_likely(binary):
    for shape in enumerate_patricia_shapes(3, 2):
        assert shape_probability(shape, binary) == pytest.approx(0.5)


def test_shape_probability_rejects_unary(five_keys, binary):
    with pytest.raises(UnaryNode):
        shape_probability(build_trie(five_keys), binary)
    with pytest.raises(EmptyTree):
        shape_probability(PatriciaTrie(None, 2), binary)


def test_prefix_law(skewed, rng):
    law = prefix_law(3, skewed)
    q = 1 - rho(skewed, 3)
    assert law.stop_probability == pytest.approx(q)
    assert law.mass("") == pytest.approx(q)
    assert law.mass("10") == pytest.approx(0.7 ** 3 * 0.3 ** 3 * q)
    assert math.fsum(law.length_pmf(n) for n in range(200)) == pytest.approx(1.0)
    # mass of all strings of length 2 equals the length law at 2
    assert math.fsum(law.mass(s) for s in ("00", "01", "10", "11")) == pytest.approx(law.length_pmf(2))
    lengths = [len(law.sample(rng)) for _ in range(20_000)]
    assert np.mean(lengths) == pytest.approx((1 - q) / q, rel=0.05)


def test_prefix_law_needs_two_keys(binary):
    with pytest.raises(ValueError):
        prefix_law(1, binary)
