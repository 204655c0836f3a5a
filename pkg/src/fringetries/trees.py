"""Tries and patricia tries over a finite alphabet.

Nodes are addressed by the characters on the way down from the root, the same
way strings over the alphabet name the nodes of the infinite m-ary tree. A
patricia node additionally carries its common prefix ``I_v`` as a tuple of
characters; a trie node's prefix is always empty.

Trees are never mutated after a builder returns them, so subtrees are shared
freely (``fringe`` does not copy).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import (
    DepthExceeded,
    EmptyTree,
    FringeTriesError,
    InvalidPath,
    LimitExceeded,
    PrefixViolation,
    UnaryNode,
)
from .source import SourceDistribution, rho

DEFAULT_MAX_DEPTH = 10_000
SHAPE_LIMIT = 10
SORT_BLOCK = 32


class Node:
    """One tree node: children by character, common prefix, stored key index (leaves)."""

    __slots__ = ("children", "prefix", "key")

    def __init__(self, children=None, prefix=(), key=None):
        self.children = {} if children is None else children
        self.prefix = tuple(prefix)
        self.key = key

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def __eq__(self, other):
        if not isinstance(other, Node):
            return NotImplemented
        stack = [(self, other)]
        while stack:
            a, b = stack.pop()
            if a.prefix != b.prefix or a.key != b.key or a.children.keys() != b.children.keys():
                return False
            stack.extend((a.children[c], b.children[c]) for c in a.children)
        return True

    __hash__ = None

    def __repr__(self):
        return f"Node(children={sorted(self.children)}, prefix={self.prefix}, key={self.key})"


def postorder(root):
    """Nodes of the subtree at ``root``, every node after all of its descendants."""
    if root is None:
        return []
    order = []
    stack = [root]
    while stack:
        node = stack.pop()
        order.append(node)
        stack.extend(node.children.values())
    order.reverse()
    return order


@dataclass(frozen=True)
class Tree:
    root: Node | None
    alphabet_size: int

    @property
    def is_empty(self) -> bool:
        return self.root is None

    @property
    def node_count(self) -> int:
        return len(postorder(self.root))

    @property
    def leaf_count(self) -> int:
        return sum(1 for node in postorder(self.root) if node.is_leaf)

    @property
    def internal_count(self) -> int:
        return self.node_count - self.leaf_count

    def paths(self):
        """(path, node) pairs in pre-order, children in alphabet order."""
        if self.root is None:
            return
        stack = [((), self.root)]
        while stack:
            path, node = stack.pop()
            yield path, node
            for a in sorted(node.children, reverse=True):
                stack.append((path + (a,), node.children[a]))

    def leaves(self):
        return [(path, node) for path, node in self.paths() if node.is_leaf]


class Trie(Tree):
    """A trie T(X); unary nodes may occur."""


class PatriciaTrie(Tree):
    """A patricia trie pat(X); no node has exactly one child."""


# ---------------------------------------------------------------------------
# key sets


class _FixedBank:
    """Finite keys stored in a matrix padded with -1."""

    def __init__(self, matrix):
        self.matrix = matrix

    @property
    def width(self):
        return self.matrix.shape[1]

    def ensure(self, width):
        pass

    def column(self, rows, depth):
        if depth >= self.width:
            return np.full(len(rows), -1, dtype=self.matrix.dtype)
        return self.matrix[rows, depth]

    def block(self, rows, width):
        width = min(width, self.width)
        return self.matrix[rows, :width]


class _LazyBank:
    """Prefixes of i.i.d. source strings, extended in column blocks on demand."""

    def __init__(self, source: SourceDistribution, n: int, rng: np.random.Generator, block: int):
        self.source = source
        self.rng = rng
        self.matrix = np.empty((n, 0), dtype=np.int16)
        self.block_width = block

    @property
    def width(self):
        return self.matrix.shape[1]

    def ensure(self, width):
        if width <= self.width:
            return
        new_width = max(width, 2 * self.width, self.block_width)
        extra = self.rng.choice(
            self.source.alphabet_size,
            size=(self.matrix.shape[0], new_width - self.width),
            p=self.source.array,
        ).astype(np.int16)
        self.matrix = np.hstack([self.matrix, extra])

    def column(self, rows, depth):
        self.ensure(depth + 1)
        return self.matrix[rows, depth]

    def block(self, rows, width):
        self.ensure(width)
        return self.matrix[rows, :width]


def _parse_key(key):
    return [int(c) for c in key]


class KeySet:
    """Pairwise distinct, prefix-free keys: finite strings or lazy source strings.

    Use ``KeySet.from_strings`` for explicit keys and ``KeySet.from_source`` for
    random keys. ``subset(n)`` gives the first n keys of the same sample, so key
    sets built from one sample are nested.
    """

    def __init__(self, bank, rows, alphabet_size, labels=None):
        self._bank = bank
        self._rows = rows
        self.alphabet_size = alphabet_size
        self._labels = labels

    @classmethod
    def from_strings(cls, keys, alphabet_size=None) -> "KeySet":
        parsed = [_parse_key(k) for k in keys]
        chars = [c for key in parsed for c in key]
        if alphabet_size is None:
            alphabet_size = max(2, max(chars, default=0) + 1)
        if any(c < 0 or c >= alphabet_size for c in chars):
            raise PrefixViolation(f"characters outside alphabet of size {alphabet_size}")
        ordered = sorted(parsed)
        for first, second in zip(ordered, ordered[1:]):
            if second[: len(first)] == first:
                raise PrefixViolation(f"key {first} is a prefix of (or equal to) {second}")
        if any(len(key) == 0 for key in parsed) and len(parsed) > 1:
            raise PrefixViolation("the empty key is a prefix of every other key")
        width = max((len(key) for key in parsed), default=0)
        matrix = np.full((len(parsed), width), -1, dtype=np.int16)
        for i, key in enumerate(parsed):
            matrix[i, : len(key)] = key
        labels = ["".join(str(c) for c in key) if isinstance(k, str) else tuple(key) for k, key in zip(keys, parsed)]
        return cls(_FixedBank(matrix), np.arange(len(parsed)), alphabet_size, labels)

    @classmethod
    def from_source(cls, source: SourceDistribution, n: int, rng: np.random.Generator, block: int = 32) -> "KeySet":
        if n < 0:
            raise ValueError(f"number of keys must be nonnegative, got {n}")
        bank = _LazyBank(source, n, rng, block)
        return cls(bank, np.arange(n), source.alphabet_size)

    def subset(self, n: int) -> "KeySet":
        if not 0 <= n <= len(self):
            raise ValueError(f"cannot take {n} of {len(self)} keys")
        labels = None if self._labels is None else self._labels[:n]
        return KeySet(self._bank, self._rows[:n], self.alphabet_size, labels)

    def __len__(self):
        return len(self._rows)

    def column(self, idx, depth):
        """Character ``depth`` of keys ``idx`` (indices into this set)."""
        return self._bank.column(self._rows[idx], depth)

    def block(self, width):
        """The first ``width`` characters of every key (padded with -1 for short keys)."""
        return self._bank.block(self._rows, width)

    @property
    def materialized_width(self) -> int:
        return self._bank.width

    def label(self, i):
        if self._labels is None:
            return i
        return self._labels[i]


# ---------------------------------------------------------------------------
# builders


def _split(idx, chars):
    """Group key indices by character, in alphabet order."""
    order = np.argsort(chars, kind="stable")
    sorted_chars = chars[order]
    cuts = np.flatnonzero(np.diff(sorted_chars)) + 1
    starts = np.concatenate(([0], cuts))
    for a, group in zip(sorted_chars[starts], np.split(idx[order], cuts)):
        yield int(a), group


def build_trie(keys: KeySet, max_depth: int = DEFAULT_MAX_DEPTH) -> Trie:
    """Trie of a key set, splitting on successive characters.

    Empty set -> empty tree, one key -> a single leaf, otherwise a root with one
    subtrie per first character. Raises DepthExceeded if two keys agree on
    ``max_depth`` characters.
    """
    if max_depth < 1:
        raise ValueError(f"max_depth must be at least 1, got {max_depth}")
    if len(keys) == 0:
        return Trie(None, keys.alphabet_size)
    root = Node()
    stack = [(root, np.arange(len(keys)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if idx.size == 1:
            node.key = int(idx[0])
            continue
        if depth >= max_depth:
            raise DepthExceeded(max_depth)
        for a, group in _split(idx, keys.column(idx, depth)):
            child = Node()
            node.children[a] = child
            stack.append((child, group, depth + 1))
    return Trie(root, keys.alphabet_size)


def _sorted_keys(keys: KeySet, max_depth: int):
    """Keys sorted lexicographically, with enough columns to tell neighbours apart."""
    width = max(keys.materialized_width, SORT_BLOCK)
    while True:
        width = min(width, max_depth)
        matrix = keys.block(width)
        order = np.lexsort(matrix[:, ::-1].T)
        matrix = matrix[order]
        differs = matrix[:-1] != matrix[1:]
        if differs.any(axis=1).all():
            return order, matrix, differs.argmax(axis=1)
        if width >= max_depth:
            raise DepthExceeded(max_depth)
        width *= 2


def build_patricia(keys: KeySet, max_depth: int = DEFAULT_MAX_DEPTH) -> PatriciaTrie:
    """Patricia trie of a key set.

    Every internal node stores the longest common prefix of its keys (after the
    character that led to it) and splits on the first character not all of them
    share. Keys are sorted once; the node covering a run of sorted keys splits
    where the neighbouring common-prefix length is minimal.
    """
    if max_depth < 1:
        raise ValueError(f"max_depth must be at least 1, got {max_depth}")
    n = len(keys)
    if n == 0:
        return PatriciaTrie(None, keys.alphabet_size)
    if n == 1:
        return PatriciaTrie(Node(key=0), keys.alphabet_size)

    # Sort the keys and find where neighbours first differ
    order, matrix, lcp = _sorted_keys(keys, max_depth)
    root = Node()
    # (node, lo, hi, start): sorted keys lo..hi-1, prefix begins at column start
    stack = [(root, 0, n, 0)]
    while stack:
        node, lo, hi, start = stack.pop()
        if hi - lo == 1:
            node.key = int(order[lo])
            continue
        # Split the run where the common prefix is shortest
        inner = lcp[lo : hi - 1]
        depth = int(inner.min())
        node.prefix = tuple(int(c) for c in matrix[lo, start:depth])
        cuts = [lo] + [lo + 1 + int(i) for i in np.flatnonzero(inner == depth)] + [hi]
        for a, b in zip(cuts, cuts[1:]):
            child = Node()
            node.children[int(matrix[a, depth])] = child
            stack.append((child, a, b, depth + 1))
    return PatriciaTrie(root, keys.alphabet_size)


def compress(t: Tree) -> PatriciaTrie:
    """Merge every node with exactly one child into that child.

    The merged characters are appended to the surviving node's prefix; the
    surviving node is the lowest node of each unary chain.
    """
    if t.root is None:
        return PatriciaTrie(None, t.alphabet_size)

    def collapse(node):
        prefix = list(node.prefix)
        while len(node.children) == 1:
            (a, child), = node.children.items()
            prefix.append(a)
            prefix.extend(child.prefix)
            node = child
        return node, tuple(prefix)

    source, prefix = collapse(t.root)
    root = Node(prefix=prefix, key=source.key)
    stack = [(source, root)]
    while stack:
        src, dst = stack.pop()
        for a, child in src.children.items():
            end, prefix = collapse(child)
            new = Node(prefix=prefix, key=end.key)
            dst.children[a] = new
            stack.append((end, new))
    return PatriciaTrie(root, t.alphabet_size)


def expand(p: PatriciaTrie) -> Trie:
    """Inverse of ``compress``: one unary trie node per prefix character."""
    if p.root is None:
        return Trie(None, p.alphabet_size)

    def chain(node):
        top = bottom = Node()
        for a in node.prefix:
            nxt = Node()
            bottom.children[a] = nxt
            bottom = nxt
        bottom.key = node.key
        return top, bottom

    top, bottom = chain(p.root)
    stack = [(p.root, bottom)]
    while stack:
        src, dst = stack.pop()
        for a, child in src.children.items():
            child_top, child_bottom = chain(child)
            dst.children[a] = child_top
            stack.append((child, child_bottom))
    return Trie(top, p.alphabet_size)


def _parse_path(path):
    return tuple(int(c) for c in path)


def fringe(t: Tree, v=()) -> Tree:
    """Fringe tree T^v, re-rooted; the new root's prefix is cleared."""
    node = t.root
    path = _parse_path(v)
    if node is None:
        raise InvalidPath(f"path {path} in an empty tree")
    for depth, a in enumerate(path):
        if a not in node.children:
            raise InvalidPath(f"no child {a} below {path[:depth]}")
        node = node.children[a]
    return type(t)(Node(children=node.children, key=node.key), t.alphabet_size)


# ---------------------------------------------------------------------------
# shapes


def shape_string(tree, alphabet_size=None, compressed=False) -> str:
    """Canonical parenthesised shape: leaf ``*``, absent child ``.``, internal ``(c0,...,cm-1)``.

    Prefixes and keys are ignored. With ``compressed=True`` unary chains are
    skipped, which gives the shape of ``compress`` of the tree.
    """
    if isinstance(tree, Tree):
        root, m = tree.root, tree.alphabet_size
    else:
        root, m = tree, alphabet_size
    if root is None:
        return ""
    strings = {}
    for node in postorder(root):
        if not node.children:
            strings[id(node)] = "*"
        elif compressed and len(node.children) == 1:
            strings[id(node)] = strings[id(next(iter(node.children.values())))]
        else:
            parts = [strings[id(node.children[a])] if a in node.children else "." for a in range(m)]
            strings[id(node)] = "(" + ",".join(parts) + ")"
    return strings[id(root)]


def _compositions(k, m):
    """Ways to write k as m ordered nonnegative parts."""
    if m == 1:
        yield (k,)
        return
    for first in range(k + 1):
        for rest in _compositions(k - first, m - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _shapes(k, m):
    if k == 1:
        return (Node(),)
    shapes = []
    for sizes in _compositions(k, m):
        if sum(1 for s in sizes if s > 0) < 2:
            continue
        options = [_shapes(s, m) if s > 0 else (None,) for s in sizes]
        for combo in itertools.product(*options):
            shapes.append(Node(children={a: c for a, c in enumerate(combo) if c is not None}))
    return tuple(shapes)


def _copy(root: Node) -> Node:
    top = Node(prefix=root.prefix, key=root.key)
    stack = [(root, top)]
    while stack:
        src, dst = stack.pop()
        for a, child in src.children.items():
            dst.children[a] = Node(prefix=child.prefix, key=child.key)
            stack.append((child, dst.children[a]))
    return top


def enumerate_patricia_shapes(k: int, m: int) -> list:
    """Every m-ary tree with k leaves and no unary node, each exactly once.

    The cached enumeration shares identical subtrees between shapes; every
    returned shape is a fresh copy with one Node object per position.
    """
    if not 1 <= k <= SHAPE_LIMIT:
        raise LimitExceeded(f"shape enumeration needs 1 <= k <= {SHAPE_LIMIT}, got {k}")
    if m < 2:
        raise LimitExceeded(f"alphabet size must be at least 2, got {m}")
    return [PatriciaTrie(_copy(root), m) for root in _shapes(k, m)]


def shape_probability(shape: Tree, d: SourceDistribution) -> float:
    """P(P_k = shape) = k! prod_leaves p_v prod_internal 1/(1 - rho(|T^w|_e)).

    Computed in log space; prefixes stored in ``shape`` are ignored.
    """
    if shape.root is None:
        raise EmptyTree("shape probability of the empty tree")
    if shape.alphabet_size != d.alphabet_size:
        raise FringeTriesError(f"shape is {shape.alphabet_size}-ary but the source has {d.alphabet_size} characters")
    log_p = d.log_probs
    leaves = {}
    log_prob = 0.0
    for node in postorder(shape.root):
        if len(node.children) == 1:
            raise UnaryNode("patricia shapes have no node with exactly one child")
        if node.is_leaf:
            leaves[id(node)] = 1
        else:
            count = sum(leaves[id(c)] for c in node.children.values())
            leaves[id(node)] = count
            log_prob -= math.log1p(-rho(d, count))
    k = leaves[id(shape.root)]
    stack = [(shape.root, 0.0)]
    while stack:
        node, path_log = stack.pop()
        if node.is_leaf:
            log_prob += path_log
        for a, child in node.children.items():
            stack.append((child, path_log + log_p[a]))
    return math.exp(math.lgamma(k + 1) + log_prob)


@dataclass(frozen=True)
class PrefixLaw:
    """Law q_i of the common prefix of a node with i keys: q_i({a}) = p_a^i (1 - rho(i))."""

    source: SourceDistribution
    i: int

    def __post_init__(self):
        if self.i < 2:
            raise FringeTriesError(f"prefix law needs i >= 2, got {self.i}")

    @property
    def stop_probability(self) -> float:
        return 1.0 - rho(self.source, self.i)

    def mass(self, alpha) -> float:
        chars = _parse_path(alpha)
        return math.prod(self.source.probs[a] ** self.i for a in chars) * self.stop_probability

    def length_pmf(self, n: int) -> float:
        """P(|I| = n), the Geom_0(1 - rho(i)) law."""
        q = self.stop_probability
        return q * (1.0 - q) ** n

    def sample(self, rng: np.random.Generator) -> tuple:
        length = int(rng.geometric(self.stop_probability)) - 1
        weights = self.source.array ** self.i
        chars = rng.choice(self.source.alphabet_size, size=length, p=weights / weights.sum())
        return tuple(int(c) for c in chars)


def prefix_law(i: int, d: SourceDistribution) -> PrefixLaw:
    return PrefixLaw(d, i)
