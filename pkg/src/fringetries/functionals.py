"""Additive functionals Phi(T) = sum over nodes v of phi(T^v).

A toll function sees a fringe tree through a ``FringeView``: the number of
keys (leaves) below the node, its number of children, its essentiality bit and,
on request, its shape. All of these come from one post-order walk of the tree,
so any number of tolls is evaluated in a single pass. The built-in tolls are
summed with numpy over the walk's arrays; custom tolls fall back to calling
their rule once per node.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, partial
from typing import Callable, NamedTuple

import numpy as np

from .exceptions import EmptyTree, LimitExceeded, ShapeDependence, UnaryNode, UsageError
from .trees import Node, Tree, fringe, postorder, shape_string

BRUTE_FORCE_LIMIT = 25


class _Walk:
    """Per-node aggregates of one tree, indexed in post-order."""

    def __init__(self, root: Node, alphabet_size: int):
        self.alphabet_size = alphabet_size
        self.nodes = postorder(root)
        n = len(self.nodes)
        # a node object reused at several positions maps to its first, already computed slot
        position = {}
        for i, node in enumerate(self.nodes):
            position.setdefault(id(node), i)
        self.leaves = np.zeros(n, dtype=np.int64)
        self.child = np.zeros(n, dtype=np.int64)
        self.ess = np.zeros(n, dtype=np.int8)
        self.cess = np.zeros(n, dtype=np.int8)
        self.bottom = np.arange(n)
        for i, node in enumerate(self.nodes):
            kids = [position[id(c)] for c in node.children.values()]
            if not kids:
                self.leaves[i] = 1
                self.ess[i] = self.cess[i] = 1
                continue
            self.child[i] = len(kids)
            self.leaves[i] = self.leaves[kids].sum()
            self.ess[i] = not self.ess[kids].any()
            if len(kids) == 1:
                self.bottom[i] = self.bottom[kids[0]]
                self.cess[i] = self.cess[kids[0]]
            else:
                self.cess[i] = not self.cess[kids].any()

    @property
    def root_index(self) -> int:
        return len(self.nodes) - 1

    @cached_property
    def cchild(self) -> np.ndarray:
        return self.child[self.bottom]


class FringeView:
    """Read-only access to the fringe tree at one node of a walk."""

    __slots__ = ("_walk", "_i", "_compressed")

    def __init__(self, walk: _Walk, i: int, compressed: bool = False):
        self._walk = walk
        self._i = i
        self._compressed = compressed

    @property
    def node(self) -> Node:
        return self._walk.nodes[self._i]

    @property
    def leaves(self) -> int:
        return int(self._walk.leaves[self._i])

    @property
    def child_count(self) -> int:
        i = self._walk.bottom[self._i] if self._compressed else self._i
        return int(self._walk.child[i])

    @property
    def essential(self) -> bool:
        bits = self._walk.cess if self._compressed else self._walk.ess
        return bool(bits[self._i])

    @property
    def shape(self) -> str:
        return shape_string(self.node, self._walk.alphabet_size, compressed=self._compressed)

    def compressed(self) -> "FringeView":
        return FringeView(self._walk, self._i, True)


@dataclass(frozen=True)
class TollFunction:
    """A toll phi with phi(empty) = 0.

    ``rule`` maps a FringeView to a float and must be picklable (a module-level
    function or a ``functools.partial`` of one) so tolls can travel to worker
    processes. ``shape_only`` tolls ignore common prefixes and may be pulled
    back from patricia tries to tries.
    """

    name: str
    rule: Callable[[FringeView], float]
    shape_only: bool = True
    kind: str = "custom"
    param: object = None

    @cached_property
    def chi(self) -> float:
        """phi evaluated on a single leaf."""
        return float(self.rule(FringeView(_Walk(Node(), 2), 0)))

    def __str__(self):
        return self.name


def _equal_rule(k, view):
    return float(view.leaves == k)


def _at_least_rule(k, view):
    return float(view.leaves >= k)


def _internal_rule(view):
    return float(view.child_count > 0)


def _leaf_rule(view):
    return float(view.child_count == 0)


def _essential_rule(view):
    return float(view.essential)


def _not_unary_rule(view):
    return float(view.child_count != 1)


def _shape_rule(target, view):
    k, shape = target
    return float(view.leaves == k and view.shape == shape)


def _pullback_rule(base, view):
    if view.child_count == 1:
        return 0.0
    return base.rule(view.compressed())


def phi_k(k: int) -> TollFunction:
    """1{|T|_e = k}: counts fringe trees with exactly k keys."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    return TollFunction(f"k={k}", partial(_equal_rule, k), kind="k", param=k)


def phi_geq(k: int) -> TollFunction:
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    return TollFunction(f"geq={k}", partial(_at_least_rule, k), kind="geq", param=k)


def phi_internal() -> TollFunction:
    return TollFunction("internal", _internal_rule, kind="internal")


def phi_leaf() -> TollFunction:
    return TollFunction("leaf", _leaf_rule, kind="leaf")


def phi_alpha() -> TollFunction:
    """Essentiality indicator max{0, 1 - sum_b phi_alpha(T^b)}; Phi_alpha is the independence number."""
    return TollFunction("alpha", _essential_rule, kind="alpha")


def phi_p() -> TollFunction:
    """1{root has not exactly one child}."""
    return TollFunction("p", _not_unary_rule, kind="p")


def phi_shape(shape: Tree) -> TollFunction:
    """Counts fringe trees whose shape equals the patricia shape ``shape``."""
    walk = _Walk(shape.root, shape.alphabet_size)
    if (walk.child == 1).any():
        raise UnaryNode("phi_shape needs a patricia shape (no unary nodes)")
    k = int(walk.leaves[walk.root_index])
    text = shape_string(shape)
    return TollFunction(f"shape={text}", partial(_shape_rule, (k, text)), kind="shape", param=(k, text))


def pullback(phi: TollFunction) -> TollFunction:
    """Toll on tries whose additive functional equals Phi on the compressed tree.

    Zero at nodes with exactly one child, phi(compress(T)) elsewhere.
    """
    if not phi.shape_only:
        raise ShapeDependence(f"toll {phi.name!r} depends on common prefixes and cannot be pulled back")
    return TollFunction(f"pullback({phi.name})", partial(_pullback_rule, phi), kind="pullback", param=phi)


def _indicator_values(kind, param, leaves, child, ess):
    if kind == "k":
        return leaves == param
    if kind == "geq":
        return leaves >= param
    if kind == "internal":
        return child > 0
    if kind == "leaf":
        return child == 0
    if kind == "alpha":
        return ess.astype(bool)
    if kind == "p":
        return child != 1
    return None


def _total(phi: TollFunction, walk: _Walk) -> float:
    if phi.kind == "pullback" and phi.param.kind != "pullback":
        base = phi.param
        values = _indicator_values(base.kind, base.param, walk.leaves, walk.cchild, walk.cess)
        if values is not None:
            return float(np.count_nonzero(values & (walk.child != 1)))
    else:
        values = _indicator_values(phi.kind, phi.param, walk.leaves, walk.child, walk.ess)
        if values is not None:
            return float(np.count_nonzero(values))
    return float(sum(phi.rule(FringeView(walk, i)) for i in range(len(walk.nodes))))


def _as_tuple(tolls):
    if isinstance(tolls, TollFunction):
        return (tolls,)
    return tuple(tolls)


def evaluate_additive(tolls, tree: Tree) -> np.ndarray:
    """Phi(T) for one toll or a sequence of tolls, as a float vector (zeros for the empty tree)."""
    tolls = _as_tuple(tolls)
    if tree.root is None:
        return np.zeros(len(tolls))
    walk = _Walk(tree.root, tree.alphabet_size)
    return np.array([_total(phi, walk) for phi in tolls])


class TreeEvaluation(NamedTuple):
    totals: np.ndarray
    root: np.ndarray
    sizes: np.ndarray


def evaluate_tree(tolls, tree: Tree, k_max: int = 64) -> TreeEvaluation:
    """Phi(T), phi(T) and the fringe-size counts of T from one walk.

    ``sizes[k - 1]`` counts nodes whose fringe tree holds k keys for k <= k_max;
    the last entry counts the larger ones.
    """
    tolls = _as_tuple(tolls)
    if tree.root is None:
        return TreeEvaluation(np.zeros(len(tolls)), np.zeros(len(tolls)), np.zeros(k_max + 1, dtype=np.int64))
    walk = _Walk(tree.root, tree.alphabet_size)
    root = FringeView(walk, walk.root_index)
    totals = np.array([_total(phi, walk) for phi in tolls])
    values = np.array([float(phi.rule(root)) for phi in tolls])
    sizes = np.bincount(np.minimum(walk.leaves, k_max + 1), minlength=k_max + 2)[1:]
    return TreeEvaluation(totals, values, sizes)


def toll_value(phi: TollFunction, tree: Tree) -> float:
    """phi(T), the toll of the whole tree."""
    if tree.root is None:
        return 0.0
    walk = _Walk(tree.root, tree.alphabet_size)
    return float(phi.rule(FringeView(walk, walk.root_index)))


def evaluate_by_definition(phi: TollFunction, tree: Tree) -> float:
    """Sum of phi over every re-rooted fringe tree, one fresh walk per node."""
    return sum(toll_value(phi, fringe(tree, path)) for path, _ in tree.paths())


def independence_number(tree: Tree) -> int:
    return int(evaluate_additive(phi_alpha(), tree)[0])


def matching_number(tree: Tree) -> int:
    """Node count minus independence number."""
    if tree.root is None:
        raise EmptyTree("matching number of the empty tree")
    return tree.node_count - independence_number(tree)


def brute_force_independence(tree: Tree) -> int:
    """Maximum independent set size by include/exclude dynamic programming."""
    nodes = postorder(tree.root)
    if len(nodes) > BRUTE_FORCE_LIMIT:
        raise LimitExceeded(f"brute force is limited to {BRUTE_FORCE_LIMIT} nodes, got {len(nodes)}")
    best = {}
    for node in nodes:
        take = 1 + sum(best[id(c)][1] for c in node.children.values())
        skip = sum(max(best[id(c)]) for c in node.children.values())
        best[id(node)] = (take, skip)
    if not nodes:
        return 0
    return max(best[id(tree.root)])


_NAMED = {
    "internal": phi_internal,
    "leaf": phi_leaf,
    "alpha": phi_alpha,
    "p": phi_p,
}
_PARAMETRIZED = {"k": phi_k, "geq": phi_geq}


def parse_functionals(text: str) -> tuple:
    """Parse ``k=2,k=3,internal,alpha,geq=5,leaf`` into toll functions."""
    tolls = []
    for item in (part.strip() for part in text.split(",")):
        if not item:
            continue
        if item in _NAMED:
            tolls.append(_NAMED[item]())
            continue
        name, _, value = item.partition("=")
        if name not in _PARAMETRIZED or not value:
            raise UsageError(f"unknown functional {item!r}")
        try:
            tolls.append(_PARAMETRIZED[name](int(value)))
        except ValueError:
            raise UsageError(f"bad parameter in functional {item!r}") from None
    if not tolls:
        raise UsageError("no functionals given")
    return tuple(tolls)
