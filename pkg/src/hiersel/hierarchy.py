"""Class hierarchy trees: parsing, validation and queries.

A :class:`Hierarchy` is an immutable rooted tree over uniquely named classes.
Nodes are addressed by dense integer ids assigned in order of first
appearance in the source file; names are the external identity.
"""

from __future__ import annotations

import math
from collections import deque
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    CycleDetected,
    DuplicateEdge,
    EmptyHierarchy,
    FewerThanTwoLeaves,
    LabelNotLeaf,
    MalformedLine,
    MultipleParents,
    MultipleRoots,
)

SUPPORTED_FORMATS = ("edge-list-tsv",)


def _frozen(arr):
    arr = np.asarray(arr)
    arr.setflags(write=False)
    return arr


class Hierarchy:
    """Rooted tree over named classes with cached structural quantities.

    Parameters
    ----------
    names : sequence of str
        Display name per node id.
    parent : sequence of int
        Parent id per node, ``-1`` for the root.

    Cached read-only arrays: ``parent``, ``leaf_count``, ``depth``, ``height``,
    ``coverage`` and ``leaves`` (leaf ids in ascending order, which is also
    the canonical leaf column order used by score tables).
    """

    def __init__(self, names: Sequence[str], parent: Sequence[int]):
        names = tuple(str(n).strip() for n in names)
        parent = np.asarray(parent, dtype=np.int64)
        n = len(names)
        if n == 0:
            raise EmptyHierarchy("hierarchy has no nodes")
        if parent.shape != (n,):
            raise ValueError("parent must have one entry per name")
        if len(set(names)) != n:
            raise ValueError("node names must be unique")

        roots = np.flatnonzero(parent < 0)
        if len(roots) == 0:
            raise CycleDetected("no node is free of parents")
        if len(roots) > 1:
            raise MultipleRoots([names[r] for r in roots])
        if np.any(parent >= n):
            raise ValueError("parent id out of range")
        root = int(roots[0])

        children: list[list[int]] = [[] for _ in range(n)]
        for v in range(n):
            if parent[v] >= 0:
                children[parent[v]].append(v)

        # BFS from the root; anything unreached sits on a cycle
        depth = np.full(n, -1, dtype=np.int64)
        depth[root] = 0
        order = [root]
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for c in children[u]:
                depth[c] = depth[u] + 1
                order.append(c)
                queue.append(c)
        if len(order) != n:
            raise CycleDetected(
                "nodes not reachable from root: "
                + ", ".join(names[v] for v in range(n) if depth[v] < 0)
            )

        leaf_count = np.zeros(n, dtype=np.int64)
        height = np.zeros(n, dtype=np.int64)
        for v in reversed(order):
            if not children[v]:
                leaf_count[v] = 1
            p = parent[v]
            if p >= 0:
                leaf_count[p] += leaf_count[v]
                height[p] = max(height[p], height[v] + 1)

        leaves = np.array([v for v in range(n) if not children[v]], dtype=np.int64)
        if len(leaves) < 2:
            raise FewerThanTwoLeaves(f"hierarchy has {len(leaves)} leaf; need >= 2")

        log_root = math.log(leaf_count[root])
        coverage = 1.0 - np.log(leaf_count.astype(float)) / log_root
        coverage[leaf_count == 1] = 1.0
        coverage[root] = 0.0

        max_depth = int(depth.max())
        # anc_at_depth[v, d] is the ancestor of v at depth d, or -1 below v
        anc = np.full((n, max_depth + 1), -1, dtype=np.int64)
        for v in order:
            p = parent[v]
            if p >= 0:
                anc[v, : depth[v]] = anc[p, : depth[v]]
            anc[v, depth[v]] = v

        self.names = names
        self.root = root
        self.children = tuple(tuple(c) for c in children)
        self.parent = _frozen(parent)
        self.depth = _frozen(depth)
        self.height = _frozen(height)
        self.leaf_count = _frozen(leaf_count)
        self.coverage = _frozen(coverage)
        self.leaves = _frozen(leaves)
        self.max_depth = max_depth
        self.topological_order = _frozen(np.array(order, dtype=np.int64))
        self._anc_at_depth = _frozen(anc)
        self._index = {name: i for i, name in enumerate(names)}
        leaf_pos = np.full(n, -1, dtype=np.int64)
        leaf_pos[leaves] = np.arange(len(leaves))
        self._leaf_pos = _frozen(leaf_pos)

    # -- basic lookups -----------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self.names)

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def leaf_names(self) -> tuple[str, ...]:
        return tuple(self.names[v] for v in self.leaves)

    def index(self, name: str) -> int:
        """Return the node id for ``name`` (surrounding whitespace ignored)."""
        return self._index[name.strip()]

    def __contains__(self, name) -> bool:
        return isinstance(name, str) and name.strip() in self._index

    def is_leaf(self, v: int) -> bool:
        return not self.children[self._check(v)]

    def leaf_position(self, v):
        """Column index of leaf ``v`` in the canonical leaf order (-1 if internal)."""
        return self._leaf_pos[v]

    def _check(self, v) -> int:
        v = int(v)
        if not 0 <= v < self.node_count:
            raise IndexError(f"node id {v} out of range")
        return v

    # -- queries -----------------------------------------------------------

    def ancestors(self, v: int) -> list[int]:
        """Path ``[v, parent(v), ..., root]``."""
        v = self._check(v)
        path = [v]
        while self.parent[v] >= 0:
            v = int(self.parent[v])
            path.append(v)
        return path

    def lca(self, u: int, v: int) -> int:
        """Deepest node that is an (inclusive) ancestor of both ``u`` and ``v``."""
        u, v = self._check(u), self._check(v)
        d = min(self.depth[u], self.depth[v])
        row_u, row_v = self._anc_at_depth[u, : d + 1], self._anc_at_depth[v, : d + 1]
        common = np.flatnonzero(row_u == row_v)
        return int(row_u[common[-1]])

    def lca_many(self, u, v):
        """Element-wise LCA of two broadcastable id arrays."""
        a = self._anc_at_depth[np.asarray(u, dtype=np.int64)]
        b = self._anc_at_depth[np.asarray(v, dtype=np.int64)]
        a, b = np.broadcast_arrays(a, b)
        # shared ancestors form a prefix of both rows
        d = ((a == b) & (a >= 0)).sum(axis=-1) - 1
        return np.take_along_axis(a, d[..., None], axis=-1)[..., 0]

    def node_coverage(self, v: int) -> float:
        """Entropy-based coverage ``1 - log|L(v)| / log|L(root)|``."""
        return float(self.coverage[self._check(v)])

    def is_ancestor(self, u, v):
        """Vectorised test of ``u in ancestors(v)``; broadcasts over arrays."""
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        du = self.depth[u]
        ok = du <= self.depth[v]
        return ok & (self._anc_at_depth[v, np.minimum(du, self.max_depth)] == u)

    def is_correct(self, predicted: int, label: int) -> bool:
        """True iff ``predicted`` is the leaf ``label`` or one of its ancestors."""
        predicted, label = self._check(predicted), self._check(label)
        if self.children[label]:
            raise LabelNotLeaf(f"label {self.names[label]!r} is not a leaf")
        return bool(self.is_ancestor(predicted, label))

    def leaf_descendants(self, v: int) -> list[int]:
        v = self._check(v)
        return [int(y) for y in self.leaves if self.is_ancestor(v, y)]

    # -- conversion --------------------------------------------------------

    def edges(self) -> list[tuple[str, str]]:
        """(parent, child) name pairs in breadth-first order."""
        return [
            (self.names[self.parent[v]], self.names[v])
            for v in self.topological_order
            if self.parent[v] >= 0
        ]

    def to_tsv(self) -> str:
        return "".join(f"{p}\t{c}\n" for p, c in self.edges())

    def __eq__(self, other):
        if not isinstance(other, Hierarchy):
            return NotImplemented
        return self.names == other.names and np.array_equal(self.parent, other.parent)

    def __hash__(self):
        return hash((self.names, self.parent.tobytes()))

    def __repr__(self):
        return f"Hierarchy(nodes={self.node_count}, leaves={self.n_leaves}, root={self.names[self.root]!r})"


def from_edges(edges: Iterable[tuple[str, str]]) -> Hierarchy:
    """Build a hierarchy from ``(parent, child)`` name pairs."""
    names: list[str] = []
    index: dict[str, int] = {}
    parent: dict[int, int] = {}
    seen = set()

    def node(name):
        if name not in index:
            index[name] = len(names)
            names.append(name)
        return index[name]

    for p_name, c_name in edges:
        p_name, c_name = p_name.strip(), c_name.strip()
        if (p_name, c_name) in seen:
            raise DuplicateEdge(f"edge {p_name!r} -> {c_name!r} appears twice")
        seen.add((p_name, c_name))
        if p_name == c_name:
            raise CycleDetected(f"self loop on {p_name!r}")
        p, c = node(p_name), node(c_name)
        if c in parent:
            raise MultipleParents(c_name)
        parent[c] = p

    if not names:
        raise EmptyHierarchy("no edges found")
    return Hierarchy(names, [parent.get(v, -1) for v in range(len(names))])


def parse_hierarchy(text: str, format: str = "edge-list-tsv") -> Hierarchy:
    """Parse a hierarchy document.

    The edge-list format holds one ``parent<TAB>child`` pair per line.  Lines
    starting with ``#`` and blank lines are skipped; names are trimmed; LF and
    CRLF line endings are both accepted.
    """
    if format not in SUPPORTED_FORMATS:
        raise ValueError(f"unsupported hierarchy format {format!r}")
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = raw.rstrip("\r\n").split("\t")
        if len(parts) != 2:
            raise MalformedLine(lineno)
        p, c = parts[0].strip(), parts[1].strip()
        if not p or not c:
            raise MalformedLine(lineno, "empty node name")
        edges.append((p, c))
    return from_edges(edges)


def load_hierarchy(path) -> Hierarchy:
    with open(path, encoding="utf-8") as fh:
        return parse_hierarchy(fh.read())


def flat_hierarchy(leaf_names: Sequence[str], root: str = "root") -> Hierarchy:
    """Root plus leaves, the hierarchy under which every rule is plain selective."""
    return from_edges((root, name) for name in leaf_names)
