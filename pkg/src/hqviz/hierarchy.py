"""Quantitative hierarchy model: ingestion, validation and structural queries.

A Hierarchy is an immutable tree of named nodes. Every node carries a
non-negative ``self_value`` in dataset units; ``total_value`` is the
aggregated subtree weight (self plus all descendant selves). Node ids are
dense integers assigned in depth-first pre-order over the input document,
so a node's id is always smaller than the ids of its descendants and
sibling ids increase in document order.
"""

from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import dataclass
from enum import Enum

import numpy as np

NodeId = int

#: Relative tolerance for the total = self + sum(child totals) invariant.
AGGREGATION_RTOL = 1e-9


class HierarchyError(ValueError):
    """Invalid hierarchy construction or query input."""


class ParseError(HierarchyError):
    """Malformed input document. Carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidNodeError(HierarchyError):
    """A NodeId that does not belong to the hierarchy."""


class Format(Enum):
    FOLDED_STACKS = "folded"
    NESTED_JSON = "json"
    PATH_CSV = "csv"


class Relationship(Enum):
    """Most precise relation of an ordered node pair (a, b).

    PARENT means a is b's parent; ANCESTOR means a is a strict, non-parent
    ancestor of b. CHILD and DESCENDANT are the mirrored kinds.
    """

    IDENTICAL = "identical"
    PARENT = "parent"
    CHILD = "child"
    SIBLING = "sibling"
    ANCESTOR = "ancestor"
    DESCENDANT = "descendant"
    UNRELATED = "unrelated"


@dataclass(frozen=True)
class NodeRecord:
    name: str
    self_value: float
    total_value: float
    depth: int
    parent: NodeId | None
    children: tuple[NodeId, ...]


@dataclass(frozen=True)
class TreeStats:
    node_count: int
    leaf_count: int
    depth_levels: int


class Hierarchy:
    """Immutable quantitative hierarchy with pre-order node ids.

    Construction is single-threaded; afterwards the object is safe to share
    across any number of readers. Columnar numpy views of the per-node
    fields are exposed for the layout and styling passes.
    """

    def __init__(self, records: tuple[NodeRecord, ...]):
        if not records:
            raise HierarchyError("a hierarchy needs at least one node")
        self.records = records
        self.root: NodeId = 0
        n = len(records)

        self.self_values = np.array([r.self_value for r in records], dtype=np.float64)
        self.total_values = np.array([r.total_value for r in records], dtype=np.float64)
        self.depths = np.array([r.depth for r in records], dtype=np.int64)
        self.parents = np.array(
            [-1 if r.parent is None else r.parent for r in records], dtype=np.int64
        )
        self.depth_max = int(self.depths.max())

        # Children of one parent occupy a contiguous run of child_order;
        # stable sort keeps document (sibling) order inside each run.
        self.child_order = np.argsort(self.parents, kind="stable")[1:]  # drop root
        counts = np.bincount(self.parents[1:], minlength=n) if n > 1 else np.zeros(n, np.int64)
        self.family_offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=self.family_offsets[1:])

        # Descendant-leaf counts (a leaf counts itself once).
        is_leaf = counts == 0
        leaf_counts = is_leaf.astype(np.int64).copy()
        for i in range(n - 1, 0, -1):
            leaf_counts[self.parents[i]] += leaf_counts[i]
        self.leaf_counts = leaf_counts
        self.is_leaf = is_leaf

        self.self_values.flags.writeable = False
        self.total_values.flags.writeable = False
        self.depths.flags.writeable = False
        self.parents.flags.writeable = False
        self.leaf_counts.flags.writeable = False

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other) -> bool:
        return isinstance(other, Hierarchy) and self.records == other.records

    def node(self, n: NodeId) -> NodeRecord:
        self.check(n)
        return self.records[n]

    def check(self, n: NodeId) -> None:
        if not isinstance(n, (int, np.integer)) or not 0 <= n < len(self.records):
            raise InvalidNodeError(f"invalid node id {n!r}")

    def family_prefix(self, weights: np.ndarray) -> np.ndarray:
        """Exclusive prefix sum of ``weights`` over earlier siblings.

        Returns a node-indexed array: out[c] = sum of weights of c's earlier
        siblings in document order (0 for first children and the root).
        """
        out = np.zeros(len(self.records), dtype=np.float64)
        if len(self.records) == 1:
            return out
        w = weights[self.child_order]
        incl = np.cumsum(w)
        excl = incl - w
        starts = self.family_offsets[:-1]
        sizes = np.diff(self.family_offsets)
        base = np.repeat(excl[starts[sizes > 0]], sizes[sizes > 0])
        out[self.child_order] = excl - base
        return out


# ---------------------------------------------------------------------------
# Construction


class _Builder:
    __slots__ = ("name", "value", "children", "index")

    def __init__(self, name: str):
        self.name = name
        self.value = 0.0
        self.children: list[_Builder] = []
        self.index: dict[str, _Builder] = {}

    def child(self, name: str) -> _Builder:
        node = self.index.get(name)
        if node is None:
            node = _Builder(name)
            self.index[name] = node
            self.children.append(node)
        return node


def _assemble(top: list[_Builder]) -> Hierarchy:
    if len(top) == 1:
        root = top[0]
    else:
        # All layouts want a single root; wrap multi-root documents.
        root = _Builder("")
        root.children = top

    names: list[str] = []
    selfs: list[float] = []
    depths: list[int] = []
    parents: list[int | None] = []
    child_ids: list[list[int]] = []

    stack: list[tuple[_Builder, int | None, int]] = [(root, None, 0)]
    while stack:
        node, parent, depth = stack.pop()
        i = len(names)
        names.append(node.name)
        selfs.append(node.value)
        depths.append(depth)
        parents.append(parent)
        child_ids.append([])
        if parent is not None:
            child_ids[parent].append(i)
        for c in reversed(node.children):
            stack.append((c, i, depth + 1))

    totals = list(selfs)
    for i in range(len(names) - 1, 0, -1):
        totals[parents[i]] += totals[i]  # type: ignore[index]

    records = tuple(
        NodeRecord(names[i], selfs[i], totals[i], depths[i], parents[i], tuple(child_ids[i]))
        for i in range(len(names))
    )
    return Hierarchy(records)


def _parse_value(text: str, line: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"bad value {text!r}", line) from None
    if not np.isfinite(v):
        raise ParseError(f"non-finite value {text!r}", line)
    if v < 0:
        raise ParseError(f"negative value {text!r}", line)
    return v


def _ingest_folded(text: str) -> Hierarchy:
    top: list[_Builder] = []
    index: dict[str, _Builder] = {}
    seen = False
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        seen = True
        head, sep, tail = line.rpartition(" ")
        if not sep or not head:
            raise ParseError("expected 'path value'", lineno)
        value = _parse_value(tail, lineno)
        parts = head.rstrip().split(";")
        name = parts[0]
        node = index.get(name)
        if node is None:
            node = _Builder(name)
            index[name] = node
            top.append(node)
        for part in parts[1:]:
            node = node.child(part)
        node.value += value
    if not seen:
        raise ParseError("empty document")
    return _assemble(top)


def _ingest_json(text: str) -> Hierarchy:
    if not text.strip():
        raise ParseError("empty document")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", e.lineno) from None

    def build(obj, where: str) -> _Builder:
        if not isinstance(obj, dict):
            raise ParseError(f"{where}: expected an object, got {type(obj).__name__}")
        unknown = set(obj) - {"name", "value", "children"}
        if unknown:
            raise ParseError(f"{where}: unknown keys {sorted(unknown)}")
        name = obj.get("name")
        if not isinstance(name, str):
            raise ParseError(f"{where}: 'name' must be a string")
        node = _Builder(name)
        value = obj.get("value", 0)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(f"{where}: 'value' must be a number")
        if value < 0:
            raise ParseError(f"{where}: negative value {value!r}")
        node.value = float(value)
        children = obj.get("children", [])
        if not isinstance(children, list):
            raise ParseError(f"{where}: 'children' must be an array")
        for k, c in enumerate(children):
            node.children.append(build(c, f"{where}.children[{k}]"))
        return node

    if isinstance(doc, list):
        top = [build(c, f"$[{k}]") for k, c in enumerate(doc)]
        if not top:
            raise ParseError("empty document")
    else:
        top = [build(doc, "$")]
    return _assemble(top)


def _ingest_csv(text: str) -> Hierarchy:
    if not text.strip():
        raise ParseError("empty document")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty document") from None
    if [h.strip() for h in header] != ["path", "value"]:
        raise ParseError("expected header 'path,value'", 1)

    top: list[_Builder] = []
    index: dict[str, _Builder] = {}
    explicit: set[int] = set()
    seen = False
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", lineno)
        seen = True
        value = _parse_value(row[1].strip(), lineno)
        parts = row[0].split("/")
        name = parts[0]
        node = index.get(name)
        if node is None:
            node = _Builder(name)
            index[name] = node
            top.append(node)
        for part in parts[1:]:
            node = node.child(part)
        if id(node) in explicit:
            raise ParseError(f"duplicate path {row[0]!r} (ambiguous)", lineno)
        explicit.add(id(node))
        node.value += value
    if not seen:
        raise ParseError("empty document")
    return _assemble(top)


def ingest(text: str, format: Format = Format.FOLDED_STACKS) -> Hierarchy:
    """Parse a document into a Hierarchy with totals aggregated.

    Multiple top-level entries are wrapped under a synthetic root named ""
    with self_value 0. Deterministic: identical documents yield identical
    node orderings and values.
    """
    if format is Format.FOLDED_STACKS:
        return _ingest_folded(text)
    if format is Format.NESTED_JSON:
        return _ingest_json(text)
    if format is Format.PATH_CSV:
        return _ingest_csv(text)
    raise ValueError(f"unknown format {format!r}")


def export_json(h: Hierarchy, indent: int | None = None) -> str:
    """Serialize to the nested-JSON input shape; ingest() round-trips it."""

    def emit(n: NodeId) -> dict:
        rec = h.records[n]
        obj: dict = {"name": rec.name}
        if rec.self_value != 0:
            obj["value"] = rec.self_value
        if rec.children:
            obj["children"] = [emit(c) for c in rec.children]
        return obj

    return json.dumps(emit(h.root), indent=indent, ensure_ascii=False)


# ---------------------------------------------------------------------------
# Queries


def stats(h: Hierarchy) -> TreeStats:
    return TreeStats(
        node_count=len(h.records),
        leaf_count=int(h.is_leaf.sum()),
        depth_levels=h.depth_max + 1,
    )


def path_to_root(h: Hierarchy, n: NodeId) -> list[NodeId]:
    """Ancestor chain [root, ..., n]; length is depth(n) + 1."""
    h.check(n)
    path = []
    cur: NodeId | None = n
    while cur is not None:
        path.append(cur)
        cur = h.records[cur].parent
    path.reverse()
    return path

def lca(h: Hierarchy, a: NodeId, b: NodeId) -> NodeId:
    """Deepest node that is an ancestor-or-self of both a and b."""
    h.check(a)
    h.check(b)
    da, db = h.records[a].depth, h.records[b].depth
    while da > db:
        a = h.records[a].parent  # type: ignore[assignment]
        da -= 1
    while db > da:
        b = h.records[b].parent  # type: ignore[assignment]
        db -= 1
    while a != b:
        a = h.records[a].parent  # type: ignore[assignment]
        b = h.records[b].parent  # type: ignore[assignment]
    return a


def relationship(h: Hierarchy, a: NodeId, b: NodeId) -> Relationship:
    """Most precise relation of (a, b).

    Precision order: identical > parent/child > sibling > ancestor/
    descendant > unrelated.
    """
    h.check(a)
    h.check(b)
    if a == b:
        return Relationship.IDENTICAL
    ra, rb = h.records[a], h.records[b]
    if rb.parent == a:
        return Relationship.PARENT
    if ra.parent == b:
        return Relationship.CHILD
    if ra.parent is not None and ra.parent == rb.parent:
        return Relationship.SIBLING
    anc = lca(h, a, b)
    if anc == a:
        return Relationship.ANCESTOR
    if anc == b:
        return Relationship.DESCENDANT
    return Relationship.UNRELATED


def node_info(h: Hierarchy, n: NodeId) -> dict:
    """Tooltip payload: full name, value and share of the root total."""
    rec = h.node(n)
    root_total = h.records[h.root].total_value
    return {
        "name": rec.name,
        "value": rec.total_value,
        "self_value": rec.self_value,
        "percent_of_root": 100.0 * rec.total_value / root_total if root_total > 0 else 0.0,
        "depth": rec.depth,
    }


def resolve_path(h: Hierarchy, path: str, sep: str = "/") -> NodeId:
    """Resolve a name path like "a/b/c" from the root. The root's own name
    may be included or omitted; for a synthetic root the path starts at the
    first real level."""
    parts = [p for p in path.split(sep) if p != ""] if path else []
    cur = h.root
    if parts and h.records[cur].name == parts[0]:
        parts = parts[1:]
    for part in parts:
        for c in h.records[cur].children:
            if h.records[c].name == part:
                cur = c
                break
        else:
            raise InvalidNodeError(f"no child named {part!r} under {h.records[cur].name!r}")
    return cur


# ---------------------------------------------------------------------------
# Synthetic trees

_SYLLABLES = (
    "al be co da el fo ga hi ju ka lo mi nu or pa qui ro su ta ul va wo xe yo zu".split()
)

#: Probability that a new node attaches under an internal (vs leaf) parent.
#: Real file trees are leaf-heavy; this keeps roughly 5 of 6 nodes leaves.
_INTERNAL_ATTACH_P = 0.83


def _name_for(i: int, rng: random.Random) -> str:
    k = rng.randrange(2, 5)
    return "".join(rng.choice(_SYLLABLES) for _ in range(k)) + str(i % 97)


def _materialize(
    parents: list[int], seed: int, child_lists: list[list[int]]
) -> Hierarchy:
    # Final pre-order ids, then names/values drawn in id order so the
    # result is a pure function of (structure, seed).
    order: list[int] = []
    old_parent_new: list[int | None] = [None] * len(parents)
    new_id: dict[int, int] = {}
    stack = [0]
    while stack:
        old = stack.pop()
        new_id[old] = len(order)
        order.append(old)
        for c in reversed(child_lists[old]):
            stack.append(c)

    rng_names = random.Random(seed ^ 0x9E3779B9)
    rng_values = random.Random(seed)
    names = [_name_for(i, rng_names) for i in range(len(order))]
    selfs = [0.0] * len(order)
    depths = [0] * len(order)
    new_parents: list[int | None] = [None] * len(order)
    new_children: list[list[int]] = [[] for _ in order]
    for new, old in enumerate(order):
        p = parents[old]
        if p >= 0:
            np_ = new_id[p]
            new_parents[new] = np_
            new_children[np_].append(new)
            depths[new] = depths[np_] + 1
    for new in range(len(order)):
        if not new_children[new]:
            selfs[new] = rng_values.uniform(1.0, 1000.0)

    totals = list(selfs)
    for i in range(len(order) - 1, 0, -1):
        totals[new_parents[i]] += totals[i]  # type: ignore[index]
    records = tuple(
        NodeRecord(names[i], selfs[i], totals[i], depths[i], new_parents[i], tuple(new_children[i]))
        for i in range(len(order))
    )
    return Hierarchy(records)


def generate_synthetic(node_count: int, depth_levels: int, seed: int) -> Hierarchy:
    """Random tree with exact node_count, depth exactly depth_levels when
    node_count permits, and leaf self-values uniform in [1, 1000].

    Deterministic for a fixed argument triple.
    """
    if node_count < 1 or depth_levels < 1:
        raise HierarchyError("node_count and depth_levels must be >= 1")
    if node_count < depth_levels:
        raise HierarchyError(
            f"cannot reach {depth_levels} levels with only {node_count} nodes"
        )
    rng = random.Random(seed)
    parents = [-1] + list(range(depth_levels - 1))  # spine guarantees the depth
    child_lists: list[list[int]] = [[] for _ in range(depth_levels)]
    for i in range(1, depth_levels):
        child_lists[i - 1].append(i)
    depths = list(range(depth_levels))
    internal = [i for i in range(depth_levels - 1)]
    leaves = []  # eligible leaf parents: depth <= depth_levels - 2

    for _ in range(node_count - depth_levels):
        use_internal = not leaves or (internal and rng.random() < _INTERNAL_ATTACH_P)
        pool = internal if use_internal else leaves
        k = rng.randrange(len(pool))
        p = pool[k]
        if not use_internal:
            # Swap-remove: the leaf parent becomes internal.
            pool[k] = pool[-1]
            pool.pop()
            internal.append(p)
        i = len(parents)
        parents.append(p)
        child_lists[p].append(i)
        child_lists.append([])
        d = depths[p] + 1
        depths.append(d)
        if d <= depth_levels - 2:
            leaves.append(i)
    return _materialize(parents, seed, child_lists)


def generate_shaped(
    node_count: int, leaf_count: int, depth_levels: int, seed: int
) -> Hierarchy:
    """Random tree with exact node, leaf and level counts (fixture builder).

    Every new node adds one leaf; attaching under a leaf also converts that
    leaf to an internal node. Budgeting the two attachment classes pins the
    final leaf count exactly.
    """
    if node_count < depth_levels or depth_levels < 1:
        raise HierarchyError("unsatisfiable shape: node_count < depth_levels")
    extra = node_count - depth_levels
    to_internal = leaf_count - 1
    to_leaf = extra - to_internal
    if to_internal < 0 or to_leaf < 0:
        raise HierarchyError(
            f"unsatisfiable shape: {leaf_count} leaves in {node_count} nodes "
            f"over {depth_levels} levels"
        )
    rng = random.Random(seed)
    parents = [-1] + list(range(depth_levels - 1))
    child_lists: list[list[int]] = [[] for _ in range(depth_levels)]
    for i in range(1, depth_levels):
        child_lists[i - 1].append(i)
    depths = list(range(depth_levels))
    internal = [i for i in range(depth_levels - 1)]
    leaves: list[int] = []

    while to_internal or to_leaf:
        if to_leaf and leaves:
            use_internal = rng.random() < to_internal / (to_internal + to_leaf)
        else:
            use_internal = True
        if use_internal and not to_internal:
            raise HierarchyError("unsatisfiable shape: leaf budget unreachable")
        pool = internal if use_internal else leaves
        k = rng.randrange(len(pool))
        p = pool[k]
        if use_internal:
            to_internal -= 1
        else:
            pool[k] = pool[-1]
            pool.pop()
            internal.append(p)
            to_leaf -= 1
        i = len(parents)
        parents.append(p)
        child_lists[p].append(i)
        child_lists.append([])
        d = depths[p] + 1
        depths.append(d)
        if d <= depth_levels - 2:
            leaves.append(i)
    return _materialize(parents, seed, child_lists)
