"""Rooted phylogenetic trees: Newick/Nexus input, distance vectors, clades.

Pair ordering for vectorized distance matrices is lexicographic over the
sorted leaf labels: (1,2), (1,3), ..., (1,m), (2,3), ..., (m-1,m).
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "Node",
    "PhyloTree",
    "DistanceVector",
    "Dataset",
    "NewickError",
    "NexusError",
    "parse_newick",
    "parse_nexus_trees",
    "write_newick",
    "cophenetic_vector",
    "pair_index",
    "pairs",
    "is_ultrametric",
    "is_equidistant",
    "default_tolerance",
    "clades",
    "rf_distance",
    "read_dataset",
    "write_dataset",
    "format_float",
]

DEFAULT_REL_TOL = 1e-6


class NewickError(ValueError):
    """Malformed Newick text; ``offset`` is the 0-based character position."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class NexusError(ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(eq=False)
class Node:
    label: Optional[str] = None
    length: Optional[float] = None
    children: list = field(default_factory=list)

    @property
    def is_leaf(self):
        return not self.children

    def traverse_postorder(self):
        stack = [(self, False)]
        while stack:
            node, seen = stack.pop()
            if seen or node.is_leaf:
                yield node
            else:
                stack.append((node, True))
                stack.extend((c, False) for c in reversed(node.children))


class PhyloTree:
    """A rooted tree with branch lengths and unique leaf labels.

    Treat instances as immutable; nothing in the package mutates a tree
    after construction.
    """

    def __init__(self, root: Node):
        self.root = root
        labels = []
        for node in root.traverse_postorder():
            if node is not root and (node.length is None or not math.isfinite(node.length) or node.length < 0):
                raise ValueError(f"invalid branch length {node.length!r} above node {node.label!r}")
            if node.is_leaf:
                if not node.label:
                    raise ValueError("unlabeled leaf")
                labels.append(node.label)
        if len(set(labels)) != len(labels):
            dup = sorted({x for x in labels if labels.count(x) > 1})
            raise ValueError(f"duplicate leaf labels: {dup}")
        self._labels = tuple(labels)

    @property
    def leaf_labels(self) -> tuple:
        return self._labels

    @property
    def m(self) -> int:
        return len(self._labels)

    def leaf_depths(self) -> dict:
        """Root-to-leaf path length for every leaf label."""
        out = {}
        stack = [(self.root, 0.0)]
        while stack:
            node, depth = stack.pop()
            if node.is_leaf:
                out[node.label] = depth
            for c in node.children:
                stack.append((c, depth + c.length))
        return out

    def nodes(self):
        return list(self.root.traverse_postorder())

    def newick(self) -> str:
        return write_newick(self)

    def __repr__(self):
        return f"PhyloTree({self.newick()!r})"


# ---------------------------------------------------------------------------
# Newick


_LABEL_STOP = set("(),:;[]")


class _NewickParser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def fail(self, msg, pos=None):
        raise NewickError(msg, self.pos if pos is None else pos)

    def skip(self):
        t = self.text
        while self.pos < len(t):
            ch = t[self.pos]
            if ch.isspace():
                self.pos += 1
            elif ch == "[":
                end = t.find("]", self.pos)
                if end < 0:
                    self.fail("unterminated comment")
                self.pos = end + 1
            else:
                break

    def peek(self):
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def parse(self) -> Node:
        root = self.subtree()
        ch = self.peek()
        if ch == ")":
            self.fail("unbalanced ')'")
        if ch != ";":
            self.fail("expected ';'")
        self.pos += 1
        if self.peek():
            self.fail("trailing characters after ';'")
        return root

    def subtree(self) -> Node:
        node = Node()
        if self.peek() == "(":
            self.pos += 1
            while True:
                node.children.append(self.subtree())
                ch = self.peek()
                if ch == ",":
                    self.pos += 1
                elif ch == ")":
                    self.pos += 1
                    break
                elif ch == "":
                    self.fail("unbalanced '(': unexpected end of input")
                elif ch == ";":
                    self.fail("unbalanced '(': statement ended inside parentheses", self.pos + 1)
                else:
                    self.fail(f"unexpected character {ch!r}")
        node.label = self.label()
        if self.peek() == ":":
            self.pos += 1
            node.length = self.number()
        if node.is_leaf and not node.label:
            self.fail("empty leaf label")
        return node

    def label(self):
        self.skip()
        t = self.text
        if self.pos < len(t) and t[self.pos] == "'":
            end = self.pos + 1
            buf = []
            while True:
                if end >= len(t):
                    self.fail("unterminated quoted label")
                if t[end] == "'":
                    if end + 1 < len(t) and t[end + 1] == "'":
                        buf.append("'")
                        end += 2
                        continue
                    break
                buf.append(t[end])
                end += 1
            self.pos = end + 1
            return "".join(buf)
        start = self.pos
        while self.pos < len(t) and t[self.pos] not in _LABEL_STOP and not t[self.pos].isspace():
            self.pos += 1
        raw = t[start:self.pos]
        return raw or None

    def number(self):
        self.skip()
        start = self.pos
        t = self.text
        while self.pos < len(t) and t[self.pos] not in _LABEL_STOP and not t[self.pos].isspace():
            self.pos += 1
        tok = t[start:self.pos]
        try:
            val = float(tok)
        except ValueError:
            self.fail(f"invalid branch length {tok!r}", start)
        if not math.isfinite(val) or val < 0:
            self.fail(f"branch length must be finite and >= 0, got {tok!r}", start)
        return val


def parse_newick(text: str) -> PhyloTree:
    """Parse a single Newick statement (terminated by ';').

    Every non-root edge must carry a length.  Square-bracket comments are
    stripped.  Labels may be single-quoted.
    """
    p = _NewickParser(text)
    root = p.parse()
    _check_lengths(root, text)
    return PhyloTree(root)


def _check_lengths(root, text):
    for node in root.traverse_postorder():
        if node is not root and node.length is None:
            where = node.label if node.label else "internal node"
            raise NewickError(f"missing branch length for {where}", _offset_hint(text, node.label))


def _offset_hint(text, label):
    if label:
        i = text.find(label)
        if i >= 0:
            return i + len(label)
    return len(text)


def format_float(x: float) -> str:
    """Shortest decimal that round-trips to the same double."""
    x = float(x)
    if x == int(x) and abs(x) < 1e16:
        return str(int(x)) if x != 0 else "0"
    return repr(x)


def _quote(label):
    if any(ch in _LABEL_STOP or ch == "'" or ch.isspace() for ch in label):
        return "'" + label.replace("'", "''") + "'"
    return label


def write_newick(tree: PhyloTree) -> str:
    def rec(node):
        s = ""
        if node.children:
            s = "(" + ",".join(rec(c) for c in node.children) + ")"
        if node.label:
            s += _quote(node.label)
        if node.length is not None:
            s += ":" + format_float(node.length)
        return s

    return rec(tree.root) + ";"


# ---------------------------------------------------------------------------
# Nexus

_COMMENT = re.compile(r"\[[^\]]*\]")
_LEADING_COMMENTS = re.compile(r"^(\s*\[[^\]]*\])+\s*")
_TREE_LINE = re.compile(r"^\s*tree\s+(\S+?)\s*=\s*(.*)$", re.IGNORECASE | re.DOTALL)


def _statements(text):
    """Split into ';'-terminated statements, yielding (start line, statement).

    Bracket comments are kept so '[&U]' can be detected on tree statements.
    """
    buf = []
    line = 1
    start_line = None
    depth = 0
    quote = False
    for ch in text:
        if start_line is None and not ch.isspace():
            start_line = line
        if ch == "\n":
            line += 1
        if ch == "'" and depth == 0:
            quote = not quote
        elif not quote and ch == "[":
            depth += 1
        elif not quote and ch == "]" and depth:
            depth -= 1
        if ch == ";" and depth == 0 and not quote:
            yield start_line or line, "".join(buf).strip()
            buf = []
            start_line = None
            continue
        buf.append(ch)
    if "".join(buf).strip():
        yield start_line or line, "".join(buf).strip()


def parse_nexus_trees(text: str) -> list:
    """Read the trees block of a Nexus file as ``[(name, PhyloTree), ...]``.

    Supports a ``translate`` table.  Unrooted ``[&U]`` trees are rejected
    because ultrametricity depends on the root.
    """
    if not text.lstrip().upper().startswith("#NEXUS"):
        raise NexusError("missing #NEXUS header", 1)
    in_trees = False
    found = False
    translate = {}
    out = []
    # drop the header token itself; it is not ';'-terminated
    start = text.upper().index("#NEXUS")
    body = text[:start] + " " * len("#NEXUS") + text[start + len("#NEXUS"):]
    for lineno, stmt in _statements(body):
        stmt = _LEADING_COMMENTS.sub("", stmt)
        low = stmt.lower()
        if low.startswith("begin"):
            in_trees = low.split()[1:2] == ["trees"]
            found = found or in_trees
            continue
        if low in ("end", "endblock"):
            in_trees = False
            continue
        if not in_trees:
            continue
        if low.startswith("translate"):
            body = _COMMENT.sub("", stmt[len("translate"):])
            for item in body.split(","):
                item = item.strip()
                if not item:
                    continue
                parts = item.split(None, 1)
                if len(parts) != 2:
                    raise NexusError(f"bad translate entry {item!r}", lineno)
                translate[parts[0]] = parts[1].strip().strip("'")
            continue
        m = _TREE_LINE.match(stmt)
        if not m:
            continue
        name, body = m.group(1), m.group(2).strip()
        if re.match(r"\[\s*&\s*U\s*\]", body, re.IGNORECASE):
            raise NexusError(f"tree {name!r} is unrooted ([&U]); only rooted trees are supported", lineno)
        try:
            tree = parse_newick(body + ";")
        except NewickError as exc:
            raise NexusError(f"tree {name!r}: {exc}", lineno) from exc
        if translate:
            tree = _apply_translate(tree, translate, name, lineno)
        out.append((name, tree))
    if not found:
        raise NexusError("no trees block found")
    return out


def _apply_translate(tree, table, name, lineno):
    def rec(node):
        label = node.label
        if node.is_leaf:
            key = label
            if key not in table:
                raise NexusError(f"tree {name!r}: translate index {key!r} not found", lineno)
            label = table[key]
        return Node(label, node.length, [rec(c) for c in node.children])

    return PhyloTree(rec(tree.root))


# ---------------------------------------------------------------------------
# Distance vectors


def pair_index(i: int, j: int, m: int) -> int:
    """Position of leaf pair (i, j), 0-based and i != j, in a vector of length m(m-1)/2."""
    if i == j or not (0 <= i < m and 0 <= j < m):
        raise IndexError(f"invalid pair ({i}, {j}) for m={m}")
    if i > j:
        i, j = j, i
    return i * m - i * (i + 1) // 2 + (j - i - 1)


def pairs(m: int) -> list:
    return list(itertools.combinations(range(m), 2))


@dataclass(frozen=True)
class DistanceVector:
    values: np.ndarray
    leaf_order: tuple

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        m = len(self.leaf_order)
        if vals.shape != (m * (m - 1) // 2,):
            raise ValueError(f"{m} leaves need {m * (m - 1) // 2} values, got {vals.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "leaf_order", tuple(self.leaf_order))

    @property
    def m(self):
        return len(self.leaf_order)

    @property
    def e(self):
        return self.values.size

    def matrix(self) -> np.ndarray:
        m = self.m
        D = np.zeros((m, m))
        iu = np.triu_indices(m, 1)
        D[iu] = self.values
        D.T[iu] = self.values
        return D

    def pair_labels(self) -> list:
        return [f"{self.leaf_order[i]}|{self.leaf_order[j]}" for i, j in pairs(self.m)]


def cophenetic_vector(tree: PhyloTree) -> DistanceVector:
    """Path-length distances between all leaf pairs, in sorted-label pair order."""
    if tree.m < 3:
        raise ValueError(f"need at least 3 leaves, got {tree.m}")
    order = sorted(tree.leaf_labels)
    pos = {lab: k for k, lab in enumerate(order)}
    m = len(order)
    D = np.zeros((m, m))
    # below[node] = list of (leaf index, distance from node down to leaf)
    below = {}
    for node in tree.root.traverse_postorder():
        if node.is_leaf:
            below[node] = [(pos[node.label], 0.0)]
            continue
        groups = []
        for c in node.children:
            groups.append([(k, d + c.length) for k, d in below.pop(c)])
        for ga, gb in itertools.combinations(groups, 2):
            for ka, da in ga:
                for kb, db in gb:
                    D[ka, kb] = D[kb, ka] = da + db
        below[node] = [x for g in groups for x in g]
    return DistanceVector(D[np.triu_indices(m, 1)], tuple(order))


def default_tolerance(d: DistanceVector) -> float:
    """Absolute ultrametric tolerance for text-read data: 1e-6 of the tree depth."""
    return DEFAULT_REL_TOL * float(np.max(d.values)) / 2.0


def is_ultrametric(d: DistanceVector, tol: float = 0.0) -> bool:
    """True iff every triple's two largest pairwise values differ by at most ``tol``."""
    m = d.m
    if m < 3:
        return True
    D = d.matrix()
    i, j, k = np.array(list(itertools.combinations(range(m), 3))).T
    trip = np.sort(np.stack([D[i, j], D[j, k], D[i, k]], axis=1), axis=1)
    return bool(np.all(trip[:, 2] - trip[:, 1] <= tol))


def is_equidistant(tree: PhyloTree, tol: float = 0.0) -> bool:
    depths = list(tree.leaf_depths().values())
    return max(depths) - min(depths) <= tol


# ---------------------------------------------------------------------------
# Clades


def clades(tree: PhyloTree) -> frozenset:
    """All proper nontrivial clades as frozensets of leaf labels."""
    full = len(tree.leaf_labels)
    out = set()
    below = {}
    for node in tree.root.traverse_postorder():
        if node.is_leaf:
            below[node] = frozenset([node.label])
            continue
        c = frozenset().union(*(below.pop(ch) for ch in node.children))
        below[node] = c
        if 1 < len(c) < full:
            out.add(c)
    return frozenset(out)


def rf_distance(t1: PhyloTree, t2: PhyloTree) -> int:
    """Rooted Robinson-Foulds distance: size of the symmetric difference of clade sets."""
    if set(t1.leaf_labels) != set(t2.leaf_labels):
        raise ValueError("trees have different leaf sets")
    return len(clades(t1) ^ clades(t2))


# ---------------------------------------------------------------------------
# CSV datasets


@dataclass
class Dataset:
    """Labeled covariates: ``X`` is (n, e), ``y`` holds 0/1 labels."""

    X: np.ndarray
    y: np.ndarray
    leaf_order: Optional[tuple] = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=int).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y lengths differ")
        if not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("labels must be 0 or 1")
        if self.leaf_order is not None:
            self.leaf_order = tuple(self.leaf_order)
            m = len(self.leaf_order)
            if m * (m - 1) // 2 != self.X.shape[1]:
                raise ValueError("leaf_order does not match the number of columns")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def e(self):
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.leaf_order)

    def by_class(self, label: int) -> np.ndarray:
        return self.X[self.y == label]

    @classmethod
    def from_trees(cls, trees: Iterable[PhyloTree], labels: Sequence[int]) -> "Dataset":
        vecs = [cophenetic_vector(t) for t in trees]
        if not vecs:
            raise ValueError("no trees")
        order = vecs[0].leaf_order
        if any(v.leaf_order != order for v in vecs):
            raise ValueError("trees have different leaf sets")
        return cls(np.array([v.values for v in vecs]), np.asarray(labels), order)


def write_dataset(ds: Dataset, fh) -> None:
    """Write ``label,x_1,...,x_e`` CSV; the first line documents pair order."""
    if ds.leaf_order is not None:
        names = [f"{ds.leaf_order[i]}|{ds.leaf_order[j]}" for i, j in pairs(len(ds.leaf_order))]
        fh.write("# pairs: " + ",".join(names) + "\n")
    else:
        fh.write("# pairs: none (coordinates are raw torus points)\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["label"] + [f"x_{k + 1}" for k in range(ds.e)])
    for label, row in zip(ds.y, ds.X):
        w.writerow([int(label)] + [format_float(v) for v in row])


def read_dataset(fh) -> Dataset:
    """Inverse of :func:`write_dataset`; errors name the offending line."""
    if isinstance(fh, str):
        fh = io.StringIO(fh)
    leaf_order = None
    rows, labels = [], []
    header = None
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("pairs:") and "|" in body:
                names = [p.split("|") for p in body[len("pairs:"):].strip().split(",")]
                leaf_order = _order_from_pairs(names, lineno)
            continue
        fields = next(csv.reader([line]))
        if header is None:
            header = fields
            if not header or header[0].strip() != "label":
                raise ValueError(f"line {lineno}: expected header starting with 'label'")
            continue
        if len(fields) != len(header):
            raise ValueError(f"line {lineno}: expected {len(header)} fields, got {len(fields)}")
        try:
            labels.append(int(fields[0]))
            rows.append([float(v) for v in fields[1:]])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        if labels[-1] not in (0, 1):
            raise ValueError(f"line {lineno}: label must be 0 or 1")
    if header is None:
        raise ValueError("empty dataset file")
    e = len(header) - 1
    X = np.array(rows, dtype=float).reshape(len(rows), e)
    return Dataset(X, np.array(labels, dtype=int), leaf_order)


def _order_from_pairs(names, lineno):
    order = []
    for a, b in names:
        for lab in (a, b):
            if lab not in order:
                order.append(lab)
    order = sorted(order)
    expected = [[order[i], order[j]] for i, j in pairs(len(order))]
    if [list(p) for p in names] != expected:
        raise ValueError(f"line {lineno}: pair header is not in sorted lexicographic order")
    return tuple(order)
