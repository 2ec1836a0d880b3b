"""Random tropical Laplace points, radius laws, Yule species trees and
multispecies-coalescent gene trees."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._gamma import gamma_p
from ._rng import as_generator
from .core import TorusPoint, canonical, normalize
from .treeio import Node, PhyloTree, is_equidistant

__all__ = [
    "TropicalLaplace",
    "sample_tropical_laplace",
    "sample_points",
    "radius_cdf",
    "yule_tree",
    "SpeciesTree",
    "coalesce",
    "msc_gene_tree",
    "node_heights",
]


@dataclass(frozen=True)
class TropicalLaplace:
    """Density exp(-d_tr(x, center)/sigma) / (e! sigma^(e-1)) on R^e/R1."""

    center: TorusPoint
    sigma: float

    def __post_init__(self):
        if not isinstance(self.center, TorusPoint):
            object.__setattr__(self, "center", normalize(self.center))
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def e(self) -> int:
        return self.center.e


def sample_points(dist: TropicalLaplace, n: int, rng) -> np.ndarray:
    """Draw ``n`` points as an (n, e) array of canonical coordinates.

    The radius is Gamma(e-1, sigma), built as a sum of e-1 exponentials.
    Given the radius r, the point is uniform on the tropical sphere: the
    representative with min 0 and max r lies on one of e(e-1) equal-area
    faces, picked by an ordered pair (argmin, argmax).
    """
    rng = as_generator(rng)
    e = dist.e
    r = rng.standard_exponential((n, e - 1)).sum(axis=1) * dist.sigma
    lo = rng.integers(0, e, size=n)
    hi = rng.integers(0, e - 1, size=n)
    hi = hi + (hi >= lo)
    pts = rng.random((n, e)) * r[:, None]
    rows = np.arange(n)
    pts[rows, lo] = 0.0
    pts[rows, hi] = r
    return canonical(pts + np.asarray(dist.center))


def sample_tropical_laplace(dist: TropicalLaplace, rng) -> TorusPoint:
    return TorusPoint(tuple(sample_points(dist, 1, rng)[0].tolist()))


def radius_cdf(e: int, i: int, sigma: float, t: float, euclidean: bool = False) -> float:
    """P(d(X, center) <= t) when d^i ~ i sigma^i Gamma(n/i).

    ``n = e - 1`` in the tropical torus and ``n = e`` for the Euclidean
    variant.  ``i = 1`` is the Laplace law and ``i = 2`` the Gaussian one.
    """
    if i not in (1, 2):
        raise ValueError(f"i must be 1 or 2, got {i}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    n = e if euclidean else e - 1
    if n < 1:
        raise ValueError(f"invalid shape for e={e}")
    if t <= 0:
        return 0.0
    return gamma_p(n / i, t**i / (i * sigma**i))


# ---------------------------------------------------------------------------
# Trees


def yule_tree(m: int, birth_rate: float, rng, labels=None) -> PhyloTree:
    """Pure-birth tree on ``m`` leaves.

    Starts from the root split with two lineages; while k lineages exist the
    next event comes after Exp(k * birth_rate) and splits a uniformly chosen
    lineage.  The wait after the m-th lineage appears extends every leaf, so
    the tree is equidistant with depth sum_{k=2..m} Exp(k * birth_rate).
    """
    if m < 2:
        raise ValueError("need m >= 2")
    if not birth_rate > 0:
        raise ValueError("birth_rate must be positive")
    rng = as_generator(rng)
    if labels is None:
        width = len(str(m))
        labels = [f"S{k + 1:0{width}d}" for k in range(m)]
    root = Node()
    t = 0.0
    live = [(Node(), 0.0), (Node(), 0.0)]
    root.children = [live[0][0], live[1][0]]
    while True:
        k = len(live)
        t += rng.exponential(1.0 / (k * birth_rate))
        if k == m:
            break
        idx = int(rng.integers(k))
        node, start = live.pop(idx)
        node.length = t - start
        a, b = Node(), Node()
        node.children = [a, b]
        live += [(a, t), (b, t)]
    for (node, start), lab in zip(live, labels):
        node.length = t - start
        node.label = lab
    return PhyloTree(root)


def node_heights(tree: PhyloTree) -> dict:
    """Height above the present (deepest leaf) for every node, keyed by id."""
    dist = {id(tree.root): 0.0}
    order = [tree.root]
    for node in order:
        for c in node.children:
            dist[id(c)] = dist[id(node)] + c.length
            order.append(c)
    depth = max(dist[id(n)] for n in order if n.is_leaf)
    return {k: depth - v for k, v in dist.items()}


def _scaled_copy(node, f):
    return Node(node.label, None if node.length is None else node.length * f,
                [_scaled_copy(c, f) for c in node.children])


@dataclass(frozen=True)
class SpeciesTree:
    """An equidistant species tree with a constant effective population size.

    ``depth`` is the root-to-leaf path length in generations; the ratio
    R = depth / pop_size controls how closely gene trees follow it.
    """

    tree: PhyloTree
    pop_size: float

    def __post_init__(self):
        if not self.pop_size > 0:
            raise ValueError("pop_size must be positive")
        if not is_equidistant(self.tree, 1e-9 * max(1.0, self.depth)):
            raise ValueError("species tree must be equidistant")
        if not self.depth > 0:
            raise ValueError("species tree depth must be positive")

    @property
    def depth(self) -> float:
        return max(self.tree.leaf_depths().values())

    @property
    def ratio(self) -> float:
        return self.depth / self.pop_size

    @classmethod
    def with_ratio(cls, tree: PhyloTree, ratio: float, pop_size: float = 1.0) -> "SpeciesTree":
        """Rescale ``tree`` so that depth / pop_size equals ``ratio``."""
        depth = max(tree.leaf_depths().values())
        return cls(PhyloTree(_scaled_copy(tree.root, ratio * pop_size / depth)), pop_size)


def coalesce(lineages, t_start, t_end, pop_size, rng):
    """Kingman coalescent on ``[(node, height), ...]`` between two heights.

    Each of the C(k,2) pairs merges at rate 1/pop_size.  Returns the
    surviving lineages at ``t_end`` (one lineage when ``t_end`` is inf).
    """
    lineages = list(lineages)
    t = t_start
    while len(lineages) > 1:
        k = len(lineages)
        t += rng.exponential(pop_size / (k * (k - 1) / 2))
        if t >= t_end:
            break
        i, j = sorted(rng.choice(k, size=2, replace=False))
        (a, ha), (b, hb) = lineages[i], lineages[j]
        a.length = t - ha
        b.length = t - hb
        del lineages[j]
        lineages[i] = (Node(children=[a, b]), t)
    return lineages


def msc_gene_tree(species: SpeciesTree, rng) -> PhyloTree:
    """One gene tree, one sampled lineage per species leaf.

    Lineages coalesce inside each species branch, pool at speciation
    nodes, and whatever remains coalesces above the root.
    """
    rng = as_generator(rng)
    heights = node_heights(species.tree)
    N = species.pop_size

    def rec(snode, top):
        h = heights[id(snode)]
        if snode.is_leaf:
            lineages = [(Node(label=snode.label), 0.0)]
        else:
            lineages = []
            for c in snode.children:
                lineages += rec(c, h)
        return coalesce(lineages, h, top, N, rng)

    (root, _), = rec(species.tree.root, math.inf)
    return PhyloTree(root)
