"""Convergence diagnostics for two MCMC runs over trees.

Two statistics are computed side by side: the average standard deviation
of split frequencies (ASDSF), which only sees topologies, and the held-out
AUC of a two-species tropical classifier trained to tell the chains apart,
which also sees branch lengths.
"""

from __future__ import annotations

import math
import re
import warnings
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._rng import as_generator, stream
from .evaluation import roc_and_auc
from .fermat_weber import FWConfig
from .regression import DegenerateCentersError, decision_function, fit_two_species
from .treeio import Dataset, PhyloTree, clades, parse_newick, parse_nexus_trees

__all__ = [
    "TreeChain",
    "SplitCounter",
    "ChainAUC",
    "truncate_last_fraction",
    "split_frequencies",
    "asdsf",
    "auc_convergence_metric",
    "read_chain",
    "diagnose",
]


@dataclass(frozen=True)
class TreeChain:
    """Sampled trees of one run, as ``(iteration, tree)`` pairs."""

    entries: tuple

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        its = [it for it, _ in entries]
        if any(b <= a for a, b in zip(its, its[1:])):
            raise ValueError("iteration indices must be strictly increasing")
        if entries:
            leaves = set(entries[0][1].leaf_labels)
            for it, t in entries[1:]:
                if set(t.leaf_labels) != leaves:
                    raise ValueError(f"tree at iteration {it} has a different leaf set")

    @classmethod
    def from_trees(cls, trees, iterations=None) -> "TreeChain":
        trees = list(trees)
        if iterations is None:
            iterations = range(len(trees))
        return cls(tuple(zip(iterations, trees)))

    def __len__(self):
        return len(self.entries)

    @property
    def trees(self):
        return [t for _, t in self.entries]

    @property
    def iterations(self):
        return [it for it, _ in self.entries]

    @property
    def leaf_set(self):
        return frozenset(self.entries[0][1].leaf_labels) if self.entries else frozenset()

    def up_to(self, iteration) -> "TreeChain":
        return TreeChain(tuple((it, t) for it, t in self.entries if it <= iteration))


def truncate_last_fraction(chain: TreeChain, frac: float = 0.3) -> TreeChain:
    """Keep the final ceil(frac * len) entries."""
    if not 0 < frac <= 1:
        raise ValueError(f"frac must lie in (0, 1], got {frac}")
    if not len(chain):
        raise ValueError("empty chain")
    k = math.ceil(frac * len(chain) - 1e-9)
    return TreeChain(chain.entries[len(chain) - k:])


class SplitCounter:
    """Running clade counts, so prefixes can be scored incrementally."""

    def __init__(self):
        self.counts = Counter()
        self.n = 0

    def add(self, tree: PhyloTree):
        self.counts.update(clades(tree))
        self.n += 1

    def frequencies(self) -> dict:
        return {c: k / self.n for c, k in self.counts.items()} if self.n else {}


def split_frequencies(chain: TreeChain) -> dict:
    if not len(chain):
        raise ValueError("empty chain")
    sc = SplitCounter()
    for t in chain.trees:
        sc.add(t)
    return sc.frequencies()


def _asdsf_from_freqs(fa, fb, min_freq, sd):
    if sd not in ("sample", "population"):
        raise ValueError(f"sd must be 'sample' or 'population', got {sd!r}")
    scale = math.sqrt(2) if sd == "sample" else 2.0
    keys = [c for c in set(fa) | set(fb) if max(fa.get(c, 0.0), fb.get(c, 0.0)) >= min_freq]
    if not keys:
        return 0.0, False
    total = sum(abs(fa.get(c, 0.0) - fb.get(c, 0.0)) for c in sorted(keys, key=sorted))
    return total / scale / len(keys), True


def asdsf(chain_a: TreeChain, chain_b: TreeChain, min_freq: float = 0.1,
          sd: str = "sample") -> float:
    """Mean over qualifying splits of the two-run standard deviation.

    A split qualifies if its frequency reaches ``min_freq`` in either
    chain.  ``sd="sample"`` gives |fa - fb|/sqrt(2) per split,
    ``"population"`` gives |fa - fb|/2.  Warns and returns 0 when no
    split qualifies.
    """
    if chain_a.leaf_set != chain_b.leaf_set:
        raise ValueError("chains have different leaf sets")
    value, ok = _asdsf_from_freqs(split_frequencies(chain_a), split_frequencies(chain_b), min_freq, sd)
    if not ok:
        warnings.warn("no split reaches min_freq in either chain; ASDSF set to 0", stacklevel=2)
    return value


@dataclass(frozen=True)
class ChainAUC:
    auc: float
    raw_auc: float
    degenerate: bool = False


def _split_indices(sizes, frac, rng):
    """Stratified train/test split sharing one permutation across classes.

    Chains of equal length get the same positions, so two identical chains
    produce identical training sets.
    """
    perm = rng.permutation(max(sizes))
    out = []
    for n in sizes:
        p = perm[perm < n]
        k = min(max(int(round(frac * n)), 1), n - 1)
        out.append((p[:k], p[k:]))
    return out


def auc_convergence_metric(chain_a: TreeChain, chain_b: TreeChain, frac: float = 0.3,
                           split: float = 0.5, rng=0, fw_config: FWConfig = FWConfig()) -> ChainAUC:
    """Held-out AUC of a two-species classifier separating the two chains.

    Both chains are cut to their last ``frac``; each chain is split at
    random into a training part (proportion ``split``) and a test part.
    ``auc`` is reported as max(AUC, 1 - AUC) so it does not depend on
    which chain is called class 1.
    """
    if chain_a.leaf_set != chain_b.leaf_set:
        raise ValueError("chains have different leaf sets")
    ta = truncate_last_fraction(chain_a, frac)
    tb = truncate_last_fraction(chain_b, frac)
    if len(ta) < 4 or len(tb) < 4:
        raise ValueError(f"need at least 4 trees per chain after truncation, got {len(ta)} and {len(tb)}")
    rng = as_generator(rng)
    da = Dataset.from_trees(ta.trees, [0] * len(ta))
    db = Dataset.from_trees(tb.trees, [1] * len(tb))
    (tr_a, te_a), (tr_b, te_b) = _split_indices((len(ta), len(tb)), split, rng)
    train = Dataset(np.vstack([da.X[tr_a], db.X[tr_b]]), np.r_[da.y[tr_a], db.y[tr_b]])
    test = Dataset(np.vstack([da.X[te_a], db.X[te_b]]), np.r_[da.y[te_a], db.y[te_b]])
    try:
        model = fit_two_species(train, fw_config)
    except DegenerateCentersError:
        return ChainAUC(0.5, 0.5, True)
    raw = roc_and_auc(decision_function(model, test.X), test.y).auc
    return ChainAUC(max(raw, 1 - raw), raw)


# ---------------------------------------------------------------------------
# Files and checkpoints

_GEN = re.compile(r"(\d+)\s*$")


def read_chain(text: str) -> TreeChain:
    """Chain from Nexus text (iterations parsed from names like ``gen.500``)
    or from plain Newick, one tree per line (iterations 0, 1, ...)."""
    if text.lstrip().upper().startswith("#NEXUS"):
        named = parse_nexus_trees(text)
        its = []
        for k, (name, _) in enumerate(named):
            m = _GEN.search(name)
            its.append(int(m.group(1)) if m else k)
        if any(b <= a for a, b in zip(its, its[1:])):
            its = list(range(len(named)))
        return TreeChain(tuple(zip(its, (t for _, t in named))))
    trees = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            try:
                trees.append(parse_newick(line.strip()))
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
    return TreeChain.from_trees(trees)


def _checkpoints(chain_a, chain_b, diagnfreq):
    last = min(chain_a.iterations[-1], chain_b.iterations[-1])
    pts = list(range(diagnfreq, last + 1, diagnfreq))
    return pts or [last]


def diagnose(chain_a: TreeChain, chain_b: TreeChain, diagnfreq: int, frac: float = 0.3,
             min_freq: float = 0.1, seed: int = 0, sd: str = "sample", threads: int = 1,
             fw_config: Optional[FWConfig] = None) -> list:
    """``[(iteration, asdsf, auc), ...]`` at every multiple of ``diagnfreq``.

    Each checkpoint uses the chain prefixes up to that iteration, cut to
    their last ``frac``.  Checkpoints with fewer than 4 trees per chain
    after the cut are skipped.
    """
    if diagnfreq < 1:
        raise ValueError("diagnfreq must be >= 1")
    if not len(chain_a) or not len(chain_b):
        raise ValueError("empty chain")
    if chain_a.leaf_set != chain_b.leaf_set:
        raise ValueError("chains have different leaf sets")
    fw_config = fw_config or FWConfig()

    def one(it):
        pa, pb = chain_a.up_to(it), chain_b.up_to(it)
        if not len(pa) or not len(pb):
            return None
        ta, tb = truncate_last_fraction(pa, frac), truncate_last_fraction(pb, frac)
        if len(ta) < 4 or len(tb) < 4:
            return None
        fa, fb = split_frequencies(ta), split_frequencies(tb)
        value, _ = _asdsf_from_freqs(fa, fb, min_freq, sd)
        res = auc_convergence_metric(pa, pb, frac=frac, rng=stream(seed, "checkpoint", it),
                                     fw_config=fw_config)
        return (it, value, res.auc)

    pts = _checkpoints(chain_a, chain_b, diagnfreq)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(one, pts))
    else:
        rows = [one(it) for it in pts]
    return [r for r in rows if r is not None]
