"""Shared experiment builders and independent oracles for the test suite."""

import io
import math
from contextlib import redirect_stdout
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from troplr._rng import stream
from troplr.chains import TreeChain
from troplr.cli import main
from troplr.core import canonical
from troplr.evaluation import gamma_fit_diagnostic, roc_and_auc
from troplr.regression import DegenerateCentersError, decision_function, fit_two_species
from troplr.sampling import SpeciesTree, TropicalLaplace, msc_gene_tree, sample_points, yule_tree
from troplr.treeio import Dataset, Node, PhyloTree, cophenetic_vector, parse_newick, write_dataset

SPECIES6 = "(((A:1,B:1):1,C:2):1,((D:1.5,E:1.5):1,F:2.5):0.5);"


def fw_lp(points):
    """Fermat-Weber optimum as a linear program (independent oracle).

    Variables are the chart coordinates of w (last fixed at 0) plus an upper
    bound u_i and lower bound l_i for every residual w - x_i; minimize
    sum(u_i - l_i).
    """
    X = canonical(np.atleast_2d(np.asarray(points, dtype=float)))
    n, e = X.shape
    k = e - 1
    nv = k + 2 * n
    c = np.r_[np.zeros(k), np.ones(n), -np.ones(n)]
    rows, rhs = [], []
    for i in range(n):
        for j in range(e):
            # w_j - x_ij <= u_i
            r = np.zeros(nv)
            if j < k:
                r[j] = 1
            r[k + i] = -1
            rows.append(r)
            rhs.append(X[i, j])
            # l_i <= w_j - x_ij
            r = np.zeros(nv)
            if j < k:
                r[j] = -1
            r[k + n + i] = 1
            rows.append(r)
            rhs.append(-X[i, j])
    res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=[(None, None)] * nv, method="highs")
    assert res.status == 0
    return float(res.fun), np.r_[res.x[:k], 0.0]


def toy_dataset(seed, n=100, centers=((0, 0, 0), (3, 2, 0)), sigma=0.5, tag="toy"):
    X = [sample_points(TropicalLaplace(c, sigma), n, stream(seed, tag, k)) for k, c in enumerate(centers)]
    return Dataset(np.vstack(X), np.r_[np.zeros(n, int), np.ones(n, int)])


def coalescent_run(R, seed, n=200, m=10):
    """Held-out AUC plus Laplace/Gaussian KS on gene trees from two Yule species trees."""
    sp = [SpeciesTree.with_ratio(yule_tree(m, 1.0, stream(seed, "species", R, k)), R, 1.0) for k in (0, 1)]
    X, y = [], []
    for k in (0, 1):
        r = stream(seed, "genes", R, k)
        for _ in range(n):
            X.append(cophenetic_vector(msc_gene_tree(sp[k], r)).values)
            y.append(k)
    ds = Dataset(np.array(X), np.array(y))
    r = stream(seed, "split", R)
    idx0, idx1 = r.permutation(n), r.permutation(n) + n
    tr = np.r_[idx0[: n // 2], idx1[: n // 2]]
    te = np.r_[idx0[n // 2:], idx1[n // 2:]]
    try:
        model = fit_two_species(ds.subset(tr))
        auc = roc_and_auc(decision_function(model, ds.X[te]), ds.y[te]).auc
    except DegenerateCentersError:
        auc = 0.5
    center = cophenetic_vector(sp[0].tree).values
    ks_trop = gamma_fit_diagnostic(ds.by_class(0), center, "tropical", "laplace").ks_statistic
    ks_euc = gamma_fit_diagnostic(ds.by_class(0), center, "euclidean", "gaussian").ks_statistic
    return auc, ks_trop, ks_euc


def msc_chain(seed, n=200, ratio=1.0):
    sp = SpeciesTree.with_ratio(parse_newick(SPECIES6), ratio, 1.0)
    r = stream(seed, "chain")
    return TreeChain.from_trees([msc_gene_tree(sp, r) for _ in range(n)])


def _jitter(node, rng, scale):
    length = None if node.length is None else node.length * scale * math.exp(0.1 * rng.standard_normal())
    return Node(node.label, length, [_jitter(c, rng, scale) for c in node.children])


def two_phase_chains(seed, n=2000, converge_at=1000, bias=0.5):
    """Same fixed topology in both chains; chain b's branch lengths start
    inflated by ``1 + bias`` and relax linearly to the shared law by
    ``converge_at``.  ASDSF sees nothing, branch-length methods do."""
    base = parse_newick(SPECIES6)
    ra, rb = stream(seed, "a"), stream(seed, "b")
    a = [PhyloTree(_jitter(base.root, ra, 1.0)) for _ in range(n)]
    b = [PhyloTree(_jitter(base.root, rb, 1.0 + bias * max(0.0, 1 - t / converge_at))) for t in range(n)]
    return TreeChain.from_trees(a), TreeChain.from_trees(b)


def run_cli(*argv):
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main([str(a) for a in argv])
    return code, buf.getvalue()


def write_toy(path, seed=0, n=100):
    with open(path, "w", newline="") as fh:
        write_dataset(toy_dataset(seed, n=n), fh)
    return path


def write_chain(path, seed, n=120):
    Path(path).write_text("".join(t.newick() + "\n" for t in msc_chain(seed, n=n).trees))
    return path


def run_everything(d: Path):
    """Run every subcommand once inside ``d``; return {name: bytes}."""
    d.mkdir(parents=True, exist_ok=True)
    data = write_toy(d / "toy.csv")
    ca, cb = write_chain(d / "a.nwk", 1), write_chain(d / "b.nwk", 2)
    cmds = [
        ("simulate", "--leaves", 5, "--per-class", 15, "--ratios", "0.5,2", "--out-dir", d / "sim", "--newick", "--seed", 3),
        ("sample", "--center", "1,2,0", "--sigma", 0.7, "--n", 25, "--out", d / "sample.csv", "--seed", 3),
        ("fw", "--data", data, "--label", 1, "--out", d / "fw.json", "--seed", 3),
        ("fit", "--model", "one", "--data", data, "--out", d / "one.json", "--seed", 3),
        ("fit", "--model", "two", "--data", data, "--out", d / "two.json", "--seed", 3),
        ("fit", "--model", "classical", "--data", data, "--out", d / "classical.json", "--seed", 3),
        ("predict", "--model-file", d / "two.json", "--data", data, "--out", d / "pred.csv"),
        ("evaluate", "--model-file", d / "two.json", "--data", data, "--out", d / "eval.json",
         "--roc-csv", d / "roc.csv", "--pp-csv", d / "pp.csv"),
        ("diagnose-chains", "--chain-a", ca, "--chain-b", cb, "--diagnfreq", 40, "--out", d / "diag.csv", "--seed", 3),
    ]
    for c in cmds:
        code, _ = run_cli(*c)
        assert code == 0, c
    return {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}
