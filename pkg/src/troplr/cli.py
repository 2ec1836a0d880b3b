"""Command-line interface: ``troplr <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data or I/O error.  Every
stochastic command takes ``--seed``; equal seeds give byte-identical output.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from ._rng import stream
from .chains import diagnose, read_chain
from .core import normalize, trop_distance
from .evaluation import (
    class_error_rates,
    gamma_fit_diagnostic,
    misclassification_rate,
    one_species_error,
    roc_and_auc,
    two_species_upper_bound,
)
from .fermat_weber import FWConfig, fw_solve
from .regression import (
    OneSpeciesModel,
    TwoSpeciesModel,
    decision_function,
    fit_classical_baseline,
    fit_one_species,
    fit_two_species,
    load_model,
    predict_proba,
    save_model,
)
from .sampling import SpeciesTree, TropicalLaplace, msc_gene_tree, sample_points, yule_tree
from .treeio import Dataset, format_float, read_dataset, write_dataset

log = logging.getLogger("troplr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


@contextlib.contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _read_data(path):
    with open(path) as fh:
        try:
            return read_dataset(fh)
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from None


def _dump_json(obj, fh):
    json.dump(obj, fh, indent=2, sort_keys=True)
    fh.write("\n")


def _ratio_tag(r):
    return format_float(r).replace(".", "p")


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(args):
    if args.leaves < 4:
        raise UsageError("--leaves must be >= 4")
    if args.per_class < 1:
        raise UsageError("--per-class must be >= 1")
    if not args.ratios or any(r <= 0 for r in args.ratios):
        raise UsageError("--ratios must be a nonempty list of positive numbers")
    os.makedirs(args.out_dir, exist_ok=True)
    written = []
    for R in args.ratios:
        species = []
        for k in (0, 1):
            t = yule_tree(args.leaves, args.birth_rate, stream(args.seed, "species", format_float(R), k))
            species.append(SpeciesTree.with_ratio(t, R, args.pop_size))
        trees, labels = [], []
        for k in (0, 1):
            rng = stream(args.seed, "genes", format_float(R), k)
            for _ in range(args.per_class):
                trees.append(msc_gene_tree(species[k], rng))
                labels.append(k)
        ds = Dataset.from_trees(trees, labels)
        base = os.path.join(args.out_dir, f"coalescent_R{_ratio_tag(R)}")
        with open(base + ".csv", "w", newline="") as fh:
            write_dataset(ds, fh)
        meta = {
            "m": args.leaves,
            "e": ds.e,
            "R": R,
            "N": args.pop_size,
            "species_depth": R * args.pop_size,
            "birth_rate": args.birth_rate,
            "per_class": args.per_class,
            "seed": args.seed,
            "species_trees": [s.tree.newick() for s in species],
            "leaf_order": list(ds.leaf_order),
        }
        with open(base + ".json", "w") as fh:
            _dump_json(meta, fh)
        if args.newick:
            with open(base + ".nwk", "w") as fh:
                for t in trees:
                    fh.write(t.newick() + "\n")
        written.append(base + ".csv")
        log.info("wrote %s", base + ".csv")
    return 0


def cmd_sample(args):
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    if args.sigma <= 0:
        raise UsageError("--sigma must be positive")
    dist = TropicalLaplace(normalize(args.center), args.sigma)
    X = sample_points(dist, args.n, stream(args.seed, "sample"))
    with _output(args.out) as fh:
        write_dataset(Dataset(X, np.full(args.n, args.label)), fh)
    return 0


def _fw_config(args):
    return FWConfig(seed=args.seed)


def cmd_fw(args):
    ds = _read_data(args.data)
    X = ds.X if args.label is None else ds.by_class(args.label)
    if X.shape[0] == 0:
        raise ValueError(f"{args.data}: no rows with label {args.label}")
    res = fw_solve(X, _fw_config(args))
    out = {
        "point": list(res.point.coords),
        "objective": res.objective,
        "certified": res.certified,
        "iterations": res.iterations,
        "final_gradient": None if res.final_gradient is None else [int(g) for g in res.final_gradient],
        "n": int(X.shape[0]),
        "e": int(X.shape[1]),
    }
    with _output(args.out) as fh:
        _dump_json(out, fh)
    return 0


def cmd_fit(args):
    ds = _read_data(args.data)
    prior = "empirical" if args.prior == "empirical" else 0.5
    if args.model == "one":
        model = fit_one_species(ds, _fw_config(args), prior=prior)
    elif args.model == "two":
        model = fit_two_species(ds, _fw_config(args), prior=prior)
    else:
        model = fit_classical_baseline(ds, prior=prior)
    with _output(args.out) as fh:
        save_model(model, fh)
    return 0


def _load(path):
    with open(path) as fh:
        try:
            return load_model(fh)
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}: invalid model file: {exc}") from None


def _check_dims(model, ds, path):
    if model.e != ds.e:
        raise ValueError(f"{path}: data has {ds.e} columns but the model expects {model.e}")


def cmd_predict(args):
    model = _load(args.model_file)
    ds = _read_data(args.data)
    _check_dims(model, ds, args.data)
    p = np.atleast_1d(predict_proba(model, ds.X))
    h = np.atleast_1d(decision_function(model, ds.X))
    with _output(args.out) as fh:
        fh.write("row,probability,class\n")
        for k, (pk, hk) in enumerate(zip(p, h)):
            fh.write(f"{k},{format_float(pk)},{int(hk >= 0)}\n")
    return 0


def _centers(model):
    if isinstance(model, TwoSpeciesModel):
        return {0: model.omega0, 1: model.omega1}
    if isinstance(model, OneSpeciesModel):
        return {0: model.omega, 1: model.omega}
    return {}


def cmd_evaluate(args):
    model = _load(args.model_file)
    ds = _read_data(args.data)
    _check_dims(model, ds, args.data)
    scores = np.atleast_1d(decision_function(model, ds.X))
    out = {"n": ds.n, "e": ds.e, "error": misclassification_rate(model, ds)}
    roc = None
    if set(np.unique(ds.y).tolist()) == {0, 1}:
        roc = roc_and_auc(scores, ds.y)
        out["auc"] = roc.auc
        r0, r1 = class_error_rates(model, ds)
        out["error_class0"], out["error_class1"] = r0, r1
    else:
        out["auc"] = None
    if isinstance(model, TwoSpeciesModel):
        d = trop_distance(model.omega0, model.omega1)
        out["bound"] = {"kind": "two_species_upper_bound", "d_centers": d, "sigma": model.sigma,
                        "value": two_species_upper_bound(model.e, d, model.sigma)}
    elif isinstance(model, OneSpeciesModel):
        c0, c1, mean = one_species_error(model.e, model.sigma0, model.sigma1, 0.0)
        out["bound"] = {"kind": "one_species_error", "tight_class_rate": c0[0],
                        "dispersed_class_rate": c1[0], "value": mean[0]}
    else:
        out["bound"] = None
    fits = {}
    pp_rows = []
    for label, center in _centers(model).items():
        X = ds.by_class(label)
        if X.shape[0] == 0:
            continue
        fit = gamma_fit_diagnostic(X, center, "tropical", "laplace")
        fits[str(label)] = {"sigma_hat": fit.sigma_hat, "ks": fit.ks_statistic}
        pp_rows += [(label, a, b) for a, b in fit.pp_points]
    out["radius_fit"] = fits or None
    with _output(args.out) as fh:
        _dump_json(out, fh)
    if args.roc_csv and roc is not None:
        with open(args.roc_csv, "w") as fh:
            fh.write("threshold,fpr,tpr\n")
            for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr):
                fh.write(f"{'inf' if math.isinf(t) else format_float(t)},{format_float(f)},{format_float(p)}\n")
    if args.pp_csv:
        with open(args.pp_csv, "w") as fh:
            fh.write("class,theoretical,empirical\n")
            for label, a, b in pp_rows:
                fh.write(f"{label},{format_float(a)},{format_float(b)}\n")
    return 0


def cmd_diagnose(args):
    if args.diagnfreq < 1:
        raise UsageError("--diagnfreq must be >= 1")
    if not 0 < args.frac <= 1:
        raise UsageError("--frac must lie in (0, 1]")
    chains = []
    for path in (args.chain_a, args.chain_b):
        with open(path) as fh:
            text = fh.read()
        try:
            chains.append(read_chain(text))
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from None
    rows = diagnose(chains[0], chains[1], args.diagnfreq, frac=args.frac, min_freq=args.min_freq,
                    seed=args.seed, sd=args.sd, threads=args.threads)
    with _output(args.out) as fh:
        fh.write("iteration,asdsf,auc\n")
        for it, a, u in rows:
            fh.write(f"{it},{format_float(a)},{format_float(u)}\n")
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="troplr", description="Tropical logistic regression on phylogenetic tree space. "
                "All configuration is given by flags; no config files or environment variables are read.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def seed(sp):
        sp.add_argument("--seed", type=int, default=0, help="random seed (default 0)")

    s = sub.add_parser("simulate", help="coalescent gene-tree datasets for a sweep of R = depth/N")
    s.add_argument("--leaves", type=int, default=10)
    s.add_argument("--per-class", type=int, default=1000)
    s.add_argument("--ratios", type=_floats, default=[0.1, 1.0, 10.0], help="comma-separated R values")
    s.add_argument("--pop-size", type=float, default=1.0)
    s.add_argument("--birth-rate", type=float, default=1.0)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--newick", action="store_true", help="also write the gene trees as Newick")
    seed(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sample", help="draw points from a tropical Laplace distribution")
    s.add_argument("--center", type=_floats, required=True, help="comma-separated coordinates")
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--label", type=int, choices=(0, 1), default=0)
    s.add_argument("--out")
    seed(s)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("fw", help="Fermat-Weber point of a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--label", type=int, choices=(0, 1), help="use only rows with this label")
    s.add_argument("--out")
    seed(s)
    s.set_defaults(func=cmd_fw)

    s = sub.add_parser("fit", help="fit a classifier and write it as JSON")
    s.add_argument("--model", choices=("one", "two", "classical"), required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--prior", choices=("half", "empirical"), default="half")
    s.add_argument("--out")
    seed(s)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="per-row probability of class 1 and predicted class")
    s.add_argument("--model-file", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="AUC, error rates and theoretical error values")
    s.add_argument("--model-file", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out")
    s.add_argument("--roc-csv")
    s.add_argument("--pp-csv")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("diagnose-chains", help="ASDSF and AUC convergence diagnostics for two chains")
    s.add_argument("--chain-a", required=True)
    s.add_argument("--chain-b", required=True)
    s.add_argument("--diagnfreq", type=int, required=True)
    s.add_argument("--frac", type=float, default=0.3)
    s.add_argument("--min-freq", type=float, default=0.1)
    s.add_argument("--sd", choices=("sample", "population"), default="sample")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out")
    seed(s)
    s.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"troplr: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"troplr: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
