"""Command-line interface: ``quantgp {fit,predict,evaluate,summary,simulate}``.

Exit status is 0 on success, 2 for bad input and 3 when a numerical
step (a Cholesky factorization, typically) fails.
"""

import argparse
import csv
import logging
import sys
import warnings

import numpy as np

from .curves import eval_quantile, quantile_to_cdf_values
from .data import load_dataset, preprocess, write_dataset
from .evaluate import evaluate
from .lmgp import VARIANTS, EMConfig
from .metrics import DEFAULT_PROBS, summary_stats
from .model import fit_model, load_model, predict_distribution, save_model
from .simulate import SimulationSpec, load_spec, simulate

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class InputError(Exception):
    pass


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _names(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _is_float(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def infer_schema(path, outcome=None):
    """Guess column roles: outcome ``y`` (or the last column), numeric if every cell parses."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    if not header:
        raise InputError(f"{path}: missing header row")
    outcome = outcome or ("y" if "y" in header else header[-1])
    numeric, categorical = [], []
    for col in header:
        if col == outcome:
            continue
        if rows and all(_is_float(r[col]) for r in rows):
            numeric.append(col)
        else:
            categorical.append(col)
    return numeric, categorical, outcome


def _parse_transforms(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise InputError(f"transform must look like column=log2, got {item!r}")
        col, kind = item.split("=", 1)
        out[col.strip()] = kind.strip()
    return out


def _read_data(args):
    numeric, categorical, outcome = infer_schema(args.data, args.outcome)
    if args.numeric is not None:
        numeric = args.numeric
    if args.categorical is not None:
        categorical = args.categorical
    ds = load_dataset(args.data, numeric, categorical, outcome)
    transforms = _parse_transforms(args.transform)
    if transforms or args.outcome_scale is not None:
        ds = preprocess(ds, transforms, args.outcome_scale)
    return ds


def _config(args):
    return EMConfig(max_iter=args.max_iter, tol=args.tol, inner_maxiter=args.inner_maxiter)


def _parse_points(model, at):
    """Configurations from ``name=value,...`` or from a CSV file with named columns."""
    names = list(model.numeric_names) + list(model.categorical_names)
    if "=" in at:
        rows = [dict(kv.split("=", 1) for kv in at.split(","))]
    else:
        with open(at, newline="") as fh:
            rows = list(csv.DictReader(fh))
    points = []
    for row in rows:
        row = {k.strip(): v.strip() for k, v in row.items()}
        missing = [c for c in names if c not in row]
        if missing:
            raise InputError(f"configuration is missing {missing}")
        try:
            x = [float(row[c]) for c in model.numeric_names]
        except ValueError as exc:
            raise InputError(f"non-numeric factor value: {exc}") from None
        z = tuple(row[c] for c in model.categorical_names)
        points.append((x, z))
    if not points:
        raise InputError("no configurations given")
    return points


def _fmt(v):
    return f"{v:.10g}"


def cmd_fit(args, out):
    ds = _read_data(args)
    model = fit_model(ds, args.variant, n_components=args.dprime, svd_threshold=args.svd_threshold,
                      order=args.order, num_knots=args.knots, config=_config(args))
    save_model(model, args.out)
    conv = sum(c.converged for c in model.components)
    out.write(f"fitted {args.variant} on {len(ds)} configurations, {len(model.categories)} "
              f"categories, d'={model.n_components} ({conv} converged); saved to {args.out}\n")


def cmd_predict(args, out):
    model = load_model(args.model)
    probs = np.linspace(0.0, 1.0, args.grid) if args.probs is None else np.array(args.probs)
    for x, z in _parse_points(model, args.at):
        res = predict_distribution(x, z, model, p_grid=probs)
        q = res["quantiles"]
        lo, hi = eval_quantile(res["fit"], model.basis, np.array([0.0, 1.0]))
        y = np.linspace(lo, hi, args.grid) if hi > lo else np.array([lo])
        F = quantile_to_cdf_values(res["fit"], model.basis, y)
        label = ",".join([f"{n}={_fmt(v)}" for n, v in zip(model.numeric_names, x)]
                         + [f"{n}={v}" for n, v in zip(model.categorical_names, z)])
        out.write(f"# configuration {label}\n# quantile\np,quantile\n")
        out.writelines(f"{_fmt(p)},{_fmt(v)}\n" for p, v in zip(probs, q))
        out.write("# cdf\ny,cdf\n")
        out.writelines(f"{_fmt(a)},{_fmt(b)}\n" for a, b in zip(y, F))


def cmd_summary(args, out):
    model = load_model(args.model)
    out.write("configuration,mean,sd," + ",".join(f"q{p:g}" for p in args.probs) + "\n")
    for x, z in _parse_points(model, args.at):
        res = predict_distribution(x, z, model, p_grid=[0.0])
        st = summary_stats(res["fit"], model.basis, args.probs)
        label = " ".join([_fmt(v) for v in x] + list(z))
        out.write(",".join([label, _fmt(st.mean), _fmt(st.sd)] + [_fmt(q) for q in st.quantiles])
                  + "\n")


def cmd_evaluate(args, out):
    ds = _read_data(args)
    for v in args.variants:
        if v not in VARIANTS:
            raise InputError(f"unknown variant {v!r}; choose from {', '.join(VARIANTS)}")
    rep = evaluate(ds, args.variants, args.train_props, args.repeats, args.seed,
                   n_components=args.dprime, svd_threshold=args.svd_threshold, order=args.order,
                   num_knots=args.knots, config=_config(args))
    out.write(rep.to_text())
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write(rep.to_csv())
    else:
        out.write("\n" + rep.to_csv())


def cmd_simulate(args, out):
    spec = load_spec(args.spec) if args.spec else SimulationSpec()
    ds, _ = simulate(spec, args.seed)
    write_dataset(ds, args.out)
    out.write(f"wrote {len(ds)} configurations x {spec.replicates} replicates to {args.out}\n")


def _add_data_args(p):
    p.add_argument("data", help="long-format CSV, one row per replicate")
    p.add_argument("--numeric", type=_names, help="numeric factor columns (default: inferred)")
    p.add_argument("--categorical", type=_names, help="categorical factor columns (default: inferred)")
    p.add_argument("--outcome", help="outcome column (default: y, else the last column)")
    p.add_argument("--transform", action="append", metavar="COL=log2",
                   help="numeric transform, repeatable")
    p.add_argument("--outcome-scale", type=float, help="multiply outcomes by this factor")


def _add_model_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--dprime", type=int, default=12, help="number of SVD components (default 12)")
    g.add_argument("--svd-threshold", type=float, help="pick d' by singular value coverage")
    p.add_argument("--knots", type=int, default=20, help="interior knots (default 20)")
    p.add_argument("--order", type=int, default=3, help="spline order (default 3)")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--inner-maxiter", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)


def build_parser():
    parser = argparse.ArgumentParser(prog="quantgp",
                                     description="Predict outcome distributions from configurations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model and save it as JSON")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--variant", choices=VARIANTS, default="lmgp-s")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="quantile and CDF tables at new configurations")
    p.add_argument("model")
    p.add_argument("--at", required=True, help="name=value,... or a CSV of configurations")
    p.add_argument("--probs", type=_floats)
    p.add_argument("--grid", type=int, default=101)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="repeated train/test EL1 study")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--variants", type=_names, default=["gp", "cgp", "lmgp", "lmgp-s"])
    p.add_argument("--train-props", type=_floats, default=[0.3, 0.4, 0.5, 0.6, 0.7])
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="write the per-split CSV here instead of stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("summary", help="mean, sd and quantiles at configurations")
    p.add_argument("model")
    p.add_argument("--at", required=True)
    p.add_argument("--probs", type=_floats, default=list(DEFAULT_PROBS))
    p.set_defaults(func=cmd_summary)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--spec", help="JSON file of generator settings")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command == "predict" and args.grid < 2:
        parser.error("--grid must be at least 2")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            args.func(args, out)
    except np.linalg.LinAlgError as exc:
        print(f"quantgp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, ValueError, KeyError, OSError) as exc:
        print(f"quantgp: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
