"""Command line front end: CSV in, fitted model documents (JSON) and
sample tables (CSV) out.

Subcommands: fit, select, sample, pmf, describe, mixture, regress.  Exit
codes: 0 success, 2 data error, 3 fit or convergence failure, 64 usage
error, 65 document schema mismatch.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys

import numpy as np

from .compound import SplittingModel
from .fitting import MixtureModel, fit_mixture, fit_splitting, select_model
from .regression import SUM_FAMILIES, RegressionSpec, fit_regression
from .series import NonConvergenceError
from .simplex import DirichletMultinomial, Multinomial, MultivariateHypergeometric
from .sums import FAMILIES

SCHEMA_VERSION = "1"
SINGULAR_KINDS = ("multinomial", "dirichlet-multinomial", "hypergeometric")


class DataError(Exception):
    """Unreadable, malformed, or empty input data (exit 2)."""


class FitFailure(Exception):
    """No usable fit: non-convergence or a boundary maximum (exit 3)."""


class UsageError(Exception):
    """Bad flags, unknown families, or unsupported combinations (exit 64)."""


class SchemaError(Exception):
    """Model document with the wrong schema version or shape (exit 65)."""


# ---------------------------------------------------------------------------
# serialization

def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


_SINGULAR_FIELD = {
    "multinomial": "pi",
    "dirichlet-multinomial": "alpha",
    "hypergeometric": "k",
}

_SINGULAR_BUILDERS = {
    "multinomial": Multinomial,
    "dirichlet-multinomial": DirichletMultinomial,
    "hypergeometric": MultivariateHypergeometric,
}


def serialize_model(model):
    if isinstance(model, SplittingModel):
        field = _SINGULAR_FIELD[model.singular.kind]
        return {
            "type": "splitting",
            "singular": {
                "kind": model.singular.kind,
                "params": {field: _plain(getattr(model.singular, field))},
            },
            "sum": {
                "family": model.sum.family,
                "params": {k: _plain(v) for k, v in model.sum.params().items()},
                "shift": int(model.sum.shift),
            },
        }
    if isinstance(model, MixtureModel):
        return {
            "type": "mixture",
            "weights": _plain(model.weights),
            "components": [serialize_model(c) for c in model.components],
        }
    if isinstance(model, RegressionSpec):
        return {"type": "regression", **model.params()}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def parse_model(obj):
    try:
        kind = obj["type"]
        if kind == "splitting":
            sing = obj["singular"]
            builder = _SINGULAR_BUILDERS[sing["kind"]]
            field = _SINGULAR_FIELD[sing["kind"]]
            singular = builder(sing["params"][field])
            fam = obj["sum"]["family"]
            if fam not in FAMILIES:
                raise SchemaError(f"unknown sum family {fam!r} in document")
            total = FAMILIES[fam](**obj["sum"]["params"], shift=obj["sum"]["shift"])
            return SplittingModel(singular, total)
        if kind == "mixture":
            return MixtureModel(
                obj["weights"], [parse_model(c) for c in obj["components"]]
            )
        if kind == "regression":
            return RegressionSpec(
                obj["singular_coef"],
                obj["family"],
                obj["sum_coef"],
                obj.get("sum_aux"),
            )
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed model document: {exc}") from exc
    raise SchemaError(f"unknown model type {kind!r}")


def serialize_report(report):
    return {
        "loglik": report.loglik,
        "n_params": report.n_params,
        "bic": report.bic,
        "aic": report.aic,
        "converged": report.converged,
        "iterations": report.iterations,
        "flags": sorted(report.flags),
        "kind": report.kind,
        "family": report.family,
        "sample_size": report.sample_size,
        "loglik_path": [float(v) for v in report.loglik_path],
    }


def _file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def build_document(model, report, argv, data_path=None, seed=None):
    return {
        "schema_version": SCHEMA_VERSION,
        "model": serialize_model(model),
        "fit": serialize_report(report),
        "provenance": {
            "data_sha256": _file_sha256(data_path) if data_path else None,
            "seed": seed,
            "command": "splitcount " + " ".join(argv),
        },
    }


def _emit(text, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def write_document(doc, out_path):
    _emit(json.dumps(doc, indent=2) + "\n", out_path)


def load_document(path):
    try:
        with open(path, encoding="utf-8") as handle:
            doc = json.load(handle)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise SchemaError(f"{path} is not a model document")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(
            f"schema version {doc['schema_version']!r} not supported "
            f"(expected {SCHEMA_VERSION!r})"
        )
    return doc


def load_model(path):
    doc = load_document(path)
    if "model" not in doc:
        raise SchemaError(f"{path} has no model entry")
    return parse_model(doc["model"]), doc


# ---------------------------------------------------------------------------
# CSV ingestion

def _read_table(path):
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            lines = [(i + 1, row) for i, row in enumerate(csv.reader(handle)) if row]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"{path} is not UTF-8 text: {exc}") from exc
    if not lines:
        raise DataError("no observations")
    (_, header), body = lines[0], lines[1:]
    header = [name.strip() for name in header]
    if not body:
        raise DataError("no observations")
    width = len(header)
    for lineno, row in body:
        if len(row) != width:
            raise DataError(
                f"line {lineno}: expected {width} fields, got {len(row)}"
            )
    return header, body


def _is_count(cell):
    cell = cell.strip()
    return cell.isdigit()


def _column_indices(header, names, what):
    indices = []
    for name in names:
        if name not in header:
            raise DataError(f"{what} column {name!r} not found in header")
        indices.append(header.index(name))
    return indices


def _detect_count_columns(header, body):
    return [
        j
        for j in range(len(header))
        if all(_is_count(row[j]) for _, row in body)
    ]


def read_counts(path, response_cols=None):
    """Count rows from a CSV file; returns (matrix, column names, leftovers).

    Response columns are taken from ``response_cols`` (header names) when
    given, otherwise every all-integer column counts.
    """
    header, body = _read_table(path)
    if response_cols:
        indices = _column_indices(header, response_cols, "response")
    else:
        indices = _detect_count_columns(header, body)
    if len(indices) < 2:
        raise DataError(
            "need at least two count columns "
            "(use --response-cols to name them)"
        )
    rows = np.zeros((len(body), len(indices)), dtype=np.int64)
    for i, (lineno, row) in enumerate(body):
        for jj, j in enumerate(indices):
            cell = row[j].strip()
            if not _is_count(cell):
                raise DataError(
                    f"line {lineno}: column {header[j]!r} has "
                    f"non-count value {row[j]!r}"
                )
            rows[i, jj] = int(cell)
    others = [j for j in range(len(header)) if j not in indices]
    return rows, [header[j] for j in indices], (header, body, others)


def read_covariates(table, covariate_cols=None):
    """Float covariate matrix from the leftover columns of read_counts."""
    header, body, others = table
    if covariate_cols:
        indices = _column_indices(header, covariate_cols, "covariate")
    else:
        indices = others
    x = np.zeros((len(body), len(indices)))
    for i, (lineno, row) in enumerate(body):
        for jj, j in enumerate(indices):
            try:
                x[i, jj] = float(row[j])
            except ValueError as exc:
                raise DataError(
                    f"line {lineno}: column {header[j]!r} has "
                    f"non-numeric value {row[j]!r}"
                ) from exc
    return x, [header[j] for j in indices]


# ---------------------------------------------------------------------------
# shared option plumbing

def _check_singular(kind):
    if kind not in SINGULAR_KINDS:
        raise UsageError(
            f"unknown singular family {kind!r} "
            f"(choose from {', '.join(SINGULAR_KINDS)})"
        )


def _check_sum(family):
    if family not in FAMILIES:
        raise UsageError(
            f"unknown sum family {family!r} "
            f"(choose from {', '.join(sorted(FAMILIES))})"
        )


def _split_list(text):
    return [part.strip() for part in text.split(",") if part.strip()]


def _status(message):
    print(message, file=sys.stderr)


# ---------------------------------------------------------------------------
# commands

def cmd_fit(args, argv):
    _check_singular(args.singular)
    _check_sum(args.sum)
    if args.singular == "hypergeometric":
        raise UsageError("hypergeometric splits have no fitting routine")
    rows, names, _ = read_counts(args.data, args.response_cols)
    try:
        report = fit_splitting(
            args.singular,
            args.sum,
            rows,
            shift=args.shift,
            constrained=args.constraint == "canonical",
        )
    except NonConvergenceError as exc:
        raise FitFailure(str(exc)) from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    if report.model is None:
        raise FitFailure(
            f"fit has no usable maximum (flags: {', '.join(sorted(report.flags))})"
        )
    doc = build_document(report.model, report, argv, args.data, args.seed)
    write_document(doc, args.out)
    _status(
        f"fit {args.singular} + {args.sum} on {len(rows)} rows of "
        f"{', '.join(names)}: loglik {report.loglik:.6f}, bic {report.bic:.6f}"
    )
    return 0 if report.converged else 3


def cmd_select(args, argv):
    kinds = _split_list(args.singulars)
    families = _split_list(args.sums)
    for kind in kinds:
        _check_singular(kind)
    for family in families:
        _check_sum(family)
    if not kinds or not families:
        raise UsageError("need at least one singular and one sum family")
    rows, names, _ = read_counts(args.data, args.response_cols)
    try:
        results = select_model(
            rows, kinds=kinds, families=families, criterion=args.criterion
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    header = f"{'rank':>4}  {'singular':<22} {'sum':<28} {'k':>3} " \
             f"{'loglik':>14} {args.criterion:>14}  flags"
    print(header)
    for rank, report in enumerate(results, start=1):
        value = report.bic if args.criterion == "bic" else report.aic
        loglik = "-" if report.model is None else f"{report.loglik:.4f}"
        score = "-" if report.model is None else f"{value:.4f}"
        flags = ",".join(sorted(report.flags)) or "-"
        print(
            f"{rank:>4}  {report.kind:<22} {report.family:<28} "
            f"{report.n_params:>3} {loglik:>14} {score:>14}  {flags}"
        )
    if args.out:
        cells = []
        for report in results:
            entry = serialize_report(report)
            entry["model"] = (
                None if report.model is None else serialize_model(report.model)
            )
            cells.append(entry)
        payload = {
            "schema_version": SCHEMA_VERSION,
            "criterion": args.criterion,
            "results": cells,
            "provenance": {
                "data_sha256": _file_sha256(args.data),
                "seed": args.seed,
                "command": "splitcount " + " ".join(argv),
            },
        }
        _emit(json.dumps(payload, indent=2) + "\n", args.out)
    best = results[0]
    if best.model is None:
        raise FitFailure("every candidate fit failed")
    if args.best_out:
        write_document(
            build_document(best.model, best, argv, args.data, args.seed),
            args.best_out,
        )
    return 0


def cmd_sample(args, argv):
    model, _ = load_model(args.model)
    if isinstance(model, RegressionSpec):
        raise UsageError("sampling a regression needs covariates; not supported")
    rng = np.random.default_rng(args.seed)
    draws = np.atleast_2d(model.sample(rng, args.n))
    lines = [",".join(f"y{j + 1}" for j in range(draws.shape[1]))]
    lines += [",".join(str(int(v)) for v in row) for row in draws]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_pmf(args, argv):
    model, _ = load_model(args.model)
    if isinstance(model, RegressionSpec):
        raise UsageError("pmf of a regression needs covariates; not supported")
    try:
        point = [int(part) for part in _split_list(args.at)]
    except ValueError as exc:
        raise UsageError(f"--at must be a comma list of integers: {exc}") from exc
    if len(point) != model.dim:
        raise UsageError(
            f"--at names {len(point)} categories, model has {model.dim}"
        )
    value = float(model.joint_log_pmf(np.asarray(point, dtype=float)))
    print(repr(math.exp(value)) if args.prob else repr(value))
    return 0


def _describe_splitting(model, prefix=""):
    print(f"{prefix}split: {model.singular!r}")
    print(f"{prefix}sum: {model.sum!r}")
    lo, hi = model.sum.support()
    print(f"{prefix}total support: {lo}..{hi}")
    mean, cov = model.moments()
    print(f"{prefix}mean: {np.array2string(mean, precision=6)}")
    flat = np.array2string(cov, precision=6).replace("\n", "\n" + prefix + "  ")
    print(f"{prefix}covariance: {flat}")
    print(f"{prefix}graph: {model.graph_class().value}")
    for j in range(model.dim):
        print(f"{prefix}marginal {j + 1}: {model.marginal([j])!r}")


def cmd_describe(args, argv):
    model, _ = load_model(args.model)
    if isinstance(model, SplittingModel):
        _describe_splitting(model)
    elif isinstance(model, MixtureModel):
        print(f"mixture of {model.n_components} splitting models")
        for c, (weight, comp) in enumerate(zip(model.weights, model.components)):
            print(f"component {c + 1} (weight {weight:.6f}):")
            _describe_splitting(comp, prefix="  ")
    else:
        print(f"regression: {model!r}")
        print("split coefficients (one row per non-reference category):")
        for row in model.singular_coef:
            print("  " + np.array2string(row, precision=6))
        print(f"sum coefficients: {np.array2string(model.sum_coef, precision=6)}")
        if model.sum_aux is not None:
            print(f"sum auxiliary: {model.sum_aux}")
    return 0


def cmd_mixture(args, argv):
    _check_singular(args.singular)
    families = _split_list(args.allowed_sums)
    for family in families:
        _check_sum(family)
    rows, names, _ = read_counts(args.data, args.response_cols)
    grid = [int(part) for part in _split_list(args.components)]
    if not grid or any(k < 1 for k in grid):
        raise UsageError("--components must list positive integers")
    fits = []
    for k in sorted(set(grid)):
        try:
            model, report = fit_mixture(
                rows,
                k,
                kind=args.singular,
                families=families,
                shift=args.shift,
                seed=args.seed,
                n_restarts=args.restarts,
            )
        except (ValueError, NonConvergenceError) as exc:
            print(f"K={k}  failed: {exc}")
            continue
        print(
            f"K={k}  loglik {report.loglik:.6f}  bic {report.bic:.6f}"
            f"  converged {report.converged}"
        )
        fits.append((k, model, report))
    if not fits:
        raise FitFailure("no component count produced a fit")
    k, model, report = min(fits, key=lambda item: item[2].bic)
    _status(f"selected K={k} by bic")
    doc = build_document(model, report, argv, args.data, args.seed)
    doc["selection"] = [
        {"components": kk, "loglik": rr.loglik, "bic": rr.bic}
        for kk, _, rr in fits
    ]
    write_document(doc, args.out)
    return 0 if report.converged else 3


def cmd_regress(args, argv):
    if args.sum not in SUM_FAMILIES:
        raise UsageError(
            f"unknown regression sum family {args.sum!r} "
            f"(choose from {', '.join(SUM_FAMILIES)})"
        )
    if args.sum == "binomial" and args.trials is None:
        raise UsageError("binomial totals need --trials")
    rows, names, table = read_counts(args.data, args.response_cols)
    x, xnames = read_covariates(table, args.covariate_cols)
    try:
        spec, report = fit_regression(
            x, rows, family=args.sum, n=args.trials
        )
    except NonConvergenceError as exc:
        raise FitFailure(str(exc)) from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    doc = build_document(spec, report, argv, args.data, args.seed)
    doc["columns"] = {"response": names, "covariates": xnames}
    write_document(doc, args.out)
    _status(
        f"regressed {', '.join(names)} on "
        f"{', '.join(xnames) if xnames else 'intercept only'}: "
        f"loglik {report.loglik:.6f}"
    )
    return 0 if report.converged else 3


# ---------------------------------------------------------------------------
# parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _build_parser():
    parser = _Parser(
        prog="splitcount",
        description="Fit, compare, and evaluate splitting models for "
        "multivariate counts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def data_flags(p):
        p.add_argument("--data", required=True, help="CSV file with a header row")
        p.add_argument(
            "--response-cols",
            type=_split_list,
            default=None,
            help="comma list of count column names (default: every "
            "all-integer column)",
        )
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="write JSON here instead of stdout")
        p.add_argument(
            "--threads",
            type=int,
            default=os.cpu_count(),
            help="upper bound on worker threads (fits currently run serially)",
        )

    p_fit = sub.add_parser("fit", help="fit one splitting model")
    data_flags(p_fit)
    p_fit.add_argument("--singular", default="multinomial")
    p_fit.add_argument("--sum", default="poisson")
    p_fit.add_argument("--shift", type=int, default=0)
    p_fit.add_argument("--constraint", choices=("none", "canonical"), default="none")
    p_fit.set_defaults(func=cmd_fit)

    p_sel = sub.add_parser("select", help="rank kind/family grid by BIC or AIC")
    data_flags(p_sel)
    p_sel.add_argument("--singulars", default="multinomial,dirichlet-multinomial")
    p_sel.add_argument("--sums", default="poisson,negative-binomial")
    p_sel.add_argument("--criterion", choices=("bic", "aic"), default="bic")
    p_sel.add_argument("--best-out", default=None, help="write the winning model here")
    p_sel.set_defaults(func=cmd_select)

    p_sam = sub.add_parser("sample", help="draw rows from a fitted model")
    p_sam.add_argument("--model", required=True, help="model document (JSON)")
    p_sam.add_argument("--n", type=int, default=1)
    p_sam.add_argument("--seed", type=int, default=0)
    p_sam.add_argument("--out", default=None)
    p_sam.set_defaults(func=cmd_sample)

    p_pmf = sub.add_parser("pmf", help="evaluate the log-PMF at a point")
    p_pmf.add_argument("--model", required=True)
    p_pmf.add_argument("--at", required=True, help="point as y1,...,yJ")
    p_pmf.add_argument("--prob", action="store_true", help="print the probability")
    p_pmf.set_defaults(func=cmd_pmf)

    p_desc = sub.add_parser("describe", help="moments, graph, and marginals")
    p_desc.add_argument("--model", required=True)
    p_desc.set_defaults(func=cmd_describe)

    p_mix = sub.add_parser("mixture", help="EM mixture fit over component counts")
    data_flags(p_mix)
    p_mix.add_argument("--components", default="1", help="K or comma list of K")
    p_mix.add_argument("--singular", default="multinomial")
    p_mix.add_argument("--allowed-sums", default="poisson")
    p_mix.add_argument("--shift", type=int, default=0)
    p_mix.add_argument("--restarts", type=int, default=5)
    p_mix.set_defaults(func=cmd_mixture, seed=0)

    p_reg = sub.add_parser("regress", help="splitting regression on covariates")
    data_flags(p_reg)
    p_reg.add_argument("--sum", default="poisson")
    p_reg.add_argument(
        "--covariate-cols",
        type=_split_list,
        default=None,
        help="comma list of covariate columns (default: all non-response)",
    )
    p_reg.add_argument("--trials", type=int, default=None, help="binomial n")
    p_reg.set_defaults(func=cmd_regress)

    return parser


def main(argv=None):
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args, argv)
    except DataError as exc:
        _status(f"error: {exc}")
        return 2
    except FitFailure as exc:
        _status(f"error: {exc}")
        return 3
    except UsageError as exc:
        _status(f"error: {exc}")
        return 64
    except SchemaError as exc:
        _status(f"error: {exc}")
        return 65
    except NonConvergenceError as exc:
        _status(f"error: did not converge: {exc}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
