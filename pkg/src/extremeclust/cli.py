"""Command-line interface: simulate, standardize, select-order, fit, bounds, reproduce.

Exit codes: 0 success, 2 bad configuration, 3 bad input data, 4 degenerate result.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import ClusterConfig
from .errors import DegenerateResultError, DegenerateWarning, ExtremeClustError, InvalidInputError
from .extremes import (DataMatrix, SubsampleConfig, estimate_spectral, extract_extremal_subsample,
                       standardize_margins)
from .factor_models import (SCHEMES, FactorCoefficients, coefficients_from_spectral, dominant_factor,
                            random_model, row_normalize, simulate)
from .geometry import NormSpec, get_dissimilarity
from .order_selection import DEFAULT_T_GRID, delta_t, select_order, t_upper_bound
from .theory_bounds import (false_selection_rate_delta, large_deviation_rate,
                            monte_carlo_validate, rate_exponent)

SCHEMA_VERSION = 1
OUTPUT_ENV = "EXTREMECLUST_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DEGENERATE = 0, 2, 3, 4


class DataError(ExtremeClustError):
    """Unreadable or invalid input file."""


# ---------------------------------------------------------------------------
# file helpers

def read_csv(path) -> DataMatrix:
    """Read a numeric CSV with a header row."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if len(rows) < 2:
        raise DataError(f"{path}: need a header row and at least one data row")
    header, body = rows[0], rows[1:]
    vals = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 1} has {len(row)} fields, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                vals[i, j] = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric value {cell!r} at row {i + 1}, column {header[j]!r}") from None
    try:
        return DataMatrix(vals, header)
    except InvalidInputError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_csv(path, values, header) -> None:
    values = np.atleast_2d(np.asarray(values))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in values:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_records(path, records) -> None:
    if not records:
        return
    keys = list(records[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for rec in records:
            w.writerow([repr(rec[k]) if isinstance(rec[k], float) else rec[k] for k in keys])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (NormSpec, Path)):
        return str(obj)
    return obj


def write_report(path, kind: str, config: dict, result: dict) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind,
           "provenance": {"package": "extremeclust", "version": __version__, "config": config},
           "result": result}
    doc = _jsonable(doc)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


def read_model(b_path, alpha: float, model_type: str) -> FactorCoefficients:
    try:
        with open(b_path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        B = np.array([[float(c) for c in r] for r in rows[1:]])
    except (OSError, ValueError, IndexError) as exc:
        raise DataError(f"cannot read coefficient file {b_path}: {exc}") from None
    return FactorCoefficients(B, alpha, model_type)


# ---------------------------------------------------------------------------
# argument parsing helpers

def parse_m_range(text: str) -> list:
    try:
        if ".." in text:
            a, b = text.split("..")
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise InvalidInputError(f"bad --m-range {text!r}; use a..b") from None
    if lo < 1 or hi < lo:
        raise InvalidInputError(f"bad --m-range {text!r}")
    return list(range(lo, hi + 1))


def parse_t_grid(text: str) -> list:
    try:
        ts = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InvalidInputError(f"bad --t-grid {text!r}") from None
    if not ts or any(t < 0 for t in ts):
        raise InvalidInputError("--t-grid needs nonnegative values")
    return ts


def _outdir(args) -> Path:
    out = Path(args.output or os.environ.get(OUTPUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "output")}


def _subsample(args) -> SubsampleConfig:
    # "alpha" selects the alpha-norm, under which cluster proportions estimate p_j d = ||b_j||_alpha^alpha
    norm_r = NormSpec(args.alpha) if args.norm_r == "alpha" else NormSpec.parse(args.norm_r)
    return SubsampleConfig.parse(args.subsample, alpha=args.alpha,
                                 norm_r=norm_r, norm_s=NormSpec.parse(args.norm_s))


def _cluster_cfg(args) -> ClusterConfig:
    return ClusterConfig(restarts=args.restarts, seed=args.seed)


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(args) -> int:
    if args.scheme:
        model = random_model(args.scheme, args.seed, args.model_type)
    elif args.b_file:
        model = read_model(args.b_file, args.alpha, args.model_type)
    else:
        raise InvalidInputError("give --scheme or --b-file")
    if args.noise_alpha is not None:
        model = FactorCoefficients(model.B, model.alpha, model.model_type, args.noise_alpha, args.noise_scale)
    data = simulate(model, args.n, args.seed)
    out = _outdir(args)
    write_csv(out / "data.csv", data.values, data.column_names)
    write_csv(out / "model.csv", model.B, [f"b{j + 1}" for j in range(model.k)])
    write_report(out / "model.json", "model", _config(args),
                 {"alpha": model.alpha, "type": model.model_type, "noise_alpha": model.noise_alpha,
                  "noise_scale": model.noise_scale, "info": model.info})
    return EXIT_OK


def cmd_standardize(args) -> int:
    data = read_csv(args.input)
    std = standardize_margins(data, args.alpha)
    out = _outdir(args)
    write_csv(out / "standardized.csv", std.values, std.column_names)
    return EXIT_OK


def _load_subsample(args):
    data = read_csv(args.input)
    if args.standardize:
        data = standardize_margins(data, args.alpha)
    return extract_extremal_subsample(data, _subsample(args))


def cmd_select_order(args) -> int:
    spec = get_dissimilarity(args.dissim)
    W = _load_subsample(args)
    m_range = parse_m_range(args.m_range)
    if max(m_range) > W.size:
        print(f"warning: orders above |W| = {W.size} dropped", file=sys.stderr)
        m_range = [m for m in m_range if m <= W.size]
    rep = select_order(W, spec, m_range, parse_t_grid(args.t_grid), _cluster_cfg(args))
    out = _outdir(args)
    write_records(out / "scores.csv", rep.rows())
    result = rep.to_dict()
    result["subsample_size"] = W.size
    write_report(out / "select_order.json", "select-order", _config(args), result)
    return EXIT_OK


def _order_from_report(path, t) -> int:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        sel = doc["result"]["selected_order_per_t"]
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read order from {path}: {exc}") from None
    if t is None:
        positive = sorted((float(k), v) for k, v in sel.items() if float(k) > 0)
        if not positive:
            raise InvalidInputError("report has no t > 0; pass --k or --t")
        return int(positive[0][1])
    for key, v in sel.items():
        if float(key) == t:
            return int(v)
    raise InvalidInputError(f"t = {t} not in the report's t grid")


def cmd_fit(args) -> int:
    spec = get_dissimilarity(args.dissim)
    if args.k is None and args.from_report is None:
        raise InvalidInputError("give --k or --from-report")
    k = args.k if args.k is not None else _order_from_report(args.from_report, args.t)
    W = _load_subsample(args)
    est = estimate_spectral(W, k, spec, _cluster_cfg(args))
    d = W.dim
    B = row_normalize(coefficients_from_spectral(est, args.alpha, d), args.alpha)
    out = _outdir(args)
    write_csv(out / "B_hat.csv", B.B, [f"b{j + 1}" for j in range(B.k)])
    write_report(out / "fit.json", "fit", _config(args),
                 {"k": k, "atoms": est.atoms, "probs": est.probs, "B": B.B,
                  "dominant_factor": dominant_factor(B).tolist(), "subsample_size": W.size})
    return EXIT_OK


def cmd_bounds(args) -> int:
    result = {}
    if args.r_a is not None:
        if args.p_min is None or args.k is None:
            raise InvalidInputError("--r-a needs --p-min and --k")
        t0 = t_upper_bound(args.r_a, args.p_min, args.k)
        result["t0"] = t0
        if args.t is not None:
            result["delta_t"] = delta_t(args.r_a, args.p_min, args.k, args.t)
            res = false_selection_rate_delta(args.k, args.p_min, args.r_a, args.t, full=True)
            result["false_selection_delta"] = {"delta": res.delta, "residual": res.residual, "rate": res.rate}
        if args.x is not None:
            if args.y is None or args.eps0 is None:
                raise InvalidInputError("--x needs --y and --eps0")
            dl = large_deviation_rate(args.x, args.y, args.k, args.p_min, args.r_a, args.eps0)
            result["large_deviation"] = {"Delta": dl, "rate": rate_exponent(dl)}
    if args.hoeffding:
        try:
            n, q1, q2, r = args.hoeffding.split(",")
            params = {"n": int(n), "q1": float(q1), "q2": float(q2), "r": float(r), "side": args.side}
        except ValueError:
            raise InvalidInputError("--hoeffding expects n,q1,q2,r") from None
        rep = monte_carlo_validate("hoeffding", params, replicates=args.replicates, seed=args.seed)
        result["hoeffding"] = rep.to_dict()
    if not result:
        raise InvalidInputError("nothing to compute; give --r-a/--p-min/--k and/or --hoeffding")
    out = _outdir(args)
    write_report(out / "bounds.json", "bounds", _config(args), result)
    return EXIT_OK


def _reproduce_one(scheme, seq, n, sub, m_range, t_grid, restarts):
    model_seed, data_seed, cl_seed = (int(x) for x in seq.generate_state(3, dtype=np.uint32))
    model = random_model(scheme, model_seed)
    W = extract_extremal_subsample(simulate(model, n, data_seed), sub)
    rows = []
    for name in ("cos", "pc"):
        rep = select_order(W, get_dissimilarity(name), m_range, t_grid,
                           ClusterConfig(restarts=restarts, seed=cl_seed))
        rows.append(rep.selected_order_per_t)
    return rows


def reproduce(scheme: str, replicates: int, seed: int, n: int = 10_000, top: int = 1000,
              m_range=range(1, 11), t_grid=DEFAULT_T_GRID, restarts: int = 5, workers: int = 1):
    """Order-selection study over random models of one scheme.

    Returns (labels, matrix, k_true): matrix[row, j] is the order chosen for
    replicate j, rows ordered as (algorithm, t) in ``labels``.
    """
    if scheme not in SCHEMES:
        raise InvalidInputError(f"unknown scheme {scheme!r}")
    if not 0 < top < n:
        raise InvalidInputError("need 0 < top < n")
    sub = SubsampleConfig(fraction=top / n)
    m_range, t_grid = list(m_range), list(t_grid)
    seqs = np.random.SeedSequence(seed).spawn(replicates)
    job = lambda s: _reproduce_one(scheme, s, n, sub, m_range, t_grid, restarts)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                results = list(pool.map(job, seqs))
        else:
            results = [job(s) for s in seqs]
    labels = [f"{alg}:t={t:g}" for alg in ("cos", "pc") for t in t_grid]
    mat = np.array([[res[a][j] for res in results] for a in range(2) for j in range(len(t_grid))], dtype=int)
    k_true = int(scheme.split("k")[1])
    return labels, mat, k_true


def cmd_reproduce(args) -> int:
    t_grid = parse_t_grid(args.t_grid)
    labels, mat, k_true = reproduce(args.scheme, args.replicates, args.seed, args.n, args.top,
                                    parse_m_range(args.m_range), t_grid, args.restarts, args.workers)
    out = _outdir(args)
    with open(out / "selection_matrix.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row"] + [f"rep{j + 1}" for j in range(mat.shape[1])])
        for lab, row in zip(labels, mat):
            w.writerow([lab] + row.tolist())
    success = {lab: float(np.mean(row == k_true)) for lab, row in zip(labels, mat)}
    write_report(out / "reproduce.json", "reproduce", _config(args),
                 {"k_true": k_true, "rows": labels, "success_rate": success,
                  "success_count": {lab: int(np.sum(row == k_true)) for lab, row in zip(labels, mat)}})
    return EXIT_OK


# ---------------------------------------------------------------------------

def _add_common(p, seed=True):
    p.add_argument("--output", help=f"output directory (default ${OUTPUT_ENV} or .)")
    if seed:
        p.add_argument("--seed", type=int, required=True)


def _add_subsample(p, norm_r="p:2"):
    p.add_argument("--input", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--norm-r", default=norm_r, help="p:<x>, sup, or alpha")
    p.add_argument("--norm-s", default="p:2")
    p.add_argument("--dissim", choices=("cos", "pc"), default="cos")
    p.add_argument("--subsample", default="frac:0.1", help="frac:<q> or ell:<n>")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--standardize", action="store_true", help="rank-standardize margins first")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="extremeclust", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a factor model")
    _add_common(p)
    p.add_argument("--scheme", choices=sorted(SCHEMES))
    p.add_argument("--b-file")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--model-type", choices=("max", "sum"), default="max")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--noise-alpha", type=float)
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("standardize", help="rank-transform margins to alpha-Frechet")
    _add_common(p, seed=False)
    p.add_argument("--input", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.set_defaults(func=cmd_standardize)

    p = sub.add_parser("select-order", help="penalized silhouette scores over candidate orders")
    _add_common(p)
    _add_subsample(p)
    p.add_argument("--m-range", default="1..10")
    p.add_argument("--t-grid", default=",".join(f"{t:g}" for t in DEFAULT_T_GRID))
    p.set_defaults(func=cmd_select_order)

    p = sub.add_parser("fit", help="estimate the spectral measure and the coefficient matrix")
    _add_common(p)
    _add_subsample(p, norm_r="alpha")
    p.add_argument("--k", type=int)
    p.add_argument("--from-report")
    p.add_argument("--t", type=float)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bounds", help="closed-form bounds and Monte Carlo checks")
    _add_common(p, seed=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--r-a", type=float)
    p.add_argument("--p-min", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--x", type=float)
    p.add_argument("--y", type=float)
    p.add_argument("--eps0", type=float)
    p.add_argument("--hoeffding", help="n,q1,q2,r")
    p.add_argument("--side", choices=("upper", "lower"), default="upper")
    p.add_argument("--replicates", type=int, default=100_000)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("reproduce", help="order-selection study over random models")
    _add_common(p)
    p.add_argument("--scheme", choices=sorted(SCHEMES), required=True)
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--top", type=int, default=1000)
    p.add_argument("--m-range", default="1..10")
    p.add_argument("--t-grid", default=",".join(f"{t:g}" for t in DEFAULT_T_GRID))
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DegenerateResultError as exc:
        print(f"degenerate result: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except InvalidInputError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
