"""Command-line interface: fit, predict, scores, reconstruct, bandwidth, simulate.

Datasets are JSON lines: a header object first (domains, space, geometry),
then one object per observation.  All failures print a machine-readable JSON
diagnostic on stderr and exit with a documented code:

* 0 success
* 1 unexpected failure
* 2 input parse error (reported with its line number)
* 3 invariant violation (positivity, normalization, space mismatch, domain)
* 4 condition (A) / coverage failure
* 5 iteration did not converge

Given identical inputs, flags and seed, every output file is byte-identical
across runs.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import backfit
from . import bandwidth as bwmod
from . import densrec, report, scores, simulate
from .errors import (
    BandwidthTooSmallError,
    ConditionAError,
    ConvergenceError,
    CutLocusError,
    DomainError,
    HilbertSbfError,
    InvariantError,
    NumericOverflowError,
    ParseError,
    SpaceMismatchError,
)
from .kernels import Domain, GridSpec
from .spaces import (
    EuclideanSpace,
    HilbertElement,
    SimplexSpace,
    space_from_json,
)
from .sphere import circle_grid, sphere2_grid


def _read_jsonl(path):
    """Yield (line_number, parsed object) for every nonempty line."""
    try:
        fh = open(path)
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                yield lineno, json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed JSON ({exc.msg})", line=lineno) from exc


def _parse_domain_flag(values) -> dict[int, Domain]:
    out = {}
    for spec in values or []:
        try:
            jpart, bounds = spec.split("=", 1)
            j = int(jpart)
            pairs = []
            for axis in bounds.split(","):
                lo, hi = axis.split(":")
                pairs.append((float(lo), float(hi)))
            out[j - 1] = Domain(tuple(pairs))
        except (ValueError, InvariantError) as exc:
            raise ParseError(f"bad --domain {spec!r}: {exc}") from exc
    return out


def _parse_space_flag(text):
    if text is None:
        return None
    try:
        kind, dim = text.split(":")
        if kind == "euclidean":
            return EuclideanSpace(int(dim))
        if kind == "simplex":
            return SimplexSpace(int(dim))
    except (ValueError, InvariantError) as exc:
        raise ParseError(f"bad --space {text!r}: {exc}") from exc
    raise ParseError(
        f"bad --space {text!r}: inline spaces are euclidean:k or simplex:k; "
        "grid spaces must come from the input header"
    )


def _parse_grid_flag(text, domains):
    if text is None:
        return backfit.default_grids(domains)
    parts = text.split(",")
    if len(parts) == 1:
        parts = parts * len(domains)
    if len(parts) != len(domains):
        raise ParseError(f"--grid needs 1 or {len(domains)} entries, got {len(parts)}")
    grids = []
    for part, dom in zip(parts, domains):
        sizes = [int(s) for s in part.split("x")]
        if len(sizes) == 1:
            sizes = sizes * dom.ndim
        if len(sizes) != dom.ndim:
            raise ParseError(f"--grid entry {part!r} does not match domain dimension {dom.ndim}")
        grids.append(GridSpec.for_domain(dom, sizes))
    return grids


def _read_predictors_csv(path):
    try:
        with open(path) as fh:
            next(fh)  # header row of score names
            return np.array([
                [float(v) for v in line.strip().split(",")]
                for line in fh if line.strip()
            ])
    except (OSError, ValueError) as exc:
        raise ParseError(f"cannot read predictors CSV {path}: {exc}") from exc


def _load_regression(path, args):
    rows = _read_jsonl(path)
    try:
        first_line, header = next(rows)
    except StopIteration:
        raise ParseError("empty input file") from None
    if "predictors" in header:
        raise ParseError("first line must be a header object with domains/space",
                         line=first_line)
    csv_predictors = None
    if getattr(args, "predictors_csv", None):
        csv_predictors = _read_predictors_csv(args.predictors_csv)
    domains = [Domain.from_json(d) for d in header.get("domains", [])]
    for j, dom in _parse_domain_flag(args.domain).items():
        if j >= len(domains):
            domains.extend([None] * (j + 1 - len(domains)))
        domains[j] = dom
    if not domains or any(d is None for d in domains):
        raise ParseError("no domains given (header 'domains' or --domain)")
    space = _parse_space_flag(getattr(args, "space", None))
    if space is None:
        if "space" not in header:
            raise ParseError("no space given (header 'space' or --space)")
        space = space_from_json(header["space"])
    total = sum(d.ndim for d in domains)
    preds, coords = [], []
    for lineno, obj in rows:
        try:
            resp = obj["response"]
            c = np.asarray(resp["coeffs"] if isinstance(resp, dict) else resp, dtype=float)
            if csv_predictors is not None:
                if len(preds) >= csv_predictors.shape[0]:
                    raise ParseError("more observations than predictors-CSV rows",
                                     line=lineno)
                x = csv_predictors[len(preds)]
            else:
                x = np.asarray(obj["predictors"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad observation object: {exc}", line=lineno) from exc
        if x.shape != (total,):
            raise ParseError(f"expected {total} predictor values, got {x.shape}", line=lineno)
        element = HilbertElement(space, c)  # validates the response invariants
        preds.append(x)
        coords.append(space.to_coords(element.coeffs))
    if not preds:
        raise ParseError("no observations after the header")
    if csv_predictors is not None and csv_predictors.shape[0] != len(preds):
        raise ParseError(
            f"predictors CSV has {csv_predictors.shape[0]} rows, input has {len(preds)}"
        )
    pred = np.vstack(preds)
    split, pos = [], 0
    for dom in domains:
        split.append(pred[:, pos : pos + dom.ndim])
        pos += dom.ndim
    return backfit.RegressionData.from_coords(split, np.vstack(coords), domains, space)


def _resolve_bandwidths(args, data, grids):
    text = args.bandwidth
    if text == "cbs":
        config = bwmod.default_config(
            data, grids, rule=args.rule, folds=args.folds, seed=args.seed,
            tol=args.tol, max_iter=args.max_iter,
        )
        return bwmod.cbs_select(data, config, grids)
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ParseError(f"bad --bandwidth {text!r}: {exc}") from exc
    if len(values) == 1:
        values = values * data.d
    if len(values) != data.d:
        raise ParseError(f"--bandwidth needs 1 or {data.d} values")
    return np.asarray(values)


def cmd_fit(args) -> int:
    data = _load_regression(args.input, args)
    grids = _parse_grid_flag(args.grid, data.domains)
    selected = _resolve_bandwidths(args, data, grids)
    cbs = isinstance(selected, bwmod.CbsResult)
    bandwidths = selected.bandwidths if cbs else selected
    fit = backfit.fit(data, bandwidths, grids, tol=args.tol, max_iter=args.max_iter,
                      init=args.init)
    written = report.write_fit(fit, args.output, figures=not args.no_figures)
    if cbs:
        written += report.write_bandwidth(selected, args.output,
                                          figures=not args.no_figures)
    print(json.dumps({
        "bandwidths": [report.fmt(h) for h in bandwidths],
        "iterations": fit.iterations,
        "residual": report.fmt(fit.residual),
        "written": written,
    }, sort_keys=True))
    return 0


def _fit_from_json(path) -> backfit.SbfFit:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed fit JSON: {exc.msg}", line=exc.lineno) from exc
    try:
        space = space_from_json(obj["space"])
        domains = [Domain.from_json(d) for d in obj["domains"]]
        grids = [GridSpec.from_axes(g["axes"]) for g in obj["grids"]]
        comps = [np.asarray(c, dtype=float) for c in obj["components"]]
        f0 = np.asarray(space.to_coords(np.asarray(obj["f0"]["coeffs"], dtype=float)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"fit JSON missing fields: {exc}") from exc
    return backfit.SbfFit(
        space=space, domains=domains, grids=grids,
        bandwidths=np.asarray(obj.get("bandwidths", []), dtype=float),
        f0_coords=f0, component_coords=comps, densities=None,
        iterations=int(obj.get("iterations", 0)),
        converged=bool(obj.get("convergence", {}).get("converged", True)),
        deltas=list(obj.get("convergence", {}).get("deltas", [])),
        residual=float(obj.get("convergence", {}).get("residual", np.nan)),
        centering=list(obj.get("convergence", {}).get("centering", [])),
        weights=None,
    )


def cmd_predict(args) -> int:
    fit = _fit_from_json(args.fit)
    total = sum(d.ndim for d in fit.domains)
    points, lines = [], []
    for lineno, obj in _read_jsonl(args.input):
        if "predictors" not in obj:
            continue  # tolerate headers and annotated rows
        x = np.asarray(obj["predictors"], dtype=float)
        if x.shape != (total,):
            raise ParseError(f"expected {total} predictor values, got {x.shape}", line=lineno)
        points.append(x)
        lines.append(lineno)
    if not points:
        raise ParseError("no prediction points found")
    with open(args.output, "w") as fh:
        for x in points:
            element = backfit.predict(fit, x)
            fh.write(json.dumps({
                "predictors": [float(report.fmt(v)) for v in x],
                "prediction": report.json_ready(element.to_json()),
            }, sort_keys=True) + "\n")
    print(json.dumps({"predictions": len(points), "written": [args.output]}))
    return 0


def cmd_scores(args) -> int:
    rows = list(_read_jsonl(args.input))
    if not rows:
        raise ParseError("empty input file")
    method = args.method
    if method in ("hpca", "hsca"):
        xs, ys = [], []
        for lineno, obj in rows:
            if "x" not in obj:
                continue
            xs.append(HilbertElement.from_json(obj["x"]))
            if method == "hsca":
                if "y" not in obj:
                    raise ParseError("hsca needs 'y' on every observation", line=lineno)
                ys.append(HilbertElement.from_json(obj["y"]))
        model = (scores.hpca(xs, args.rank) if method == "hpca"
                 else scores.hsca(xs, ys, args.rank))
    elif method in ("irfpc", "irsc"):
        header = rows[0][1]
        if "time" not in header:
            raise ParseError("curve input needs a header with 'time'", line=rows[0][0])
        t = np.asarray(header["time"], dtype=float)
        weights = GridSpec.from_axes([t]).weights
        curves, ys = [], []
        for lineno, obj in rows[1:]:
            if "curve" not in obj:
                raise ParseError("every line needs 'curve'", line=lineno)
            curves.append(np.asarray(obj["curve"], dtype=float))
            if method == "irsc":
                if "y" not in obj:
                    raise ParseError("irsc needs 'y' on every observation", line=lineno)
                ys.append(HilbertElement.from_json(obj["y"]))
        curves = np.asarray(curves)
        if method == "irfpc":
            model, _ = scores.irfpc(curves, weights, args.rank)
        else:
            model, _ = scores.irsc(curves, weights, ys, args.rank)
    else:
        raise ParseError(f"unknown method {method!r}")
    written = report.write_scores(model, args.output, figures=not args.no_figures)
    print(json.dumps({"rank": model.rank, "written": written}, sort_keys=True))
    return 0


def _parse_geometry(header):
    geo = header.get("geometry")
    if geo is None:
        raise ParseError("reconstruct input needs a 'geometry' header")
    kind = geo.get("kind")
    if kind == "circle":
        angles, weights = circle_grid(int(geo.get("size", 200)))
        return densrec.SphereGeometry(1, angles, weights), None, None
    if kind == "sphere2":
        nodes, weights = sphere2_grid(int(geo.get("lat", 48)), int(geo.get("lon", 96)))
        return densrec.SphereGeometry(2, nodes, weights), None, None
    if kind == "box":
        domain = Domain.from_json(geo["bounds"])
        grid = GridSpec.for_domain(domain, geo.get("grid"))
        return None, domain, grid
    raise ParseError(f"unknown geometry kind {geo.get('kind')!r}")


def cmd_reconstruct(args) -> int:
    rows = _read_jsonl(args.input)
    try:
        _, header = next(rows)
    except StopIteration:
        raise ParseError("empty input file") from None
    sphere_geo, domain, grid = _parse_geometry(header)
    bandwidth = None if args.bandwidth in (None, "cv") else float(args.bandwidth)
    elements, predictors = [], []
    has_predictors = False
    for lineno, obj in rows:
        if "samples" not in obj:
            raise ParseError("every observation needs 'samples'", line=lineno)
        samples = densrec.SampleSet(np.asarray(obj["samples"], dtype=float))
        if sphere_geo is not None:
            element = densrec.reconstruct_sphere(samples, sphere_geo, bandwidth)
        else:
            element = densrec.reconstruct_box(samples, domain, grid, bandwidth)
        elements.append(element)
        predictors.append(obj.get("predictors"))
        has_predictors = has_predictors or obj.get("predictors") is not None
    if not elements:
        raise ParseError("no observations after the header")
    out_header = {"space": elements[0].space.to_json()}
    if "domains" in header:
        out_header["domains"] = header["domains"]
    with open(args.output, "w") as fh:
        fh.write(json.dumps(report.json_ready(out_header), sort_keys=True) + "\n")
        for el, pred in zip(elements, predictors):
            obj = {"response": {"coeffs": report.json_ready(el.coeffs.tolist())}}
            if pred is not None:
                obj["predictors"] = report.json_ready(pred)
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
    written = [args.output]
    if not args.no_figures:
        figpath = report.elements_figure(elements, args.output + ".png")
        if figpath:
            written.append(figpath)
    print(json.dumps({"reconstructed": len(elements), "written": written}, sort_keys=True))
    return 0


def cmd_bandwidth(args) -> int:
    data = _load_regression(args.input, args)
    grids = _parse_grid_flag(args.grid, data.domains)
    config = bwmod.default_config(
        data, grids, rule=args.rule, folds=args.folds, seed=args.seed,
        tol=args.tol, max_iter=args.max_iter,
    )
    result = bwmod.cbs_select(data, config, grids)
    written = report.write_bandwidth(result, args.output, figures=not args.no_figures)
    print(json.dumps({
        "bandwidths": [report.fmt(h) for h in result.bandwidths],
        "sweeps": result.sweeps,
        "written": written,
    }, sort_keys=True))
    return 0


def _parse_sim_arms(study, text):
    arms = []
    for chunk in text.split(","):
        parts = chunk.strip().split(":")
        try:
            if study == "sim1":
                n, obs = parts
                arms.append((int(n), None if obs == "true" else int(obs)))
            else:
                n, sc, model = parts
                if sc not in ("true", "est") or model not in ("multi", "uni"):
                    raise ValueError("scores are true|est, model is multi|uni")
                arms.append((int(n), sc == "est", model == "uni"))
        except ValueError as exc:
            raise ParseError(f"bad arm {chunk!r}: {exc}") from exc
    return arms


def cmd_simulate(args) -> int:
    study = args.study
    default_arms = "400:true" if study == "sim1" else "400:true:multi"
    arms = _parse_sim_arms(study, args.arms or default_arms)
    reports = simulate.run_study(study, arms, reps=args.reps, seed=args.seed)
    for rep in reports:
        rep.verify_identity()
    written = report.write_simulation(reports, args.output, seed=args.seed,
                                      figures=not args.no_figures)
    print(json.dumps({
        "arms": [r.arm for r in reports],
        "imse": [[float(report.fmt(v)) for v in r.imse] for r in reports],
        "written": written,
    }, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hilbertsbf",
        description="Smooth backfitting additive regression for Hilbertian responses",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, output=True):
        if output:
            p.add_argument("--output", required=True, help="output file or directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float, default=1e-4)
        p.add_argument("--max-iter", type=int, default=50)
        p.add_argument("--folds", type=int, default=5)
        p.add_argument("--no-figures", action="store_true",
                       help="skip rendering figures next to the delimited output")

    p = sub.add_parser("fit", help="fit the additive model")
    p.add_argument("--input", required=True)
    p.add_argument("--predictors-csv",
                   help="take predictors row-by-row from a scores CSV instead")
    p.add_argument("--space", help="euclidean:k or simplex:k (else from header)")
    p.add_argument("--domain", action="append", metavar="j=lo:hi[,lo:hi]")
    p.add_argument("--grid", help="estimation nodes per predictor, e.g. 41 or 41,21x21")
    p.add_argument("--bandwidth", default="cbs", help="'cbs' or comma-separated values")
    p.add_argument("--rule", default="simulation", choices=["simulation", "application"])
    p.add_argument("--init", default="smoother", choices=["smoother", "zero"])
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="evaluate a fitted model")
    p.add_argument("--fit", required=True, help="fit.json from the fit command")
    p.add_argument("--input", required=True)
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("scores", help="extract component scores")
    p.add_argument("--input", required=True)
    p.add_argument("--method", required=True, choices=["hpca", "hsca", "irfpc", "irsc"])
    p.add_argument("--rank", type=int, required=True)
    common(p)
    p.set_defaults(func=cmd_scores)

    p = sub.add_parser("reconstruct", help="densities from raw samples")
    p.add_argument("--input", required=True)
    p.add_argument("--bandwidth", default="cv", help="'cv' or a number")
    common(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("bandwidth", help="coordinate-wise bandwidth selection")
    p.add_argument("--input", required=True)
    p.add_argument("--predictors-csv",
                   help="take predictors row-by-row from a scores CSV instead")
    p.add_argument("--space", help="euclidean:k or simplex:k (else from header)")
    p.add_argument("--domain", action="append", metavar="j=lo:hi[,lo:hi]")
    p.add_argument("--grid")
    p.add_argument("--rule", default="simulation", choices=["simulation", "application"])
    common(p)
    p.set_defaults(func=cmd_bandwidth)

    p = sub.add_parser("simulate", help="run the benchmark studies")
    p.add_argument("--study", required=True, choices=["sim1", "sim2"])
    p.add_argument("--arms", help="sim1: 'n:true|n:nstar,...'; sim2: 'n:true|est:multi|uni,...'")
    p.add_argument("--reps", type=int, default=100)
    common(p)
    p.set_defaults(func=cmd_simulate)

    return parser


EXIT_CODES = (
    (ParseError, 2),
    (ConditionAError, 4),
    (ConvergenceError, 5),
    (InvariantError, 3),
    (SpaceMismatchError, 3),
    (NumericOverflowError, 3),
    (DomainError, 3),
    (CutLocusError, 3),
    (BandwidthTooSmallError, 3),
)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HilbertSbfError as exc:
        detail = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("line", "j", "node_index", "bandwidth"):
            if getattr(exc, attr, None) is not None:
                value = getattr(exc, attr)
                detail[attr] = value if not isinstance(value, np.ndarray) else value.tolist()
        print(json.dumps(detail, sort_keys=True, default=str), file=sys.stderr)
        for klass, code in EXIT_CODES:
            if isinstance(exc, klass):
                return code
        return 3 if isinstance(exc, ValueError) else 1


if __name__ == "__main__":
    sys.exit(main())
