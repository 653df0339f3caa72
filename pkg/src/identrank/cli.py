"""Command-line interface: model-spec/data ingestion and bit-stable reports.

Subcommands
-----------
analyze --spec S [--data D] --out R [--format json|text]
    Run the full identifiability analysis described by a JSON model-spec
    file and write the report.
rank --matrix M [--tol-rel r --tol-abs a] [--format json|text]
    Numerical rank decision for a matrix given as headerless CSV.
ridge --spec S --theta T --tmax X --steps N [--data D]
    Trace the likelihood ridge from theta along redundancy directions and
    print one JSON line per trace point.

Exit codes: 0 success, 2 input error, 3 numerical failure.  The environment
variable IDENTRANK_SEED overrides the spec's sampler seed.  Reports embed
their tolerances and seed, serialize numbers with 17 significant digits in a
fixed key order, and are byte-identical across runs for identical inputs;
wall-clock timing goes to stderr so it cannot perturb the bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, identcore, modelzoo, ranklab
from .errors import (
    DomainError,
    IdentRankError,
    InputError,
    InternalConsistencyError,
    SingularityError,
)
from .expfam import ExpFamily, FamilyKind

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

ARTIFACT_VERSION = 1


# ---------------------------------------------------------------------------
# canonical JSON


def _format_float(value):
    if not math.isfinite(value):
        raise InternalConsistencyError(f"non-finite value {value!r} in report")
    return format(value, ".17g")


class _CanonicalEncoder(json.JSONEncoder):
    """json.JSONEncoder with floats forced to 17 significant digits.

    Uses the pure-Python encoding path so the float formatter is honored;
    key order is the dict insertion order (sort_keys stays off).
    """

    def iterencode(self, o, _one_shot=False):
        return json.encoder._make_iterencode(
            {} if self.check_circular else None,
            self.default,
            json.encoder.encode_basestring_ascii,
            self.indent,
            _format_float,
            self.key_separator,
            self.item_separator,
            self.sort_keys,
            self.skipkeys,
            _one_shot,
        )(o, 0)


def dumps_canonical(obj):
    enc = _CanonicalEncoder(indent=2, separators=(",", ": "))
    return "".join(enc.iterencode(_plainify(obj))) + "\n"


def dumps_canonical_line(obj):
    enc = _CanonicalEncoder(indent=None, separators=(", ", ": "))
    return "".join(enc.iterencode(_plainify(obj))) + "\n"


def _plainify(obj):
    if isinstance(obj, dict):
        return {k: _plainify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plainify(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_plainify(v) for v in obj.tolist()]
    return obj


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        h.update(f.read())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# spec and data ingestion


def _fail(path, message):
    raise InputError(f"{path}: {message}")


def load_spec(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        _fail(path, "spec file not found")
    except json.JSONDecodeError as e:
        _fail(path, f"invalid JSON at line {e.lineno}: {e.msg}")
    if not isinstance(raw, dict):
        _fail(path, "spec root must be a JSON object")
    if "model" not in raw:
        _fail(path, "spec is missing the 'model' section")
    return raw


def _build_family(spec, path):
    fam_spec = spec.get("family")
    if fam_spec is None:
        return None
    kind = fam_spec.get("kind")
    try:
        kind = FamilyKind(kind)
    except ValueError:
        _fail(path, f"unknown family kind {kind!r} (expected poisson, binomial or normal)")
    phi = float(fam_spec.get("phi", 1.0))
    try:
        return ExpFamily(kind, phi)
    except IdentRankError as e:
        _fail(path, str(e))


def _build_model(spec, path, spec_dir):
    mspec = spec["model"]
    if not isinstance(mspec, dict) or "name" not in mspec:
        _fail(path, "'model' must be an object with a 'name'")
    name = mspec["name"]
    kwargs = {}
    if name in ("poisson_glm", "linear_gaussian"):
        design_path = mspec.get("design_csv")
        if design_path is None:
            _fail(path, f"model {name} requires 'design_csv'")
        if not os.path.isabs(design_path):
            design_path = os.path.join(spec_dir, design_path)
        kwargs["design"] = load_matrix_csv(design_path)
    if "k" in mspec:
        kwargs["k"] = int(mspec["k"])
    if "p" in mspec:
        kwargs["p"] = int(mspec["p"])
    try:
        model = modelzoo.build_model(name, **kwargs)
    except IdentRankError as e:
        _fail(path, str(e))

    box_spec = spec.get("param_box")
    if box_spec is not None:
        if len(box_spec) != model.p:
            _fail(path, f"param_box has {len(box_spec)} entries for {model.p} parameters")
        box = []
        for entry in box_spec:
            lo, hi = float(entry[0]), float(entry[1])
            scale = entry[2] if len(entry) > 2 else "linear"
            try:
                box.append(modelzoo.ParamRange(lo, hi, scale))
            except IdentRankError as e:
                _fail(path, str(e))
        import dataclasses

        model = dataclasses.replace(model, param_box=tuple(box))
    return model


def _build_sampler(spec, path):
    sspec = spec.get("sampler", {})
    seed = int(sspec.get("seed", identcore.DEFAULT_SEED))
    env_seed = os.environ.get("IDENTRANK_SEED")
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            _fail("IDENTRANK_SEED", f"environment override {env_seed!r} is not an integer")
    pinned = tuple(tuple(float(v) for v in t) for t in spec.get("pinned", []))
    try:
        return identcore.Sampler(
            m=int(sspec.get("M", 64)),
            seed=seed,
            include_corners=bool(sspec.get("include_corners", False)),
            pinned=pinned,
        )
    except IdentRankError as e:
        _fail(path, str(e))


def _tolerances(spec, path, override_rel=None, override_abs=None):
    tspec = spec.get("tolerances", {})
    tol_rel = float(tspec.get("tol_rel", ranklab.DEFAULT_TOL_REL))
    tol_abs = float(tspec.get("tol_abs", ranklab.DEFAULT_TOL_ABS))
    if override_rel is not None:
        tol_rel = override_rel
    if override_abs is not None:
        tol_abs = override_abs
    if tol_rel <= 0.0 or tol_abs <= 0.0:
        _fail(path, "tolerances must be positive")
    return tol_rel, tol_abs


def load_matrix_csv(path):
    """Headerless rectangular CSV of reals."""
    rows = []
    try:
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                cells = line.split(",")
                try:
                    rows.append([float(c) for c in cells])
                except ValueError:
                    _fail(path, f"line {lineno}: non-numeric cell")
                if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
                    _fail(path, f"line {lineno}: ragged row ({len(rows[-1])} cells, expected {len(rows[0])})")
    except FileNotFoundError:
        _fail(path, "matrix file not found")
    if not rows:
        _fail(path, "matrix file is empty")
    return np.array(rows)


def load_data_csv(path, model, family):
    """Headered CSV with columns x, z, y_1..y_m and optional trials."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    except FileNotFoundError:
        _fail(path, "data file not found")
    if len(lines) < 2:
        _fail(path, "data file needs a header and at least one row")
    header = [c.strip() for c in lines[0].split(",")]
    for required in ("x", "z"):
        if required not in header:
            _fail(path, f"line 1: missing required column {required!r}")
    y_cols = [c for c in header if c.startswith("y_")]
    if not y_cols and not isinstance(model, modelzoo.CustomLikelihoodModel):
        _fail(path, "line 1: need at least one covariate column y_1..y_m")
    idx = {c: header.index(c) for c in header}
    xs, zs, ys, trials = [], [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(header):
            _fail(path, f"line {lineno}: expected {len(header)} cells, got {len(cells)}")
        try:
            row = {c: float(cells[idx[c]]) for c in header}
        except ValueError:
            _fail(path, f"line {lineno}: non-numeric cell")
        if row["z"] == 0.0:
            _fail(
                path,
                f"line {lineno}: offset z must be non-zero (the embedding requires all z_l != 0)",
            )
        xs.append(row["x"])
        zs.append(row["z"])
        ys.append([row[c] for c in y_cols])
        if "trials" in idx:
            trials.append(row["trials"])
    if isinstance(model, modelzoo.CustomLikelihoodModel):
        return np.array(xs)
    try:
        return modelzoo.Dataset(
            x=np.array(xs),
            z=np.array(zs),
            y=np.array(ys) if y_cols else np.ones((len(xs), 1)),
            trials=np.array(trials) if trials else None,
        )
    except IdentRankError as e:
        _fail(path, str(e))


# ---------------------------------------------------------------------------
# report rendering


def _render_text(report_dict, out):
    def line(key, value):
        out.write(f"{key}: {value}\n")

    line("model", report_dict["model"])
    fam = report_dict.get("family")
    line("family", "custom" if fam is None else f"{fam['kind']} (phi={fam['phi']})")
    line("n", report_dict["n"])
    line("p", report_dict["p"])
    line("classification", report_dict["classification"])
    split = report_dict["rank_split"]
    line("rank split", f"{split['full_rank']} full / {split['rank_deficient']} deficient")
    if report_dict.get("bounds"):
        b = report_dict["bounds"]
        line("bounds (hessian_lower, fisher_upper)", f"({b['hessian_lower']}, {b['fisher_upper']})")
    if report_dict.get("max_subset"):
        s = report_dict["max_subset"]
        line("max full-rank subset", f"k={s['k']} indices={s['indices']} [{s['source']}, {s['method']}]")
    for note in report_dict.get("notes", []):
        line("note", note)


def cmd_analyze(args):
    spec = load_spec(args.spec)
    spec_dir = os.path.dirname(os.path.abspath(args.spec))
    model = _build_model(spec, args.spec, spec_dir)
    fam = _build_family(spec, args.spec)
    if fam is None and not isinstance(model, modelzoo.CustomLikelihoodModel):
        _fail(args.spec, "mean models require a 'family' section")
    sampler = _build_sampler(spec, args.spec)
    tol_rel, tol_abs = _tolerances(spec, args.spec)
    declared = spec.get("declared_factorization", {}).get("N") if isinstance(spec.get("declared_factorization"), dict) else None

    data = None
    if args.data is not None:
        data = load_data_csv(args.data, model, fam)

    started = time.monotonic()
    report = identcore.analyze(
        model,
        fam,
        data=data,
        sampler=sampler,
        tol_rel=tol_rel,
        tol_abs=tol_abs,
        declared_combos=declared,
    )
    elapsed = time.monotonic() - started

    body = {
        "artifact_version": ARTIFACT_VERSION,
        "identrank_version": __version__,
        "spec_sha256": _sha256_file(args.spec),
        "data_sha256": _sha256_file(args.data) if args.data else None,
    }
    body.update(report.to_dict())

    payload = dumps_canonical(body)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(payload)
        sys.stderr.write(f"analyze: wrote {args.out} in {elapsed:.3f}s\n")
    if args.format == "text":
        _render_text(body, sys.stdout)
    elif not args.out:
        sys.stdout.write(payload)
    return EXIT_OK


def cmd_rank(args):
    M = load_matrix_csv(args.matrix)
    decision = ranklab.numerical_rank(M, args.tol_rel, args.tol_abs)
    if args.format == "text":
        sys.stdout.write(
            f"rank: {decision.rank}\nsingular values: {list(decision.singular_values)}\n"
            f"threshold: {decision.threshold_used}\ngap ratio: {decision.gap_ratio}\n"
        )
    else:
        sys.stdout.write(dumps_canonical(decision.to_dict()))
    return EXIT_OK


def cmd_ridge(args):
    spec = load_spec(args.spec)
    spec_dir = os.path.dirname(os.path.abspath(args.spec))
    model = _build_model(spec, args.spec, spec_dir)
    if isinstance(model, modelzoo.CustomLikelihoodModel):
        _fail(args.spec, "ridge tracing applies to mean models only")
    fam = _build_family(spec, args.spec)
    if fam is None:
        _fail(args.spec, "mean models require a 'family' section")
    tol_rel, tol_abs = _tolerances(spec, args.spec)

    try:
        theta0 = np.array([float(v) for v in args.theta.split(",")])
    except ValueError:
        raise InputError(f"--theta {args.theta!r} is not a comma-separated float list")
    if theta0.shape != (model.p,):
        raise InputError(f"--theta has {theta0.shape[0]} components, model has p = {model.p}")

    if args.data is not None:
        data = load_data_csv(args.data, model, fam)
    else:
        # fitted pseudo-data: x_l = mu_l(theta0), the natural ridge baseline
        aux = model.default_aux
        if aux is None:
            _fail(args.spec, "model has no default design; supply --data")
        mu = identcore.mean_vector(model, theta0, aux)
        data = modelzoo.Dataset(x=mu, z=aux.z, y=aux.y, trials=aux.trials)

    trace = identcore.ridge_trace(
        model, fam, theta0, data, t_max=args.tmax, steps=args.steps, tol_rel=tol_rel, tol_abs=tol_abs
    )
    for pt in trace.points:
        sys.stdout.write(
            dumps_canonical_line({"t": pt.t, "drift": pt.drift, "direction": list(pt.direction)})
        )
    sys.stdout.write(
        dumps_canonical_line(
            {"max_drift": trace.max_drift, "loglik0": trace.loglik0, "truncated": trace.truncated}
        )
    )
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="identrank",
        description="Numerical parameter identifiability and redundancy diagnostics.",
    )
    parser.add_argument("--version", action="version", version=f"identrank {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_analyze = sub.add_parser("analyze", help="run the identifiability analysis for a model spec")
    p_analyze.add_argument("--spec", required=True, help="model-spec JSON file")
    p_analyze.add_argument("--data", default=None, help="observation CSV (columns x, z, y_1.., trials)")
    p_analyze.add_argument("--out", default=None, help="report output path (JSON)")
    p_analyze.add_argument("--format", choices=("json", "text"), default="json")
    p_analyze.set_defaults(func=cmd_analyze)

    p_rank = sub.add_parser("rank", help="numerical rank of a CSV matrix")
    p_rank.add_argument("--matrix", required=True, help="headerless CSV matrix file")
    p_rank.add_argument("--tol-rel", type=float, default=ranklab.DEFAULT_TOL_REL)
    p_rank.add_argument("--tol-abs", type=float, default=ranklab.DEFAULT_TOL_ABS)
    p_rank.add_argument("--format", choices=("json", "text"), default="json")
    p_rank.set_defaults(func=cmd_rank)

    p_ridge = sub.add_parser("ridge", help="trace the likelihood ridge from a redundant point")
    p_ridge.add_argument("--spec", required=True)
    p_ridge.add_argument("--theta", required=True, help="comma-separated start point")
    p_ridge.add_argument("--tmax", type=float, default=0.2)
    p_ridge.add_argument("--steps", type=int, default=100)
    p_ridge.add_argument("--data", default=None)
    p_ridge.set_defaults(func=cmd_ridge)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        sys.stderr.write(f"identrank: input error: {e}\n")
        return EXIT_INPUT
    except (DomainError, SingularityError, InternalConsistencyError) as e:
        sys.stderr.write(f"identrank: numerical failure: {e}\n")
        return EXIT_NUMERICAL
    except IdentRankError as e:
        sys.stderr.write(f"identrank: error: {e}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
