"""Command-line front end.

Subcommands
-----------
``inspect``   geometry-bundle scalars and small matrices at chosen points
``verify``    run a verification suite: identities | el | variations | gallery
``gallery``   list built-in entries and their expected tables

Structures come either from ``--spec PATH`` (the structure file format, see
the README) or ``--gallery NAME``.  Points are given explicitly with
``--points "(x0,x1,..);(..)"`` or sampled reproducibly with ``--random N
--seed S``.  Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 an
engine or configuration error.  Reports embed the structure content hash and
the seed, so identical configurations produce byte-identical JSON.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import euler_lagrange as el
from . import gallery as gal
from . import variations as va
from .errors import MixedCurvError
from .geometry import PointGeometry, identity_suite
from .structure import load_structure

DEFAULT_TOL = 1e-6
NONCRITICAL_FACTOR = 10.0


def _load(args):
    if args.spec and args.gallery:
        raise MixedCurvError("give either --spec or --gallery, not both")
    if args.spec:
        with open(args.spec) as fh:
            text = fh.read()
        return load_structure(text), None
    if args.gallery:
        entry = gal.load_entry(args.gallery)
        return entry.structure, entry
    raise MixedCurvError("one of --spec or --gallery is required")


def _points(args, struct):
    if args.points:
        pts = []
        for chunk in args.points.split(";"):
            chunk = chunk.strip().strip("()")
            if not chunk:
                continue
            pt = tuple(float(x) for x in chunk.split(","))
            if len(pt) != struct.dim:
                raise MixedCurvError(
                    f"point {pt} has {len(pt)} coordinates, chart has {struct.dim}")
            pts.append(pt)
        if not pts:
            raise MixedCurvError("no points parsed from --points")
        return pts
    return struct.interior_points(args.random, args.seed)


def _parse_box(text, dim):
    import re
    intervals = []
    for part in text.split("x"):
        m = re.match(r"^\s*\[\s*([^,\]]+)\s*,\s*([^,\]]+)\s*\]\s*$", part)
        if not m:
            raise MixedCurvError(f"bad box interval {part!r}")
        intervals.append((float(m.group(1)), float(m.group(2))))
    if len(intervals) != dim:
        raise MixedCurvError(f"box needs {dim} intervals, got {len(intervals)}")
    return tuple(intervals)


def _base_report(args, struct):
    return {
        "structure": struct.name or (args.spec or args.gallery),
        "spec_sha256": struct.content_hash,
        "seed": args.seed,
        "tolerance": args.tol,
    }


# ----------------------------------------------------------------------

def cmd_inspect(args):
    struct, _ = _load(args)
    pts = _points(args, struct)
    report = _base_report(args, struct)
    report["command"] = "inspect"
    report["points"] = []
    for pt in pts:
        geom = PointGeometry(struct, pt)
        report["points"].append(geom.summary())
    return report, 0


def cmd_verify(args):
    struct, entry = _load(args)
    pts = _points(args, struct)
    report = _base_report(args, struct)
    report["command"] = f"verify {args.suite}"
    checks = []

    if args.suite == "identities":
        for pt in pts:
            res = identity_suite(struct, pt, rng_seed=args.seed)
            for key, value in res.items():
                if key == "max":
                    continue
                checks.append({"check": key, "point": list(pt),
                               "residual": value, "tolerance": args.tol,
                               "provenance": "derived:independent-paths",
                               "verdict": bool(value <= args.tol)})

    elif args.suite == "el":
        flags = entry.criticality if entry else {}
        for pt in pts:
            for eq, run in _el_equations(struct):
                if entry is not None and eq not in flags:
                    continue          # the entry makes no claim about this one
                try:
                    rep = run(pt)
                except MixedCurvError:
                    continue
                expected_critical = flags.get(eq, True)
                if expected_critical:
                    ok = rep.norm <= args.tol
                else:
                    ok = rep.norm >= NONCRITICAL_FACTOR * args.tol
                checks.append({
                    "check": eq, "point": list(pt), "residual": rep.norm,
                    "tolerance": args.tol,
                    "expected": "critical" if expected_critical else "non-critical",
                    "provenance": "gallery-flag" if entry else "assumed-critical",
                    "verdict": bool(ok)})

    elif args.suite == "variations":
        report["fd_steps"] = list(va.FD_STEPS)
        for klass in ("perp", "tan"):
            v = va.random_variation(struct, klass, seed=args.seed)
            for pt in pts:
                reps = va.verify_first_variation(struct, v, pt, tol=args.tol * 10)
                for f, r in reps.items():
                    checks.append({
                        "check": f, "point": list(pt), "class": klass,
                        "residual": min(r.discrepancies),
                        "order": r.order, "tolerance": args.tol * 10,
                        "provenance": "derived:fd-vs-jets",
                        "verdict": bool(r.verdict)})
        if args.box:
            box = _parse_box(args.box, struct.dim)
            q = el.QuadratureSpec(box=box, grid=args.grid)
            v = va.random_variation(struct, "perp", seed=args.seed, box=box)
            rep = va.verify_bar_relation(struct, v, q,
                                         sstar_grid=max(4, args.grid // 2))
            scale = max(abs(rep["dJ"]), abs(rep["dJ_bar"]), 1.0)
            checks.append({
                "check": "volume-normalized-action-relation", "box": list(box),
                "grid": args.grid,
                "residual": rep["relation_residual"],
                "volume_drift": rep["volume_drift"],
                "tolerance": 1e-4 * scale,
                "provenance": "derived:quadrature-vs-fd",
                "verdict": bool(rep["relation_residual"] <= 1e-4 * scale
                                and rep["volume_drift"] <= 1e-6)})

    elif args.suite == "gallery":
        if entry is None:
            raise MixedCurvError("--gallery is required for the gallery suite")
        for pt in pts:
            geom = PointGeometry(struct, pt)
            for exp in entry.expected:
                got = gal.evaluate_quantity(entry, geom, exp.quantity)
                dev = float(np.max(np.abs(np.asarray(got, float)
                                          - np.asarray(exp.value, float))))
                checks.append({
                    "check": exp.quantity, "point": list(pt),
                    "value": np.asarray(got).tolist(),
                    "expected": np.asarray(exp.value).tolist(),
                    "residual": dev, "tolerance": exp.tol,
                    "provenance": exp.provenance,
                    "verdict": bool(dev <= exp.tol)})
    else:
        raise MixedCurvError(f"unknown suite {args.suite!r}")

    report["checks"] = checks
    report["passed"] = sum(1 for c in checks if c["verdict"])
    report["failed"] = sum(1 for c in checks if not c["verdict"])
    return report, (0 if report["failed"] == 0 else 1)


def _el_equations(struct):
    out = []
    for eq in ("E-main-0i", "E-main-0ii", "E-main-0iii"):
        out.append((eq, lambda pt, eq=eq: el.el_general(struct, pt, eq)))
    if struct.n == 1:
        for eq in ("E-main-1i", "E-main-3i", "E-main-2i"):
            out.append((eq, lambda pt, eq=eq: el.el_flow(struct, pt, eq)))
        for eq in ("ELtildeT1", "ELtildeT2", "ELtildeT3"):
            out.append((eq, lambda pt, eq=eq: el.el_tildeT_action(struct, pt)[eq]))
    if struct.dim - struct.n == 1:
        for eq in ("codimoneEL1", "codimoneEL2", "codimoneEL3", "codim1folgenvar"):
            out.append((eq, lambda pt, eq=eq: el.el_codim1(struct, pt, eq)))
    return out


def cmd_gallery(args):
    report = {"command": "gallery", "entries": []}
    for name in gal.list_entries():
        entry = gal.load_entry(name)
        if args.filter_critical and not entry.criticality.get(args.filter_critical):
            continue
        if args.filter_noncritical and entry.criticality.get(
                args.filter_noncritical, True):
            continue
        report["entries"].append({
            "name": name,
            "dim": entry.structure.dim,
            "dtilde_dim": entry.structure.n,
            "spec_sha256": entry.structure.content_hash,
            "criticality": entry.criticality,
            "expected": [{"quantity": e.quantity,
                          "value": np.asarray(e.value).tolist()
                          if e.value is not None else None,
                          "tol": e.tol, "provenance": e.provenance}
                         for e in entry.expected],
            "notes": entry.notes,
        })
    report["count"] = len(report["entries"])
    return report, 0


# ----------------------------------------------------------------------

def _emit(report, args):
    if args.format == "json":
        text = json.dumps(report, sort_keys=True, indent=2)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["section", "name", "index", "value"])
        _flatten_csv(writer, "", report)
        text = buf.getvalue()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + ("\n" if not text.endswith("\n") else ""))
    else:
        sys.stdout.write(text + "\n")


def _flatten_csv(writer, prefix, obj):
    if isinstance(obj, dict):
        for key in sorted(obj):
            _flatten_csv(writer, f"{prefix}.{key}" if prefix else key, obj[key])
    elif isinstance(obj, list):
        flat = _flatten_list(obj)
        if flat is None:
            for i, item in enumerate(obj):
                _flatten_csv(writer, f"{prefix}[{i}]", item)
        else:
            for idx, value in flat:
                writer.writerow([prefix, prefix.rsplit(".", 1)[-1], idx, value])
    else:
        writer.writerow([prefix, prefix.rsplit(".", 1)[-1], "", obj])


def _flatten_list(obj):
    """Row-major flattening for purely numeric (possibly nested) lists."""
    rows = []

    def rec(o, idx):
        if isinstance(o, (int, float)):
            rows.append((",".join(map(str, idx)), o))
            return True
        if isinstance(o, list):
            return all(rec(x, idx + (k,)) for k, x in enumerate(o))
        return False

    return rows if rec(obj, ()) else None


def build_parser():
    ap = argparse.ArgumentParser(
        prog="mixedcurv",
        description="extrinsic-geometry invariants and Euler-Lagrange "
                    "residual checks for metrics with a distinguished "
                    "distribution")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, points=True):
        p.add_argument("--spec", help="structure spec file")
        p.add_argument("--gallery", help="built-in gallery entry name")
        if points:
            p.add_argument("--points", help='explicit points "(..);(..)"')
            p.add_argument("--random", type=int, default=5,
                           help="number of random interior points")
        p.add_argument("--box", help='quadrature box "[a,b] x [c,d] x ..."')
        p.add_argument("--grid", type=int, default=8,
                       help="quadrature points per axis")
        p.add_argument("--seed", type=int, default=20260808)
        p.add_argument("--tol", type=float, default=DEFAULT_TOL)
        p.add_argument("--out", help="write the report to this path")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("inspect", help="geometry bundle at points")
    common(p)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("suite", choices=("identities", "el", "variations", "gallery"))
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gallery", help="list gallery entries")
    p.add_argument("--filter-critical", metavar="EQ",
                   help="only entries whose flag for EQ is critical")
    p.add_argument("--filter-noncritical", metavar="EQ",
                   help="only entries whose flag for EQ is non-critical")
    p.add_argument("--seed", type=int, default=20260808)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_gallery)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        report, code = args.func(args)
    except MixedCurvError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    _emit(report, args)
    return code


if __name__ == "__main__":
    sys.exit(main())
