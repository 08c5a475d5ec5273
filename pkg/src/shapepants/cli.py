"""Command-line entry point.

Subcommands: ``curvature``, ``geodesic``, ``realize``, ``syzygy``,
``collide`` and ``ends``.  Exit code 0 means success, 1 a validation error
and 2 a numerical failure.  JSON floats are written with 17 significant
digits, so identical runs give byte-identical files.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import (
    BoundViolated,
    ConfigError,
    HomotopyEscape,
    NoConvergence,
    NoValidShift,
    PatchViolation,
    ShapePantsError,
    StepFailure,
)
from .realizer import DEFAULT_N_PER_LETTER
from .shape_geometry import LAGRANGE_NORTH, MassTriple, ShapePoint, euler_point

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2

_NUMERICAL = (NoConvergence, HomotopyEscape, StepFailure, PatchViolation, BoundViolated, NoValidShift,
              FloatingPointError)


# -- deterministic JSON ----------------------------------------------------------------


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)
               for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON text with every float formatted to 17 significant digits."""
    return _encode(obj, 2, 0) + "\n"


def write_json(obj, path: Path) -> None:
    path.write_text(dumps(obj), encoding="utf-8")


# -- argument helpers ------------------------------------------------------------------


def _masses(text: str) -> MassTriple:
    try:
        return MassTriple.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive(name: str, value: float) -> None:
    if not (value > 0 and math.isfinite(value)):
        raise ConfigError(f"{name} must be positive, got {value!r}")


def _parse_start(text: str) -> ShapePoint:
    text = text.strip().lower()
    if text in ("lagrange", "lagrange+", "north"):
        return LAGRANGE_NORTH
    if text in ("lagrange-", "south"):
        return ShapePoint(-math.pi / 2, 0.0)
    if text.startswith("euler"):
        k = int(text.split(":", 1)[1]) if ":" in text else 1
        if k not in (1, 2, 3):
            raise ConfigError(f"Euler point index must be 1, 2 or 3, got {k}")
        return euler_point(k)
    vals = _floats(text)
    if len(vals) != 2:
        raise ConfigError(f"--start expects 'phi,theta', 'euler:k' or 'lagrange', got {text!r}")
    return ShapePoint(vals[0], vals[1])


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands --------------------------------------------------------------------------


def cmd_curvature(args) -> int:
    from .jm_metric import curvature_scan
    from .plotting import heatmap_figure

    if args.grid < 2:
        raise ConfigError(f"--grid must be at least 2, got {args.grid}")
    _positive("--exclusion", args.exclusion)
    if args.csv_stride < 1:
        raise ConfigError("--csv-stride must be at least 1")
    report = curvature_scan(args.masses, args.grid, exclusion=args.exclusion, tol=args.tol,
                            keep_arrays=True)
    out = _outdir(args)
    arr = report.arrays
    st = args.csv_stride
    rows = np.column_stack([
        arr["phi"][::st, ::st].ravel(), arr["theta"][::st, ::st].ravel(),
        arr["sides"][::st, ::st].reshape(-1, 3), arr["conformal_factor"][::st, ::st].ravel(),
        arr["curvature"][::st, ::st].ravel(), arr["kappa"][::st, ::st].ravel(),
    ])
    np.savetxt(out / "curvature.csv", rows, fmt="%.17g", delimiter=",", comments="",
               header="phi,theta,s1,s2,s3,conformal_factor,curvature,kappa")
    summary = report.summary()
    summary["exclusion"] = args.exclusion
    write_json(summary, out / "curvature.json")
    if not args.no_svg:
        heatmap_figure(arr["phi"], arr["theta"], arr["curvature"], out / "curvature.svg",
                       f"JM curvature, masses {args.masses}")
    print(f"verdict: {report.verdict}  min={report.curvature_min:.6g}  max={report.curvature_max:.6g}  "
          f"points={report.n_points}")
    return EXIT_OK


def cmd_geodesic(args) -> int:
    from .geodesic_flow import GeodesicState, events_json, integrate, plot_trace, write_csv
    from .jm_metric import conformal_factor

    _positive("--length", args.length)
    _positive("--tol", args.tol)
    start = _parse_start(args.start)
    embedded = None
    if abs(start.phi) > math.pi / 2 - 1e-12:
        # at a pole the heading is measured from the +x axis of the embedding
        n = start.unit
        scale = 2.0 / math.sqrt(conformal_factor(start, args.masses))
        embedded = (n, scale * np.array([math.cos(args.angle), math.sin(args.angle), 0.0]))
        state = GeodesicState.from_embedded(*embedded)
    else:
        state = GeodesicState.from_direction(start, args.angle, args.masses)
    traj = integrate(state, args.masses, args.length, tol=args.tol, sample_ds=args.sample_ds,
                     start_embedded=embedded)
    out = _outdir(args)
    write_csv(traj, out / "trajectory.csv")
    write_json(events_json(traj), out / "events.json")
    if not args.no_svg:
        plot_trace(traj, out / "trajectory.svg", f"geodesic from {args.start}, masses {args.masses}")
    print(f"fate: {traj.fate}  length: {traj.s[-1]:.6g}  word: {traj.word() or '(none)'}  "
          f"speed drift: {traj.speed_drift:.3e}")
    return EXIT_OK


def cmd_realize(args) -> int:
    from .plotting import trace_figure
    from .realizer import compare_results, realize
    from .shape_geometry import from_unit

    if args.restarts < 1:
        raise ConfigError("--restarts must be at least 1")
    _positive("--tol", args.tol)
    results = realize(args.word, args.masses, restarts=args.restarts, seed=args.seed,
                      n_per_letter=args.n_per_letter, tol=args.tol, max_iter=args.max_iter,
                      jobs=args.jobs)
    cmp = compare_results(results, equal_masses=args.masses.is_equal())
    runs = []
    for res in results:
        phi, theta = from_unit(res.closed.samples)
        runs.append({
            **res.summary(),
            "vertices_phi_theta": np.column_stack(from_unit(res.loop.vertices)).tolist(),
            "orbit_phi_theta": np.column_stack([phi, theta]).tolist(),
        })
    payload = {
        "word": args.word,
        "masses": [args.masses.m1, args.masses.m2, args.masses.m3],
        "seed": args.seed,
        "restarts": args.restarts,
        "converged_lengths": cmp["lengths"],
        "relative_length_spread": cmp["relative_length_spread"],
        "max_pairwise_hausdorff": cmp["max_pairwise_hausdorff"],
        "runs": runs,
    }
    out = _outdir(args)
    write_json(payload, out / "realize.json")
    if not args.no_svg:
        trace_figure([results[0].closed.samples], out / "realize.svg", f"closed geodesic {args.word}")
    lengths = ", ".join(f"{v:.12g}" for v in cmp["lengths"])
    print(f"lengths: {lengths}")
    print(f"relative spread: {cmp['relative_length_spread']:.3e}  "
          f"max Hausdorff: {cmp['max_pairwise_hausdorff']:.3e}")
    return EXIT_OK


def cmd_syzygy(args) -> int:
    from .syzygy import (
        BiInfiniteWord,
        SignedWord,
        classify,
        periodic_approximants,
        reduce_stutters,
        sign_decorations,
    )

    if args.op == "reduce":
        w = SignedWord.parse(args.word, periodic=args.periodic)
        r = reduce_stutters(w)
        text = str(r)
        if text:
            print(text)
        else:
            print('""  (empty word: every letter cancels against an equal neighbour)')
    elif args.op == "classify":
        if "(" in args.word:
            w = BiInfiniteWord.parse(args.word)
        else:
            w = SignedWord.parse(args.word, periodic=not args.linear)
        c = classify(w)
        print(dumps({"stutter_free": c.stutter_free, "tied": c.tied,
                     "collision_forward": c.collision_forward,
                     "collision_backward": c.collision_backward}), end="")
    elif args.op == "decorate":
        plus, minus = sign_decorations(SignedWord.parse(args.word, periodic=not args.linear))
        print(plus)
        print(minus)
    elif args.op == "approx":
        if args.n < 1:
            raise ConfigError("-N must be at least 1")
        if "(" in args.word:
            s = BiInfiniteWord.parse(args.word)
        else:
            s = SignedWord.parse(args.word, periodic=True)
        print(periodic_approximants(s, args.n))
    return EXIT_OK


def cmd_collide(args) -> int:
    from .collision_lab import (
        calibrate_Kstar,
        collinear_start,
        collision_bound_experiment,
        integrate_full,
        perturbation_check,
        write_timeline_csv,
    )

    _positive("--r0", args.r0)
    _positive("--delta", args.delta)
    if args.perturbations < 0:
        raise ConfigError("--perturbations must be nonnegative")
    m = args.masses
    kstar = args.kstar if args.kstar is not None else calibrate_Kstar(m, seed=args.seed)
    _positive("--kstar", kstar)
    state = collinear_start(m, args.r0)
    report = collision_bound_experiment(state, m, args.delta, kstar)
    if not report.open_condition:
        raise ConfigError("the start state does not satisfy the collision predicate "
                          f"(J1^2={report.J1_0 ** 2:.6g}); raise --r0 or lower --delta")
    tl = integrate_full(state, m, t_max=1.5 * report.bound)
    out = _outdir(args)
    write_timeline_csv(tl, out / "timeline.csv")
    perturbed = perturbation_check(state, m, args.delta, kstar, n=args.perturbations, seed=args.seed)
    all_pass = report.passed and all(p.passed for p in perturbed)
    payload = {
        "masses": [m.m1, m.m2, m.m3],
        "seed": args.seed,
        "Kstar_calibrated": args.kstar is None,
        "report": report.as_dict(),
        "perturbations": len(perturbed),
        "perturbations_passed": sum(p.passed for p in perturbed),
        "perturbation_max_collision_time_over_bound": max(
            ((p.t_collision or math.inf) / p.bound for p in perturbed), default=None),
        "lj_max_residual": max([report.lj_max_residual] + [p.lj_max_residual for p in perturbed]),
        "passed": all_pass,
    }
    write_json(payload, out / "report.json")
    tc = "none" if report.t_collision is None else f"{report.t_collision:.6g}"
    print(f"collision time: {tc}  bound: {report.bound:.6g}  K*: {kstar:.6g}  "
          f"perturbations passed: {payload['perturbations_passed']}/{len(perturbed)}  "
          f"{'PASS' if all_pass else 'FAIL'}")
    if not all_pass:
        raise BoundViolated("collision bound experiment failed; see report.json")
    return EXIT_OK


def cmd_ends(args) -> int:
    from .jm_metric import circumferential_factor, rho_for_ell

    if args.end not in (1, 2, 3):
        raise ConfigError("--end must be 1, 2 or 3")
    if args.chi_samples < 1:
        raise ConfigError("--chi-samples must be at least 1")
    m = args.masses
    chis = np.linspace(0.0, 2.0 * math.pi, args.chi_samples, endpoint=False)
    limit = m.cyl_radius(args.end)
    rows = []
    for ell in args.ell:
        f = np.array([circumferential_factor(rho_for_ell(ell, c, m, args.end), c, m, args.end)
                      for c in chis])
        rows.append({"ell": ell, "f_min": float(f.min()), "f_max": float(f.max()),
                     "max_dev": float(np.max(np.abs(f - limit))), "f": f.tolist()})
    print(f"end {args.end}, masses {m}, limit cyl_radius = {limit:.10f}")
    print(f"{'ell':>8} {'min_chi f':>14} {'max_chi f':>14} {'max|f-lim|':>12}")
    for r in rows:
        print(f"{r['ell']:8.3g} {r['f_min']:14.10f} {r['f_max']:14.10f} {r['max_dev']:12.3e}")
    out = _outdir(args)
    with open(out / "ends.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ell", "f_min", "f_max", "max_dev"])
        for r in rows:
            w.writerow([format(r[k], ".17g") for k in ("ell", "f_min", "f_max", "max_dev")])
    write_json({"end": args.end, "masses": [m.m1, m.m2, m.m3], "cyl_radius": limit,
                "chi": chis.tolist(), "rows": rows}, out / "ends.json")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shapepants", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of option defaults; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--masses", type=_masses, default=MassTriple.equal(), help="m1,m2,m3")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--no-svg", action="store_true", help="skip the SVG figure")

    p = sub.add_parser("curvature", help="scan the JM curvature on a (phi, theta) grid")
    common(p, "out/curvature")
    p.add_argument("--grid", type=int, default=1000, help="points per axis")
    p.add_argument("--exclusion", type=float, default=0.05, help="collision ball radius")
    p.add_argument("--tol", type=float, default=1e-9, help="sign tolerance")
    p.add_argument("--csv-stride", type=int, default=1, help="write every k-th grid row and column")
    p.set_defaults(func=cmd_curvature)

    p = sub.add_parser("geodesic", help="integrate one JM geodesic")
    common(p, "out/geodesic")
    p.add_argument("--start", default="euler:1", help="'phi,theta', 'euler:k' or 'lagrange'")
    p.add_argument("--angle", type=float, default=1.0, help="heading measured from east (radians)")
    p.add_argument("--length", type=float, default=20.0, help="JM arclength")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--sample-ds", type=float, default=0.01)
    p.set_defaults(func=cmd_geodesic)

    p = sub.add_parser("realize", help="closed geodesic in a tied free homotopy class")
    common(p, "out/realize")
    p.add_argument("--word", default="1+2-3+1-2+3-", help="periodic signed syzygy word")
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-per-letter", type=int, default=DEFAULT_N_PER_LETTER)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for restarts")
    p.set_defaults(func=cmd_realize)

    p = sub.add_parser("syzygy", help="syzygy word combinatorics")
    p.add_argument("op", choices=["reduce", "classify", "decorate", "approx"])
    p.add_argument("word", help="word such as 1221, 1+2-3+ or (12)3(123)")
    p.add_argument("--periodic", action="store_true", help="reduce cyclically")
    p.add_argument("--linear", action="store_true", help="treat the word as finite, not periodic")
    p.add_argument("-N", dest="n", type=int, default=4, help="approximant half length")
    p.set_defaults(func=cmd_syzygy)

    p = sub.add_parser("collide", help="near-collision time bound experiment")
    common(p, "out/collide")
    p.add_argument("--r0", type=float, default=0.05, help="initial binary separation")
    p.add_argument("--delta", type=float, default=1.0, help="lower bound for -r rdot")
    p.add_argument("--kstar", type=float, default=None, help="constant K*; calibrated if omitted")
    p.add_argument("--perturbations", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_collide)

    p = sub.add_parser("ends", help="circumferential factor along a cylindrical end")
    common(p, "out/ends")
    p.add_argument("--end", type=int, default=3)
    p.add_argument("--ell", type=_floats, default=[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0])
    p.add_argument("--chi-samples", type=int, default=32)
    p.set_defaults(func=cmd_ends)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    pre, _ = parser.parse_known_args(argv)
    if not pre.config:
        return parser.parse_args(argv)
    try:
        cfg = json.loads(Path(pre.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {pre.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = subparsers.choices[pre.command]
    known = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise ConfigError(f"unknown config key {key!r} for {pre.command}")
        action = known[dest]
        if dest == "masses":
            value = MassTriple(*value) if isinstance(value, list) else _masses(str(value))
        elif action.type is not None and isinstance(value, str):
            value = action.type(value)
        defaults[dest] = value
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    except (ConfigError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        with np.errstate(over="ignore", under="ignore"):
            return args.func(args)
    except _NUMERICAL as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ShapePantsError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
