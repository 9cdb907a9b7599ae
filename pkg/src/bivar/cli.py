"""Command-line entry point ``bivar``."""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import approx_identity as ai
from . import ergodic as erg
from .averages import variation_of_averages
from .czd import cz_decompose, verify_cz, weak_ratio
from .experiments import ExperimentConfig, emit_report, run_sweep
from .martingale import martingale_variation
from .signal import DiscreteSignal, StepFunction
from .variation import variation_norm


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise SystemExit(f"bivar: cannot read {path}: {exc}")


def _step(path: str) -> StepFunction:
    return StepFunction.from_json(_read_text(path))


def _write_csv(path: str | None, header, rows) -> None:
    out = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in r])
    finally:
        if path:
            out.close()


def _print(obj) -> None:
    print(json.dumps(obj, indent=2))


# --- handlers -------------------------------------------------------------------


def cmd_variation(args) -> int:
    if args.file:
        seq = np.loadtxt(args.file, delimiter=",", ndmin=1)
    else:
        seq = np.array([float(s) for s in args.seq.split(",")])
    res = variation_norm(seq, args.rho)
    _print({"value": res.value, "witness": list(res.witness)})
    return 0


def cmd_averages_vrho(args) -> int:
    res = variation_of_averages(_step(args.f), _step(args.g), args.x, args.rho)
    _print({"value": res.value, "witness": list(res.witness)})
    return 0


def cmd_averages_ratio(args) -> int:
    cfg = ExperimentConfig.from_dict({**json.loads(_read_text(args.config)), "experiment": "averages-lp"})
    rows = run_sweep(cfg, args.threads)
    _write_csv(args.out, ("seed", "case_id", "p1", "p2", "p", "rho", "ratio"), [(r.seed, r.case_id, r.p1, r.p2, r.p, r.rho, r.value) for r in rows])
    return 0 if all(math.isfinite(r.value) for r in rows) else 1


def cmd_martingale_vrho(args) -> int:
    res = martingale_variation(_step(args.f), _step(args.g), args.x, args.rho)
    _print({"value": res.value, "witness": list(res.witness), "flags": list(res.flags)})
    return 0


def cmd_czd_run(args) -> int:
    f = _step(args.f)
    d = cz_decompose(f, args.lam)
    out = {
        "lambda": d.lam,
        "good": json.loads(d.good.to_json()),
        "bad_parts": [{"j": I.j, "m": I.m, "b": json.loads(b.to_json())} for I, b in d.bad_parts],
        "omega": [list(iv) for iv in d.omega],
    }
    code = 0
    if args.verify:
        rep = verify_cz(d, f)
        out["checks"] = {k: {"pass": ok, "slack": slack} for k, (ok, slack) in rep.checks.items()}
        code = 0 if rep.passed else 1
    _print(out)
    return code


def cmd_czd_weak(args) -> int:
    lam = np.geomspace(args.lam_min, args.lam_max, args.lam_count)
    w = weak_ratio(_step(args.f1), _step(args.f2), args.rho, lam, args.cells, args.depth)
    _write_csv(args.out, ("lambda", "measure_lo", "measure_hi", "ratio"), [(r.lam, r.measure_lo, r.measure_hi, r.ratio) for r in w.rows])
    print(f"sup_ratio {w.sup_ratio:.17g}", file=sys.stderr)
    return 0 if math.isfinite(w.sup_ratio) else 1


def cmd_identity_vrho(args) -> int:
    pk = ai.make_psi_kernel(args.kernel)
    K = pk.select(args.family)
    res = ai.variation_of_identity_family(K, _step(args.f), _step(args.g), args.x, args.rho, args.per_octave)
    _print({"value": res.value, "refinement_delta": res.error_estimate})
    return 0


def cmd_identity_square(args) -> int:
    pk = ai.make_psi_kernel(args.kernel)
    res = ai.square_function(pk, _step(args.f), _step(args.g), args.x, args.which)
    _print({"value": res.value, "budget": res.budget, "window": list(res.window), "flags": list(res.flags)})
    return 0


def cmd_identity_kernelcheck(args) -> int:
    phi = ai.make_kernel(args.kernel)
    pts = ai.direction_grid(n_dir=args.directions)
    if args.condition == "size":
        sup, rows = ai.kernel_size_condition(phi, args.rho, pts, args.per_octave)
    else:
        sup, rows = ai.kernel_regularity_condition(phi, args.rho, pts, tuple(args.h), args.axis, args.per_octave)
        coarse = {(r["y"], r["z"], r["h"]): r["weighted_value"] for r in rows}
        fine = ai.kernel_regularity_condition(phi, args.rho, pts, tuple(args.h), args.axis, 2 * args.per_octave)[1]
        for r, s in zip(rows, fine):
            r["refinement_delta"] = s["weighted_value"] - coarse[(r["y"], r["z"], r["h"])]
    _write_csv(args.out, ("y", "z", "weighted_value", "refinement_delta"), [(r["y"], r["z"], r["weighted_value"], r["refinement_delta"]) for r in rows])
    print(f"sup_C {sup:.17g}", file=sys.stderr)
    return 0 if math.isfinite(sup) else 1


def _system(args):
    if args.system == "rotation":
        return erg.rotation(args.alpha if args.alpha == "golden" else float(args.alpha))
    if args.system == "rational-rotation":
        return erg.rational_rotation(args.p, args.q)
    if args.system == "cyclic":
        return erg.cyclic_shift(args.n)
    return erg.interval_exchange(args.lam)


def _observable(sys_, path):
    text = _read_text(path)
    if sys_.on_circle:
        return StepFunction.from_json(text)
    return DiscreteSignal.from_json(text)


def cmd_ergodic_run(args) -> int:
    sys_ = _system(args)
    f, g = _observable(sys_, args.f), _observable(sys_, args.g)
    rng = np.random.default_rng(args.seed)
    if sys_.on_circle:
        xs = rng.random(args.samples)
    else:
        xs = rng.integers(0, sys_.n, args.samples)
    sched = sorted({args.Lmax} | {2**k for k in range(int(math.log2(max(args.Lmax, 1))) + 1)})
    rows = erg.convergence_diagnostic(sys_, f, g, xs, args.rho, sched)
    _write_csv(args.out, ("x", "L", "QL", "deviation", "var_tail"), [(float(r.x), r.L, r.QL, r.deviation, r.var_tail) for r in rows])
    return 0


def cmd_sweep(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    rows = run_sweep(cfg, args.threads)
    emit_report(rows, args.format, args.out)
    return 0 if all(math.isfinite(r.value) for r in rows) else 1


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bivar", description="Variation of bilinear averages: exact evaluators and ratio experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("variation", help="rho-variation of a sequence")
    src = v.add_mutually_exclusive_group(required=True)
    src.add_argument("--seq", help="comma-separated values")
    src.add_argument("--file", help="CSV file with one row of values")
    v.add_argument("--rho", type=float, required=True)
    v.set_defaults(func=cmd_variation)

    av = sub.add_parser("averages", help="bilinear averages over cubes").add_subparsers(dest="action", required=True)
    a = av.add_parser("vrho")
    a.add_argument("--f", required=True)
    a.add_argument("--g", required=True)
    a.add_argument("--x", type=float, required=True)
    a.add_argument("--rho", type=float, required=True)
    a.set_defaults(func=cmd_averages_vrho)
    a = av.add_parser("ratio")
    a.add_argument("--config", required=True)
    a.add_argument("--out")
    a.add_argument("--threads", type=int, default=1)
    a.set_defaults(func=cmd_averages_ratio)

    mg = sub.add_parser("martingale", help="dyadic martingale averages").add_subparsers(dest="action", required=True)
    a = mg.add_parser("vrho")
    a.add_argument("--f", required=True)
    a.add_argument("--g", required=True)
    a.add_argument("--x", type=float, required=True)
    a.add_argument("--rho", type=float, required=True)
    a.set_defaults(func=cmd_martingale_vrho)

    cz = sub.add_parser("czd", help="Calderon-Zygmund decomposition").add_subparsers(dest="action", required=True)
    a = cz.add_parser("run")
    a.add_argument("--f", required=True)
    a.add_argument("--lambda", dest="lam", type=float, required=True)
    a.add_argument("--verify", action="store_true")
    a.set_defaults(func=cmd_czd_run)
    a = cz.add_parser("weak")
    a.add_argument("--f1", required=True)
    a.add_argument("--f2", required=True)
    a.add_argument("--rho", type=float, default=3.0)
    a.add_argument("--lam-min", type=float, default=1e-3)
    a.add_argument("--lam-max", type=float, default=2.0)
    a.add_argument("--lam-count", type=int, default=25)
    a.add_argument("--cells", type=int, default=2048)
    a.add_argument("--depth", type=int, default=10)
    a.add_argument("--out")
    a.set_defaults(func=cmd_czd_weak)

    idn = sub.add_parser("identity", help="bilinear approximate identities").add_subparsers(dest="action", required=True)
    kernels = sorted(ai.KERNEL_FAMILIES)
    a = idn.add_parser("vrho")
    a.add_argument("--kernel", choices=kernels, default="gaussian-2d")
    a.add_argument("--family", choices=("phi", "product", "psi"), default="phi")
    a.add_argument("--f", required=True)
    a.add_argument("--g", required=True)
    a.add_argument("--x", type=float, required=True)
    a.add_argument("--rho", type=float, required=True)
    a.add_argument("--per-octave", type=int, default=16)
    a.set_defaults(func=cmd_identity_vrho)
    a = idn.add_parser("square")
    a.add_argument("--kernel", choices=kernels, default="gaussian-2d")
    a.add_argument("--which", choices=("psi", "psi_tilde"), default="psi")
    a.add_argument("--f", required=True)
    a.add_argument("--g", required=True)
    a.add_argument("--x", type=float, required=True)
    a.set_defaults(func=cmd_identity_square)
    a = idn.add_parser("kernelcheck")
    a.add_argument("--kernel", choices=kernels, default="gaussian-2d")
    a.add_argument("--condition", choices=("size", "regularity"), default="size")
    a.add_argument("--rho", type=float, default=3.0)
    a.add_argument("--directions", type=int, default=32)
    a.add_argument("--per-octave", type=int, default=32)
    a.add_argument("--h", type=float, nargs="+", default=[0.1, 0.05])
    a.add_argument("--axis", choices=("y", "z"), default="y")
    a.add_argument("--out")
    a.set_defaults(func=cmd_identity_kernelcheck)

    eg = sub.add_parser("ergodic", help="bilinear ergodic averages").add_subparsers(dest="action", required=True)
    a = eg.add_parser("run")
    a.add_argument("--system", choices=("rotation", "rational-rotation", "cyclic", "iet"), default="rotation")
    a.add_argument("--alpha", default="golden")
    a.add_argument("--p", type=int, default=1)
    a.add_argument("--q", type=int, default=5)
    a.add_argument("--n", type=int, default=5)
    a.add_argument("--lam", type=float, default=erg.GOLDEN)
    a.add_argument("--f", required=True)
    a.add_argument("--g", required=True)
    a.add_argument("--rho", type=float, default=3.0)
    a.add_argument("--Lmax", type=int, default=10000)
    a.add_argument("--samples", type=int, default=64)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out")
    a.set_defaults(func=cmd_ergodic_run)

    s = sub.add_parser("sweep", help="seeded ratio sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, TypeError, OSError) as exc:
        print(f"bivar: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
