"""Command-line front end.

Exit codes: 0 pass, 1 usage error, 2 failed or inconclusive check, 3 I/O error.
Every command writes a JSON report (with a versioned "schema" field) and a
flat CSV; both are written to temporary files and renamed into place only
after the computation succeeds.  Options may also come from a flat
``key = value`` config file; command-line flags override it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from . import closure, collision, convolution, lemma_verifier, weights
from .quadrature import QuadratureSpec
from .wave_patterns import SOUND_SPEED, Region, classify_region, parse_pattern

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_IO = 0, 1, 2, 3
SCHEMA_PREFIX = "boltzwave"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- output helpers ---------------------------------------------------------
def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _json_text(schema: str, payload: dict) -> str:
    return json.dumps({"schema": f"{SCHEMA_PREFIX}.{schema}/1", **_clean(payload)},
                      indent=2, sort_keys=False) + "\n"


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_atomic(files: dict[Path, str]) -> None:
    """Write every file to a temporary sibling first, then rename them all."""
    temps = []
    umask = os.umask(0)
    os.umask(umask)
    try:
        for path, text in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            temps.append((tmp, path))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.chmod(tmp, 0o666 & ~umask)
        for tmp, path in temps:
            os.replace(tmp, path)
    finally:
        for tmp, _ in temps:
            if os.path.exists(tmp):
                os.unlink(tmp)


def _outputs(args) -> tuple[Path, Path]:
    out = Path(args.out or f"{args.command}.json")
    csv_path = Path(args.csv) if args.csv else out.with_suffix(".csv")
    if csv_path == out:
        raise UsageError("--csv must differ from --out")
    return out, csv_path


def _floats(text: str, n: int | None = None) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} numbers, got {len(vals)}")
    return vals


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _nonneg(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return v


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _quad(args) -> QuadratureSpec:
    return QuadratureSpec(rel_tol=args.rel_tol, mc_samples=max(args.mc_samples, 10_000),
                          seed=args.seed)


# -- commands ---------------------------------------------------------------
def cmd_verify_lemma(args) -> tuple[int, str, dict, tuple]:
    if args.id is None:
        raise UsageError("--id is required")
    if args.t_max < lemma_verifier.LATE[0]:
        raise UsageError(f"--t-max must be at least {lemma_verifier.LATE[0]:g} to reach the late window")
    times = [t for t in lemma_verifier.DEFAULT_TIMES if args.t_min <= t <= args.t_max]
    plan = list(lemma_verifier.default_sample_plan(args.c, times))
    if args.n_random:
        rng = np.random.default_rng(args.seed)
        regions = list(Region)
        for k in range(args.n_random):
            t = float(rng.uniform(args.t_min, args.t_max))
            reg = regions[k % len(regions)]
            lo, hi = lemma_verifier.region_interval(reg, t, args.c)
            if hi <= lo:
                continue
            r = float(rng.uniform(lo, hi))
            if classify_region(r, t, args.c) is reg:
                plan.append((r, t))
    case = lemma_verifier.build_case(args.id, c=args.c, plan=plan)
    rep = lemma_verifier.verify(case, _quad(args), workers=args.threads)
    frac = rep.inconclusive / max(len(rep.samples), 1)
    code = EXIT_OK if rep.passed else EXIT_FAIL
    if frac > args.max_inconclusive:
        code = EXIT_FAIL
    payload = {"command": "verify-lemma", "title": case.title, "seed": args.seed,
               "inconclusive_fraction": frac, **rep.to_dict()}
    rows = [(s.r, s.t, s.region, s.lhs, s.rhs, s.ratio, s.error, int(s.converged))
            for s in rep.samples]
    msg = (f"{rep.case_id} c={args.c:.6g}: sup={rep.empirical_sup:.6g} "
           f"stability={rep.stability:.4g} {'PASS' if code == EXIT_OK else 'FAIL'}")
    return code, msg, payload, (("r", "t", "region", "lhs", "rhs", "ratio", "error",
                                 "converged"), rows)


def cmd_nu_profile(args):
    grid = np.arange(0.0, args.xi_max + args.step / 2, args.step)
    nus = [collision.collision_frequency((s, 0.0, 0.0)) for s in grid]
    ratios = [n / math.hypot(1.0, s) for s, n in zip(grid, nus)]
    env = collision.NuEnvelope(min(ratios), max(ratios), tuple(grid))
    payload = {"command": "nu-profile", "nu0": env.nu0, "nu1": env.nu1,
               "xi_max": args.xi_max, "step": args.step, "seed": args.seed}
    if args.mc_samples >= 10_000:
        m, e = collision.collision_frequency_mc((0.0, 0.0, 0.0), args.mc_samples, args.seed)
        payload["nu_at_zero_mc"] = {"mean": m, "stderr": e, "quadrature": nus[0]}
    rows = [(float(s), n, r) for s, n, r in zip(grid, nus, ratios)]
    msg = f"nu0={env.nu0:.6f} nu1={env.nu1:.6f}"
    return EXIT_OK, msg, payload, (("speed", "nu", "nu_over_bracket"), rows)


def cmd_eigensystem(args):
    om = np.asarray(args.omega, float)
    n = np.linalg.norm(om)
    if not n > 0:
        raise UsageError("--omega must be nonzero")
    om = om / n
    vals, vecs = collision.sound_wave_eigensystem(om, quad_order=args.quad_order)
    payload = {"command": "eigensystem", "omega": om, "eigenvalues": vals,
               "eigenvectors": vecs, "sound_speed": SOUND_SPEED}
    msg = "eigenvalues: " + " ".join(f"{v:+.9f}" for v in vals)
    rows = [(k, float(v), *map(float, vecs[k])) for k, v in enumerate(vals)]
    return EXIT_OK, msg, payload, (("index", "eigenvalue", "chi0", "chi1", "chi2", "chi3",
                                    "chi4"), rows)


def cmd_rho_check(args):
    scan = weights.superadditivity_grid_scan(args.grid_step, args.a_max, args.t_max)
    damp, loc = weights.gaussian_damping_max(args.kappa)
    ok = scan.violations == 0 and damp <= weights.E_QUARTER
    payload = {"command": "rho-check", **scan.to_dict(), "kappa": args.kappa,
               "gaussian_damping_max": damp, "gaussian_damping_argmax": loc,
               "gaussian_damping_bound": weights.E_QUARTER, "passed": ok}
    msg = (f"checks={scan.checks} violations={scan.violations} min_slack={scan.min_slack:.3g} "
           f"damping_max={damp:.6f}")
    return (EXIT_OK if ok else EXIT_FAIL), msg, payload, (("t", "min_slack", "violations"),
                                                          scan.by_t)


def _patterns(args):
    try:
        return parse_pattern(args.lhs, c=args.c), parse_pattern(args.rhs, c=args.c)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc))


def cmd_convolve(args):
    if args.lhs is None or args.rhs is None:
        raise UsageError("--lhs and --rhs are required")
    f, g = _patterns(args)
    res = convolution.spacetime_convolve(f, g, args.x, args.t, _quad(args))
    payload = {"command": "convolve", "lhs": f.to_dict(), "rhs": g.to_dict(), "x": args.x,
               "t": args.t, "seed": args.seed, **res.to_dict()}
    row = [args.x, args.t, res.value, res.error_estimate, "", ""]
    code = EXIT_OK if res.converged else EXIT_FAIL
    if args.mc_samples >= 10_000:
        m, e = convolution.mc_convolve_oracle(f, g, args.x, args.t, args.mc_samples, args.seed)
        agree = abs(m - res.value) <= max(0.02 * abs(m), 3 * e)
        payload["mc"] = {"mean": m, "stderr": e, "agree": agree}
        row[4:] = [m, e]
        if not agree:
            code = EXIT_FAIL
    msg = f"value={res.value:.10g} error={res.error_estimate:.3g}"
    return code, msg, payload, (("x", "t", "value", "error", "mc_mean", "mc_stderr"), [row])


def cmd_interaction_map(args):
    if args.lhs is None or args.rhs is None:
        raise UsageError("--lhs and --rhs are required")
    f, g = _patterns(args)
    m = convolution.interaction_map(f, g, args.x, args.t, n_r=args.n_r, n_s=args.n_s,
                                    kappa=args.band, c=args.c)
    lo = max(0.0, 0.5 * (args.t - args.x / args.c))
    hi = min(args.t, 0.5 * (args.t + args.x / args.c))
    cen = m.s_centroid()
    inside = bool(lo <= cen <= hi)
    payload = {"command": "interaction-map", "lhs": f.to_dict(), "rhs": g.to_dict(),
               **m.to_dict(), "s_interval": [lo, hi], "centroid_in_interval": inside}
    payload.pop("r_edges")
    payload.pop("s_edges")
    code = EXIT_OK if (m.total > 0 and inside) else EXIT_FAIL
    msg = f"total={m.total:.6g} s_centroid={cen:.4f} interval=[{lo:.4g}, {hi:.4g}]"
    return code, msg, payload, (("r_prime", "s", "mass", "strong_mass"), m.rows())


def cmd_closure(args):
    try:
        if args.ledger:
            L = closure.ClosureLedger.from_json(Path(args.ledger).read_text())
        else:
            L = closure.default_ledger()
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"invalid ledger: {exc}")
    if args.f0_norm is not None:
        L = L.with_f0_norm(args.f0_norm)
    try:
        base = closure.check_closure(L.with_eps(0))
    except closure.ClosureHypothesisError as exc:
        return EXIT_FAIL, str(exc), {"command": "closure", "rejected": str(exc),
                                     "ledger": L.to_dict()}, (("n", "f1", "f2_lin", "f2_nonlin"), [])
    if args.eps_factor is not None:
        L = L.with_eps(base.eps_max * closure.mp.mpf(args.eps_factor))
    elif args.eps is not None:
        L = L.with_eps(args.eps)
    else:
        L = L.with_eps(base.eps_max)
    verdict = closure.check_closure(L)
    it = closure.bound_iteration_simulate(L, args.n_steps, keep=args.keep, coupling=args.coupling)
    ok = verdict.passed and it.bounded
    payload = {"command": "closure", "ledger": L.to_dict(), "verdict": verdict.to_dict(),
               "iteration": it.to_dict(), "coupling": args.coupling, "passed": ok}
    rows = [(s.n, *(closure._out(v) for v in (s.f1, s.f2_lin, s.f2_nonlin))) for s in it.steps]
    msg = (f"eps_max={closure._out(verdict.eps_max)} eps={closure._out(L.eps)} "
           f"conditions={'pass' if verdict.passed else 'FAIL: ' + '; '.join(verdict.failed())} "
           f"iteration={'bounded' if it.bounded else f'violated at step {it.first_violation} ({it.violated})'}")
    return (EXIT_OK if ok else EXIT_FAIL), msg, payload, (("n", "f1", "f2_lin", "f2_nonlin"), rows)


COMMANDS = {
    "verify-lemma": (cmd_verify_lemma, "ratio-report",
                     "Certify one convolution estimate by bounded-ratio sampling. "
                     "CSV columns: r,t,region,lhs,rhs,ratio,error,converged."),
    "nu-profile": (cmd_nu_profile, "nu-profile",
                   "Collision frequency along a speed grid and its envelope. "
                   "CSV columns: speed,nu,nu_over_bracket."),
    "eigensystem": (cmd_eigensystem, "eigensystem",
                    "Eigenvalues and vectors of the projected transport symbol. "
                    "CSV columns: index,eigenvalue,chi0..chi4."),
    "rho-check": (cmd_rho_check, "rho-check",
                  "Superadditivity grid scan of the velocity-time weight and the Gaussian "
                  "damping bound. CSV columns: t,min_slack,violations."),
    "convolve": (cmd_convolve, "convolution",
                 "Space-time convolution of two wave patterns at one point. "
                 "CSV columns: x,t,value,error,mc_mean,mc_stderr."),
    "interaction-map": (cmd_interaction_map, "interaction-map",
                        "Integrand mass on the (r', s) grid of a space-time convolution. "
                        "CSV columns: r_prime,s,mass,strong_mass."),
    "closure": (cmd_closure, "closure",
                "Smallness conditions of the bound iteration and its simulation. "
                "CSV columns: n,f1,f2_lin,f2_nonlin."),
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags take precedence")
    common.add_argument("--out", help="JSON report path (default: <command>.json)")
    common.add_argument("--csv", help="CSV path (default: the JSON path with .csv)")
    common.add_argument("--seed", type=int, default=20240601)
    common.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: $BOLTZWAVE_THREADS or 1)")
    common.add_argument("--rel-tol", type=_positive, default=1e-5)
    common.add_argument("--mc-samples", type=int, default=0,
                        help="Monte-Carlo cross-check samples (0 disables; at least 1e4)")
    common.add_argument("--quiet", action="store_true")

    p = _Parser(prog="boltzwave", description="Numerical checks for wave-pattern estimates "
                "of the linearized Boltzmann equation.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    subs = {}
    for name, (_, _, help_text) in COMMANDS.items():
        subs[name] = sub.add_parser(name, parents=[common], help=help_text.split(". ")[0],
                                    description=help_text)
    s = subs["verify-lemma"]
    s.add_argument("--id", choices=lemma_verifier.CASE_IDS)
    s.add_argument("--c", type=_positive, default=SOUND_SPEED)
    s.add_argument("--t-min", type=_positive, default=lemma_verifier.EARLY[0])
    s.add_argument("--t-max", type=_positive, default=lemma_verifier.LATE[1])
    s.add_argument("--n-random", type=int, default=0, help="extra seeded random samples")
    s.add_argument("--max-inconclusive", type=float, default=0.05)
    s = subs["nu-profile"]
    s.add_argument("--xi-max", type=_positive, default=50.0)
    s.add_argument("--step", type=_positive, default=0.5)
    s = subs["eigensystem"]
    s.add_argument("--omega", type=lambda x: _floats(x, 3), default=[0.0, 0.0, 1.0])
    s.add_argument("--quad-order", type=int, default=12)
    s = subs["rho-check"]
    s.add_argument("--grid-step", type=_positive, default=0.25)
    s.add_argument("--a-max", type=_positive, default=100.0)
    s.add_argument("--t-max", type=_positive, default=200.0)
    s.add_argument("--kappa", type=_positive, default=0.2)
    for name in ("convolve", "interaction-map"):
        s = subs[name]
        s.add_argument("--lhs", help="pattern shorthand, e.g. huygens:2.5 or exp:2")
        s.add_argument("--rhs", help="pattern shorthand, e.g. hpoly:4,2")
        s.add_argument("--x", type=_nonneg, default=0.0, help="|x|")
        s.add_argument("--t", type=_positive, default=10.0)
    subs["convolve"].add_argument("--c", type=_positive, default=SOUND_SPEED)
    s = subs["interaction-map"]
    s.add_argument("--c", type=_positive, default=1.0)
    s.add_argument("--n-r", type=int, default=120)
    s.add_argument("--n-s", type=int, default=100)
    s.add_argument("--band", type=_positive, default=3.0, help="strong-set band width κ")
    s = subs["closure"]
    s.add_argument("--ledger", help="ledger JSON (default: shipped empirical ledger)")
    s.add_argument("--eps", type=_nonneg, default=None)
    s.add_argument("--eps-factor", type=_nonneg, default=None, help="ε as a multiple of eps_max")
    s.add_argument("--f0-norm", type=_positive, default=None)
    s.add_argument("--n-steps", type=int, default=1000)
    s.add_argument("--keep", type=int, default=10, help="iterates stored besides the last")
    s.add_argument("--coupling", choices=closure.COUPLINGS, default="displayed")
    p._subparsers_map = subs
    return p


def read_config(path: str) -> dict[str, str]:
    out = {}
    for k, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{k}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def _apply_config(sp: argparse.ArgumentParser, cfg: dict[str, str]) -> None:
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(cfg) - set(actions))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    defaults = {}
    for key, val in cfg.items():
        a = actions[key]
        if isinstance(a, argparse._StoreTrueAction):
            defaults[key] = _bool(val)
        else:
            try:
                v = a.type(val) if a.type else val
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key}: {exc}")
            if a.choices is not None and v not in a.choices:
                raise UsageError(f"config key {key}: invalid choice {v!r}")
            defaults[key] = v
    sp.set_defaults(**defaults)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    sp = parser._subparsers_map[args.command]
    try:
        if args.config:
            try:
                cfg = read_config(args.config)
            except OSError as exc:
                print(f"boltzwave: cannot read config: {exc}", file=sys.stderr)
                return EXIT_IO
            _apply_config(sp, cfg)
            args = parser.parse_args(argv)
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be positive")
        if 0 < args.mc_samples < 10_000:
            raise UsageError("--mc-samples must be 0 or at least 10000")
        out, csv_path = _outputs(args)
        fn, schema, _ = COMMANDS[args.command]
        code, msg, payload, (header, rows) = fn(args)
    except UsageError as exc:
        sp.print_usage(sys.stderr)
        print(f"{sp.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    payload.setdefault("exit_code", code)
    try:
        write_atomic({out: _json_text(schema, payload), csv_path: _csv_text(header, rows)})
    except OSError as exc:
        print(f"boltzwave: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        print(msg)
    return code


if __name__ == "__main__":
    sys.exit(main())
