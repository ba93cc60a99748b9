"""Command line interface: ``lindjump {validate,simulate,analytic,compare}``.

Exit codes: 0 success, 1 runtime failure, 2 config rejection or usage
error, 3 comparison failure.  Every written data file is accompanied by a
JSON manifest from which the run can be repeated.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import analytics as A
from . import estimators as E
from . import io
from .errors import DarkStateError, LindjumpError, SpecError
from .model import Kind, build_generators, check_generator_identities, classical_stationary, load_spec
from .supermath import VectorState
from .trajectory import ALGORITHMS, DEFAULT_BURN_IN, ensemble_average, simulate_trajectory

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_COMPARE = 0, 1, 2, 3
SEED_ENV = "LINDJUMP_SEED"
DEFAULT_SEED = 0

KS_MAX = 0.02
MARGINAL_MAX = 1e-6
SYMMETRY_MAX = 1e-10


class UsageError(Exception):
    pass


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    return DEFAULT_SEED


def _manifest(args, spec, subcommand, outputs, started, **extra) -> dict:
    m = {
        "tool": "lindjump",
        "version": __version__,
        "subcommand": subcommand,
        "argv": list(args._argv),
        "config": str(args.config),
        "spec": spec.to_dict(),
        "spec_hash": spec.digest(),
        "outputs": [str(p) for p in outputs],
        "wall_time_s": round(time.perf_counter() - started, 6),
    }
    m.update(extra)
    return m


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


# --- validate ------------------------------------------------------------------


def cmd_validate(args) -> int:
    spec = load_spec(args.config)
    gens = build_generators(spec)
    check_generator_identities(gens)
    g = spec.effective_decay
    intens = np.array([A.markov_intensity(g[r], spec.rabi[r], spec.detuning[r]) for r in range(spec.r_max)])
    print(f"OK  {args.config}  kind={spec.kind.value} scheme={spec.scheme.value} r_max={spec.r_max}")
    print(f"  spec hash      {spec.digest()}")
    print(f"  phi_tilde_R    {_fmt(spec.phi_tilde)}")
    print(f"  gamma_tilde_R  {_fmt(spec.gamma_tilde)}")
    print(f"  I_R            {_fmt(intens)}")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(intens > 0, spec.phi_tilde / intens, np.inf)
    print(f"  phi_tilde/I_R  {_fmt(ratio)}")
    print(f"  I_inf          {A.stationary_intensity(spec):.6g}")
    print(f"  p_inf          {_fmt(A.stationary_jump_weights(spec).p)}")
    if spec.r_max == 1:
        print("  note: single configuration, renewal regime (Lambda = 0)")
    elif spec.kind is Kind.SELF_FLUCTUATING:
        regime = "slow" if ratio.max() < 0.1 else ("fast" if ratio.min() > 10 else "intermediate")
        print(f"  fluctuation regime: {regime}")
    return EXIT_OK


def _fmt(a) -> str:
    return "[" + ", ".join(f"{x:.6g}" for x in np.asarray(a)) + "]"


# --- simulate ------------------------------------------------------------------


def _init_state(spec, init, p=None):
    if init == "stationary":
        return "stationary"
    if init == "ground":
        pops = classical_stationary(spec) if p is None else np.asarray(p, dtype=float)
        return VectorState.ground(pops)
    raise UsageError(f"unknown --init {init!r}")


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    spec = load_spec(args.config)
    seed = _seed(args)
    if args.events is None and args.time is None:
        raise UsageError("simulate needs --events and/or --time")
    out = Path(args.out)
    algorithm = args.algorithm
    init = _init_state(spec, args.init, _parse_p(args.p, spec))
    stop = {"events": args.events, "time": args.time}
    algo_tag = algorithm if algorithm == "coarse" else f"fine(dt={args.dt:g})"
    common = dict(seeds=[seed], algorithm=algo_tag, stop=stop, init=args.init, burn_in=args.burn_in)

    if args.trajectories > 1:
        if args.time is None or args.init == "stationary":
            raise UsageError("ensembles need --time and --init ground")
        grid = np.arange(int(np.floor(args.time / args.trace_dt + 1e-9)) + 1) * args.trace_dt
        ens = ensemble_average(spec, args.trajectories, grid, seed, init, algorithm=algorithm, dt=args.dt,
                               jobs=args.jobs)
        path = out.with_name(out.name + ".ensemble.csv")
        r = spec.r_max
        header = ["t", "upper_mean", "upper_se"] + [f"P_{k}_mean" for k in range(r)] + [f"P_{k}_se" for k in range(r)]
        rows = ([io._f(x) for x in [t, um, us, *pm, *ps]]
                for t, um, us, pm, ps in zip(ens.grid, ens.upper_mean, ens.upper_se, ens.populations_mean,
                                             ens.populations_se))
        io._write_rows(path, header, rows)
        io.write_manifest(_manifest_path(out), _manifest(args, spec, "simulate", [path], started,
                                                         trajectories=args.trajectories, **common))
        print(f"wrote {path}")
        return EXIT_OK

    outputs = []
    if args.events == 0:
        io.write_manifest(_manifest_path(out), _manifest(args, spec, "simulate", outputs, started, n_events=0,
                                                         **common))
        print("no events requested; wrote manifest only")
        return EXIT_OK
    trace_dt = None if args.no_traces else args.trace_dt
    status = EXIT_OK
    dark = False
    try:
        log, traces = simulate_trajectory(spec, seed, max_events=args.events, max_time=args.time,
                                          algorithm=algorithm, dt=args.dt, init=init, trace_dt=trace_dt,
                                          burn_in=args.burn_in)
    except DarkStateError as exc:
        log, traces = exc.partial_log, None
        dark = True
        status = EXIT_RUNTIME
        print(f"error: {exc}", file=sys.stderr)
    ev_path = io.write_event_log(log, out.with_name(out.name + ".events.csv"))
    outputs.append(ev_path)
    if traces is not None:
        outputs.append(io.write_traces(traces, out.with_name(out.name + ".traces.csv")))
    io.write_manifest(_manifest_path(out), _manifest(args, spec, "simulate", outputs, started,
                                                     n_events=log.n_events, total_time=log.total_time,
                                                     dark_state=dark, **common))
    print(f"wrote {', '.join(str(p) for p in outputs)} ({log.n_events} events, t={log.total_time:.6g})")
    return status


# --- analytic ------------------------------------------------------------------


def _parse_p(text, spec):
    if text is None:
        return None
    try:
        p = np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise UsageError(f"--p must be comma-separated numbers, got {text!r}") from None
    if p.size != spec.r_max:
        raise UsageError(f"--p needs {spec.r_max} values")
    return p


def cmd_analytic(args) -> int:
    started = time.perf_counter()
    spec = load_spec(args.config)
    out = Path(args.out)
    grid = A.default_grid(args.tau_max, args.points)
    obj = args.object
    outputs = []
    extra = {"object": obj, "tau_max": args.tau_max, "points": args.points}
    if obj == "w1":
        outputs.append(io.write_curve(A.w1_stationary(spec, grid, channels=args.channels), out))
    elif obj == "w2":
        outputs.append(io.write_surface(A.w2_stationary(spec, grid, channels=args.channels), out))
    elif obj == "lambda":
        w1 = A.w1_stationary(spec, grid, channels=args.channels)
        w2 = A.w2_stationary(spec, grid, channels=args.channels)
        outputs.append(io.write_lambda(A.renewal_departure(w1, w2), out))
    elif obj == "wst":
        p = _parse_p(args.p, spec)
        if p is None:
            raise UsageError("--object wst needs --p")
        outputs.append(io.write_curve(A.w_stochastic(spec, p, grid), out))
        extra["p"] = p.tolist()
    elif obj == "master":
        p = _parse_p(args.p, spec)
        p = np.full(spec.r_max, 1.0 / spec.r_max) if p is None else p
        t = np.linspace(0.0, args.t_max, args.points)
        curves = A.master_evolve(build_generators(spec), VectorState.ground(p), t)
        outputs.append(io.write_master(curves, out))
        extra.update(p=p.tolist(), t_max=args.t_max)
    elif obj == "slowlimit":
        if spec.kind is not Kind.SELF_FLUCTUATING:
            raise UsageError("slowlimit is defined for SelfFluctuating models only")
        sl = A.slow_limit_approximations(spec, grid)
        outputs.append(io.write_curve(sl.w1, out))
        outputs.append(io.write_surface(sl.w2, out.with_name(out.stem + ".w2" + out.suffix)))
        exact = A.w1_stationary(spec, grid)
        extra.update(p_approx=sl.p.tolist(), p_exact=A.stationary_jump_weights(spec).p.tolist(),
                     ratio=sl.ratio, mode_relative_error=A.mode_relative_error(exact, sl.w1))
        print(f"p_approx={_fmt(sl.p)} mode error={extra['mode_relative_error']:.4g} ratio={sl.ratio:.4g}")
    io.write_manifest(_manifest_path(out), _manifest(args, spec, "analytic", outputs, started, **extra))
    print(f"wrote {', '.join(str(p) for p in outputs)}")
    return EXIT_OK


# --- compare -------------------------------------------------------------------


def cmd_compare(args) -> int:
    started = time.perf_counter()
    spec = load_spec(args.config)
    ref = load_spec(args.against) if args.against else spec
    seed = _seed(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    log, _ = simulate_trajectory(spec, seed, max_events=args.traj_events, algorithm=args.algorithm, dt=args.dt,
                                 trace_dt=None)
    hs = E.HistogramSpec(bin_width=args.bin_width, range=(0.0, args.tau_max))
    hist = E.waiting_histogram(log, hs)
    joint = E.joint_histogram(log, hs)
    checks = {}

    ks = E.ks_against_stationary(log, ref)
    checks["w1_ks"] = {"value": ks, "threshold": KS_MAX, "pass": ks < KS_MAX}

    # joint-histogram marginal against the waiting histogram, binomial 3 sigma per bin
    jm = joint.counts.sum(axis=1) / joint.n_samples
    hm = hist.counts / hist.n_samples
    sigma = np.sqrt(np.maximum(hm * (1 - hm), 1e-300) / hist.n_samples)
    dev = float(np.max(np.abs(jm - hm) / sigma))
    checks["joint_marginal_sigma"] = {"value": dev, "threshold": 3.0, "pass": dev < 3.0}

    grid = hist.grid
    marg = A.marginal_residual(ref, grid)
    checks["analytic_marginal_residual"] = {"value": marg, "threshold": MARGINAL_MAX, "pass": marg < MARGINAL_MAX}
    w1 = A.w1_stationary(ref, grid)
    w2 = A.w2_stationary(ref, grid)
    if ref.kind is Kind.LIGHT_ASSISTED and ref.r_max == 2:
        sym = A.symmetry_residual(w2)
        checks["w2_symmetry"] = {"value": sym, "threshold": SYMMETRY_MAX, "pass": sym < SYMMETRY_MAX}

    outputs = [
        io.write_curve(hist, outdir / "w1_histogram.csv"),
        io.write_curve(w1, outdir / "w1_analytic.csv"),
        io.write_surface(joint, outdir / "w2_histogram.csv"),
        io.write_surface(w2, outdir / "w2_analytic.csv"),
    ]
    lam_est = E.lambda_estimate(joint, hist)
    outputs.append(io.write_lambda(lam_est, outdir / "lambda_estimate.csv", counts=joint.counts))
    outputs.append(io.write_lambda(A.renewal_departure(w1, w2), outdir / "lambda_analytic.csv"))
    passed = all(c["pass"] for c in checks.values())
    report = {"n_events": log.n_events, "seed": seed, "reference": str(args.against or args.config),
              "checks": checks, "pass": passed}
    report_path = outdir / "report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    outputs.append(report_path)
    io.write_manifest(outdir / "manifest.json", _manifest(args, spec, "compare", outputs, started, seeds=[seed],
                                                          algorithm=args.algorithm,
                                                          stop={"events": args.traj_events}))
    for name, c in checks.items():
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {name:28s} {c['value']:.4g} (threshold {c['threshold']:g})")
    if not passed:
        failed = [n for n, c in checks.items() if not c["pass"]]
        print(f"comparison failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_COMPARE
    return EXIT_OK


# --- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lindjump", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lindjump {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model config and print derived rates")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="simulate a trajectory (or an ensemble) and write CSV")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help=f"master seed (default ${SEED_ENV} or {DEFAULT_SEED})")
    p.add_argument("--events", type=int, default=None, help="stop after this many events")
    p.add_argument("--time", type=float, default=None, help="stop at this time (units 1/Omega)")
    p.add_argument("--algorithm", choices=ALGORITHMS, default="coarse")
    p.add_argument("--dt", type=float, default=1e-3, help="time step of the fine algorithm")
    p.add_argument("--init", choices=("stationary", "ground"), default="stationary",
                   help="post-event stationary state, or the ground state with --p (default: classical stationary)")
    p.add_argument("--p", default=None, help="configurational populations for --init ground, e.g. 0.5,0.5")
    p.add_argument("--burn-in", type=int, nargs="?", const=DEFAULT_BURN_IN, default=0,
                   help=f"discard the first K events (K={DEFAULT_BURN_IN} when given without a value)")
    p.add_argument("--trace-dt", type=float, default=0.05)
    p.add_argument("--no-traces", action="store_true")
    p.add_argument("--trajectories", type=int, default=1, help="ensemble size; >1 writes averaged traces")
    p.add_argument("--jobs", type=int, default=None, help="worker threads (default: available CPUs)")
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analytic", help="tabulate an analytic curve or surface")
    p.add_argument("config")
    p.add_argument("--object", required=True, choices=("w1", "w2", "lambda", "wst", "master", "slowlimit"))
    p.add_argument("--p", default=None, help="post-event weights for wst / initial populations for master")
    p.add_argument("--tau-max", type=float, default=A.DEFAULT_TAU_MAX)
    p.add_argument("--points", type=int, default=A.DEFAULT_POINTS)
    p.add_argument("--t-max", type=float, default=50.0, help="time span for --object master")
    p.add_argument("--channels", choices=("photon", "all"), default="photon")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("compare", help="score a simulated trajectory against the analytic results")
    p.add_argument("config")
    p.add_argument("--traj-events", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--algorithm", choices=ALGORITHMS, default="coarse")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--against", default=None, help="reference config for the analytic side (default: same)")
    p.add_argument("--bin-width", type=float, default=0.05)
    p.add_argument("--tau-max", type=float, default=20.0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"config rejected: {args.config}", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lindjump: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LindjumpError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
