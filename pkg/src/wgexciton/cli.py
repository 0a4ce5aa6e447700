"""Command-line pipelines: mode tables, FC/GI simulations, fits and speedups.

Every run writes into its own output directory.  Files carry a provenance
header (config digest, seed, version) and no timestamps, so identical
configurations give byte-identical outputs.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, constants
from .dynamics import (
    Drive,
    DynamicsParams,
    GridError,
    decay_rate,
    emitted_field_fc,
    emitted_field_gi,
    frequency_shift,
)
from .dynamics.analytic import FieldTrace
from .inference import MODELS, FitProblem, extract_speedup, fit_mle
from .layered_medium import StackParseError, StackValidationError, load_fixture, load_stack
from .mode_solver import ModeNotFoundError, RootNotConvergedError, solve_modes
from .observables import (
    DivergenceModel,
    HyperfineModel,
    TimeTrace,
    config_digest,
    divergence_average,
    hyperfine_average,
    poissonize,
)

log = logging.getLogger("wgexciton")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2
FIXTURE_NAMES = ("fc", "gi")


def _stack(spec: str):
    if spec in FIXTURE_NAMES and not Path(spec).exists():
        return load_fixture(spec)
    path = Path(spec)
    if not path.is_file():
        raise FileNotFoundError(f"stack file not found: {path}")
    return load_stack(path)


def _provenance(args, exclude=("out", "func", "verbose")) -> dict:
    items = {k: v for k, v in sorted(vars(args).items()) if k not in exclude}
    return {
        "config_sha256": config_digest({k: repr(v) for k, v in items.items()}),
        "seed": str(getattr(args, "seed", "none")),
        "version": __version__,
        "command": args.command,
    }


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(path: Path, prov: dict, values: dict) -> None:
    lines = [f"# {k} = {v}" for k, v in prov.items()]
    lines += [f"{k} = {v}" for k, v in values.items()]
    path.write_text("\n".join(lines) + "\n")


def _t_grid(args) -> np.ndarray:
    if not 0 < args.tmax_ns <= constants.REPETITION_PERIOD_NS:
        raise ValueError(f"--tmax-ns must be in (0, {constants.REPETITION_PERIOD_NS}]")
    if not args.tstep_ns > 0:
        raise ValueError("--tstep-ns must be > 0")
    n = int(round(args.tmax_ns / args.tstep_ns))
    # bin centres
    return (np.arange(n) + 0.5) * args.tstep_ns


def _hyperfine(args) -> HyperfineModel:
    return HyperfineModel(args.broadening_gamma, args.splitting_gamma, args.hf_nodes)


def _pick_mode(modes, index: int):
    if not 1 <= index <= len(modes):
        raise ValueError(f"--mode {index} not available; stack has {len(modes)} resonant modes")
    return modes[index - 1]


def _fmt(x: float) -> str:
    return f"{x:.6g}"


# --- modes -------------------------------------------------------------------


def cmd_modes(args) -> int:
    stack = _stack(args.stack)
    modes = solve_modes(stack, max_modes=args.max_modes)
    out = _outdir(args)
    prov = _provenance(args)
    rows = ["m,one_minus_re_nu,im_nu,theta_deg,lambda_mm,re_zeta,im_zeta"]
    for m in modes:
        rows.append(
            ",".join(
                [
                    str(m.m),
                    f"{m.deficit.real:.6e}",
                    f"{m.nu.imag:.6e}",
                    f"{math.degrees(m.theta):.6f}",
                    f"{m.attenuation * 1e-6:.6f}",
                    f"{m.zeta.real:.6e}",
                    f"{m.zeta.imag:.6e}",
                ]
            )
        )
    header = "".join(f"# {k} = {v}\n" for k, v in prov.items())
    (out / "modes.csv").write_text(header + "\n".join(rows) + "\n")
    print(f"{len(modes)} resonant modes of stack {stack.name!r}")
    print(f"{'m':>2} {'1-Re nu':>11} {'Im nu':>11} {'theta deg':>10} {'Lambda mm':>10} {'|zeta|':>10}")
    for m in modes:
        print(
            f"{m.m:>2} {m.deficit.real:>11.4e} {m.nu.imag:>11.4e} {math.degrees(m.theta):>10.4f} "
            f"{m.attenuation * 1e-6:>10.4f} {abs(m.zeta):>10.3e}"
        )
    return EXIT_OK


# --- front coupling ---------------------------------------------------------


def _lengths_nm(args) -> list:
    if args.length_mm:
        lengths = list(args.length_mm)
    else:
        lo, hi, n = args.length_scan_mm
        lengths = list(np.linspace(float(lo), float(hi), int(n)))
    if not lengths or any(not L > 0 for L in lengths):
        raise ValueError("lengths must be a nonempty list of positive values")
    return [L * 1e6 for L in lengths]


def _fc_params(stack, modes, args, length) -> DynamicsParams:
    params = DynamicsParams.from_mode(_pick_mode(modes, args.mode), stack, length)
    return params if args.zeta is None else params.replace(zeta=args.zeta)


def _fc_field(stack, modes, args, length, t) -> FieldTrace:
    drive = Drive.front()
    trace = emitted_field_fc(_fc_params(stack, modes, args, length), drive, t)
    if args.multimode:
        # coherent sum over modes, weighted by the drive overlap proxy u_m(z0)/u_1(z0)
        z0 = [stack.resonant.z0]
        u_ref = _pick_mode(modes, args.mode).field(z0)[0]
        total = np.zeros_like(trace.b)
        for other in modes:
            p = DynamicsParams.from_mode(other, stack, length)
            total += other.field(z0)[0] / u_ref * emitted_field_fc(p, drive, t).b
        trace = FieldTrace(t, total, dict(trace.metadata, multimode=str(len(modes))))
    return trace


def cmd_fc(args) -> int:
    stack = _stack(args.stack)
    modes = solve_modes(stack, max_modes=max(args.mode, 2))
    t = _t_grid(args)
    hf = _hyperfine(args)
    out = _outdir(args)
    prov = _provenance(args)
    summary = {}
    for i, length in enumerate(_lengths_nm(args)):
        label = f"{length * 1e-6:.4f}mm"
        trace = hyperfine_average(_fc_field(stack, modes, args, length, t).detuned, hf)
        trace.gate = tuple(args.gate_ns)
        trace.provenance.update(prov, length_mm=_fmt(length * 1e-6))
        if args.counts:
            trace = poissonize(trace.gated(), args.counts, args.seed + i)
        name = f"fc_L{label}.csv"
        trace.to_csv(out / name)
        depth = _fc_params(stack, modes, args, length).optical_depth.real
        summary[f"optical_depth[{label}]"] = _fmt(depth)
        print(f"L = {label}: zeta L / Lambda_res = {_fmt(depth)} -> {name}")
    _write_report(out / "report.txt", prov, summary)
    return EXIT_OK


# --- grazing incidence ------------------------------------------------------


def _thetas_rad(args, theta_m: float) -> list:
    if args.theta_deg:
        thetas = [math.radians(v) for v in args.theta_deg]
    elif args.theta_scan_deg:
        lo, hi, n = args.theta_scan_deg
        thetas = list(np.radians(np.linspace(float(lo), float(hi), int(n))))
    else:
        lo, hi, n = args.detuning_scan_mdeg
        thetas = list(theta_m + np.radians(np.linspace(float(lo), float(hi), int(n)) * 1e-3))
    if not thetas:
        raise ValueError("empty angle scan")
    return thetas


def cmd_gi(args) -> int:
    stack = _stack(args.stack)
    modes = solve_modes(stack, max_modes=max(args.mode, 4))
    mode = _pick_mode(modes, args.mode)
    params = DynamicsParams.from_mode(mode, stack, args.length_mm * 1e6)
    if args.zeta is not None:
        params = params.replace(zeta=args.zeta)
    t = _t_grid(args)
    hf = _hyperfine(args)
    div = DivergenceModel(math.radians(args.divergence_mdeg * 1e-3), args.divergence_samples)
    out = _outdir(args)
    prov = _provenance(args)

    def hf_trace(theta):
        field = emitted_field_gi(params, Drive.grazing(theta), t)
        return hyperfine_average(field.detuned, hf)

    rows = ["theta_deg,detuning_mdeg,rate_gamma,model_rate_gamma,re_eta,im_eta"]
    best = (-math.inf, None)
    for theta in _thetas_rad(args, params.theta_m):
        trace = divergence_average(hf_trace, div, theta)
        trace.gate = tuple(args.gate_ns)
        trace.provenance.update(prov, theta_deg=f"{math.degrees(theta):.6f}")
        rate = extract_speedup(trace, tuple(args.window_ns), gamma=params.gamma)
        eta = frequency_shift(params, theta)
        detune = math.degrees(theta - params.theta_m) * 1e3
        rows.append(
            f"{math.degrees(theta):.6f},{detune:.4f},{rate:.6f},"
            f"{decay_rate(params, theta):.6f},{eta.real:.6e},{eta.imag:.6e}"
        )
        if args.write_traces:
            if args.counts:
                trace = poissonize(trace.gated(), args.counts, args.seed)
            trace.to_csv(out / f"gi_theta{math.degrees(theta):.5f}deg.csv")
        if rate > best[0]:
            best = (rate, theta)
    header = "".join(f"# {k} = {v}\n" for k, v in prov.items())
    (out / "speedup.csv").write_text(header + "\n".join(rows) + "\n")
    summary = {
        "mode": str(mode.m),
        "theta_m_deg": f"{math.degrees(params.theta_m):.6f}",
        "peak_rate_gamma": _fmt(best[0]),
        "peak_theta_deg": f"{math.degrees(best[1]):.6f}",
        "simple_model_peak_gamma": _fmt(decay_rate(params, params.theta_m)),
    }
    _write_report(out / "report.txt", prov, summary)
    print(
        f"mode {mode.m}: theta_m = {summary['theta_m_deg']} deg; apparent peak rate "
        f"{summary['peak_rate_gamma']} gamma at {summary['peak_theta_deg']} deg "
        f"(simple model {summary['simple_model_peak_gamma']})"
    )
    return EXIT_OK


# --- fit / speedup ----------------------------------------------------------


def _parse_bounds(items, n):
    bounds = []
    for item in items:
        lo, _, hi = item.partition(":")
        bounds.append((float(lo), float(hi)))
    if len(bounds) != n:
        raise ValueError(f"expected {n} bounds, got {len(bounds)}")
    return bounds


def _parse_grid(items):
    grid = {}
    for item in items or []:
        name, _, spec = item.partition("=")
        lo, hi, n = spec.split(":")
        grid[name] = np.geomspace(float(lo), float(hi), int(n)) if float(lo) > 0 else np.linspace(float(lo), float(hi), int(n))
    return grid or None


def _read_trace(path) -> TimeTrace:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    return TimeTrace.from_csv(path)


def cmd_fit(args) -> int:
    trace = _read_trace(args.input)
    if args.gate_ns:
        trace = trace.gated(tuple(args.gate_ns))
    names = MODELS[args.model].param_names + (("background",) if args.background else ())
    problem = FitProblem(
        args.model,
        trace,
        _parse_bounds(args.bounds, len(names)),
        args.init,
        background=args.background,
        seed=args.seed,
        grid=_parse_grid(args.grid),
    )
    result = fit_mle(problem)
    out = _outdir(args)
    prov = _provenance(args)
    values = {"model": args.model, "converged": str(result.converged), "n_eval": str(result.n_eval), "nll": f"{result.nll:.10g}"}
    err = result.stderr
    for i, (name, value) in enumerate(result.as_dict().items()):
        values[name] = f"{value:.8g}"
        if err is not None:
            values[f"{name}_stderr"] = f"{err[i]:.3g}"
    _write_report(out / "report.txt", prov, values)
    print(f"{args.model} fit ({'converged' if result.converged else 'NOT converged'}, {result.n_eval} evaluations)")
    for name, value in result.as_dict().items():
        print(f"  {name:>10} = {value:.6g}")
    return EXIT_OK if result.converged else EXIT_NUMERICAL


def cmd_speedup(args) -> int:
    trace = _read_trace(args.input)
    rate = extract_speedup(trace, tuple(args.window_ns))
    out = _outdir(args)
    prov = _provenance(args)
    _write_report(out / "report.txt", prov, {"window_ns": f"{args.window_ns[0]:g},{args.window_ns[1]:g}", "rate_gamma": f"{rate:.8g}"})
    print(f"initial decay rate over {args.window_ns[0]:g}-{args.window_ns[1]:g} ns: {rate:.4f} gamma")
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def _common_time(p):
    p.add_argument("--tmax-ns", type=float, default=constants.REPETITION_PERIOD_NS)
    p.add_argument("--tstep-ns", type=float, default=0.5)
    p.add_argument("--gate-ns", type=float, nargs=2, default=[13.0, constants.REPETITION_PERIOD_NS],
                   metavar=("MIN", "MAX"))


def _common_hf(p, broadening, splitting):
    p.add_argument("--broadening-gamma", type=float, default=broadening, help="Gaussian FWHM (gamma)")
    p.add_argument("--splitting-gamma", type=float, default=splitting, help="doublet separation (gamma)")
    p.add_argument("--hf-nodes", type=int, default=9, help="Gauss-Hermite nodes per line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wgexciton", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("modes", help="resonant mode table of a stack")
    p.add_argument("--stack", required=True, help="stack file, or fixture name fc/gi")
    p.add_argument("--max-modes", type=int, default=10)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("fc", help="front-coupling traces over waveguide lengths")
    p.add_argument("--stack", default="fc")
    p.add_argument("--mode", type=int, default=1)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--length-mm", type=float, nargs="+")
    g.add_argument("--length-scan-mm", nargs=3, metavar=("MIN", "MAX", "N"))
    p.add_argument("--zeta", type=float, default=None, help="override the coupling coefficient")
    p.add_argument("--multimode", action="store_true", help="coherent sum over all resonant modes")
    _common_time(p)
    _common_hf(p, 0.0, 0.0)
    p.add_argument("--counts", type=int, default=0, help="poissonize to this many total counts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fc)

    p = sub.add_parser("gi", help="grazing-incidence angle scan and speedup curve")
    p.add_argument("--stack", default="gi")
    p.add_argument("--mode", type=int, default=3)
    p.add_argument("--length-mm", type=float, default=2.0)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--theta-deg", type=float, nargs="+")
    g.add_argument("--theta-scan-deg", nargs=3, metavar=("MIN", "MAX", "N"))
    g.add_argument("--detuning-scan-mdeg", nargs=3, metavar=("MIN", "MAX", "N"),
                   help="scan relative to the mode angle")
    p.add_argument("--zeta", type=float, default=None)
    p.add_argument("--divergence-mdeg", type=float, default=0.0)
    p.add_argument("--divergence-samples", type=int, default=21)
    p.add_argument("--window-ns", type=float, nargs=2, default=[13.0, 30.0], metavar=("MIN", "MAX"))
    p.add_argument("--write-traces", action="store_true")
    p.add_argument("--counts", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    _common_time(p)
    _common_hf(p, 0.0, 0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gi)

    p = sub.add_parser("fit", help="Poisson MLE fit of a counts CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--model", choices=sorted(MODELS), required=True)
    p.add_argument("--init", type=float, nargs="+", required=True)
    p.add_argument("--bounds", nargs="+", required=True, metavar="LO:HI")
    p.add_argument("--background", action="store_true")
    p.add_argument("--grid", nargs="*", metavar="NAME=LO:HI:N", help="pre-scan grid for a parameter")
    p.add_argument("--gate-ns", type=float, nargs=2, default=None, metavar=("MIN", "MAX"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("speedup", help="initial decay rate of a trace CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--window-ns", type=float, nargs=2, default=[13.0, 30.0], metavar=("MIN", "MAX"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_speedup)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ModeNotFoundError, RootNotConvergedError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (StackParseError, StackValidationError, GridError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
