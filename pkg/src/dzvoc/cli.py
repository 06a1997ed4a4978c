"""Command-line front end.

    dzvoc stability [--param k=v ...]
    dzvoc impulse --mode {above,inside,below,full} [--duration S] [--dt S]
                  [--out CSV] [--no-figures]
    dzvoc run <builtin|config-file> [--out DIR] [--dt S] [--full-rate]
              [--switched-pv] [--no-guard] [--no-figures]
    dzvoc sweep <dir> [--out DIR] [--jobs N]

Exit codes: 0 pass, 1 expectation/design-rule failure, 2 usage or
configuration error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import config as cfgmod
from . import scenarios
from .engine import SimulationDiverged, run_scenario
from .oscillator import FeedbackGains, OscillatorParams
from .stability import (
    Segment,
    classify_stability,
    eigenvalues,
    impulse_response,
    impulse_response_full,
    linearize_segment,
    validate_design,
)

EXIT_OK = 0
EXIT_EXPECTATION = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3

_PARAM_FIELDS = {f.name for f in dataclasses.fields(OscillatorParams)} | {
    f.name for f in dataclasses.fields(FeedbackGains)
}


def _parse_params(pairs: list[str]) -> tuple[OscillatorParams, FeedbackGains]:
    osc_kw: dict[str, float] = {}
    gain_kw: dict[str, float] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"--param expects k=v, got {pair!r}")
        key, _, value = pair.partition("=")
        key = key.strip()
        if key not in _PARAM_FIELDS:
            raise ValueError(f"unknown parameter {key!r}; known: {sorted(_PARAM_FIELDS)}")
        try:
            num = float(value)
        except ValueError:
            raise ValueError(f"parameter {key} needs a number, got {value!r}") from None
        if key in ("i_gain", "v_gain"):
            gain_kw[key] = num
        else:
            osc_kw[key] = num
    return OscillatorParams(**osc_kw), FeedbackGains(**gain_kw)


def cmd_stability(args: argparse.Namespace) -> int:
    try:
        params, gains = _parse_params(args.param)
        for name in ("r", "l", "c", "sigma", "phi", "r_s"):
            if getattr(params, name) <= 0.0:
                raise ValueError(f"parameter {name} must be positive")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    print(f"alpha = i_gain * v_gain = {gains.alpha_total:.6f}")
    for segment in (Segment.ABOVE, Segment.INSIDE, Segment.BELOW):
        lin = linearize_segment(params, gains, segment)
        e1, _ = eigenvalues(lin, params)
        cls = classify_stability(e1)
        if e1.im != 0.0:
            eig_txt = f"lambda = {e1.re:.4f} +/- j{abs(e1.im):.4f}"
        else:
            eig_txt = f"lambda = {e1.re:.4f}, {(1.0 / (params.l * params.c)) / e1.re:.4f}"
        print(f"segment {segment.value:<6}  beta = {lin.beta_eff:+.6f} S   {eig_txt}   [{cls.value}]")

    report = validate_design(params, gains)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.all_pass else EXIT_EXPECTATION


def cmd_impulse(args: argparse.Namespace) -> int:
    params, gains = _parse_params(args.param)
    if args.dt > 1e-4:
        print(f"error: dt = {args.dt:g} too coarse; need dt <= 1e-4 s", file=sys.stderr)
        return EXIT_USAGE
    if args.mode == "full":
        t, v = impulse_response_full(params, gains, duration=args.duration, dt=args.dt)
    else:
        lin = linearize_segment(params, gains, Segment(args.mode))
        t, v = impulse_response(lin, params, duration=args.duration, dt=args.dt)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "v_osc"])
            for ti, vi in zip(t, v):
                w.writerow([repr(float(ti)), repr(float(vi))])
    except OSError as exc:
        print(f"error writing {out}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"wrote {out} ({len(t)} samples)")
    if not args.no_figures:
        from .report import fig_impulse

        fig_path = out.with_suffix(".png")
        fig_impulse(t, v, f"impulse response, {args.mode} segment", fig_path)
        print(f"wrote {fig_path}")
    return EXIT_OK


def _load_scenario(target: str, args: argparse.Namespace):
    """Resolve a builtin name or a config path into (name, grid, sim, schedule)."""
    if target in scenarios.BUILTIN_NAMES:
        grid, sim, schedule = scenarios.builtin_scenario(target, guard=not args.no_guard)
        name = target
    else:
        path = Path(target)
        if not path.exists():
            raise cfgmod.ConfigError(
                f"{target!r} is neither a builtin ({', '.join(scenarios.BUILTIN_NAMES)}) "
                "nor an existing config file"
            )
        cfg = cfgmod.load(path)
        if args.no_guard:
            cfg = dataclasses.replace(
                cfg, vrl=dataclasses.replace(cfg.vrl, guard_enabled=False)
            )
        grid, sim, schedule = cfg.build()
        name = cfg.name
    if args.dt is not None:
        sim = dataclasses.replace(sim, dt=args.dt)
    if args.full_rate:
        sim = dataclasses.replace(sim, decimation=1)
    if args.switched_pv:
        sim = dataclasses.replace(sim, pv_mode="switched")
        if sim.dt > 2e-6 and args.dt is None:
            sim = dataclasses.replace(sim, dt=2e-6)
    sim.validate(has_pv=grid.pv is not None)
    return name, grid, sim, schedule


def _run_one(target: str, out_dir: Path, args: argparse.Namespace) -> int:
    try:
        name, grid, sim, schedule = _load_scenario(target, args)
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    t0 = time.perf_counter()
    try:
        trace, metrics = run_scenario(grid, sim, schedule)
    except SimulationDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    runtime = time.perf_counter() - t0

    expectations = scenarios.evaluate_expectations(name, trace, metrics)
    summary = scenarios.RunSummary(
        scenario=name,
        passed=all(e.passed for e in expectations),
        runtime_s=runtime,
        metrics=metrics,
        expectations=expectations,
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.csv"
    trace.to_csv(trace_path)
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary.to_dict(), indent=2) + "\n")

    print(f"scenario {name}: {len(trace.data)} trace rows, {runtime:.2f} s runtime")
    for e in expectations:
        print(f"  [{'PASS' if e.passed else 'FAIL'}] {e.name}: {e.detail}")
    if not expectations:
        print("  (no declared expectations for this scenario)")
    print(f"wrote {trace_path}")
    print(f"wrote {summary_path}")

    if not args.no_figures:
        from .report import render_run_figures

        f_nom = grid.units[0].params.omega0 / (2.0 * 3.141592653589793)
        for p in render_run_figures(trace, schedule, out_dir, grid.v_nom_rms, f_nom):
            print(f"wrote {p}")

    return EXIT_OK if summary.passed else EXIT_EXPECTATION


def cmd_run(args: argparse.Namespace) -> int:
    return _run_one(args.scenario, Path(args.out), args)


def _sweep_worker(job: tuple[str, str, dict]) -> tuple[str, int]:
    target, out_dir, opt = job
    ns = argparse.Namespace(**opt)
    code = _run_one(target, Path(out_dir), ns)
    return target, code


def cmd_sweep(args: argparse.Namespace) -> int:
    src = Path(args.directory)
    if not src.is_dir():
        print(f"error: {src} is not a directory", file=sys.stderr)
        return EXIT_USAGE
    files = sorted(p for p in src.iterdir() if p.suffix.lower() in (".toml", ".json"))
    if not files:
        print(f"error: no .toml or .json configs in {src}", file=sys.stderr)
        return EXIT_USAGE
    opt = {
        "dt": args.dt,
        "full_rate": args.full_rate,
        "switched_pv": args.switched_pv,
        "no_guard": args.no_guard,
        "no_figures": args.no_figures,
    }
    out_root = Path(args.out)
    jobs = [(str(p), str(out_root / p.stem), opt) for p in files]
    worst = EXIT_OK
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        for target, code in pool.map(_sweep_worker, jobs):
            print(f"[{'OK' if code == 0 else f'EXIT {code}'}] {target}")
            worst = max(worst, code)
    return worst


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dzvoc",
        description="Dead-zone virtual-oscillator microgrid simulator and analyzer",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p_stab = sub.add_parser("stability", help="per-segment eigenvalues and design rules")
    p_stab.add_argument("--param", action="append", default=[], metavar="K=V",
                        help="override a parameter (r, l, c, sigma, phi, r_s, i_gain, v_gain, ...)")
    p_stab.set_defaults(func=cmd_stability)

    p_imp = sub.add_parser("impulse", help="dump an impulse/startup response to CSV")
    p_imp.add_argument("--mode", choices=["above", "inside", "below", "full"], required=True)
    p_imp.add_argument("--duration", type=float, default=2.0, help="seconds (default 2)")
    p_imp.add_argument("--dt", type=float, default=1e-5, help="step, must be <= 1e-4 s")
    p_imp.add_argument("--out", default="impulse.csv", help="output CSV path")
    p_imp.add_argument("--param", action="append", default=[], metavar="K=V")
    p_imp.add_argument("--no-figures", action="store_true")
    p_imp.set_defaults(func=cmd_impulse)

    p_run = sub.add_parser("run", help="run a builtin or config-file scenario")
    p_run.add_argument("scenario",
                       help=f"builtin name ({', '.join(scenarios.BUILTIN_NAMES)}) or config path")
    p_run.add_argument("--out", default="out", help="output directory (default ./out)")
    p_run.add_argument("--dt", type=float, default=None, help="override integration step")
    p_run.add_argument("--full-rate", action="store_true", help="record every step")
    p_run.add_argument("--switched-pv", action="store_true",
                       help="switched hysteresis PV model (forces dt <= 2e-6)")
    p_run.add_argument("--no-guard", action="store_true", help="disable the VRL fault guard")
    p_run.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p_run.set_defaults(func=cmd_run)

    p_sw = sub.add_parser("sweep", help="run every config in a directory in parallel")
    p_sw.add_argument("directory")
    p_sw.add_argument("--out", default="sweep-out")
    p_sw.add_argument("--jobs", type=int, default=None, help="parallel workers")
    p_sw.add_argument("--dt", type=float, default=None)
    p_sw.add_argument("--full-rate", action="store_true")
    p_sw.add_argument("--switched-pv", action="store_true")
    p_sw.add_argument("--no-guard", action="store_true")
    p_sw.add_argument("--no-figures", action="store_true")
    p_sw.set_defaults(func=cmd_sweep)

    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
