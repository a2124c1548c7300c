"""Command-line front end wiring identification, design, and comparison.

Verbs: ``init``, ``identify``, ``tune``, ``simulate``, ``compare``,
``report``.  Every command is deterministic given its configuration file
(noise is seeded), so reruns produce byte-identical CSV bodies.

Exit codes: 0 success, 2 invalid configuration or input data, 3 the method
is infeasible on this plant (no phase crossover, no magnitude solution, no
limit cycle), 4 the tuning iteration did not converge.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import analysis, notch as notch_mod, pitune, plant as plant_mod, report, sysid
from .config import (
    ProjectConfig,
    default_config,
    dump_config,
    load_config,
)
from .errors import (
    ConfigError,
    DivergenceError,
    InfeasibleMarginError,
    InsufficientDataError,
    InvalidInputError,
    NoCrossoverError,
    NonConvergenceError,
    NoOscillationError,
    PhaseInfeasibleError,
    SamplingError,
    ServoShapeError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NONCONVERGENCE = 4

_INFEASIBLE = (NoCrossoverError, InfeasibleMarginError, PhaseInfeasibleError,
               NoOscillationError, SamplingError)
_CONFIG = (ConfigError, InsufficientDataError, InvalidInputError)


def _outdir(cfg: ProjectConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _identify(cfg: ProjectConfig):
    """Run the white-noise experiment and estimate the loop response."""
    trace = plant_mod.simulate(
        cfg.plant, cfg.excitation, cfg.sample_period,
        actuation_delay_samples=cfg.drive.actuation_delay_samples)
    frf = sysid.estimate_frf(
        trace.torque_command, trace.motor_velocity, cfg.sample_period,
        cfg.welch.segment_length, cfg.welch.overlap_fraction)
    return trace, frf


def cmd_identify(cfg: ProjectConfig) -> int:
    out = _outdir(cfg)
    trace, frf = _identify(cfg)
    features = sysid.extract_features(frf, cfg.welch.coherence_threshold)
    intervals = sysid.coherence_mask(frf, cfg.welch.coherence_threshold)

    frf.to_csv(out / "frf.csv")
    with open(out / "coherence_intervals.csv", "w", newline="") as fh:
        fh.write("f_low_hz,f_high_hz\n")
        for lo, hi in intervals:
            fh.write(f"{lo:.12g},{hi:.12g}\n")
    trace.to_csv(out / "identification_trace.csv")
    report.save_frf_figure(out / "frf.png", frf, features)

    print(f"antiresonance dip : {features.f_antiresonance:8.1f} Hz")
    print(f"resonance peak    : {features.f_resonance:8.1f} Hz")
    print(f"peak-to-dip gap   : {features.peak_gap_db:8.2f} dB")
    print(f"-180 deg crossing : {features.f_minus180:8.1f} Hz "
          f"(reading {features.initial_margin_reading_db:.2f} dB)")
    print(f"wrote {out / 'frf.csv'}, coherence_intervals.csv, frf.png")
    return EXIT_OK


def _design_and_tune(cfg: ProjectConfig, frf):
    """Design the notch on the measured response and synthesize the PI."""
    features = sysid.extract_features(frf, cfg.welch.coherence_threshold)
    nparams, biquad = notch_mod.design_notch(
        features, cfg.notch.bandwidth_factor, cfg.notch.depth_mode,
        cfg.sample_period)
    loop = analysis.compose_loop(
        [notch_mod.notch_response(biquad, frf.frequencies), frf])
    result = pitune.tune_pi(loop, cfg.margins, notch=nparams,
                            coherence_threshold=cfg.welch.coherence_threshold)
    return features, nparams, biquad, loop, result


def cmd_tune(cfg: ProjectConfig) -> int:
    out = _outdir(cfg)
    _, frf = _identify(cfg)
    features = None
    try:
        features, nparams, biquad, loop, result = _design_and_tune(cfg, frf)
    except ServoShapeError as exc:
        best = getattr(exc, "best", None)
        report.write_tune_report(out / "tune_report.json", best, cfg.margins,
                                 features, error=type(exc).__name__)
        raise
    report.write_tune_report(out / "tune_report.json", result, cfg.margins, features)
    b0, b1, b2 = biquad.numerator
    _, a1, a2 = biquad.denominator
    with open(out / "notch_biquad.csv", "w", newline="") as fh:
        fh.write("b0,b1,b2,a1,a2\n")
        fh.write(",".join(f"{v:.12g}" for v in (b0, b1, b2, a1, a2)) + "\n")
    open_loop = analysis.compose_loop(
        [pitune.pi_response(result.gains, loop.frequencies), loop])
    report.save_loop_figure(out / "loop_bode.png", open_loop, result.achieved)

    ach = result.achieved
    print(f"notch   : {nparams.center_frequency:.1f} Hz / {nparams.bandwidth:.1f} Hz "
          f"/ {nparams.depth_db:.1f} dB")
    print(f"gains   : kp = {result.gains.kp:.4g} N*m*s/rad, ti = {result.gains.ti * 1e3:.4g} ms")
    print(f"reads   : f_c = {result.crossover_frequency:.1f} Hz, "
          f"magnitude {result.read_magnitude_db:.2f} dB, phase {result.read_phase_deg:.2f} deg")
    print(f"achieved: PM = {ach.phase_margin_deg:.2f} deg, GM = {ach.gain_margin_db:.2f} dB, "
          f"BW = {ach.closed_loop_bandwidth_hz:.1f} Hz in {result.iterations_used} iteration(s)")
    print(f"wrote {out / 'tune_report.json'}, notch_biquad.csv, loop_bode.png")
    return EXIT_OK


def cmd_simulate(cfg: ProjectConfig) -> int:
    out = _outdir(cfg)
    trace = plant_mod.simulate(
        cfg.plant, cfg.excitation, cfg.sample_period,
        actuation_delay_samples=cfg.drive.actuation_delay_samples)
    trace.to_csv(out / "trace.csv")
    report.save_step_figure(out / "trace.png", {"open loop": trace},
                            reference=max(1e-9, float(np.max(np.abs(trace.motor_velocity)))),
                            title=f"Open-loop {cfg.excitation.kind} excitation")
    print(f"simulated {cfg.excitation.duration} s of {cfg.excitation.kind} excitation")
    print(f"wrote {out / 'trace.csv'}, trace.png")
    return EXIT_OK


def _controller_set(cfg: ProjectConfig, frf):
    """Proposed controller plus all configured baselines."""
    _, nparams, biquad, loop, result = _design_and_tune(cfg, frf)
    controllers = {
        "proposed": {"gains": result.gains, "notch": nparams, "biquad": biquad},
    }
    for name, base in cfg.baselines.items():
        if base.method == "relay":
            gains = pitune.relay_tune(
                cfg.plant, base.relay_amplitude, base.relay_hysteresis,
                cfg.sample_period,
                actuation_delay_samples=cfg.drive.actuation_delay_samples)
        else:
            gains = base.gains()
        biq = None
        if base.notch is not None:
            biq = notch_mod.realize(base.notch, cfg.sample_period)
        controllers[name] = {"gains": gains, "notch": base.notch, "biquad": biq}
    return controllers


def cmd_compare(cfg: ProjectConfig) -> int:
    out = _outdir(cfg)
    _, frf = _identify(cfg)
    controllers = _controller_set(cfg, frf)

    n = int(round(cfg.compare.step_duration / cfg.sample_period))
    reference = np.full(n, cfg.compare.step_reference)
    entries = {}
    traces = {}
    for name in sorted(controllers):
        ctl = controllers[name]
        if ctl["biquad"] is not None:
            loop = analysis.compose_loop(
                [notch_mod.notch_response(ctl["biquad"], frf.frequencies), frf])
        else:
            loop = frf
        open_loop = analysis.compose_loop(
            [pitune.pi_response(ctl["gains"], loop.frequencies), loop])
        marg = analysis.margins(open_loop)
        stable = True
        metrics = None
        try:
            trace = plant_mod.simulate_closed_loop(
                cfg.plant, ctl["gains"], ctl["biquad"], reference,
                cfg.sample_period, torque_limit=cfg.drive.torque_limit,
                actuation_delay_samples=cfg.drive.actuation_delay_samples)
            metrics = analysis.step_metrics(trace, cfg.compare.step_reference)
            stable = metrics.steady_state_reached
            traces[name] = trace
            trace.to_csv(out / f"step_{name}.csv")
        except DivergenceError:
            stable = False
        entries[name] = {"gains": ctl["gains"], "notch": ctl["notch"],
                         "margins": marg, "metrics": metrics, "stable": stable}

    report.write_comparison(out / "comparison.json", cfg.compare.step_reference, entries)
    report.save_step_figure(out / "step_comparison.png", traces,
                            cfg.compare.step_reference)

    print(f"{'controller':<16}{'overshoot %':>12}{'settling ms':>13}{'ITAE':>12}  stable")
    for name in sorted(entries):
        e = entries[name]
        m = e["metrics"]
        if m is None:
            print(f"{name:<16}{'-':>12}{'-':>13}{'-':>12}  NO (diverged)")
        else:
            print(f"{name:<16}{m.overshoot_pct:>12.2f}{m.settling_time_s * 1e3:>13.2f}"
                  f"{m.itae:>12.4g}  {'yes' if e['stable'] else 'NO'}")
    print(f"wrote {out / 'comparison.json'}, step_*.csv, step_comparison.png")
    return EXIT_OK


def cmd_report(cfg: ProjectConfig) -> int:
    out = _outdir(cfg)
    if not any(out.glob("*.json")) and not any(out.glob("*.csv")):
        raise ConfigError(f"no artifacts found in {out}; run identify/tune/compare first")
    frf_path = out / "frf.csv"
    if frf_path.exists():
        frf = sysid.FrequencyResponse.from_csv(frf_path)
        try:
            features = sysid.extract_features(frf, cfg.welch.coherence_threshold)
        except ServoShapeError:
            features = None
        report.save_frf_figure(out / "frf.png", frf, features)
    path = report.write_markdown_report(out)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_init(cfg_path: Path, scenario: str, force: bool) -> int:
    if cfg_path.exists() and not force:
        raise ConfigError(f"{cfg_path} already exists (use --force to overwrite)")
    dump_config(default_config(scenario), cfg_path)
    print(f"wrote {cfg_path} ({scenario} scenario)")
    return EXIT_OK


def _load(args) -> ProjectConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg, excitation=dataclasses.replace(cfg.excitation, seed=args.seed))
    if args.out is not None:
        cfg = dataclasses.replace(cfg, output_dir=str(args.out))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="servoshape",
        description="Identify a resonant two-mass servo mechanism, design a "
                    "notch filter and PI speed controller from margin targets, "
                    "and benchmark the result against conventional tunings.")
    parser.add_argument("--config", type=Path, default=Path("servoshape.toml"),
                        help="project configuration file (default: ./servoshape.toml)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the excitation noise seed")
    parser.add_argument("--out", type=Path, default=None,
                        help="override the output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="write a default configuration file")
    p_init.add_argument("--scenario", choices=("rigid", "flexible"), default="rigid")
    p_init.add_argument("--force", action="store_true",
                        help="overwrite an existing configuration")

    sub.add_parser("identify", help="white-noise experiment and response estimate")
    sub.add_parser("tune", help="design the notch and PI from margin targets")
    sub.add_parser("simulate", help="run the configured open-loop excitation")
    sub.add_parser("compare", help="step-response shootout against the baselines")
    sub.add_parser("report", help="render figures and a markdown summary")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "init":
            return cmd_init(args.config, args.scenario, args.force)
        cfg = _load(args)
        handler = {
            "identify": cmd_identify,
            "tune": cmd_tune,
            "simulate": cmd_simulate,
            "compare": cmd_compare,
            "report": cmd_report,
        }[args.command]
        return handler(cfg)
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except _INFEASIBLE as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except _CONFIG as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ServoShapeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
