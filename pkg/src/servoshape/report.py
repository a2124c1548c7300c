"""Report rendering: JSON documents, delimited curves, matplotlib figures."""

from __future__ import annotations

import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .config import SCHEMA_VERSION

__all__ = [
    "write_tune_report",
    "write_comparison",
    "save_frf_figure",
    "save_loop_figure",
    "save_step_figure",
    "save_sensitivity_figure",
    "write_markdown_report",
]


def _jsonable(value):
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return None
    return value


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return _jsonable(obj)


def _dump_json(doc: dict, path) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **_clean(doc)}
    with open(path, "w", newline="") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _notch_dict(notch):
    if notch is None:
        return None
    return {
        "center_frequency_hz": notch.center_frequency,
        "bandwidth_hz": notch.bandwidth,
        "depth_db": notch.depth_db,
    }


def write_tune_report(path, result, margin_spec, features, error: str | None = None) -> None:
    """Dump one tuning outcome (or failure) as a JSON document."""
    doc = {
        "error": error,
        "targets": {
            "amplitude_margin_db": margin_spec.desired_amplitude_margin_db,
            "phase_margin_deg": margin_spec.phase_margin_target_deg(),
        },
        "features": None if features is None else {
            "f_resonance_hz": features.f_resonance,
            "f_antiresonance_hz": features.f_antiresonance,
            "peak_gap_db": features.peak_gap_db,
            "f_minus180_hz": features.f_minus180,
            "initial_margin_reading_db": features.initial_margin_reading_db,
        },
    }
    if result is not None:
        doc.update({
            "gains": {"kp": result.gains.kp, "ti": result.gains.ti},
            "notch": _notch_dict(result.notch),
            "reads": {
                "crossover_frequency_hz": result.crossover_frequency,
                "magnitude_db": result.read_magnitude_db,
                "phase_deg": result.read_phase_deg,
            },
            "achieved": result.achieved.as_dict(),
            "iterations_used": result.iterations_used,
            "requested_phase_margin_deg": result.requested_phase_margin_deg,
        })
    _dump_json(doc, path)


def write_comparison(path, reference: float, entries: dict) -> None:
    """Dump the controller comparison as a JSON document.

    ``entries`` maps controller name to a dict with keys ``gains``,
    ``notch``, ``margins``, ``metrics`` and ``stable``.
    """
    controllers = {}
    for name in sorted(entries):
        e = entries[name]
        controllers[name] = {
            "gains": {"kp": e["gains"].kp, "ti": e["gains"].ti},
            "notch": _notch_dict(e.get("notch")),
            "margins": None if e.get("margins") is None else e["margins"].as_dict(),
            "metrics": None if e.get("metrics") is None else e["metrics"].as_dict(),
            "stable": e["stable"],
        }
    _dump_json({"step_reference": reference, "controllers": controllers}, path)


def save_frf_figure(path, frf, features=None, title="Measured frequency response") -> None:
    """Bode magnitude/phase plus coherence, with feature markers."""
    fig, axes = plt.subplots(3, 1, figsize=(8, 9), sharex=True)
    f = frf.frequencies
    axes[0].semilogx(f, frf.magnitude_db, lw=1.2)
    axes[0].set_ylabel("Magnitude [dB]")
    axes[0].set_title(title)
    axes[1].semilogx(f, frf.phase_deg, lw=1.2, color="tab:orange")
    axes[1].axhline(-180.0, color="k", ls=":", lw=0.8)
    axes[1].set_ylabel("Phase [deg]")
    axes[2].semilogx(f, frf.coherence, lw=1.2, color="tab:green")
    axes[2].set_ylabel("Coherence")
    axes[2].set_xlabel("Frequency [Hz]")
    axes[2].set_ylim(0.0, 1.05)
    if features is not None:
        for ax in axes[:2]:
            ax.axvline(features.f_antiresonance, color="tab:red", ls="--", lw=0.8)
            ax.axvline(features.f_resonance, color="tab:purple", ls="--", lw=0.8)
            ax.axvline(features.f_minus180, color="k", ls="--", lw=0.8)
    for ax in axes:
        ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_loop_figure(path, open_loop, report, title="Open loop with designed controller") -> None:
    """Bode of the composed open loop with margin annotations."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
    f = open_loop.frequencies
    ax1.semilogx(f, open_loop.magnitude_db, lw=1.2)
    ax1.axhline(0.0, color="k", ls=":", lw=0.8)
    ax1.set_ylabel("Magnitude [dB]")
    pm = report.phase_margin_deg
    gm = report.gain_margin_db
    bits = []
    if pm is not None:
        bits.append(f"PM = {pm:.1f} deg @ {report.gain_crossover_hz:.0f} Hz")
    if gm is not None:
        bits.append(f"GM = {gm:.2f} dB @ {report.phase_crossover_hz:.0f} Hz")
    if report.closed_loop_bandwidth_hz is not None:
        bits.append(f"BW = {report.closed_loop_bandwidth_hz:.0f} Hz")
    ax1.set_title(title + ("\n" + ", ".join(bits) if bits else ""))
    ax2.semilogx(f, open_loop.phase_deg, lw=1.2, color="tab:orange")
    ax2.axhline(-180.0, color="k", ls=":", lw=0.8)
    ax2.set_ylabel("Phase [deg]")
    ax2.set_xlabel("Frequency [Hz]")
    if report.gain_crossover_hz is not None:
        for ax in (ax1, ax2):
            ax.axvline(report.gain_crossover_hz, color="tab:blue", ls="--", lw=0.8)
    if report.phase_crossover_hz is not None:
        for ax in (ax1, ax2):
            ax.axvline(report.phase_crossover_hz, color="tab:red", ls="--", lw=0.8)
    for ax in (ax1, ax2):
        ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_step_figure(path, traces: dict, reference: float,
                     title="Velocity step response") -> None:
    """Overlayed step responses, one curve per controller."""
    fig, ax = plt.subplots(figsize=(8, 5))
    for name in sorted(traces):
        tr = traces[name]
        ax.plot(tr.time * 1e3, tr.motor_velocity, lw=1.2, label=name)
    ax.axhline(reference, color="k", ls="--", lw=0.8)
    ax.axhline(1.02 * reference, color="k", ls=":", lw=0.6)
    ax.axhline(0.98 * reference, color="k", ls=":", lw=0.6)
    ax.set_xlabel("Time [ms]")
    ax.set_ylabel("Motor velocity [rad/s]")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_sensitivity_figure(path, curves: dict, title="Sensitivity function") -> None:
    """|S| magnitude curves, one per label."""
    fig, ax = plt.subplots(figsize=(8, 5))
    for name in sorted(curves):
        s = curves[name]
        ax.semilogx(s.frequencies, s.magnitude_db, lw=1.2, label=name)
    ax.axhline(0.0, color="k", ls=":", lw=0.8)
    ax.set_xlabel("Frequency [Hz]")
    ax.set_ylabel("|S| [dB]")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def write_markdown_report(outdir) -> Path:
    """Summarize the JSON artifacts in ``outdir`` into ``report.md``."""
    outdir = Path(outdir)
    lines = ["# servoshape run report", ""]
    tune_path = outdir / "tune_report.json"
    if tune_path.exists():
        doc = json.loads(tune_path.read_text())
        lines.append("## Tuning")
        if doc.get("error"):
            lines.append(f"- outcome: FAILED ({doc['error']})")
        if doc.get("gains"):
            g = doc["gains"]
            lines.append(f"- gains: kp = {g['kp']:.4g} N*m*s/rad, ti = {g['ti'] * 1e3:.4g} ms")
        if doc.get("notch"):
            n = doc["notch"]
            lines.append(f"- notch: {n['center_frequency_hz']:.4g} Hz / "
                         f"{n['bandwidth_hz']:.4g} Hz / {n['depth_db']} dB")
        ach = doc.get("achieved") or {}
        if ach.get("phase_margin_deg") is not None:
            lines.append(f"- achieved: PM = {ach['phase_margin_deg']:.2f} deg, "
                         f"GM = {ach['gain_margin_db']:.2f} dB, "
                         f"BW = {ach['closed_loop_bandwidth_hz']:.1f} Hz "
                         f"({doc.get('iterations_used', '?')} iteration(s))")
        lines.append("")
    cmp_path = outdir / "comparison.json"
    if cmp_path.exists():
        doc = json.loads(cmp_path.read_text())
        lines.append("## Controller comparison")
        lines.append("")
        lines.append(f"Step reference: {doc['step_reference']} rad/s")
        lines.append("")
        lines.append("| controller | kp | ti [ms] | PM [deg] | GM [dB] | BW [Hz] | "
                      "overshoot [%] | settling [ms] | ITAE | stable |")
        lines.append("|---|---|---|---|---|---|---|---|---|---|")
        for name, e in doc["controllers"].items():
            g = e["gains"]
            mg = e.get("margins") or {}
            mt = e.get("metrics") or {}

            def num(d, key, scale=1.0, fmt="{:.3g}"):
                v = d.get(key)
                if v is None or isinstance(v, str):
                    return "-"
                return fmt.format(v * scale)

            lines.append(
                f"| {name} | {g['kp']:.3g} | {g['ti'] * 1e3:.3g} | "
                f"{num(mg, 'phase_margin_deg')} | {num(mg, 'gain_margin_db')} | "
                f"{num(mg, 'closed_loop_bandwidth_hz')} | {num(mt, 'overshoot_pct')} | "
                f"{num(mt, 'settling_time_s', 1e3)} | {num(mt, 'itae')} | "
                f"{'yes' if e['stable'] else 'NO'} |"
            )
        lines.append("")
    figures = sorted(p.name for p in outdir.glob("*.png"))
    if figures:
        lines.append("## Figures")
        lines += [f"![{name}]({name})" for name in figures]
        lines.append("")
    path = outdir / "report.md"
    path.write_text("\n".join(lines))
    return path
