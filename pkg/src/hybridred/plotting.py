"""
Optional SVG figures for traces and reports.
"""

from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .hybrid import ExecutionTrace  # noqa: E402
from .models import ContractionProfile, DeadbeatReport, PhaseReport, SpectralSummary  # noqa: E402


def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_trace(trace: ExecutionTrace, path: Union[str, Path], coordinates: Optional[Sequence[int]] = None) -> Path:
    """State coordinates over time, one color per domain, events as dotted lines."""
    fig, ax = plt.subplots(figsize=(8, 4))
    colors = {}
    for seg in trace.segments:
        t, x = seg.sample(max(2, len(seg.step_times)))
        color = colors.setdefault(seg.domain_id, f"C{len(colors)}")
        for i in coordinates if coordinates is not None else range(x.shape[1]):
            if i < x.shape[1]:
                ax.plot(t, x[:, i], color=color, linewidth=1)
    for event in trace.events:
        ax.axvline(event.t, color="0.6", linestyle=":", linewidth=0.8)
    for domain_id, color in colors.items():
        ax.plot([], [], color=color, label=domain_id)
    ax.set_xlabel("t")
    ax.set_ylabel("state")
    if colors:
        ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_spectrum(summary: SpectralSummary, path: Union[str, Path]) -> Path:
    """Multipliers in the complex plane against the unit circle."""
    fig, ax = plt.subplots(figsize=(5, 5))
    angle = np.linspace(0.0, 2.0 * np.pi, 256)
    ax.plot(np.cos(angle), np.sin(angle), color="0.6", linewidth=0.8)
    values = np.array(summary.eigenvalues, dtype=float).reshape(-1, 2)
    ax.plot(values[:, 0], values[:, 1], "x", color="C3", markersize=8)
    ax.set_aspect("equal")
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.set_title(f"spectral radius {summary.spectral_radius:.4g}")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_contraction(profile: ContractionProfile, path: Union[str, Path]) -> Path:
    """Tangential and transverse deviation per cycle on a log scale."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, values in (("tangential", profile.tangential), ("transverse", profile.transverse)):
        k = [i for i, v in enumerate(values) if v > 0]
        ax.semilogy(k, [values[i] for i in k], "o-", label=label)
    ax.set_xlabel("cycle")
    ax.set_ylabel("deviation")
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_phase(report: PhaseReport, path: Union[str, Path], coordinates: Sequence[int] = (0, 1)) -> Path:
    """Sampled orbit states and isochron points in two coordinates."""
    fig, ax = plt.subplots(figsize=(5, 5))
    i, j = coordinates
    for samples, marker, label in ((report.samples, "o", "orbit"), (report.isochron, "x", "isochron")):
        points = [(s.x[i], s.x[j]) for s in samples if len(s.x) > max(i, j)]
        if points:
            xs, ys = zip(*points)
            ax.plot(xs, ys, marker, linestyle="none", label=label)
    ax.set_xlabel(f"x_{i + 1}")
    ax.set_ylabel(f"x_{j + 1}")
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_residuals(report: DeadbeatReport, path: Union[str, Path]) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    values = [max(r.residual, 1e-300) for r in report.residuals]
    ax.semilogy(range(len(values)), values, "o")
    ax.set_xlabel("sample")
    ax.set_ylabel("closed-loop residual")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)
