"""Report writers: CSV tables, JSON documents and PNG figures."""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .revolve import HalfSection  # noqa: E402

logger = logging.getLogger(__name__)

# keep PNGs byte-stable across runs
_PNG_META = {"Software": None}


def write_json(doc, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def write_csv(rows: Sequence[Dict], columns: Sequence[str], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({c: row.get(c, "") for c in columns})
    return path


def axes_rows(cands) -> List[Dict]:
    rows = []
    for rank, c in enumerate(cands):
        p, d = c.axis.point, c.axis.direction
        rows.append({"rank": rank, "provenance": c.provenance, "gamma": f"{c.gamma:.6f}",
                     "px": f"{p[0]:.6g}", "py": f"{p[1]:.6g}", "pz": f"{p[2]:.6g}",
                     "dx": f"{d[0]:.6g}", "dy": f"{d[1]:.6g}", "dz": f"{d[2]:.6g}"})
    return rows


AXES_COLUMNS = ("rank", "provenance", "gamma", "px", "py", "pz", "dx", "dy", "dz")
STEP_COLUMNS = ("step", "id", "tool", "fixture", "step_volume_mm3", "step_cost", "setup_cost")


def plot_gamma(cands, path) -> Path:
    """Bar chart of turnability ratios, one bar per candidate axis."""
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * len(cands) + 2), 3.2))
    colors = {"principal": "tab:blue", "sampled": "tab:gray", "refined": "tab:green",
              "user": "tab:orange"}
    xs = np.arange(len(cands))
    ax.bar(xs, [c.gamma for c in cands], color=[colors[c.provenance] for c in cands])
    ax.set_xticks(xs)
    ax.set_xticklabels([f"{i}\n{c.provenance[:4]}" for i, c in enumerate(cands)], fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("turnability ratio")
    ax.axhline(1.0, color="k", lw=0.5, ls=":")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return Path(path)


def _extent(s: HalfSection):
    z = s.z_centers()
    r = s.r_centers()
    p = s.pixel
    return [z[0] - p / 2, z[-1] + p / 2, r[0] - p / 2, r[-1] + p / 2]


def plot_section(s: HalfSection, path, title: str = "", overlay: HalfSection = None) -> Path:
    """One half-section, optionally with a second one drawn on top in red."""
    fig, ax = plt.subplots(figsize=(6, 2.5))
    ax.imshow(s.data.T, origin="lower", extent=_extent(s), cmap="Greys", vmin=0, vmax=1,
              interpolation="nearest", aspect="equal")
    if overlay is not None:
        rgba = np.zeros(overlay.dims[::-1] + (4,))
        rgba[overlay.data.T] = (0.85, 0.1, 0.1, 0.6)
        ax.imshow(rgba, origin="lower", extent=_extent(overlay), interpolation="nearest",
                  aspect="equal")
    ax.set_xlabel("z (mm)")
    ax.set_ylabel("r (mm)")
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return Path(path)


def plot_plan_strip(stock: HalfSection, states: Iterable[HalfSection], cuts: Iterable[HalfSection],
                    labels: Sequence[str], tc: HalfSection, path) -> Path:
    """Workpiece after every step; the material cut in that step is shaded red."""
    states = list(states)
    cuts = list(cuts)
    n = len(states) + 1
    fig, axes = plt.subplots(n, 1, figsize=(6, 1.6 * n), squeeze=False)
    ext = _extent(stock)
    panels = [(stock, None, "stock")] + list(zip(states, cuts, labels))
    for ax, (work, cut, label) in zip(axes[:, 0], panels):
        img = np.zeros(work.dims[::-1] + (3,))
        img[:] = 1.0
        img[work.data.T] = (0.55, 0.55, 0.6)
        img[tc.data.T] = (0.2, 0.3, 0.6)
        if cut is not None:
            img[cut.data.T] = (0.85, 0.2, 0.2)
        ax.imshow(img, origin="lower", extent=ext, interpolation="nearest", aspect="equal")
        ax.set_title(label, fontsize=8)
        ax.tick_params(labelsize=6)
    axes[-1, 0].set_xlabel("z (mm)")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return Path(path)
