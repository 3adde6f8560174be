"""Posterior deliverables: summary tables and KDE pair-plot grids.

The table reports per-parameter posterior mean and std next to the prior
interval and, when known, the ground truth. The pair plot is a corner grid
with Gaussian-KDE marginals on the diagonal (truth marked by a vertical
line) and 2-D KDE heatmaps below it, exported both as per-panel CSV data
and as a single self-contained SVG generated without any plotting
dependency.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .inference import PriorBox, PosteriorSamples
from .vehicle import PARAM_NAMES

__all__ = ["PosteriorTable", "posterior_table", "kde_1d", "kde_2d",
           "scott_bandwidth", "pairplot_export", "write_table"]

GRID_1D = 200
GRID_2D = 50

_SQRT2PI = float(np.sqrt(2.0 * np.pi))


@dataclass
class PosteriorTable:
    names: tuple
    real: np.ndarray        # NaN where unknown
    mean: np.ndarray
    std: np.ndarray
    prior_lower: np.ndarray
    prior_upper: np.ndarray


def posterior_table(samples: PosteriorSamples, truth=None,
                    box: PriorBox = None, names=PARAM_NAMES) -> PosteriorTable:
    x = np.asarray(samples.samples, float)
    if x.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    d = x.shape[1]
    names = tuple(names[:d])
    if truth is None:
        real = np.full(d, np.nan)
    else:
        real = (truth.as_array() if hasattr(truth, "as_array")
                else np.asarray(truth, float))
    lower = box.lower if box is not None else np.full(d, np.nan)
    upper = box.upper if box is not None else np.full(d, np.nan)
    return PosteriorTable(names=names, real=real, mean=x.mean(axis=0),
                          std=x.std(axis=0, ddof=1), prior_lower=lower,
                          prior_upper=upper)


def write_table(table: PosteriorTable, path) -> None:
    lines = ["parameter,real,post_mean,post_std,prior_lower,prior_upper"]
    for i, name in enumerate(table.names):
        lines.append(",".join([
            name, repr(float(table.real[i])), repr(float(table.mean[i])),
            repr(float(table.std[i])), repr(float(table.prior_lower[i])),
            repr(float(table.prior_upper[i]))]))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Gaussian KDE with per-dimension Scott bandwidth


def scott_bandwidth(samples: np.ndarray, d: int) -> np.ndarray:
    """h_i = sigma_i * n^(-1/(d+4)) per dimension."""
    x = np.atleast_2d(np.asarray(samples, float).T).T
    n = x.shape[0]
    sigma = x.std(axis=0, ddof=1)
    return sigma * n ** (-1.0 / (d + 4))


def kde_1d(samples, grid, bandwidth=None) -> np.ndarray:
    """Gaussian-kernel density of a 1-D sample on the given grid."""
    x = np.asarray(samples, float).ravel()
    grid = np.asarray(grid, float)
    if bandwidth is None:
        if x.size < 2 or x.std(ddof=1) == 0:
            raise ValueError("zero sample spread: report the table only")
        bandwidth = float(scott_bandwidth(x, 1)[0])
    h = float(bandwidth)
    out = np.empty(grid.shape)
    for start in range(0, grid.size, 64):
        g = grid[start:start + 64]
        u = (g[:, None] - x[None, :]) / h
        out[start:start + 64] = np.exp(-0.5 * u * u).mean(axis=1) / (h * _SQRT2PI)
    return out


def kde_2d(samples, grid_x, grid_y, bandwidth=None) -> np.ndarray:
    """Product-kernel Gaussian KDE on a rectangular grid; returns (ny, nx)."""
    xy = np.asarray(samples, float)
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise ValueError("samples must have shape (n, 2)")
    if bandwidth is None:
        sig = xy.std(axis=0, ddof=1)
        if xy.shape[0] < 2 or np.any(sig == 0):
            raise ValueError("zero sample spread: report the table only")
        bandwidth = scott_bandwidth(xy, 2)
    hx, hy = (float(bandwidth[0]), float(bandwidth[1]))
    gx = np.asarray(grid_x, float)
    gy = np.asarray(grid_y, float)
    out = np.empty((gy.size, gx.size))
    ux = (gx[:, None] - xy[None, :, 0]) / hx      # (nx, n)
    kx = np.exp(-0.5 * ux * ux)
    for j in range(gy.size):
        uy = (gy[j] - xy[:, 1]) / hy
        ky = np.exp(-0.5 * uy * uy)
        out[j] = (kx * ky[None, :]).mean(axis=1) / (hx * hy * 2.0 * np.pi)
    return out


# ---------------------------------------------------------------------------
# pair-plot export (CSV panels + one SVG corner grid)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def pairplot_export(samples: PosteriorSamples, truth, box: PriorBox,
                    out_dir, names=PARAM_NAMES) -> list:
    """Write per-panel CSV files and corner.svg; returns the written paths.

    Diagonal panels: 1-D KDE over the prior interval (GRID_1D points).
    Lower-triangle panels: 2-D KDE on a GRID_2D x GRID_2D grid. Outputs are
    a pure function of the inputs, so regeneration is byte-identical.
    """
    x = np.asarray(samples.samples, float)
    d = x.shape[1]
    names = tuple(names[:d])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    truth_vec = None
    if truth is not None:
        truth_vec = (truth.as_array() if hasattr(truth, "as_array")
                     else np.asarray(truth, float))

    written = []
    marg = {}
    for i in range(d):
        grid = np.linspace(box.lower[i], box.upper[i], GRID_1D)
        dens = kde_1d(x[:, i], grid)
        marg[i] = (grid, dens)
        p = out_dir / f"marginal_{names[i]}.csv"
        lines = [f"{names[i]},density"]
        lines += [f"{repr(float(g))},{repr(float(v))}" for g, v in zip(grid, dens)]
        p.write_text("\n".join(lines) + "\n")
        written.append(p)

    pairs = {}
    for i in range(d):
        for j in range(i + 1, d):
            gx = np.linspace(box.lower[i], box.upper[i], GRID_2D)
            gy = np.linspace(box.lower[j], box.upper[j], GRID_2D)
            dens = kde_2d(x[:, (i, j)], gx, gy)
            pairs[(i, j)] = (gx, gy, dens)
            p = out_dir / f"pair_{names[i]}_{names[j]}.csv"
            lines = [f"{names[i]},{names[j]},density"]
            for jj in range(gy.size):
                for ii in range(gx.size):
                    lines.append(f"{repr(float(gx[ii]))},{repr(float(gy[jj]))},"
                                 f"{repr(float(dens[jj, ii]))}")
            p.write_text("\n".join(lines) + "\n")
            written.append(p)

    svg_path = out_dir / "corner.svg"
    svg_path.write_text(_corner_svg(marg, pairs, truth_vec, box, names))
    written.append(svg_path)
    return written


_PANEL = 150
_GAP = 10
_MARGIN = 60


def _corner_svg(marg, pairs, truth, box, names) -> str:
    d = len(names)
    size = _MARGIN + d * (_PANEL + _GAP) + _GAP
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
             f'height="{size}" viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>']

    def panel_origin(row, col):
        x0 = _MARGIN + col * (_PANEL + _GAP)
        y0 = _GAP + row * (_PANEL + _GAP)
        return x0, y0

    def to_px(v, lo, hi, x0, span=_PANEL):
        return x0 + (v - lo) / (hi - lo) * span

    for i in range(d):
        # diagonal: marginal density polyline + truth line
        grid, dens = marg[i]
        x0, y0 = panel_origin(i, i)
        dmax = float(dens.max()) if dens.max() > 0 else 1.0
        pts = []
        for g, v in zip(grid, dens):
            px = to_px(g, box.lower[i], box.upper[i], x0)
            py = y0 + _PANEL - (v / dmax) * (_PANEL - 6)
            pts.append(f"{_fmt(px)},{_fmt(py)}")
        parts.append(f'<rect x="{x0}" y="{y0}" width="{_PANEL}" height="{_PANEL}" '
                     f'fill="none" stroke="black" stroke-width="1"/>')
        parts.append(f'<polyline points="{" ".join(pts)}" fill="none" '
                     f'stroke="steelblue" stroke-width="1.5"/>')
        if truth is not None:
            tx = to_px(float(truth[i]), box.lower[i], box.upper[i], x0)
            parts.append(f'<line x1="{_fmt(tx)}" y1="{y0}" x2="{_fmt(tx)}" '
                         f'y2="{y0 + _PANEL}" stroke="red" stroke-width="1.5"/>')
        parts.append(f'<text x="{x0 + _PANEL / 2}" y="{_GAP + d * (_PANEL + _GAP) + 14}" '
                     f'font-size="11" text-anchor="middle" font-family="sans-serif">'
                     f'{names[i]}</text>' if i == d - 1 else "")

    for (i, j), (gx, gy, dens) in pairs.items():
        # parameter i on the x axis, j on the y axis, drawn at row j, col i
        x0, y0 = panel_origin(j, i)
        vmax = float(dens.max()) if dens.max() > 0 else 1.0
        cell_w = _PANEL / gx.size
        cell_h = _PANEL / gy.size
        for jj in range(gy.size):
            for ii in range(gx.size):
                frac = dens[jj, ii] / vmax
                if frac < 0.02:
                    continue
                shade = int(round(255 * (1.0 - frac)))
                px = x0 + ii * cell_w
                py = y0 + _PANEL - (jj + 1) * cell_h
                parts.append(f'<rect x="{_fmt(px)}" y="{_fmt(py)}" '
                             f'width="{_fmt(cell_w)}" height="{_fmt(cell_h)}" '
                             f'fill="rgb({shade},{shade},255)"/>')
        parts.append(f'<rect x="{x0}" y="{y0}" width="{_PANEL}" height="{_PANEL}" '
                     f'fill="none" stroke="black" stroke-width="1"/>')
        if truth is not None:
            tx = to_px(float(truth[i]), box.lower[i], box.upper[i], x0)
            ty = y0 + _PANEL - (float(truth[j]) - box.lower[j]) / \
                (box.upper[j] - box.lower[j]) * _PANEL
            parts.append(f'<circle cx="{_fmt(tx)}" cy="{_fmt(ty)}" r="3" '
                         f'fill="red"/>')

    for i in range(d):
        x0, y0 = panel_origin(i, 0)
        parts.append(f'<text x="{_MARGIN - 8}" y="{y0 + _PANEL / 2}" font-size="11" '
                     f'text-anchor="end" font-family="sans-serif">{names[i]}</text>')
        xb, _ = panel_origin(0, i)
        parts.append(f'<text x="{xb + _PANEL / 2}" y="{size - 30}" font-size="11" '
                     f'text-anchor="middle" font-family="sans-serif">{names[i]}</text>')

    parts.append("</svg>")
    return "\n".join(p for p in parts if p) + "\n"
