"""Deterministic SVG figures of phase portraits, region maps and diagrams."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import to_rgb  # noqa: E402

from .model import TWO_PI  # noqa: E402

REGION_COLORS = {
    "dissipative": "#ffffff",
    "rotation+": "#3465a4",
    "rotation-": "#5fd3f3",
    "libration_cw": "#f57900",
    "libration_ccw": "#fce94f",
    "undetermined": "#bbbbbb",
}
EQ_STYLE = {
    "source": ("o", "#cc0000"),
    "sink": ("o", "#204a87"),
    "saddle": ("o", "#4e9a06"),
    "center": ("o", "#c000c0"),
    "degenerate": ("h", "#f57900"),
    "undetermined": ("s", "#555753"),
}
CURVE_COLORS = {
    "SaddleCenterI": "#cc0000",
    "SaddleCenterII": "#cc0000",
    "PitchforkI": "#4e9a06",
    "SinkSourceII": "#4e9a06",
    "HeteroclinicSS": "#f57900",
    "SecondReversalLine": "#3465a4",
    "RotationalSymLine": "#8f5902",
    "separatrix-unstable": "#204a87",
    "separatrix-stable": "#cc0000",
    "orbit": "#000000",
}


@dataclass
class Polyline:
    points: np.ndarray
    style: str
    gid: str = ""
    wrap: bool = False


@dataclass
class Glyph:
    position: tuple[float, float]
    kind: str
    gid: str = ""


@dataclass
class SvgScene:
    """Layers drawn bottom to top: region raster, polylines, glyphs."""

    width: float = 5.0
    height: float = 5.0
    window: tuple[float, float, float, float] = (0.0, TWO_PI, 0.0, TWO_PI)
    raster: np.ndarray | None = None  # (ny, nx, 3) RGB, row 0 at the bottom
    polylines: list[Polyline] = field(default_factory=list)
    glyphs: list[Glyph] = field(default_factory=list)
    title: str = ""
    xlabel: str = r"$\varphi_1$"
    ylabel: str = r"$\varphi_2$"
    legend: bool = False


def region_raster(region_map) -> np.ndarray:
    """RGB image of a :class:`RegionMap`, indexed ``[j, i]`` for ``imshow``."""
    n1, n2 = region_map.shape
    img = np.zeros((n2, n1, 3))
    for i in range(n1):
        for j in range(n2):
            lab = region_map.label_at(i, j)
            key = lab.code
            if lab.kind == "rotation":
                key = "rotation+" if (lab.p + lab.q) > 0 else "rotation-"
            img[j, i] = to_rgb(REGION_COLORS[key])
    return img


def split_wrapped(points: np.ndarray, window) -> list[np.ndarray]:
    """Fold a lifted path into ``window`` and cut it where it jumps across an edge."""
    x0, _x1, y0, _y1 = window
    folded = np.column_stack([x0 + np.mod(points[:, 0] - x0, TWO_PI),
                              y0 + np.mod(points[:, 1] - y0, TWO_PI)])
    if len(folded) < 2:
        return [folded]
    jumps = np.where(np.max(np.abs(np.diff(folded, axis=0)), axis=1) > math.pi)[0] + 1
    return [seg for seg in np.split(folded, jumps) if len(seg) >= 2]


def render_svg(scene: SvgScene, path) -> None:
    """Write ``scene`` as SVG; identical scenes give identical bytes."""
    with plt.rc_context({"svg.hashsalt": "rotatorlab", "svg.fonttype": "path",
                         "font.size": 9}):
        fig, ax = plt.subplots(figsize=(scene.width, scene.height))
        x0, x1, y0, y1 = scene.window
        if scene.raster is not None:
            im = ax.imshow(scene.raster, origin="lower", extent=(x0, x1, y0, y1),
                           interpolation="nearest", aspect="auto")
            im.set_gid("regions")
        seen = set()
        for k, line in enumerate(scene.polylines):
            pieces = split_wrapped(line.points, scene.window) if line.wrap else [line.points]
            dashed = line.style in ("separatrix-stable",)
            for m, seg in enumerate(pieces):
                label = None
                if scene.legend and line.style not in seen:
                    label = line.style
                    seen.add(line.style)
                (art,) = ax.plot(seg[:, 0], seg[:, 1], color=CURVE_COLORS.get(line.style, "k"),
                                 lw=0.9, ls="--" if dashed else "-", label=label)
                art.set_gid(f"{line.gid or 'line-%d' % k}-{m}")
        for k, g in enumerate(scene.glyphs):
            marker, color = EQ_STYLE.get(g.kind, ("x", "k"))
            (art,) = ax.plot([g.position[0]], [g.position[1]], marker=marker, color=color,
                             mec="k", mew=0.6, ms=7, ls="none")
            art.set_gid(g.gid or f"eq-{g.kind}-{k}")
        ax.set_xlim(x0, x1)
        ax.set_ylim(y0, y1)
        ax.set_xlabel(scene.xlabel)
        ax.set_ylabel(scene.ylabel)
        if scene.title:
            ax.set_title(scene.title)
        if scene.legend and seen:
            ax.legend(loc="best", fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def portrait_scene(region_map=None, equilibria=(), separatrices=(), orbits=(),
                   window=(0.0, TWO_PI, 0.0, TWO_PI), title="") -> SvgScene:
    scene = SvgScene(window=window, title=title)
    if region_map is not None:
        scene.raster = region_raster(region_map)
    for k, sep in enumerate(separatrices):
        style = "separatrix-unstable" if sep.branch.startswith("unstable") else "separatrix-stable"
        scene.polylines.append(Polyline(sep.path.y, style, f"sep-{k}", wrap=True))
    for k, orb in enumerate(orbits):
        scene.polylines.append(Polyline(np.asarray(orb), "orbit", f"orbit-{k}", wrap=True))
    for k, eq in enumerate(equilibria):
        pos = np.asarray(eq.position)
        pos = np.array([window[0] + (pos[0] - window[0]) % TWO_PI,
                        window[2] + (pos[1] - window[2]) % TWO_PI])
        scene.glyphs.append(Glyph((float(pos[0]), float(pos[1])), eq.kind.value,
                                  f"eq-{eq.kind.value}-{k}"))
    return scene


def diagram_scene(curves, window, plane: str = "kw", title="") -> SvgScene:
    ylabel = r"$\omega$" if plane == "kw" else r"$a$"
    scene = SvgScene(window=window, title=title, xlabel=r"$\kappa$", ylabel=ylabel, legend=True)
    for k, c in enumerate(curves):
        scene.polylines.append(Polyline(c.points, c.kind, f"curve-{c.kind}-{k}"))
    return scene


def scan_scene(eps, max_isi, windings, title="") -> SvgScene:
    """Max ISI against detuning, one polyline per winding branch."""
    eps = np.asarray(eps, dtype=float)
    vals = np.asarray(max_isi, dtype=float)
    ok = np.isfinite(vals)
    lo, hi = (float(eps.min()), float(eps.max())) if len(eps) else (0.0, 1.0)
    top = float(np.nanmax(vals)) * 1.05 if ok.any() else 1.0
    scene = SvgScene(width=6.0, height=4.0, window=(lo, hi, 0.0, top), title=title,
                     xlabel=r"$\varepsilon$", ylabel="max ISI")
    runs: list[list[int]] = []
    for k in range(len(eps)):
        if not ok[k]:
            continue
        if runs and runs[-1][-1] == k - 1 and windings[runs[-1][-1]] == windings[k]:
            runs[-1].append(k)
        else:
            runs.append([k])
    for r in runs:
        pts = np.column_stack([eps[r], vals[r]])
        if len(pts) == 1:
            pts = np.vstack([pts, pts])
        w = windings[r[0]]
        scene.polylines.append(Polyline(pts, "orbit", f"branch-{w[0]}-{w[1]}-{r[0]}"))
    return scene
