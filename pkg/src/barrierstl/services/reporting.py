"""
Result files: learning curves, trajectories, comparison tables and SVG plots.

SVG is emitted directly as geometry (circles, paths, polylines) with
``xml.etree``; superellipses are traced as closed paths.
"""

import csv
import logging
import math
import xml.etree.ElementTree as ET
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np

from barrierstl.core.exceptions import TrajectoryFormatError
from barrierstl.models.dynamics import Dynamics
from barrierstl.models.scenario import CircleConfig, ScenarioConfig, SuperellipseConfig
from barrierstl.models.trajectory import Trajectory
from barrierstl.services.simulation import Episode
from barrierstl.services.training import CurvePoint, EvalReport

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ("iteration", "mean_robustness", "mean_objective", "min_robustness", "wall_ms")
REPORT_COLUMNS = ("method", "trials", "satisfaction_rate", "mean_robustness", "mean_cost", "mean_step_us")
METHOD_COLORS = {"barriernet": "#1f77b4", "fcnet": "#d62728", "fixed_hocbf": "#2ca02c"}
SVG_NS = "http://www.w3.org/2000/svg"
TIME_TOL = 1e-6


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


# ============================================================================
# CSV
# ============================================================================


def write_curves_csv(path: Path, curve: Sequence[CurvePoint], omit_timing: bool = False) -> Path:
    """Learning curve; ``omit_timing`` writes wall_ms as 0 so reruns are byte-identical."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for p in curve:
            wall = 0.0 if omit_timing else p.wall_ms
            writer.writerow(
                [p.iteration, _fmt(p.mean_robustness), _fmt(p.mean_objective), _fmt(p.min_robustness), _fmt(wall)]
            )
    logger.info("Wrote %s (%d rows)", path, len(curve))
    return path


def write_report_csv(path: Path, reports: Sequence[EvalReport]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in reports:
            row = r.summary()
            writer.writerow([row["method"], row["trials"], *(_fmt(row[c]) for c in REPORT_COLUMNS[2:])])
    logger.info("Wrote %s", path)
    return path


def trajectory_header(dynamics: Dynamics) -> list[str]:
    return ["t", *dynamics.state_names, *dynamics.control_names]


def write_trajectory_csv(path: Path, episode: Episode, dynamics: Dynamics) -> Path:
    """One row per sample; the last sample has no control and leaves those cells empty."""
    traj = episode.trajectory
    states = traj.state_values()
    controls = traj.control_values()
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trajectory_header(dynamics))
        for k, x in enumerate(states):
            u = [_fmt(v) for v in controls[k]] if k < len(controls) else [""] * dynamics.q
            writer.writerow([_fmt(k * traj.dt), *(_fmt(v) for v in x), *u])
    return path


def read_trajectory_csv(path: Path, dynamics: Dynamics) -> Trajectory:
    """Read a trajectory file; control columns are optional."""
    try:
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise TrajectoryFormatError(f"cannot read trajectory {path}: {exc.strerror}", path=str(path)) from exc
    if not rows:
        raise TrajectoryFormatError(f"trajectory {path} is empty", path=str(path))
    header = [h.strip() for h in rows[0]]
    needed = ["t", *dynamics.state_names]
    missing = [c for c in needed if c not in header]
    if missing:
        raise TrajectoryFormatError(
            f"trajectory {path} lacks column(s) {', '.join(missing)}; expected header starting {','.join(needed)}",
            path=str(path),
            missing=missing,
        )
    columns = [header.index(c) for c in needed]
    data = []
    for line, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            continue
        try:
            data.append([float(row[i]) for i in columns])
        except (IndexError, ValueError) as exc:
            raise TrajectoryFormatError(f"{path}:{line}: malformed row {row!r}", path=str(path), line=line) from exc
    if len(data) < 2:
        raise TrajectoryFormatError(f"trajectory {path} needs at least two samples", path=str(path))
    array = np.asarray(data)
    if not np.all(np.isfinite(array)):
        raise TrajectoryFormatError(f"trajectory {path} contains non-finite values", path=str(path))
    times = array[:, 0]
    steps = np.diff(times)
    dt = float(steps[0])
    if dt <= 0.0 or abs(times[0]) > TIME_TOL or np.max(np.abs(steps - dt)) > TIME_TOL * max(1.0, dt):
        raise TrajectoryFormatError(f"trajectory {path} is not uniformly sampled from t = 0", path=str(path))
    return Trajectory.from_array(dt, array[:, 1:], position_indices=dynamics.position_indices)


# ============================================================================
# SVG
# ============================================================================


class _Canvas:
    """World-to-pixel mapping with y pointing up."""

    def __init__(self, lo: tuple[float, float], hi: tuple[float, float], width: int = 640, pad: int = 20) -> None:
        self.lo, self.hi = lo, hi
        self.scale = (width - 2 * pad) / max(hi[0] - lo[0], 1e-9)
        self.pad = pad
        self.width = width
        self.height = int(round((hi[1] - lo[1]) * self.scale)) + 2 * pad
        self.root = ET.Element(
            "svg",
            xmlns=SVG_NS,
            width=str(self.width),
            height=str(self.height),
            viewBox=f"0 0 {self.width} {self.height}",
        )

    def xy(self, x: float, y: float) -> tuple[float, float]:
        return (self.pad + (x - self.lo[0]) * self.scale, self.height - self.pad - (y - self.lo[1]) * self.scale)

    def points(self, xy: np.ndarray) -> str:
        return " ".join("{:.2f},{:.2f}".format(*self.xy(x, y)) for x, y in xy)

    def add(self, tag: str, **attrs: str) -> ET.Element:
        return ET.SubElement(self.root, tag, {k.replace("_", "-"): v for k, v in attrs.items()})

    def write(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        ET.ElementTree(self.root).write(path, encoding="utf-8", xml_declaration=True)
        logger.info("Wrote %s", path)
        return path


def _superellipse_outline(cfg: SuperellipseConfig, n: int = 96) -> np.ndarray:
    theta = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    c, s = np.cos(theta), np.sin(theta)
    x = cfg.center[0] + cfg.a * np.sign(c) * np.sqrt(np.abs(c))
    y = cfg.center[1] + cfg.b * np.sign(s) * np.sqrt(np.abs(s))
    return np.column_stack([x, y])


def _bounds(scenario: ScenarioConfig, paths: Sequence[np.ndarray]) -> tuple[tuple[float, float], tuple[float, float]]:
    xs, ys = [scenario.init.lo[0], scenario.init.hi[0]], [scenario.init.lo[1], scenario.init.hi[1]]
    for cfg in scenario.shapes.values():
        rx, ry = (cfg.radius, cfg.radius) if isinstance(cfg, CircleConfig) else (cfg.a, cfg.b)
        xs += [cfg.center[0] - rx, cfg.center[0] + rx]
        ys += [cfg.center[1] - ry, cfg.center[1] + ry]
    for p in paths:
        if len(p):
            xs += [float(p[:, 0].min()), float(p[:, 0].max())]
            ys += [float(p[:, 1].min()), float(p[:, 1].max())]
    margin = 0.5
    return (min(xs) - margin, min(ys) - margin), (max(xs) + margin, max(ys) + margin)


def render_environment_svg(
    path: Path,
    scenario: ScenarioConfig,
    paths: Mapping[str, Sequence[np.ndarray]],
    avoid: set[str] | None = None,
) -> Path:
    """Shapes, Init box and sampled position paths per method."""
    avoid = avoid or set()
    flat = [p for method_paths in paths.values() for p in method_paths]
    lo, hi = _bounds(scenario, flat)
    canvas = _Canvas(lo, hi)
    canvas.add("rect", x="0", y="0", width=str(canvas.width), height=str(canvas.height), fill="white")
    x0, y0 = canvas.xy(scenario.init.lo[0], scenario.init.hi[1])
    x1, y1 = canvas.xy(scenario.init.hi[0], scenario.init.lo[1])
    canvas.add(
        "rect",
        id="init",
        x=f"{x0:.2f}",
        y=f"{y0:.2f}",
        width=f"{x1 - x0:.2f}",
        height=f"{y1 - y0:.2f}",
        fill="#cccccc",
        fill_opacity="0.5",
        stroke="#666666",
    )
    for name, cfg in scenario.shapes.items():
        color = "#e377c2" if name in avoid else "#17becf"
        if isinstance(cfg, CircleConfig):
            cx, cy = canvas.xy(*cfg.center)
            canvas.add(
                "circle",
                id=f"shape-{name}",
                cx=f"{cx:.2f}",
                cy=f"{cy:.2f}",
                r=f"{cfg.radius * canvas.scale:.2f}",
                fill=color,
                fill_opacity="0.35",
                stroke=color,
            )
        else:
            canvas.add(
                "polygon",
                id=f"shape-{name}",
                points=canvas.points(_superellipse_outline(cfg)),
                fill=color,
                fill_opacity="0.35",
                stroke=color,
            )
        tx, ty = canvas.xy(*cfg.center)
        label = canvas.add("text", x=f"{tx:.2f}", y=f"{ty:.2f}", font_size="12", text_anchor="middle")
        label.text = name
    for method, method_paths in paths.items():
        color = METHOD_COLORS.get(method, "#333333")
        group = canvas.add("g", id=f"paths-{method}", stroke=color, fill="none", stroke_width="1.5")
        for n, p in enumerate(method_paths):
            ET.SubElement(group, "polyline", {"id": f"{method}-{n}", "points": canvas.points(p)})
    return canvas.write(path)


def render_curves_svg(path: Path, curves: Mapping[str, Sequence[CurvePoint]], width: int = 640) -> Path:
    """Mean robustness against iteration, one polyline per mode, with the zero line."""
    series = {mode: np.array([[p.iteration, p.mean_robustness] for p in c]) for mode, c in curves.items() if c}
    values = np.concatenate([s for s in series.values()]) if series else np.zeros((1, 2))
    x_hi = max(float(values[:, 0].max()), 1.0)
    y_lo, y_hi = min(float(values[:, 1].min()), 0.0), max(float(values[:, 1].max()), 0.0)
    span = max(y_hi - y_lo, 1e-6)
    height, pad = 320, 30
    root = ET.Element("svg", xmlns=SVG_NS, width=str(width), height=str(height))

    def xy(it: float, rho: float) -> str:
        px = pad + it / x_hi * (width - 2 * pad)
        py = height - pad - (rho - y_lo) / span * (height - 2 * pad)
        return f"{px:.2f},{py:.2f}"

    ET.SubElement(root, "rect", x="0", y="0", width=str(width), height=str(height), fill="white")
    ET.SubElement(
        root, "polyline", {"id": "zero", "points": f"{xy(0, 0)} {xy(x_hi, 0)}", "stroke": "#999999", "fill": "none"}
    )
    for mode, s in series.items():
        ET.SubElement(
            root,
            "polyline",
            {
                "id": f"curve-{mode}",
                "points": " ".join(xy(it, rho) for it, rho in s),
                "stroke": METHOD_COLORS.get(mode, "#333333"),
                "fill": "none",
            },
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    ET.ElementTree(root).write(path, encoding="utf-8", xml_declaration=True)
    logger.info("Wrote %s", path)
    return path
