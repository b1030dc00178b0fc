"""Path-relative errors and vector-field guidance for a waypoint path."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from rivernav.angles import wrap_angle


class PathError(ValueError):
    pass


class Path:
    """Ordered waypoints P_1..P_K with precomputed segment headings and lengths."""

    def __init__(self, waypoints):
        pts = np.asarray(waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise PathError("a path needs at least two (x, y) waypoints")
        seg = np.diff(pts, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lengths <= 0):
            raise PathError("consecutive waypoints must be distinct")
        self.waypoints = pts
        self.lengths = lengths
        self.headings = np.arctan2(seg[:, 1], seg[:, 0])
        # python floats for the per-step hot path
        self._pts = [(float(x), float(y)) for x, y in pts]
        self._len = [float(v) for v in lengths]
        self._head = [float(v) for v in self.headings]
        self._cum = [0.0] + [float(v) for v in np.cumsum(lengths)]

    def __len__(self) -> int:
        return len(self.waypoints)

    @property
    def n_segments(self) -> int:
        return len(self.waypoints) - 1

    def total_length(self) -> float:
        return float(self.lengths.sum())

    def arclength_before(self, k: int) -> float:
        return self._cum[k]

    def save(self, path: str | FsPath) -> None:
        lines = ["# x y [m]"]
        lines += [f"{x!r} {y!r}" for x, y in self._pts]
        FsPath(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | FsPath) -> "Path":
        pts = []
        for lineno, raw in enumerate(FsPath(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise PathError(f"line {lineno}: expected 'x y', got {raw!r}")
            try:
                pts.append((float(parts[0]), float(parts[1])))
            except ValueError as exc:
                raise PathError(f"line {lineno}: {exc}") from None
        return cls(pts)


@dataclass(frozen=True)
class GuidanceConfig:
    c: float = 0.005  # vector-field convergence gain [1/m]

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("vector-field gain c must be positive")


@dataclass(frozen=True)
class PathFix:
    segment_index: int
    chi_P: float
    chi_C: float
    x_e: float
    y_e: float
    chi_d: float
    chi_e: float
    advance: float  # arc length travelled along the path [m]


def path_heading(p_k, p_next) -> float:
    dx = p_next[0] - p_k[0]
    dy = p_next[1] - p_k[1]
    if dx == 0.0 and dy == 0.0:
        raise PathError("coincident waypoints have no heading")
    return math.atan2(dy, dx)


def along_track(a, p_k, chi_p: float) -> float:
    return (a[0] - p_k[0]) * math.cos(chi_p) + (a[1] - p_k[1]) * math.sin(chi_p)


def cross_track(a, p_k, chi: float) -> float:
    """Signed lateral offset from the line through ``p_k`` with heading ``chi``.

    Positive to the left of the path direction.
    """
    return -(a[0] - p_k[0]) * math.sin(chi) + (a[1] - p_k[1]) * math.cos(chi)


def continuous_heading(x_e: float, seg_len: float, chi_k: float, chi_next: float) -> float:
    """Heading blended from the current to the next segment along the shortest arc."""
    if not seg_len > 0:
        raise PathError("segment length must be positive")
    frac = x_e / seg_len
    if frac <= 0.0:
        return wrap_angle(chi_k)
    if frac >= 1.0:
        return wrap_angle(chi_next)
    return wrap_angle(chi_k + frac * wrap_angle(chi_next - chi_k))


def desired_course(y_e: float, chi_p: float, cfg: GuidanceConfig) -> float:
    """Vector-field course: turns toward the path, saturating at 90 degrees off the path heading."""
    return wrap_angle(chi_p - math.atan(cfg.c * y_e))


def course_error(chi_d: float, psi: float, beta: float) -> float:
    return wrap_angle(chi_d - psi - beta)


def locate_segment(path: Path, a, k_prev: int) -> int:
    """Advance the active segment index past every waypoint already overtaken."""
    last = path.n_segments - 1
    k = min(max(k_prev, 0), last)
    pts, heads, lens = path._pts, path._head, path._len
    while k < last and along_track(a, pts[k], heads[k]) > lens[k]:
        k += 1
    return k


def path_fix(path: Path, a, psi: float, beta: float, k_prev: int, cfg: GuidanceConfig) -> PathFix:
    """All guidance quantities for position ``a``.

    The cross-track error is measured against the active segment line; the
    desired course is built on the continuous heading so it does not jump at
    waypoints.
    """
    k = locate_segment(path, a, k_prev)
    p_k = path._pts[k]
    chi_p = path._head[k]
    seg_len = path._len[k]
    raw_xe = along_track(a, p_k, chi_p)
    y_e = cross_track(a, p_k, chi_p)
    chi_next = path._head[k + 1] if k + 1 < path.n_segments else chi_p
    x_e = min(max(raw_xe, 0.0), seg_len)
    chi_c = continuous_heading(x_e, seg_len, chi_p, chi_next)
    chi_d = desired_course(y_e, chi_c, cfg)
    return PathFix(
        segment_index=k,
        chi_P=chi_p,
        chi_C=chi_c,
        x_e=x_e,
        y_e=y_e,
        chi_d=chi_d,
        chi_e=course_error(chi_d, psi, beta),
        advance=path.arclength_before(k) + raw_xe,
    )
