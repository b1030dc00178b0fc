"""Procedural river generation: segment chains, supporting-point grids,
bathymetry, rotating current fields, and spatial queries on the grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path as FsPath

import numpy as np
from scipy.spatial import cKDTree

from rivernav.dynamics import LocalEnvironment
from rivernav.guidance import Path

STRAIGHT = "straight"
CURVED = "curved"


class RiverConfigError(ValueError):
    pass


class OutOfRiverError(LookupError):
    """Raised when a position lies outside the grid."""


class GridFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SegmentSpec:
    kind: str
    xi: float = 0.0
    length: float | None = None
    radius: float | None = None
    phi: float | None = None

    def __post_init__(self):
        if self.kind == STRAIGHT:
            if self.length is None or not self.length > 0:
                raise RiverConfigError("straight segment needs a positive length")
        elif self.kind == CURVED:
            if self.radius is None or not self.radius > 0:
                raise RiverConfigError("curved segment needs a positive radius")
            if self.phi is None or self.phi == 0:
                raise RiverConfigError("curved segment needs a non-zero curvature angle")
        else:
            raise RiverConfigError(f"unknown segment kind {self.kind!r}")

    @classmethod
    def straight(cls, length: float, xi: float = 0.0) -> "SegmentSpec":
        return cls(STRAIGHT, xi=xi, length=length)

    @classmethod
    def curved(cls, radius: float, phi: float, xi: float = 0.0) -> "SegmentSpec":
        return cls(CURVED, xi=xi, radius=radius, phi=phi)


@dataclass(frozen=True)
class PosedSegment:
    """A segment together with its start and end pose on the centerline."""

    spec: SegmentSpec
    start: tuple[float, float, float]  # x, y, heading
    end: tuple[float, float, float]

    def centerline(self, spacing: float) -> np.ndarray:
        """Centerline poses (x, y, heading) from start to end, roughly ``spacing`` apart."""
        x0, y0, xi = self.start
        s = self.spec
        if s.kind == STRAIGHT:
            n = max(1, int(round(s.length / spacing)))
            t = s.length * np.arange(n + 1) / n
            return np.column_stack([x0 + t * math.cos(xi), y0 + t * math.sin(xi), np.full(n + 1, xi)])
        n = max(1, int(round(s.radius * abs(s.phi) / spacing)))
        sign = math.copysign(1.0, s.phi)
        cx, cy = _arc_center(x0, y0, xi, s.radius, sign)
        ang = xi + s.phi * np.arange(n + 1) / n
        # position on the arc: centre minus the signed left normal of the local heading
        px = cx + sign * s.radius * np.sin(ang)
        py = cy - sign * s.radius * np.cos(ang)
        px[0], py[0] = x0, y0
        px[-1], py[-1] = self.end[0], self.end[1]
        return np.column_stack([px, py, ang])


def _arc_center(x, y, xi, radius, sign):
    return x - sign * radius * math.sin(xi), y + sign * radius * math.cos(xi)


def chain_segments(specs, xi_1: float = 0.0, origin=(0.0, 0.0)) -> list[PosedSegment]:
    """Pose an alternating straight/curved sequence end to end.

    Starting angles accumulate the curvature of every preceding curve; the
    ``xi`` stored on the input specs is ignored and replaced.
    """
    specs = list(specs)
    if not specs:
        raise RiverConfigError("a river needs at least one segment")
    for k, s in enumerate(specs):
        expected = STRAIGHT if k % 2 == 0 else CURVED
        if s.kind != expected:
            raise RiverConfigError(f"segment {k} must be {expected} (sequence alternates, starting straight)")
    out = []
    x, y, xi = float(origin[0]), float(origin[1]), float(xi_1)
    for s in specs:
        posed_spec = SegmentSpec(s.kind, xi=xi, length=s.length, radius=s.radius, phi=s.phi)
        if s.kind == STRAIGHT:
            x1, y1, xi1 = x + s.length * math.cos(xi), y + s.length * math.sin(xi), xi
        else:
            sign = math.copysign(1.0, s.phi)
            cx, cy = _arc_center(x, y, xi, s.radius, sign)
            xi1 = xi + s.phi
            x1, y1 = cx + sign * s.radius * math.sin(xi1), cy - sign * s.radius * math.cos(xi1)
        out.append(PosedSegment(posed_spec, (x, y, xi), (x1, y1, xi1)))
        x, y, xi = x1, y1, xi1
    return out


@dataclass(frozen=True)
class GenConfig:
    n: int = 5
    width: float = 500.0
    spacing: float = 20.0
    h_max: float = 10.0
    epsilon: float = 2e-8
    sigma: float = 0.1
    v_max: float = 1.5
    phi_deg: tuple[int, int] = (60, 100)  # integer degrees, sign drawn separately
    r_range: tuple[int, int] = (1000, 5000)
    l_range: tuple[float, float] = (400.0, 2000.0)  # drawn in multiples of the spacing
    xi_1: float = 0.0
    waypoint_stride: int = 2
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise RiverConfigError("n must be a positive integer")
        for name in ("width", "spacing", "h_max", "epsilon"):
            if not getattr(self, name) > 0:
                raise RiverConfigError(f"{name} must be positive")
        if not self.sigma >= 0 or not self.v_max >= 0:
            raise RiverConfigError("sigma and v_max must be non-negative")
        ratio = self.width / self.spacing
        if abs(ratio - round(ratio)) > 1e-9:
            raise RiverConfigError("width must be a whole multiple of the spacing")
        lo, hi = self.phi_deg
        if not 0 < lo <= hi:
            raise RiverConfigError("phi_deg must be an ordered range of positive degrees")
        if not 0 < self.r_range[0] <= self.r_range[1]:
            raise RiverConfigError("r_range must be ordered and positive")
        if self.r_range[0] <= self.width / 2:
            raise RiverConfigError("smallest radius must exceed half the river width")
        if not 0 < self.l_range[0] <= self.l_range[1]:
            raise RiverConfigError("l_range must be ordered and positive")
        if int(self.waypoint_stride) != self.waypoint_stride or self.waypoint_stride < 1:
            raise RiverConfigError("waypoint_stride must be a positive integer")

    @property
    def m_points(self) -> int:
        return int(round(self.width / self.spacing)) + 1


@dataclass(frozen=True, eq=False)
class RiverGrid:
    """Supporting points laid out as ``(p sections, m points)`` arrays.

    Index ``i = 0`` is the right bank when looking downstream along the
    section order. Current directions are global-frame angles; a negative
    speed means flow against that direction.
    """

    x: np.ndarray
    y: np.ndarray
    depth: np.ndarray
    current_dir: np.ndarray
    current_speed: np.ndarray
    segments: tuple[PosedSegment, ...] = field(default=())

    def __post_init__(self):
        shape = self.x.shape
        if len(shape) != 2 or shape[0] < 2 or shape[1] < 2:
            raise GridFormatError("a grid needs at least 2 sections of 2 points")
        for name in ("y", "depth", "current_dir", "current_speed"):
            if getattr(self, name).shape != shape:
                raise GridFormatError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        for name in ("x", "y", "depth", "current_dir", "current_speed"):
            arr = getattr(self, name)
            arr.setflags(write=False)
            if not np.all(np.isfinite(arr)):
                raise GridFormatError(f"{name} contains non-finite values")
        if np.any(self.depth < 0):
            raise GridFormatError("depth must be non-negative")

    @property
    def p(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    @property
    def centerline(self) -> np.ndarray:
        """Section midpoints q^M, halfway between the two bank points."""
        return np.column_stack([0.5 * (self.x[:, 0] + self.x[:, -1]), 0.5 * (self.y[:, 0] + self.y[:, -1])])

    @property
    def max_depth(self) -> float:
        return float(self.depth.max())

    @cached_property
    def locator(self) -> "GridLocator":
        return GridLocator(self)

    def query(self, position) -> LocalEnvironment:
        return self.locator.query(position)

    def with_depth(self, depth) -> "RiverGrid":
        return RiverGrid(self.x, self.y, np.asarray(depth, float), self.current_dir, self.current_speed, self.segments)

    def with_current(self, direction, speed) -> "RiverGrid":
        return RiverGrid(
            self.x, self.y, self.depth, np.asarray(direction, float), np.asarray(speed, float), self.segments
        )

    def identical_to(self, other: "RiverGrid") -> bool:
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("x", "y", "depth", "current_dir", "current_speed")
        )


def build_grid(specs, cfg: GenConfig, xi_1: float | None = None) -> RiverGrid:
    """Discretize a chain of segments into cross-sections of ``cfg.m_points``.

    Curves get one section per ``cfg.spacing`` of centerline arc length, with
    lateral points on the radial lines, so inner-bank spacing is tighter than
    outer-bank spacing. Adjacent segments share their boundary section.
    Depth is zero and the current is still until filled in.
    """
    posed = chain_segments(specs, cfg.xi_1 if xi_1 is None else xi_1)
    for ps in posed:
        if ps.spec.kind == CURVED and ps.spec.radius <= cfg.width / 2:
            raise RiverConfigError(f"radius {ps.spec.radius} does not exceed half the width {cfg.width / 2}")
    parts = [posed[0].centerline(cfg.spacing)]
    parts += [ps.centerline(cfg.spacing)[1:] for ps in posed[1:]]
    poses = np.concatenate(parts)
    offsets = -0.5 * cfg.width + cfg.spacing * np.arange(cfg.m_points)
    nx, ny = -np.sin(poses[:, 2]), np.cos(poses[:, 2])
    x = poses[:, 0:1] + offsets[None, :] * nx[:, None]
    y = poses[:, 1:2] + offsets[None, :] * ny[:, None]
    zeros = np.zeros_like(x)
    return RiverGrid(x, y, zeros, zeros.copy(), zeros.copy(), tuple(posed))


def depth_profile(distance, h_max: float, epsilon: float):
    """Noise-free depth magnitude at a distance from the section midpoint."""
    d = np.asarray(distance, dtype=float)
    return h_max * np.exp(-epsilon * d**4)


def lateral_distance(grid: RiverGrid) -> np.ndarray:
    """Distance of every supporting point from its section midpoint."""
    c = grid.centerline
    return np.hypot(grid.x - c[:, 0:1], grid.y - c[:, 1:2])


def sample_depth(grid: RiverGrid, cfg: GenConfig, rng: np.random.Generator) -> RiverGrid:
    """Bell-shaped bathymetry plus Gaussian noise, stored as positive depth."""
    if grid.segments:
        # generated grids: lateral offsets are exact multiples of the spacing
        offsets = -0.5 * cfg.width + cfg.spacing * np.arange(grid.m)
        dist = np.broadcast_to(np.abs(offsets), grid.x.shape)
    else:
        dist = lateral_distance(grid)
    eta = rng.normal(0.0, cfg.sigma, size=grid.x.shape) if cfg.sigma > 0 else 0.0
    return grid.with_depth(np.abs(-depth_profile(dist, cfg.h_max, cfg.epsilon) + eta))


def assign_current(grid: RiverGrid, cfg: GenConfig) -> RiverGrid:
    """Rotating current: every point of section j (1-based) gets direction
    2*pi*j/p and speed v_max*cos(2*pi*j/p)."""
    p = grid.p
    angle = 2.0 * np.pi * np.arange(1, p + 1) / p
    direction = np.repeat(angle[:, None], grid.m, axis=1)
    speed = np.repeat((cfg.v_max * np.cos(angle))[:, None], grid.m, axis=1)
    return grid.with_current(direction, speed)


def sample_specs(cfg: GenConfig, rng: np.random.Generator) -> list[SegmentSpec]:
    lo_l = int(math.ceil(cfg.l_range[0] / cfg.spacing - 1e-9))
    hi_l = int(math.floor(cfg.l_range[1] / cfg.spacing + 1e-9))
    if lo_l > hi_l:
        raise RiverConfigError("l_range contains no multiple of the spacing")
    specs = []
    for _ in range(cfg.n):
        length = cfg.spacing * int(rng.integers(lo_l, hi_l + 1))
        radius = float(rng.integers(cfg.r_range[0], cfg.r_range[1] + 1))
        deg = int(rng.integers(cfg.phi_deg[0], cfg.phi_deg[1] + 1))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        specs.append(SegmentSpec.straight(length))
        specs.append(SegmentSpec.curved(radius, sign * math.radians(deg)))
    return specs


def centerline_path(grid: RiverGrid, stride: int) -> Path:
    pts = grid.centerline
    idx = list(range(0, grid.p, stride))
    if idx[-1] != grid.p - 1:
        idx.append(grid.p - 1)
    return Path(pts[idx])


def river_from_specs(specs, cfg: GenConfig, rng: np.random.Generator | None = None) -> tuple[RiverGrid, Path]:
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    grid = build_grid(specs, cfg)
    grid = assign_current(sample_depth(grid, cfg, rng), cfg)
    return grid, centerline_path(grid, cfg.waypoint_stride)


def self_overlapping(grid: RiverGrid, width: float) -> bool:
    """True when two reaches that are far apart along the river come within one
    river width of each other, so their cross-sections would overlap."""
    c = grid.centerline
    arc = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(c, axis=0).T))])
    pairs = cKDTree(c).query_pairs(width, output_type="ndarray")
    if len(pairs) == 0:
        return False
    return bool(np.any(np.abs(arc[pairs[:, 0]] - arc[pairs[:, 1]]) > 0.5 * math.pi * width))


MAX_REDRAWS = 1000


def generate(cfg: GenConfig, seed: int | None = None) -> tuple[RiverGrid, Path]:
    """Random river and its centerline training path, determined by the seed.

    Geometries that fold back onto themselves are redrawn from the same stream.
    """
    seed = cfg.seed if seed is None else seed
    geom_ss, depth_ss = np.random.SeedSequence(seed).spawn(2)
    geom_rng = np.random.default_rng(geom_ss)
    for _ in range(MAX_REDRAWS):
        specs = sample_specs(cfg, geom_rng)
        if not self_overlapping(build_grid(specs, cfg), cfg.width):
            return river_from_specs(specs, cfg, np.random.default_rng(depth_ss))
    raise RiverConfigError(f"no non-overlapping river found in {MAX_REDRAWS} draws")


def straight_channel(length: float, cfg: GenConfig, depth: float | None = None) -> tuple[RiverGrid, Path]:
    """A single straight reach without current.

    Uniform ``depth`` when given, otherwise the noise-free bell profile.
    """
    grid = build_grid([SegmentSpec.straight(length)], cfg)
    if depth is None:
        grid = sample_depth(grid, replace(cfg, sigma=0.0), np.random.default_rng(0))
    else:
        grid = grid.with_depth(np.full(grid.x.shape, float(depth)))
    return grid, centerline_path(grid, cfg.waypoint_stride)


class GridLocator:
    """Point location and bilinear interpolation in (section, lateral) index space."""

    SNAP = 1e-9

    def __init__(self, grid: RiverGrid):
        self.grid = grid
        self._x = grid.x.tolist()
        self._y = grid.y.tolist()
        self._h = grid.depth.tolist()
        self._cu = (grid.current_speed * np.cos(grid.current_dir)).tolist()
        self._cv = (grid.current_speed * np.sin(grid.current_dir)).tolist()
        self._tree = cKDTree(np.column_stack([grid.x.ravel(), grid.y.ravel()]))
        self._hint: tuple[int, int] | None = None

    def _invert(self, j: int, i: int, px: float, py: float):
        """Cell-local (s, t) of a point in cell (j, i), or None if outside."""
        X, Y = self._x, self._y
        x00, y00 = X[j][i], Y[j][i]
        ax, ay = X[j + 1][i] - x00, Y[j + 1][i] - y00
        bx, by = X[j][i + 1] - x00, Y[j][i + 1] - y00
        cx, cy = X[j + 1][i + 1] - X[j + 1][i] - bx, Y[j + 1][i + 1] - Y[j + 1][i] - by
        dx, dy = px - x00, py - y00
        s = t = 0.5
        for _ in range(20):
            fx = ax * s + bx * t + cx * s * t - dx
            fy = ay * s + by * t + cy * s * t - dy
            j11, j12 = ax + cx * t, bx + cx * s
            j21, j22 = ay + cy * t, by + cy * s
            det = j11 * j22 - j12 * j21
            if det == 0.0:
                return None
            ds = (fx * j22 - fy * j12) / det
            dt = (j11 * fy - j21 * fx) / det
            s -= ds
            t -= dt
            if abs(ds) < 1e-13 and abs(dt) < 1e-13:
                break
        tol = self.SNAP
        if not (-tol <= s <= 1 + tol and -tol <= t <= 1 + tol):
            return None
        s = 0.0 if s < tol else (1.0 if s > 1 - tol else s)
        t = 0.0 if t < tol else (1.0 if t > 1 - tol else t)
        return s, t

    def _candidates(self, px: float, py: float):
        p, m = self.grid.p, self.grid.m
        if self._hint is not None:
            hj, hi = self._hint
            yield hj, hi
            for dj in (-1, 0, 1):
                for di in (-1, 0, 1):
                    j, i = hj + dj, hi + di
                    if (dj or di) and 0 <= j < p - 1 and 0 <= i < m - 1:
                        yield j, i
        _, idx = self._tree.query((px, py), k=min(8, p * m))
        for flat in np.atleast_1d(idx):
            nj, ni = divmod(int(flat), m)
            for j in (nj - 1, nj):
                for i in (ni - 1, ni):
                    if 0 <= j < p - 1 and 0 <= i < m - 1:
                        yield j, i

    def locate(self, position) -> tuple[int, int, float, float]:
        px, py = float(position[0]), float(position[1])
        for j, i in self._candidates(px, py):
            st = self._invert(j, i, px, py)
            if st is not None:
                self._hint = (j, i)
                return j, i, st[0], st[1]
        raise OutOfRiverError(f"position ({px:.3f}, {py:.3f}) is outside the river grid")

    def _interp(self, field, j, i, s, t) -> float:
        return (
            field[j][i] * (1 - s) * (1 - t)
            + field[j + 1][i] * s * (1 - t)
            + field[j][i + 1] * (1 - s) * t
            + field[j + 1][i + 1] * s * t
        )

    def query(self, position) -> LocalEnvironment:
        j, i, s, t = self.locate(position)
        return LocalEnvironment(
            depth=self._interp(self._h, j, i, s, t),
            current_u=self._interp(self._cu, j, i, s, t),
            current_v=self._interp(self._cv, j, i, s, t),
        )


def write_grid(grid: RiverGrid, path: str | FsPath) -> None:
    lines = [f"sections={grid.p} points={grid.m}"]
    cols = (grid.x, grid.y, grid.depth, grid.current_dir, grid.current_speed)
    for j in range(grid.p):
        for i in range(grid.m):
            vals = " ".join(repr(float(c[j, i])) for c in cols)
            lines.append(f"{j + 1} {i + 1} {vals}")
    FsPath(path).write_text("\n".join(lines) + "\n")


def read_grid(path: str | FsPath) -> RiverGrid:
    """Parse and validate a grid file; errors carry the offending line number."""
    try:
        text = FsPath(path).read_text()
    except UnicodeDecodeError as exc:
        raise GridFormatError(f"{path}: not a text file ({exc})") from None
    rows = [(n, ln.strip()) for n, ln in enumerate(text.splitlines(), start=1)]
    rows = [(n, ln) for n, ln in rows if ln and not ln.startswith("#")]
    if not rows:
        raise GridFormatError("empty grid file")
    n0, header = rows[0]
    try:
        kv = dict(tok.split("=", 1) for tok in header.split())
        p, m = int(kv["sections"]), int(kv["points"])
    except (ValueError, KeyError):
        raise GridFormatError(f"line {n0}: expected header 'sections=p points=m', got {header!r}") from None
    if p < 2 or m < 2:
        raise GridFormatError(f"line {n0}: need at least 2 sections and 2 points")
    data = np.empty((5, p, m))
    body = rows[1:]
    for k in range(p * m):
        j_exp, i_exp = divmod(k, m)
        j_exp, i_exp = j_exp + 1, i_exp + 1
        if k >= len(body):
            raise GridFormatError(f"missing point (j={j_exp}, i={i_exp}) at end of file")
        n, ln = body[k]
        parts = ln.split()
        if len(parts) != 7:
            raise GridFormatError(f"line {n}: expected 7 fields 'j i x y depth current_dir current_speed'")
        try:
            j, i = int(parts[0]), int(parts[1])
            vals = [float(v) for v in parts[2:]]
        except ValueError as exc:
            raise GridFormatError(f"line {n}: {exc}") from None
        if (j, i) != (j_exp, i_exp):
            if j < j_exp and i <= m:
                raise GridFormatError(f"line {n}: section index {j} is not monotone (expected {j_exp})")
            raise GridFormatError(f"line {n}: missing point (j={j_exp}, i={i_exp}); found ({j}, {i})")
        if not all(math.isfinite(v) for v in vals):
            raise GridFormatError(f"line {n}: non-finite value at (j={j}, i={i})")
        if vals[2] < 0:
            raise GridFormatError(f"line {n}: negative depth at (j={j}, i={i})")
        data[:, j - 1, i - 1] = vals
    if len(body) > p * m:
        raise GridFormatError(f"line {body[p * m][0]}: more points than the header declares")
    return RiverGrid(*data)
