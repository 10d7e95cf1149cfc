"""Cone-delimited tracks: corridor membership, laps, inversion, generators, file I/O."""

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .dynamics import VehicleParams, VehicleState, normalize_angle


class MalformedTrackError(ValueError):
    """Raised when cone/centerline data cannot form a valid track."""


class ConeColour(Enum):
    BLUE = "B"     # left boundary
    YELLOW = "Y"   # right boundary


@dataclass(frozen=True)
class Cone:
    x: float
    y: float
    colour: ConeColour


BOUNDARY_EPS = 1e-9  # points this close to a boundary count as inside


def _cum_lengths(points: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _segment_distances(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point (M,2) to each segment a[k]->b[k] (K,2); returns (M,K)."""
    d = b - a                                   # (K,2)
    len2 = np.maximum((d * d).sum(axis=1), 1e-300)
    ap = points[:, None, :] - a[None, :, :]     # (M,K,2)
    t = np.clip((ap * d[None, :, :]).sum(axis=2) / len2[None, :], 0.0, 1.0)
    closest = a[None, :, :] + t[:, :, None] * d[None, :, :]
    return np.linalg.norm(points[:, None, :] - closest, axis=2)


def _crossing_parity(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Even-odd rule for each point against one closed ring (first point repeated)."""
    x, y = points[:, 0][:, None], points[:, 1][:, None]
    x1, y1 = ring[:-1, 0][None, :], ring[:-1, 1][None, :]
    x2, y2 = ring[1:, 0][None, :], ring[1:, 1][None, :]
    straddles = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    hits = straddles & (x < x_cross)
    return hits.sum(axis=1) % 2 == 1


@dataclass
class Track:
    """Immutable-after-construction cone track with centerline bookkeeping."""

    blue_cones: list[Cone]
    yellow_cones: list[Cone]
    centerline: np.ndarray                  # (N, 2)
    finish_line: np.ndarray                 # (2, 2) segment endpoints
    start_pose: tuple[float, float, float]  # x, y, yaw
    is_loop: bool
    name: str = ""
    cum_lengths: np.ndarray = field(init=False, repr=False)
    total_length: float = field(init=False)
    finish_forward: np.ndarray = field(init=False, repr=False)
    crossings_to_complete: int = field(init=False)

    def __post_init__(self):
        if len(self.blue_cones) < 2 or len(self.yellow_cones) < 2:
            raise MalformedTrackError("need at least 2 cones per side")
        self.centerline = np.asarray(self.centerline, dtype=float)
        self.finish_line = np.asarray(self.finish_line, dtype=float)
        self.cum_lengths = _cum_lengths(self.centerline)
        if not np.all(np.diff(self.cum_lengths) > 0.0):
            raise MalformedTrackError("centerline arc lengths must be strictly increasing")
        self.total_length = float(self.cum_lengths[-1])
        self.crossings_to_complete = 2 if self.is_loop else 1
        mid = self.finish_line.mean(axis=0)
        s_mid, _ = self.project(mid)
        self.finish_forward = self._tangent_at(s_mid)
        inner = self.centerline[:-1] if self.is_loop else self.centerline
        if not np.all(points_inside(self, inner)):
            raise MalformedTrackError("centerline must lie inside the cone corridor")

    def _tangent_at(self, s: float) -> np.ndarray:
        idx = int(np.clip(np.searchsorted(self.cum_lengths, s) - 1, 0,
                          len(self.centerline) - 2))
        d = self.centerline[idx + 1] - self.centerline[idx]
        return d / np.linalg.norm(d)

    def project(self, point) -> tuple[float, float]:
        """Project a point onto the centerline; returns (arc length, distance)."""
        p = np.asarray(point, dtype=float)[None, :]
        a, b = self.centerline[:-1], self.centerline[1:]
        d = b - a
        len2 = np.maximum((d * d).sum(axis=1), 1e-300)
        t = np.clip(((p - a) * d).sum(axis=1) / len2, 0.0, 1.0)
        closest = a + t[:, None] * d
        dist = np.linalg.norm(p - closest, axis=1)
        k = int(np.argmin(dist))
        s = self.cum_lengths[k] + t[k] * math.sqrt(len2[k])
        return float(s), float(dist[k])

    def point_at(self, s: float) -> np.ndarray:
        """Centerline point at arc length s (wraps on loops, clamps on open tracks)."""
        if self.is_loop:
            s = s % self.total_length
        s = min(max(s, 0.0), self.total_length)
        idx = int(np.clip(np.searchsorted(self.cum_lengths, s) - 1, 0,
                          len(self.centerline) - 2))
        seg = self.cum_lengths[idx + 1] - self.cum_lengths[idx]
        t = (s - self.cum_lengths[idx]) / seg
        return self.centerline[idx] + t * (self.centerline[idx + 1] - self.centerline[idx])


def boundary_polylines(track: Track) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear left (blue) and right (yellow) boundaries, closed on loops."""
    out = []
    for cones in (track.blue_cones, track.yellow_cones):
        pts = np.array([[c.x, c.y] for c in cones], dtype=float)
        if track.is_loop:
            pts = np.vstack([pts, pts[:1]])
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg < 1e-9):
            raise MalformedTrackError("consecutive cones coincide")
        out.append(pts)
    return out[0], out[1]


def points_inside(track: Track, points: np.ndarray) -> np.ndarray:
    """Corridor membership for an (M, 2) array of points; boundary counts inside."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    left, right = boundary_polylines(track)
    result = np.empty(len(points), dtype=bool)
    for lo in range(0, len(points), 4096):
        chunk = points[lo:lo + 4096]
        if track.is_loop:
            inside = _crossing_parity(chunk, left) != _crossing_parity(chunk, right)
        else:
            ring = np.vstack([left, right[::-1], left[:1]])
            inside = _crossing_parity(chunk, ring)
        near = np.zeros(len(chunk), dtype=bool)
        for poly in (left, right):
            near |= (_segment_distances(chunk, poly[:-1], poly[1:]).min(axis=1)
                     <= BOUNDARY_EPS)
        if not track.is_loop:
            # The corridor end caps count as boundary too.
            caps_a = np.array([left[0], left[-1]])
            caps_b = np.array([right[0], right[-1]])
            near |= _segment_distances(chunk, caps_a, caps_b).min(axis=1) <= BOUNDARY_EPS
        result[lo:lo + 4096] = inside | near
    return result


def point_inside(track: Track, point) -> bool:
    """True iff the point lies between the boundaries (boundary counts inside)."""
    return bool(points_inside(track, np.asarray(point, dtype=float)[None, :])[0])


def wheel_positions(state: VehicleState, params: VehicleParams) -> np.ndarray:
    """Global (4, 2) positions of the wheel contact points."""
    half_w = 0.5 * params.track_width
    body = np.array([
        [params.dist_cg_front, half_w], [params.dist_cg_front, -half_w],
        [-params.dist_cg_rear, half_w], [-params.dist_cg_rear, -half_w]])
    c, s = math.cos(state.yaw), math.sin(state.yaw)
    rot = np.array([[c, -s], [s, c]])
    return body @ rot.T + np.array([state.pos_x, state.pos_y])


def vehicle_off_track(track: Track, state: VehicleState, params: VehicleParams) -> bool:
    """True iff all four wheels are strictly outside the corridor (FSG fail rule)."""
    return not bool(points_inside(track, wheel_positions(state, params)).any())


def finish_crossings(track: Track, trajectory) -> int:
    """Count forward crossings of the finish line along a trajectory."""
    pts = np.asarray(trajectory, dtype=float)
    count = 0
    for p0, p1 in zip(pts[:-1], pts[1:]):
        count += segment_crosses_finish(track, p0, p1)
    return count


def segment_crosses_finish(track: Track, p0, p1) -> int:
    """1 if the motion p0->p1 crosses the finish line in the travel direction."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    f0, f1 = track.finish_line
    fd = f1 - f0
    # Which side of the finish line each trajectory endpoint is on.
    s0 = fd[0] * (p0[1] - f0[1]) - fd[1] * (p0[0] - f0[0])
    s1 = fd[0] * (p1[1] - f0[1]) - fd[1] * (p1[0] - f0[0])
    if (s0 >= 0.0) == (s1 >= 0.0):
        return 0
    # Crossing point must fall within the finish segment's extent.
    md = p1 - p0
    denom = fd[0] * md[1] - fd[1] * md[0]
    if denom == 0.0:
        return 0
    u = ((p0[0] - f0[0]) * md[1] - (p0[1] - f0[1]) * md[0]) / denom
    if not 0.0 <= u <= 1.0:
        return 0
    if float(md @ track.finish_forward) <= 0.0:
        return 0
    return 1


def lap_progress(track: Track, trajectory) -> float:
    """Monotonized centerline arc-length fraction reached by the trajectory."""
    pts = np.atleast_2d(np.asarray(trajectory, dtype=float))
    if len(pts) == 0:
        raise ValueError("trajectory must be non-empty")
    if finish_crossings(track, pts) >= track.crossings_to_complete:
        return 1.0
    best = 0.0
    for p in pts:
        s, _ = track.project(p)
        best = max(best, s / track.total_length)
    return min(best, 1.0)


def _finish_segment(centerline: np.ndarray, cum: np.ndarray, s: float,
                    left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Finish segment bridging the corridor, perpendicular to travel at arc s."""
    idx = int(np.clip(np.searchsorted(cum, s) - 1, 0, len(centerline) - 2))
    seg = centerline[idx + 1] - centerline[idx]
    tangent = seg / np.linalg.norm(seg)
    normal = np.array([-tangent[1], tangent[0]])
    t = (s - cum[idx]) / (cum[idx + 1] - cum[idx])
    center = centerline[idx] + t * (centerline[idx + 1] - centerline[idx])
    d_left = _segment_distances(center[None, :], left[:-1], left[1:]).min()
    d_right = _segment_distances(center[None, :], right[:-1], right[1:]).min()
    return np.array([center + normal * d_left, center - normal * d_right])


def invert_track(track: Track) -> Track:
    """Reverse travel direction and swap cone colours (the 'inverse' track)."""
    if not track.is_loop:
        raise MalformedTrackError("only closed-loop tracks can be inverted")
    blue = [Cone(c.x, c.y, ConeColour.BLUE) for c in reversed(track.yellow_cones)]
    yellow = [Cone(c.x, c.y, ConeColour.YELLOW) for c in reversed(track.blue_cones)]
    centerline = track.centerline[::-1].copy()
    cum = _cum_lengths(centerline)
    x0, y0 = centerline[0]
    d = centerline[1] - centerline[0]
    yaw = math.atan2(d[1], d[0])
    s_finish, _ = track.project(track.finish_line.mean(axis=0))
    left = np.vstack([np.array([[c.x, c.y] for c in blue]), [[blue[0].x, blue[0].y]]])
    right = np.vstack([np.array([[c.x, c.y] for c in yellow]),
                       [[yellow[0].x, yellow[0].y]]])
    finish = _finish_segment(centerline, cum, s_finish, left, right)
    return Track(blue_cones=blue, yellow_cones=yellow, centerline=centerline,
                 finish_line=finish, start_pose=(float(x0), float(y0), yaw),
                 is_loop=True, name=f"inverse-{track.name}" if track.name else "inverse")


def scale_track(track: Track, factor: float) -> Track:
    """Uniformly scale all coordinates; total_length scales by factor exactly."""
    if not factor > 0.0:
        raise ValueError("scale factor must be positive")
    scaled = Track(
        blue_cones=[Cone(c.x * factor, c.y * factor, c.colour) for c in track.blue_cones],
        yellow_cones=[Cone(c.x * factor, c.y * factor, c.colour)
                      for c in track.yellow_cones],
        centerline=track.centerline * factor,
        finish_line=track.finish_line * factor,
        start_pose=(track.start_pose[0] * factor, track.start_pose[1] * factor,
                    track.start_pose[2]),
        is_loop=track.is_loop,
        name=track.name)
    scaled.cum_lengths = track.cum_lengths * factor
    scaled.total_length = track.total_length * factor
    return scaled


class _PathBuilder:
    """Chain of straights and arcs with exact analytic arc-length lookup."""

    def __init__(self):
        self.segments = []  # (kind, start_x, start_y, heading, param, radius)
        self.x, self.y, self.heading = 0.0, 0.0, 0.0
        self.length = 0.0

    def straight(self, length: float):
        self.segments.append(("s", self.x, self.y, self.heading, length, 0.0))
        self.x += length * math.cos(self.heading)
        self.y += length * math.sin(self.heading)
        self.length += length
        return self

    def arc(self, angle: float, radius: float):
        """Arc of signed sweep angle (radians, positive = left) and given radius."""
        self.segments.append(("a", self.x, self.y, self.heading, angle, radius))
        side = 1.0 if angle > 0 else -1.0
        cx = self.x - side * radius * math.sin(self.heading)
        cy = self.y + side * radius * math.cos(self.heading)
        a0 = math.atan2(self.y - cy, self.x - cx)
        self.x = cx + radius * math.cos(a0 + angle)
        self.y = cy + radius * math.sin(a0 + angle)
        self.heading += angle
        self.length += abs(angle) * radius
        return self

    def pose_at(self, s: float) -> tuple[float, float, float]:
        """Exact (x, y, heading) at arc length s along the chain."""
        s = min(max(s, 0.0), self.length)
        for kind, x0, y0, h, param, radius in self.segments:
            seg_len = param if kind == "s" else abs(param) * radius
            if s <= seg_len + 1e-12:
                if kind == "s":
                    return (x0 + s * math.cos(h), y0 + s * math.sin(h), h)
                side = 1.0 if param > 0 else -1.0
                cx = x0 - side * radius * math.sin(h)
                cy = y0 + side * radius * math.cos(h)
                swept = side * s / radius
                a0 = math.atan2(y0 - cy, x0 - cx)
                return (cx + radius * math.cos(a0 + swept),
                        cy + radius * math.sin(a0 + swept), h + swept)
            s -= seg_len
        x0, y0, h = self.x, self.y, self.heading
        return (x0, y0, h)

    def sample(self, ds: float = 0.25) -> np.ndarray:
        n = max(2, int(math.ceil(self.length / ds)))
        return np.array([self.pose_at(self.length * i / n)[:2] for i in range(n + 1)])


def _track_from_path(path: _PathBuilder, spacing: float, width: float,
                     loop: bool, name: str) -> Track:
    if not spacing > 0.0 or not width > 0.0:
        raise MalformedTrackError("cone spacing and track width must be positive")
    centerline = path.sample()
    if loop:
        centerline[-1] = centerline[0]
    if loop:
        stations = np.arange(0.0, path.length - 0.5 * spacing, spacing)
    else:
        stations = np.arange(0.0, path.length + 1e-9, spacing)
        if path.length - stations[-1] > 1e-6:
            stations = np.append(stations, path.length)
    blue, yellow = [], []
    for s in stations:
        x, y, h = path.pose_at(float(s))
        nx, ny = -math.sin(h), math.cos(h)
        blue.append(Cone(x + 0.5 * width * nx, y + 0.5 * width * ny, ConeColour.BLUE))
        yellow.append(Cone(x - 0.5 * width * nx, y - 0.5 * width * ny,
                           ConeColour.YELLOW))
    cum = _cum_lengths(centerline)
    left = np.array([[c.x, c.y] for c in blue])
    right = np.array([[c.x, c.y] for c in yellow])
    if loop:
        left = np.vstack([left, left[:1]])
        right = np.vstack([right, right[:1]])
    s_finish = 1.0 if loop else float(cum[-1])
    finish = _finish_segment(centerline, cum, s_finish, left, right)
    x0, y0, h0 = path.pose_at(0.0)
    return Track(blue_cones=blue, yellow_cones=yellow, centerline=centerline,
                 finish_line=finish, start_pose=(x0, y0, h0), is_loop=loop, name=name)


def generate_straight(length: float = 12.0, spacing: float = 3.0,
                      width: float = 3.0) -> Track:
    if not length > 0.0:
        raise MalformedTrackError("length must be positive")
    path = _PathBuilder().straight(length)
    return _track_from_path(path, spacing, width, loop=False, name="straight")


def generate_arc(angle_deg: float, radius: float, spacing: float = 3.0,
                 width: float = 3.0) -> Track:
    """Arc track; positive angle turns left, negative right."""
    if angle_deg == 0.0 or not radius > 0.0:
        raise MalformedTrackError("need a nonzero angle and positive radius")
    path = _PathBuilder().arc(math.radians(angle_deg), radius)
    return _track_from_path(path, spacing, width, loop=False, name="arc")


def generate_oval(straight_length: float = 20.0, radius: float = 8.0,
                  spacing: float = 3.0, width: float = 3.0) -> Track:
    """Small closed oval for desk-scale training (default ~90 m)."""
    if not straight_length > 0.0 or not radius > 0.0:
        raise MalformedTrackError("need positive straight length and radius")
    path = (_PathBuilder().straight(straight_length).arc(math.pi, radius)
            .straight(straight_length).arc(math.pi, radius))
    return _track_from_path(path, spacing, width, loop=True, name="oval")


# Feature chain of the ~400 m closed training loop: start straight, right-hand
# corner, loose right, left 90, tight right, chicane, two closing corners with
# a kink on the return straight. Straight lengths solve loop closure exactly.
_FSG_LIKE_FEATURES = [
    ("s", 45.0), ("a", -90.0, 9.0), ("s", 10.0), ("a", -60.0, 12.0),
    ("s", 6.0), ("a", 90.0, 11.0), ("s", 6.0), ("a", -130.0, 6.0),
    ("s", 45.0), ("a", 50.0, 12.0), ("a", -50.0, 12.0),
    ("s", 65.78018330123876), ("a", -80.0, 9.0), ("s", 24.058922571136467),
    ("a", -90.0, 9.0), ("s", 8.0), ("a", 40.0, 12.0), ("a", -40.0, 12.0),
    ("s", 68.16237941322112),
]


def generate_fsg_like(spacing: float = 3.0, width: float = 3.0) -> Track:
    """Closed ~400 m loop with the trackdrive feature sequence."""
    path = _PathBuilder()
    for kind, *args in _FSG_LIKE_FEATURES:
        if kind == "s":
            path.straight(args[0])
        else:
            path.arc(math.radians(args[0]), args[1])
    return _track_from_path(path, spacing, width, loop=True, name="fsg-like")


def generate_primitive_track(kind: str, **params) -> Track:
    """Dispatch on track kind: straight | arc | oval | fsg-like."""
    generators = {
        "straight": generate_straight,
        "arc": generate_arc,
        "oval": generate_oval,
        "fsg-like": generate_fsg_like,
        "fsg_like": generate_fsg_like,
    }
    if kind not in generators:
        raise MalformedTrackError(f"unknown track kind {kind!r}")
    return generators[kind](**params)


def fsd_feature_tracks(scale: float = 1.0) -> dict[str, Track]:
    """The four full-scale feature tracks (straight, left 90, tight and loose right)."""
    tracks = {
        "straight": generate_straight(length=12.0),
        "left90": generate_arc(angle_deg=90.0, radius=11.0),
        "tight_right": generate_arc(angle_deg=-130.0, radius=6.0),
        "loose_right": generate_arc(angle_deg=-60.0, radius=12.0),
    }
    if scale != 1.0:
        tracks = {k: scale_track(t, scale) for k, t in tracks.items()}
    return tracks


def save_track(track: Track, path) -> None:
    """Write the plain-text cone table (start/finish header, blue then yellow)."""
    lines = []
    x, y, yaw = (float(v) for v in track.start_pose)
    lines.append(f"start,{x!r},{y!r},{yaw!r}")
    (x1, y1), (x2, y2) = track.finish_line
    lines.append(f"finish,{float(x1)!r},{float(y1)!r},{float(x2)!r},{float(y2)!r}")
    for cone in track.blue_cones + track.yellow_cones:
        lines.append(f"cone,{float(cone.x)!r},{float(cone.y)!r},{cone.colour.value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _resample_polyline(points: np.ndarray, fractions: np.ndarray) -> np.ndarray:
    cum = _cum_lengths(points)
    s = fractions * cum[-1]
    x = np.interp(s, cum, points[:, 0])
    y = np.interp(s, cum, points[:, 1])
    return np.column_stack([x, y])


def load_track(path) -> Track:
    """Read a track file; centerline is rebuilt as the boundary midline."""
    blue, yellow = [], []
    start = None
    finish = None
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if parts[0] == "cone" and len(parts) == 4:
            colour = ConeColour(parts[3].strip())
            blue_or_yellow = blue if colour is ConeColour.BLUE else yellow
            blue_or_yellow.append(Cone(float(parts[1]), float(parts[2]), colour))
        elif parts[0] == "start" and len(parts) == 4:
            start = (float(parts[1]), float(parts[2]), float(parts[3]))
        elif parts[0] == "finish" and len(parts) == 5:
            finish = np.array([[float(parts[1]), float(parts[2])],
                               [float(parts[3]), float(parts[4])]])
        else:
            raise MalformedTrackError(f"unrecognized track file line: {raw!r}")
    if start is None or finish is None or len(blue) < 2 or len(yellow) < 2:
        raise MalformedTrackError("track file needs start, finish and 2+ cones per side")

    left = np.array([[c.x, c.y] for c in blue])
    right = np.array([[c.x, c.y] for c in yellow])
    spacing = np.median(np.linalg.norm(np.diff(left, axis=0), axis=1))
    is_loop = (np.linalg.norm(left[0] - left[-1]) < 2.0 * spacing
               and np.linalg.norm(right[0] - right[-1]) < 2.0 * spacing)
    if is_loop:
        left = np.vstack([left, left[:1]])
        right = np.vstack([right, right[:1]])
    approx_len = _cum_lengths(left)[-1]
    n = max(32, int(math.ceil(approx_len / 0.5)))
    fractions = np.linspace(0.0, 1.0, n + 1)
    mid = 0.5 * (_resample_polyline(left, fractions)
                 + _resample_polyline(right, fractions))
    if is_loop:
        mid[-1] = mid[0]
    return Track(blue_cones=blue, yellow_cones=yellow, centerline=mid,
                 finish_line=finish, start_pose=start, is_loop=is_loop,
                 name=Path(path).stem)
