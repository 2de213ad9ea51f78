"""Sheet state extraction: height captures -> regions -> per-sector Gaussians.

A capture is a point cloud of (x, y, h) samples, h being height above the
mold surface. Points above a height floor are grouped into uncompacted
regions, each region is fitted with an ellipse, and every angular sector of
the sheet is summarized by two 3-D Gaussians: one over region centroids and
mean height, one over the fitted (major, minor, orientation) triples.

Sectors are numbered 1..k counter-clockwise, sector 1 starting at the +x
axis; a wedge owns its lower angular boundary.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import fold_axial, point_in_polygon, polygon_area, polygon_is_simple

H_MIN_DEFAULT = 0.5      # mm, height floor separating compacted from uncompacted
LINK_RADIUS_DEFAULT = 12.0  # mm, single-linkage radius for region growing

_SENTINEL_TOL = 1e-12


@dataclass(frozen=True)
class SheetGeometry:
    """Sheet frame: center, bounding polygon (mm) and sector count."""

    center: np.ndarray
    polygon: np.ndarray
    sector_count: int = 8

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "polygon", np.asarray(self.polygon, dtype=float))
        if self.sector_count < 2:
            raise ValueError("sector_count must be at least 2")
        if len(self.polygon) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        if not polygon_is_simple(self.polygon):
            raise ValueError("polygon must be simple")
        if not point_in_polygon(self.center, self.polygon):
            raise ValueError("polygon must contain the sheet center")

    @property
    def area(self) -> float:
        return polygon_area(self.polygon)

    def to_json(self) -> dict:
        return {"center": [float(v) for v in self.center],
                "polygon": [[float(x), float(y)] for x, y in self.polygon],
                "sector_count": int(self.sector_count)}

    @classmethod
    def from_json(cls, obj: dict) -> "SheetGeometry":
        return cls(center=np.array(obj["center"], dtype=float),
                   polygon=np.array(obj["polygon"], dtype=float),
                   sector_count=int(obj["sector_count"]))


@dataclass(frozen=True)
class CaptureFrame:
    """One synthetic point-cloud capture; heights are clamped nonnegative upstream."""

    points: np.ndarray  # (N, 3) columns x, y, h in mm
    t: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
            raise ValueError("points must be a non-empty (N, 3) array")
        if np.any(pts[:, 2] < 0):
            raise ValueError("heights must be nonnegative")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class RegionEllipse:
    """Ellipse fitted to one uncompacted region (2-sigma axes convention)."""

    centroid: np.ndarray
    a: float            # major semi-axis, mm
    b: float            # minor semi-axis, mm
    theta: float        # orientation of the major axis, [0, pi)
    mean_height: float  # mm

    def __post_init__(self):
        object.__setattr__(self, "centroid", np.asarray(self.centroid, dtype=float))
        if self.b > self.a + 1e-12:
            raise ValueError("major semi-axis must dominate")
        if not (0.0 <= self.theta < np.pi):
            raise ValueError("theta must lie in [0, pi)")


@dataclass
class SectorGaussians:
    """Per-sector summary: G1 over (x, y, h) and G2 over (a, b, theta)."""

    sector: int
    mu1: np.ndarray      # (3,) centroid x, y and mean height
    sigma1: np.ndarray   # (3, 3) symmetric PSD
    mu2: np.ndarray      # (3,) major, minor, orientation
    sigma2: np.ndarray   # (3, 3) symmetric PSD
    sample_count: int

    @classmethod
    def sentinel(cls, sector: int) -> "SectorGaussians":
        """The fully-compacted marker: zero means, zero covariances, no samples."""
        return cls(sector=sector, mu1=np.zeros(3), sigma1=np.zeros((3, 3)),
                   mu2=np.zeros(3), sigma2=np.zeros((3, 3)), sample_count=0)

    @property
    def is_sentinel(self) -> bool:
        return self.sample_count == 0

    def copy(self) -> "SectorGaussians":
        return SectorGaussians(self.sector, self.mu1.copy(), self.sigma1.copy(),
                               self.mu2.copy(), self.sigma2.copy(), self.sample_count)

    def to_json(self) -> dict:
        return {"sector": self.sector,
                "mu1": [float(v) for v in self.mu1],
                "sigma1": [[float(v) for v in row] for row in self.sigma1],
                "mu2": [float(v) for v in self.mu2],
                "sigma2": [[float(v) for v in row] for row in self.sigma2],
                "n": self.sample_count}

    @classmethod
    def from_json(cls, obj: dict) -> "SectorGaussians":
        return cls(sector=int(obj["sector"]),
                   mu1=np.array(obj["mu1"], dtype=float),
                   sigma1=np.array(obj["sigma1"], dtype=float),
                   mu2=np.array(obj["mu2"], dtype=float),
                   sigma2=np.array(obj["sigma2"], dtype=float),
                   sample_count=int(obj["n"]))


@dataclass
class SheetState:
    geometry: SheetGeometry
    sectors: list[SectorGaussians]
    t: int = 0

    def __post_init__(self):
        ids = [s.sector for s in self.sectors]
        if ids != list(range(1, self.geometry.sector_count + 1)):
            raise ValueError("need exactly one SectorGaussians per sector id, in order")

    def sector(self, i: int) -> SectorGaussians:
        return self.sectors[i - 1]

    @property
    def all_sentinel(self) -> bool:
        return all(s.is_sentinel for s in self.sectors)

    def copy(self) -> "SheetState":
        return SheetState(self.geometry, [s.copy() for s in self.sectors], self.t)

    def to_json(self) -> dict:
        return {"geometry": self.geometry.to_json(),
                "t": int(self.t),
                "sectors": [s.to_json() for s in self.sectors]}

    @classmethod
    def from_json(cls, obj: dict) -> "SheetState":
        return cls(geometry=SheetGeometry.from_json(obj["geometry"]),
                   sectors=[SectorGaussians.from_json(s) for s in obj["sectors"]],
                   t=int(obj["t"]))


def assign_sector(point, geom: SheetGeometry) -> int:
    """Angular wedge owning the point; the exact center falls in sector 1."""
    p = np.asarray(point, dtype=float) - geom.center
    if p[0] == 0.0 and p[1] == 0.0:
        return 1
    ang = float(np.arctan2(p[1], p[0]))
    if ang < 0.0:
        ang += 2.0 * np.pi
    width = 2.0 * np.pi / geom.sector_count
    i = int(ang // width) + 1
    return min(i, geom.sector_count)  # guards ang == 2*pi fp edge


def filter_uncompacted(frame: CaptureFrame, h_min: float = H_MIN_DEFAULT) -> np.ndarray:
    """Points strictly above the height floor, original order preserved."""
    if h_min <= 0:
        raise ValueError("h_min must be positive")
    return frame.points[frame.points[:, 2] > h_min]


def segment_regions(points: np.ndarray, link_radius: float = LINK_RADIUS_DEFAULT) -> list[np.ndarray]:
    """Single-linkage components under the xy link radius.

    Two points share a region iff a chain of points with pairwise xy distance
    <= link_radius connects them. Components are ordered by (min x, min y);
    points inside a component keep their input order.
    """
    if link_radius <= 0:
        raise ValueError("link_radius must be positive")
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        return []
    tree = cKDTree(pts[:, :2])
    parent = np.arange(len(pts))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in tree.query_pairs(r=link_radius):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[rj] = ri

    groups: dict[int, list[int]] = {}
    for idx in range(len(pts)):
        groups.setdefault(find(idx), []).append(idx)
    comps = [pts[np.array(ix)] for ix in groups.values()]
    comps.sort(key=lambda g: (float(g[:, 0].min()), float(g[:, 1].min())))
    return comps


def fit_ellipse(group: np.ndarray) -> RegionEllipse:
    """Moment-based ellipse: axes are twice the xy covariance's root eigenvalues.

    A single-point group degenerates to a = b = 0, theta = 0. Isotropic
    spreads break the orientation tie toward theta = 0.
    """
    g = np.asarray(group, dtype=float)
    if len(g) == 0:
        raise ValueError("cannot fit an empty group")
    centroid = g[:, :2].mean(axis=0)
    mean_height = float(g[:, 2].mean())
    if len(g) == 1:
        return RegionEllipse(centroid=centroid, a=0.0, b=0.0, theta=0.0,
                             mean_height=mean_height)
    xy = g[:, :2] - centroid
    cov = xy.T @ xy / len(g)
    evals, evecs = np.linalg.eigh(cov)
    lo, hi = float(max(evals[0], 0.0)), float(max(evals[1], 0.0))
    a, b = 2.0 * np.sqrt(hi), 2.0 * np.sqrt(lo)
    if hi - lo <= 1e-12 * max(1.0, hi):
        theta = 0.0
    else:
        v = evecs[:, 1]
        theta = fold_axial(float(np.arctan2(v[1], v[0])))
    return RegionEllipse(centroid=centroid, a=float(a), b=float(b), theta=theta,
                         mean_height=mean_height)


def extract_regions(frame: CaptureFrame, h_min: float = H_MIN_DEFAULT,
                    link_radius: float = LINK_RADIUS_DEFAULT):
    """Filter, segment and fit in one pass; returns (groups, ellipses)."""
    kept = filter_uncompacted(frame, h_min)
    groups = segment_regions(kept, link_radius)
    return groups, [fit_ellipse(g) for g in groups]


def _weighted_moments(samples: np.ndarray, weights: np.ndarray):
    w = weights / weights.sum()
    mu = w @ samples
    centered = samples - mu
    cov = (centered * w[:, None]).T @ centered
    return mu, _symmetrize(cov)


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return (m + m.T) / 2.0


def build_state(frame: CaptureFrame, geom: SheetGeometry,
                h_min: float = H_MIN_DEFAULT,
                link_radius: float = LINK_RADIUS_DEFAULT) -> SheetState:
    """Derive the per-sector Gaussian summary for one capture.

    Regions belong to the sector containing their centroid. G1 is fitted over
    per-region (centroid, mean height) samples weighted by region point
    count; G2 over the per-region (a, b, theta) triples. A sector with one
    region takes its point-level (x, y, h) moments for sigma1 and a zero
    sigma2; a sector with none is the compacted sentinel.
    """
    groups, ellipses = extract_regions(frame, h_min, link_radius)
    per_sector: dict[int, list[int]] = {}
    for idx, ell in enumerate(ellipses):
        per_sector.setdefault(assign_sector(ell.centroid, geom), []).append(idx)

    sectors = []
    for i in range(1, geom.sector_count + 1):
        idxs = per_sector.get(i)
        if not idxs:
            sectors.append(SectorGaussians.sentinel(i))
            continue
        ells = [ellipses[j] for j in idxs]
        counts = np.array([len(groups[j]) for j in idxs], dtype=float)
        g1_samples = np.array([[e.centroid[0], e.centroid[1], e.mean_height]
                               for e in ells])
        g2_samples = np.array([[e.a, e.b, e.theta] for e in ells])
        if len(idxs) == 1:
            pts = groups[idxs[0]]
            mu1 = g1_samples[0]
            centered = pts - pts.mean(axis=0)
            sigma1 = _symmetrize(centered.T @ centered / len(pts))
            mu2 = g2_samples[0]
            sigma2 = np.zeros((3, 3))
        else:
            mu1, sigma1 = _weighted_moments(g1_samples, counts)
            mu2 = g2_samples.mean(axis=0)
            centered = g2_samples - mu2
            sigma2 = _symmetrize(centered.T @ centered / len(idxs))
        sectors.append(SectorGaussians(sector=i, mu1=mu1, sigma1=sigma1,
                                       mu2=mu2, sigma2=sigma2,
                                       sample_count=len(idxs)))
    return SheetState(geometry=geom, sectors=sectors, t=frame.t)


def average_states(states: list[SheetState]) -> SheetState:
    """Sector-wise mean of several derived states (historical initialization).

    Each sector averages means and covariances over the states where it is
    non-sentinel; a sector compacted in every input stays sentinel. The
    result carries the first state's geometry and time index 0.
    """
    if not states:
        raise ValueError("need at least one state to average")
    geom = states[0].geometry
    k = geom.sector_count
    if any(s.geometry.sector_count != k for s in states):
        raise ValueError("states mix sector counts")
    sectors = []
    for i in range(1, k + 1):
        live = [s.sector(i) for s in states if not s.sector(i).is_sentinel]
        if not live:
            sectors.append(SectorGaussians.sentinel(i))
            continue
        sectors.append(SectorGaussians(
            sector=i,
            mu1=np.mean([s.mu1 for s in live], axis=0),
            sigma1=np.mean([s.sigma1 for s in live], axis=0),
            mu2=np.mean([s.mu2 for s in live], axis=0),
            sigma2=np.mean([s.sigma2 for s in live], axis=0),
            sample_count=max(1, round(np.mean([s.sample_count for s in live])))))
    return SheetState(geometry=geom, sectors=sectors, t=0)


def write_capture_frames(path, frames: list[CaptureFrame]) -> None:
    """JSON-lines, one record per capture: {"t": ..., "points": [[x, y, h], ...]}."""
    with open(path, "w") as fh:
        for fr in frames:
            rec = {"t": int(fr.t),
                   "points": [[float(x), float(y), float(h)] for x, y, h in fr.points]}
            fh.write(json.dumps(rec) + "\n")


def read_capture_frames(path) -> list[CaptureFrame]:
    frames = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                frames.append(CaptureFrame(points=np.array(rec["points"], dtype=float),
                                           t=int(rec["t"])))
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad capture record: {exc}") from exc
    return frames
