"""Stochastic layup-process simulator standing in for the robot cell.

The ground truth is a list of uncompacted regions (bubbles), each an
ellipse with a peak height. Roller passes squeeze every region they sweep:
the height multiplier follows a per-pass reduction schedule that starts
strong and decays with the cumulative pass count, scaled by how well the
pass aligns with the region's major axis. Passes also push regions toward
the sheet edge and relax their orientation toward edge-orthogonal, the two
drifts observed on real sheets late in a layup. All randomness flows from
one 64-bit seed, so experiments replay bitwise.

Sheets carry characteristic trouble zones (where bubbles tend to form run
after run); per-seed jitter moves, resizes and reshapes the regions, which
is exactly the systematic-plus-noise structure the effect learner feeds on.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .effectiveness import LogFormatError
from .geometry import (PathGeometry, axial_difference, clamp_into_polygon,
                       ellipse_hits_swept_rect, fold_axial, nearest_edge_angle,
                       point_in_polygon, ray_exit_point, unit_vector,
                       ROLLER_HALF_WIDTH_DEFAULT)
from .plan import Action, DrapingPlan, initial_plan_constraints, validate
from .sheet_state import (CaptureFrame, SheetGeometry, SheetState, build_state,
                          extract_regions, H_MIN_DEFAULT, LINK_RADIUS_DEFAULT)

GRID_PITCH_DEFAULT = 4.0  # mm between synthetic capture samples


class SimulationError(RuntimeError):
    pass


class PlanInvalidError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


def _default_schedule() -> tuple[float, ...]:
    # strong first pass, decaying linearly to the long-run floor by pass 8
    return tuple(0.8 - 0.5 * j / 7.0 for j in range(8))


@dataclass(frozen=True)
class GroundTruthParams:
    """Knobs of the generative process; all acceptance fixtures pin these."""

    reduction_schedule: tuple[float, ...] = field(default_factory=_default_schedule)
    alignment_floor: float = 0.25
    edge_drift: float = 3.0          # mm of outward push per sweeping pass
    orientation_rate: float = 0.15   # rad of relaxation toward edge-orthogonal per pass
    noise_height: float = 0.06       # mm, per affected region per pass
    noise_xy: float = 1.5            # mm
    noise_size: float = 0.4          # mm on each semi-axis
    noise_theta: float = 0.04        # rad
    sensor_noise: float = 0.05       # mm on every grid sample
    grid_pitch: float = GRID_PITCH_DEFAULT
    roller_half_width: float = ROLLER_HALF_WIDTH_DEFAULT
    extinction_height: float = 0.2   # regions below this peak vanish
    peel_pulse: float = 0.05         # fractional height pull-up when the film peels
    region_count: int = 6
    region_major: tuple[float, float] = (18.0, 38.0)     # mm, semi-axis range
    region_minor_frac: tuple[float, float] = (0.4, 0.9)  # of the major semi-axis
    region_height: tuple[float, float] = (2.0, 5.0)      # mm peak range
    zone_jitter: float = 7.0         # mm scatter of regions about their zone
    theta_jitter: float = 0.25       # rad scatter about the radial orientation
    correction_threshold: float = 0.7  # mm sector mean height that triggers fixing
    correction_max_cycles: int = 10
    h_min: float = H_MIN_DEFAULT
    link_radius: float = LINK_RADIUS_DEFAULT
    seed: int = 0

    def __post_init__(self):
        if not all(0.0 < r < 1.0 for r in self.reduction_schedule):
            raise ValueError("reduction factors must lie in (0, 1)")
        if self.edge_drift < 0 or self.orientation_rate < 0:
            raise ValueError("drift rates must be nonnegative")

    def reduction(self, j: int) -> float:
        """Reduction factor for the j-th cumulative pass (j >= 1)."""
        sched = self.reduction_schedule
        return sched[min(j, len(sched)) - 1]

    def to_json(self) -> dict:
        obj = asdict(self)
        obj["version"] = 1
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruthParams":
        obj = dict(obj)
        if obj.pop("version", 1) != 1:
            raise ValueError("unsupported params version")
        for key in ("reduction_schedule", "region_major", "region_minor_frac", "region_height"):
            if key in obj:
                obj[key] = tuple(obj[key])
        return cls(**obj)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "GroundTruthParams":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class SheetSpec:
    """A sheet family: outline plus the characteristic trouble-zone directions."""

    name: str
    geometry: SheetGeometry
    zones: tuple[tuple[float, float], ...]  # (angle rad, radius fraction) pairs


def _rect(width: float, height: float) -> np.ndarray:
    w, h = width / 2.0, height / 2.0
    return np.array([[w, h], [-w, h], [-w, -h], [w, -h]])


_BUILTIN_SHEETS = {
    "sheet1": SheetSpec(
        name="sheet1",
        geometry=SheetGeometry(center=np.zeros(2), polygon=_rect(300.0, 300.0)),
        zones=((np.deg2rad(52.0), 0.50), (np.deg2rad(142.0), 0.50),
               (np.deg2rad(232.0), 0.52), (np.deg2rad(322.0), 0.48)),
    ),
    "sheet2": SheetSpec(
        name="sheet2",
        geometry=SheetGeometry(center=np.zeros(2), polygon=_rect(400.0, 250.0)),
        zones=((np.deg2rad(52.0), 0.52), (np.deg2rad(187.0), 0.55),
               (np.deg2rad(277.0), 0.50)),
    ),
}


def builtin_sheet(name: str) -> SheetSpec:
    try:
        return _BUILTIN_SHEETS[name]
    except KeyError:
        raise ValueError(f"unknown sheet spec {name!r}; "
                         f"built-ins: {sorted(_BUILTIN_SHEETS)}") from None


@dataclass
class Region:
    centroid: np.ndarray
    a: float
    b: float
    theta: float
    peak: float


@dataclass
class SimState:
    spec: SheetSpec
    params: GroundTruthParams
    regions: list[Region]
    rng: np.random.Generator
    j: int = 0              # cumulative roller passes
    peeled: bool = False
    capture_index: int = 0

    @property
    def geometry(self) -> SheetGeometry:
        return self.spec.geometry


def init_sheet(spec: SheetSpec, params: GroundTruthParams, seed: int | None = None) -> SimState:
    """Seeded initial ground truth: regions scattered about the sheet's zones."""
    rng = np.random.default_rng(params.seed if seed is None else seed)
    geom = spec.geometry
    regions = []
    # every zone misbehaves every run (that recurrence is what makes the
    # process learnable); extra regions land on random zones
    zone_picks = [spec.zones[i % len(spec.zones)] for i in range(min(params.region_count,
                                                                     len(spec.zones)))]
    for _ in range(params.region_count - len(zone_picks)):
        zone_picks.append(spec.zones[int(rng.integers(len(spec.zones)))])
    for angle, frac in zone_picks:
        direction = unit_vector(angle)
        reach = np.linalg.norm(ray_exit_point(geom.center, direction, geom.polygon)
                               - geom.center)
        centroid = geom.center + direction * frac * reach + rng.normal(0.0, params.zone_jitter, 2)
        centroid = clamp_into_polygon(centroid, geom.polygon, margin=25.0)
        a = float(rng.uniform(*params.region_major))
        b = a * float(rng.uniform(*params.region_minor_frac))
        # bubbles elongate along the stretch direction, i.e. radially outward
        radial = float(np.arctan2(centroid[1] - geom.center[1],
                                  centroid[0] - geom.center[0]))
        theta = fold_axial(radial + float(rng.normal(0.0, params.theta_jitter)))
        peak = float(rng.uniform(*params.region_height))
        regions.append(Region(centroid=centroid, a=a, b=b, theta=theta, peak=peak))
    return SimState(spec=spec, params=params, regions=regions, rng=rng)


def path_geometry(index: int, geom: SheetGeometry,
                  half_width: float = ROLLER_HALF_WIDTH_DEFAULT,
                  path_count: int = 16) -> PathGeometry:
    """Radial pass number `index`, numbered clockwise from the top-right diagonal."""
    if not 1 <= index <= path_count:
        raise ValueError(f"path index {index} outside 1..{path_count}")
    angle = np.deg2rad(45.0) - (index - 1) * (2.0 * np.pi / path_count)
    direction = unit_vector(angle)
    return PathGeometry(start=geom.center.copy(),
                        end=ray_exit_point(geom.center, direction, geom.polygon),
                        half_width=half_width)


def _sweep(sim: SimState, pg: PathGeometry) -> None:
    p = sim.params
    sim.j += 1
    r = p.reduction(sim.j)
    poly = sim.geometry.polygon
    for region in sim.regions:
        if not ellipse_hits_swept_rect(region.centroid, region.a, region.b,
                                       region.theta, pg):
            continue
        alignment = abs(np.cos(pg.angle - region.theta))
        alignment = min(1.0, max(p.alignment_floor, alignment))
        region.peak *= (1.0 - r * alignment)
        region.centroid = clamp_into_polygon(
            region.centroid + p.edge_drift * pg.direction, poly, margin=10.0)
        target = fold_axial(nearest_edge_angle(region.centroid, poly) + np.pi / 2.0)
        swing = axial_difference(target, region.theta)
        region.theta = fold_axial(region.theta
                                  + float(np.clip(swing, -p.orientation_rate, p.orientation_rate)))
        if p.noise_height > 0:
            region.peak = max(0.0, region.peak + float(sim.rng.normal(0.0, p.noise_height)))
        if p.noise_xy > 0:
            region.centroid = clamp_into_polygon(
                region.centroid + sim.rng.normal(0.0, p.noise_xy, 2), poly, margin=10.0)
        if p.noise_size > 0:
            region.a = max(1.0, region.a + float(sim.rng.normal(0.0, p.noise_size)))
            region.b = float(np.clip(region.b + sim.rng.normal(0.0, p.noise_size),
                                     0.5, region.a))
        if p.noise_theta > 0:
            region.theta = fold_axial(region.theta + float(sim.rng.normal(0.0, p.noise_theta)))
    sim.regions = [reg for reg in sim.regions if reg.peak >= p.extinction_height]


def apply_action(sim: SimState, action: Action,
                 refinement_paths: list[PathGeometry] | None = None) -> SimState:
    """Execute one action against the ground truth, in place.

    Path and refinement actions sweep the roller (refinement needs its
    generated geometries); peel flips the film flag and pulls every height
    up by the peel pulse; capture and end have no physical effect.
    """
    if action.kind == "refinement":
        if not refinement_paths:
            raise SimulationError("refinement action executed without path geometries")
        for pg in refinement_paths:
            _sweep(sim, pg)
    elif refinement_paths is not None:
        raise SimulationError(f"{action.kind} action does not take path geometries")
    elif action.kind == "path":
        _sweep(sim, path_geometry(action.arg, sim.geometry,
                                  half_width=sim.params.roller_half_width))
    elif action.kind == "peel":
        sim.peeled = True
        for region in sim.regions:
            region.peak *= (1.0 + sim.params.peel_pulse)
    elif action.kind in ("capture", "end"):
        pass
    else:  # pragma: no cover - Action validates kinds
        raise SimulationError(f"unknown action {action.kind!r}")
    return sim


_GRID_CACHE: dict[tuple, np.ndarray] = {}


def _polygon_grid(geom: SheetGeometry, pitch: float) -> np.ndarray:
    key = (geom.polygon.tobytes(), float(pitch))
    grid = _GRID_CACHE.get(key)
    if grid is None:
        lo = geom.polygon.min(axis=0)
        hi = geom.polygon.max(axis=0)
        xs = np.arange(lo[0], hi[0] + pitch / 2.0, pitch)
        ys = np.arange(lo[1], hi[1] + pitch / 2.0, pitch)
        xx, yy = np.meshgrid(xs, ys)
        pts = np.column_stack([xx.ravel(), yy.ravel()])
        mask = np.array([point_in_polygon(p, geom.polygon) for p in pts])
        grid = pts[mask]
        _GRID_CACHE[key] = grid
    return grid


def render_capture(sim: SimState) -> CaptureFrame:
    """Synthetic height scan: superposed region bumps plus sensor noise."""
    p = sim.params
    grid = _polygon_grid(sim.geometry, p.grid_pitch)
    heights = np.zeros(len(grid))
    for region in sim.regions:
        sa = max(region.a / 2.0, 0.75)
        sb = max(region.b / 2.0, 0.75)
        ca, si = np.cos(region.theta), np.sin(region.theta)
        rel = grid - region.centroid
        u = rel[:, 0] * ca + rel[:, 1] * si
        v = -rel[:, 0] * si + rel[:, 1] * ca
        heights += region.peak * np.exp(-0.5 * ((u / sa) ** 2 + (v / sb) ** 2))
    if p.sensor_noise > 0:
        heights = heights + sim.rng.normal(0.0, p.sensor_noise, len(grid))
    heights = np.maximum(heights, 0.0)
    frame = CaptureFrame(points=np.column_stack([grid, heights]), t=sim.capture_index)
    sim.capture_index += 1
    return frame


def run_correction(sim: SimState) -> tuple[int, int, bool]:
    """Inspect-and-fix loop after the end action.

    Each cycle re-captures, stops once no sector's mean height exceeds the
    correction threshold, and otherwise sweeps one pass per offending region
    straight through its centroid along the major axis. Returns (cycles,
    paths, converged); converged is False when the cycle cap was hit.
    """
    if not sim.peeled:
        raise SimulationError("correction requires the backing film to be peeled")
    p = sim.params
    geom = sim.geometry
    cycles = 0
    paths = 0
    while cycles < p.correction_max_cycles:
        frame = render_capture(sim)
        state = build_state(frame, geom, p.h_min, p.link_radius)
        worst = max((s.mu1[2] for s in state.sectors if not s.is_sentinel), default=0.0)
        if worst <= p.correction_threshold:
            return cycles, paths, True
        _, ellipses = extract_regions(frame, p.h_min, p.link_radius)
        offenders = [e for e in ellipses if e.mean_height > p.correction_threshold]
        for ell in offenders:
            centroid = clamp_into_polygon(ell.centroid, geom.polygon, margin=5.0)
            u = unit_vector(ell.theta)
            tip = ray_exit_point(centroid, u, geom.polygon)
            tail = ray_exit_point(centroid, -u, geom.polygon)
            _sweep(sim, PathGeometry(start=tail, end=tip,
                                     half_width=p.roller_half_width))
        cycles += 1
        paths += len(offenders)
    return cycles, paths, False


@dataclass
class StepRecord:
    index: int
    action: Action
    state_before: SheetState | None
    state_after: SheetState | None
    capture_before: CaptureFrame | None = None
    capture_after: CaptureFrame | None = None


@dataclass
class ExperimentLog:
    plan_name: str
    sheet: str
    seed: int
    steps: list[StepRecord]
    correction_cycles: int
    correction_paths: int
    correction_converged: bool

    @property
    def in_plan_paths(self) -> int:
        total = 0
        for rec in self.steps:
            if rec.action.kind == "path":
                total += 1
            elif rec.action.kind == "refinement":
                total += rec.action.arg
        return total

    @property
    def total_paths(self) -> int:
        return self.in_plan_paths + self.correction_paths


def run_experiment(plan: DrapingPlan, sheet: SheetSpec, params: GroundTruthParams,
                   seed: int, path_generator=None, constraints=None,
                   keep_captures: bool = True) -> ExperimentLog:
    """Execute a validated plan against a fresh seeded ground truth.

    A capture is taken before the first action and after every action; the
    end action hands control to the correction controller after its capture,
    so the logged post-end state is the handover state the planner must
    price. The refinement action calls `path_generator(state, n, geometry)`
    with the latest derived state to obtain its n roller passes.
    """
    cs = constraints if constraints is not None else initial_plan_constraints()
    violations = validate(plan, cs)
    if violations:
        raise PlanInvalidError(violations)

    sim = init_sheet(sheet, params, seed)
    geom = sheet.geometry
    frame = render_capture(sim)
    state = build_state(frame, geom, params.h_min, params.link_radius)
    steps: list[StepRecord] = []
    cycles = paths = 0
    converged = True

    for idx, action in enumerate(plan.actions, start=1):
        refinement_paths = None
        if action.kind == "refinement":
            if path_generator is None:
                raise SimulationError(
                    f"step {idx}: plan holds a refinement action but no path generator was given")
            generated = path_generator(state, action.arg, geom)
            refinement_paths = [PathGeometry(start=pg.start, end=pg.end,
                                             half_width=params.roller_half_width)
                                for pg in generated]
        apply_action(sim, action, refinement_paths)
        frame_after = render_capture(sim)
        state_after = build_state(frame_after, geom, params.h_min, params.link_radius)
        steps.append(StepRecord(
            index=idx, action=action,
            state_before=state, state_after=state_after,
            capture_before=frame if keep_captures else None,
            capture_after=frame_after if keep_captures else None))
        if action.kind == "end":
            cycles, paths, converged = run_correction(sim)
        frame, state = frame_after, state_after

    return ExperimentLog(plan_name=plan.name, sheet=sheet.name, seed=int(seed),
                         steps=steps, correction_cycles=cycles,
                         correction_paths=paths, correction_converged=converged)


def _capture_to_json(frame: CaptureFrame | None):
    if frame is None:
        return None
    return {"t": int(frame.t),
            "points": [[float(x), float(y), float(h)] for x, y, h in frame.points]}


def _capture_from_json(obj):
    if obj is None:
        return None
    return CaptureFrame(points=np.array(obj["points"], dtype=float), t=int(obj["t"]))


def write_log(log: ExperimentLog, path) -> None:
    """JSON-lines: one record per step plus a trailing summary record."""
    with open(path, "w") as fh:
        for rec in log.steps:
            fh.write(json.dumps({
                "type": "step", "index": rec.index,
                "action": [rec.action.kind, rec.action.arg],
                "state_before": rec.state_before.to_json(),
                "state_after": rec.state_after.to_json(),
                "capture_before": _capture_to_json(rec.capture_before),
                "capture_after": _capture_to_json(rec.capture_after),
            }) + "\n")
        fh.write(json.dumps({
            "type": "summary", "version": 1,
            "plan": log.plan_name, "sheet": log.sheet, "seed": log.seed,
            "correction_cycles": log.correction_cycles,
            "correction_paths": log.correction_paths,
            "correction_converged": log.correction_converged,
            "in_plan_paths": log.in_plan_paths,
            "total_paths": log.total_paths,
        }) + "\n")


def read_log(path) -> ExperimentLog:
    steps = []
    summary = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogFormatError(f"{path}:{lineno}: {exc}") from exc
            if rec.get("type") == "step":
                kind, arg = rec["action"]
                steps.append(StepRecord(
                    index=int(rec["index"]),
                    action=Action(kind, arg if arg is None else int(arg)),
                    state_before=SheetState.from_json(rec["state_before"]),
                    state_after=SheetState.from_json(rec["state_after"]),
                    capture_before=_capture_from_json(rec.get("capture_before")),
                    capture_after=_capture_from_json(rec.get("capture_after"))))
            elif rec.get("type") == "summary":
                summary = rec
            else:
                raise LogFormatError(f"{path}:{lineno}: unknown record type")
    if summary is None:
        raise LogFormatError(f"{path}: missing summary record")
    return ExperimentLog(plan_name=summary["plan"], sheet=summary["sheet"],
                         seed=int(summary["seed"]), steps=steps,
                         correction_cycles=int(summary["correction_cycles"]),
                         correction_paths=int(summary["correction_paths"]),
                         correction_converged=bool(summary["correction_converged"]))
