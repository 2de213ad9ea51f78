"""Action-effect learning from before/after sheet states.

Every executed action is bracketed by two derived sheet states. Per sector
the change is summarized as a six-component delta (centroid x/y, mean
height, major, minor, and axially differenced orientation) plus
two diagonal sign matrices recording whether each covariance diagonal grew
(+1) or shrank/held (-1). Samples pool across experiments into buckets keyed
by (action kind, argument bucket, sector): path actions bucket per path
index because path geometry fixes which sectors a pass can touch, while
peel, capture, end and refinement each share a single bucket.

The learned table drives state propagation inside the plan search: bucket
mean deltas move the Gaussian means (optionally with sampled noise), and the
bucket's majority sign vote shrinks or grows the covariance diagonals.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import axial_difference, fold_axial
from .plan import Action
from .sheet_state import SectorGaussians, SheetState

COV_SHRINK = 0.9  # diagonal scale when the majority vote says uncertainty fell
COV_GROW = 1.1    # ... and when it says uncertainty rose

DELTA_FIELDS = ("d_x", "d_y", "d_h", "d_a", "d_b", "d_theta")


class LogFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DeltaVector:
    d_x: float
    d_y: float
    d_h: float
    d_a: float
    d_b: float
    d_theta: float  # axial difference, (-pi/2, pi/2]

    def as_array(self) -> np.ndarray:
        return np.array([self.d_x, self.d_y, self.d_h, self.d_a, self.d_b, self.d_theta])

    @classmethod
    def from_array(cls, arr) -> "DeltaVector":
        return cls(*(float(v) for v in arr))


@dataclass(frozen=True)
class SignMatrices:
    """3x3 diagonal sign matrices for the two covariance tracks."""

    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        for m in (self.u1, self.u2):
            if m.shape != (3, 3) or np.any(m[~np.eye(3, dtype=bool)] != 0.0):
                raise ValueError("sign matrices must be 3x3 diagonal")
            if not np.all(np.isin(np.diag(m), (-1.0, 1.0))):
                raise ValueError("diagonal entries must be +1 or -1")


def _step(x: np.ndarray) -> np.ndarray:
    # +1 strictly above zero, -1 at and below zero
    return np.where(x > 0.0, 1.0, -1.0)


def compute_delta(before: SectorGaussians, after: SectorGaussians) -> DeltaVector:
    """Componentwise mean change; orientation wrapped to the axial half-turn."""
    d1 = after.mu1 - before.mu1
    return DeltaVector(
        d_x=float(d1[0]), d_y=float(d1[1]), d_h=float(d1[2]),
        d_a=float(after.mu2[0] - before.mu2[0]),
        d_b=float(after.mu2[1] - before.mu2[1]),
        d_theta=axial_difference(after.mu2[2], before.mu2[2]),
    )


def compute_signs(before: SectorGaussians, after: SectorGaussians) -> SignMatrices:
    """Diagonal growth signs of both covariances; zero change counts as shrink."""
    return SignMatrices(
        u1=np.diag(_step(np.diag(after.sigma1) - np.diag(before.sigma1))),
        u2=np.diag(_step(np.diag(after.sigma2) - np.diag(before.sigma2))),
    )


@dataclass(frozen=True)
class TransitionSample:
    action: Action
    sector: int
    delta: DeltaVector
    signs: SignMatrices
    plan_name: str = ""
    step: int = 0


def extract_transitions(log) -> list[TransitionSample]:
    """One sample per (action, sector) pair of an experiment log.

    Steps missing either bracketing state are skipped; malformed records
    raise LogFormatError naming the step index.
    """
    samples = []
    for rec in log.steps:
        if rec.state_before is None or rec.state_after is None:
            continue
        before, after = rec.state_before, rec.state_after
        if len(before.sectors) != len(after.sectors):
            raise LogFormatError(f"step {rec.index}: sector counts disagree")
        for b, a in zip(before.sectors, after.sectors):
            if b.sector != a.sector:
                raise LogFormatError(f"step {rec.index}: sector ids disagree")
            samples.append(TransitionSample(
                action=rec.action, sector=b.sector,
                delta=compute_delta(b, a), signs=compute_signs(b, a),
                plan_name=log.plan_name, step=rec.index))
    return samples


def bucket_key(action: Action) -> tuple[str, int]:
    """Path actions bucket by index; every other kind shares one bucket."""
    return (action.kind, action.arg if action.kind == "path" else 0)


@dataclass
class _Bucket:
    deltas: list = field(default_factory=list)   # (6,) arrays
    u1: list = field(default_factory=list)       # (3,) diagonal arrays
    u2: list = field(default_factory=list)
    sources: list = field(default_factory=list)  # "plan:step" provenance strings
    _mean: np.ndarray | None = None
    _var: np.ndarray | None = None

    def add(self, sample: TransitionSample):
        self.deltas.append(sample.delta.as_array())
        self.u1.append(np.diag(sample.signs.u1).copy())
        self.u2.append(np.diag(sample.signs.u2).copy())
        self.sources.append(f"{sample.plan_name}:{sample.step}")
        self._mean = None
        self._var = None

    @property
    def count(self) -> int:
        return len(self.deltas)

    @property
    def mean(self) -> np.ndarray:
        if self._mean is None:
            self._mean = np.mean(self.deltas, axis=0)
        return self._mean

    @property
    def variance(self) -> np.ndarray:
        """Per-component sample variance; zero when only one sample exists."""
        if self._var is None:
            if self.count < 2:
                self._var = np.zeros(6)
            else:
                self._var = np.var(self.deltas, axis=0, ddof=1)
        return self._var

    def majority_signs(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-diagonal majority of the +-1 votes; ties land on -1."""
        return _step(np.sum(self.u1, axis=0)), _step(np.sum(self.u2, axis=0))


class EffectivenessModel:
    """Empirical per-(action bucket, sector) delta table with cached moments."""

    def __init__(self, sector_count: int):
        if sector_count < 2:
            raise ValueError("sector_count must be at least 2")
        self.sector_count = sector_count
        self.table: dict[tuple[str, int, int], _Bucket] = {}
        self.experiments = 0
        self.sheets: list[str] = []

    def add_sample(self, sample: TransitionSample):
        if not (1 <= sample.sector <= self.sector_count):
            raise ValueError(f"sector {sample.sector} out of range")
        kind, arg = bucket_key(sample.action)
        self.table.setdefault((kind, arg, sample.sector), _Bucket()).add(sample)

    def bucket(self, action: Action, sector: int) -> _Bucket | None:
        kind, arg = bucket_key(action)
        b = self.table.get((kind, arg, sector))
        return b if b is not None and b.count > 0 else None

    def covers(self, action: Action) -> bool:
        """True when at least one sector has data for this action's bucket."""
        return any(self.bucket(action, i) is not None
                   for i in range(1, self.sector_count + 1))

    def mean_delta(self, action: Action, sector: int) -> np.ndarray | None:
        b = self.bucket(action, sector)
        return None if b is None else b.mean

    @property
    def is_empty(self) -> bool:
        return not self.table

    def bucket_counts(self) -> dict[str, int]:
        """Sample counts keyed 'kind|arg|sector', for reporting."""
        return {f"{k}|{a}|{s}": b.count for (k, a, s), b in sorted(self.table.items())}

    def to_json(self) -> dict:
        buckets = {}
        for (kind, arg, sector), b in sorted(self.table.items()):
            buckets[f"{kind}|{arg}|{sector}"] = {
                "deltas": [[float(v) for v in d] for d in b.deltas],
                "u1": [[float(v) for v in d] for d in b.u1],
                "u2": [[float(v) for v in d] for d in b.u2],
                "sources": list(b.sources),
            }
        return {"version": 1, "sector_count": self.sector_count,
                "experiments": self.experiments, "sheets": self.sheets,
                "buckets": buckets}

    @classmethod
    def from_json(cls, obj: dict) -> "EffectivenessModel":
        if obj.get("version") != 1:
            raise ValueError(f"unsupported model version {obj.get('version')!r}")
        model = cls(sector_count=int(obj["sector_count"]))
        model.experiments = int(obj.get("experiments", 0))
        model.sheets = list(obj.get("sheets", []))
        for key, raw in obj["buckets"].items():
            kind, arg, sector = key.split("|")
            bucket = _Bucket()
            bucket.deltas = [np.array(d, dtype=float) for d in raw["deltas"]]
            bucket.u1 = [np.array(d, dtype=float) for d in raw["u1"]]
            bucket.u2 = [np.array(d, dtype=float) for d in raw["u2"]]
            bucket.sources = list(raw["sources"])
            model.table[(kind, int(arg), int(sector))] = bucket
        return model

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "EffectivenessModel":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def aggregate(logs) -> EffectivenessModel:
    """Pool the per-sector transition samples of many experiment logs.

    Logs must agree on sector count; aggregation is a pure fold, so log
    order never changes the resulting table.
    """
    logs = list(logs)
    if not logs:
        return EffectivenessModel(sector_count=2)
    ks = {len(log.steps[0].state_before.sectors) if log.steps else None for log in logs}
    ks.discard(None)
    if len(ks) > 1:
        raise ValueError(f"logs mix sector counts {sorted(ks)}")
    model = EffectivenessModel(sector_count=ks.pop() if ks else 2)
    for log in logs:
        for sample in extract_transitions(log):
            model.add_sample(sample)
        model.experiments += 1
        if log.sheet not in model.sheets:
            model.sheets.append(log.sheet)
    model.sheets.sort()
    return model


def propagate(state: SheetState, action: Action, model: EffectivenessModel,
              mode: str = "expectation", seed: int | None = None) -> SheetState:
    """Advance the internal state by the learned effect of one action.

    Non-sentinel sectors move by the bucket mean delta ("expectation") or by
    mean plus zero-mean Gaussian noise with the bucket's sample variance
    ("sampled", reproducible under the seed). Heights and axes clamp at
    zero; orientations fold into [0, pi); a sector whose height and both
    axes hit zero collapses to the sentinel. Covariance diagonals scale by
    0.9/1.1 according to the majority sign vote (applied as a symmetric
    congruence, preserving positive semidefiniteness). Sectors or actions
    without data are left untouched.
    """
    if mode not in ("expectation", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed) if mode == "sampled" else None

    new_sectors = []
    for sg in state.sectors:
        if sg.is_sentinel:
            new_sectors.append(SectorGaussians.sentinel(sg.sector))
            continue
        bucket = model.bucket(action, sg.sector)
        if bucket is None:
            new_sectors.append(sg.copy())
            continue
        delta = bucket.mean.copy()
        if rng is not None:
            delta = delta + rng.standard_normal(6) * np.sqrt(bucket.variance)
        mu1 = sg.mu1 + delta[:3]
        mu1[2] = max(0.0, mu1[2])
        mu2 = sg.mu2 + delta[3:]
        mu2[0] = max(0.0, mu2[0])
        mu2[1] = max(0.0, mu2[1])
        mu2[2] = fold_axial(mu2[2])
        if mu1[2] == 0.0 and mu2[0] == 0.0 and mu2[1] == 0.0:
            new_sectors.append(SectorGaussians.sentinel(sg.sector))
            continue
        maj1, maj2 = bucket.majority_signs()
        scale1 = np.sqrt(np.where(maj1 > 0, COV_GROW, COV_SHRINK))
        scale2 = np.sqrt(np.where(maj2 > 0, COV_GROW, COV_SHRINK))
        sigma1 = sg.sigma1 * np.outer(scale1, scale1)
        sigma2 = sg.sigma2 * np.outer(scale2, scale2)
        new_sectors.append(SectorGaussians(sector=sg.sector, mu1=mu1, sigma1=sigma1,
                                           mu2=mu2, sigma2=sigma2,
                                           sample_count=sg.sample_count))
    return SheetState(geometry=state.geometry, sectors=new_sectors, t=state.t + 1)


def trace_total(state: SheetState) -> float:
    """Summed covariance diagonals over all sectors."""
    return float(sum(np.trace(s.sigma1) + np.trace(s.sigma2) for s in state.sectors))


def effectiveness_score(action: Action, state: SheetState,
                        model: EffectivenessModel, cfg,
                        after: SheetState | None = None) -> float:
    """Expected one-step merit of an action; lower is better.

    Utility change of the propagated state plus a weighted uncertainty term:
    the summed change of the covariance diagonals, scaled by cfg.w_sigma.
    Callers that already propagated the state may pass it as `after`.
    """
    from .search import state_utility  # local import: search builds on this module

    if after is None:
        after = propagate(state, action, model, mode="expectation")
    d_trace = trace_total(after) - trace_total(state)
    return state_utility(after, cfg) - state_utility(state, cfg) + cfg.w_sigma * d_trace
