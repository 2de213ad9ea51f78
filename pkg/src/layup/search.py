"""Refined-plan generation: constrained tree search over the action space.

The planner commits one action at a time. At each stage it enumerates every
action the constraints still permit, ranks them by their expected one-step
merit under the learned effect model, explores the best `branching`
candidates `depth` levels deep (expectation-mode propagation), and commits
the candidate whose subtree reaches the cheapest leaf. Accumulated cost is
the running sum of action cost plus propagated-state utility (plus a small
penalty per action the model has never seen). The loop stops when an end
action is committed, the horizon is hit, or no single action can improve
the state utility by more than the convergence threshold; the two latter
cases append the shortest constraint-satisfying suffix, built in the
canonical order path, peel, refinement, capture, end.
"""
from __future__ import annotations

import json
import logging
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import plan as plan_mod
from .effectiveness import EffectivenessModel, effectiveness_score, propagate
from .geometry import (PathGeometry, clamp_into_polygon, nearest_boundary_point,
                       ray_exit_point, unit_vector, ROLLER_HALF_WIDTH_DEFAULT)
from .plan import (Action, ConstraintSet, DrapingPlan, PATH_COUNT_DEFAULT,
                   prefix_feasible, standard_constraints, validate)
from .sheet_state import SheetGeometry, SheetState

logger = logging.getLogger(__name__)

_KIND_ORDER = {"peel": 1, "capture": 2, "refinement": 3, "end": 4}


class SearchError(RuntimeError):
    pass


def _default_costs() -> dict:
    # refinement is priced per generated pass; end's consequence is priced by
    # the utility of the state handed to the correction controller
    return {"path": 1.0, "peel": 0.2, "capture": 0.2, "end": 0.0, "refinement": 1.0}


@dataclass(frozen=True)
class SearchConfig:
    branching: int = 4        # candidates explored per stage
    depth: int = 3            # lookahead depth below each candidate
    horizon: int = 20         # maximum plan length
    path_count: int = PATH_COUNT_DEFAULT
    w_h: float = 2.4e5        # utility weight on sector mean height
    w_area: float = 25.0      # ... on ellipse area (major * minor)
    w_sigma: float = 0.002    # ... on covariance traces (a gentle tiebreaker)
    w_unk: float = 0.5        # penalty per action bucket the model never saw
    action_costs: dict = field(default_factory=_default_costs)
    epsilon_conv: float = 1.3
    mode: str = "expectation"  # or "sampled"
    seed: int = 0

    def __post_init__(self):
        if self.branching < 1 or self.depth < 0 or self.horizon < 1:
            raise ValueError("branching and horizon must be positive, depth nonnegative")
        if min(self.w_h, self.w_area, self.w_sigma, self.w_unk) < 0:
            raise ValueError("weights must be nonnegative")
        if self.mode not in ("expectation", "sampled"):
            raise ValueError(f"unknown propagation mode {self.mode!r}")

    def to_json(self) -> dict:
        return {"version": 1, "branching": self.branching, "depth": self.depth,
                "horizon": self.horizon, "path_count": self.path_count,
                "w_h": self.w_h, "w_area": self.w_area, "w_sigma": self.w_sigma,
                "w_unk": self.w_unk, "action_costs": dict(self.action_costs),
                "epsilon_conv": self.epsilon_conv, "mode": self.mode, "seed": self.seed}

    @classmethod
    def from_json(cls, obj: dict) -> "SearchConfig":
        obj = dict(obj)
        if obj.pop("version", 1) != 1:
            raise ValueError("unsupported search config version")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "SearchConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def action_cost(action: Action, cfg: SearchConfig) -> float:
    base = cfg.action_costs[action.kind]
    if action.kind == "refinement":
        return base * action.arg
    return base


def state_utility(state: SheetState, cfg: SearchConfig) -> float:
    """Residual-uncompaction price of a state, normalized by sheet area; lower is better."""
    total = 0.0
    for s in state.sectors:
        if s.is_sentinel:
            continue
        total += cfg.w_h * max(0.0, s.mu1[2])
        total += cfg.w_area * s.mu2[0] * s.mu2[1]
        total += cfg.w_sigma * (np.trace(s.sigma1) + np.trace(s.sigma2))
    return float(total / state.geometry.area)


@dataclass
class SearchNode:
    state: SheetState
    prefix: tuple[Action, ...]
    cost: float       # sum over the prefix of action cost + utility (+ unmodeled penalty)
    unmodeled: int = 0

    @property
    def terminal(self) -> bool:
        return bool(self.prefix) and self.prefix[-1].kind == "end"


def _action_order(action: Action) -> tuple[int, int]:
    if action.kind == "path":
        return (0, action.arg)
    return (_KIND_ORDER[action.kind], 0)


@dataclass
class _Candidate:
    action: Action
    score: float
    after: SheetState
    modeled: bool

    @property
    def order(self):
        return _action_order(self.action)


class _FeasibilityCache:
    def __init__(self, cs: ConstraintSet, horizon: int):
        self.cs = cs
        self.horizon = horizon
        self._memo: dict[tuple[str, ...], bool] = {}

    def ok(self, kinds: tuple[str, ...]) -> bool:
        hit = self._memo.get(kinds)
        if hit is None:
            hit = prefix_feasible(kinds, self.cs, self.horizon)
            self._memo[kinds] = hit
        return hit


def _propagate(state, action, model, cfg: SearchConfig, position: int) -> SheetState:
    if cfg.mode == "expectation":
        return propagate(state, action, model, mode="expectation")
    mix = zlib.crc32(f"{cfg.seed}|{position}|{action}".encode())
    return propagate(state, action, model, mode="sampled", seed=mix)


def _candidate_actions(state: SheetState, cfg: SearchConfig) -> list[Action]:
    acts = [plan_mod.path(i) for i in range(1, cfg.path_count + 1)]
    n_r = max(1, sum(1 for s in state.sectors if not s.is_sentinel))
    acts += [plan_mod.peel(), plan_mod.capture(), plan_mod.refinement(n_r), plan_mod.end()]
    return acts


def _scored_candidates(node: SearchNode, model, cs, cfg,
                       cache: _FeasibilityCache | None = None) -> list[_Candidate]:
    if node.terminal or len(node.prefix) >= cfg.horizon:
        return []
    cache = cache or _FeasibilityCache(cs, cfg.horizon)
    kinds = tuple(a.kind for a in node.prefix)
    out = []
    for action in _candidate_actions(node.state, cfg):
        if not cache.ok(kinds + (action.kind,)):
            continue
        after = _propagate(node.state, action, model, cfg, len(node.prefix) + 1)
        score = effectiveness_score(action, node.state, model, cfg, after=after)
        out.append(_Candidate(action=action, score=score, after=after,
                              modeled=model.covers(action)))
    out.sort(key=lambda c: (c.score, c.order))
    return out


def _child(node: SearchNode, cand: _Candidate, cfg: SearchConfig) -> SearchNode:
    cost = node.cost + action_cost(cand.action, cfg) + state_utility(cand.after, cfg)
    unmodeled = node.unmodeled
    if not cand.modeled:
        cost += cfg.w_unk
        unmodeled += 1
    return SearchNode(state=cand.after, prefix=node.prefix + (cand.action,),
                      cost=cost, unmodeled=unmodeled)


def expand(node: SearchNode, model: EffectivenessModel, cs: ConstraintSet,
           cfg: SearchConfig, cache: _FeasibilityCache | None = None) -> list[SearchNode]:
    """The best `branching` feasible children, ranked by expected merit.

    Ties break on action order: ascending path index, then peel, capture,
    refinement, end. Terminal nodes (ending in `end`, or at the horizon)
    expand to nothing.
    """
    cands = _scored_candidates(node, model, cs, cfg, cache)
    return [_child(node, c, cfg) for c in cands[:cfg.branching]]


def lookahead_value(node: SearchNode, model: EffectivenessModel, cs: ConstraintSet,
                    cfg: SearchConfig, depth: int | None = None,
                    cache: _FeasibilityCache | None = None) -> float:
    """Cheapest (accumulated cost + utility) among the subtree's leaves."""
    if depth is None:
        depth = cfg.depth
    if depth <= 0 or node.terminal:
        return node.cost + state_utility(node.state, cfg)
    children = expand(node, model, cs, cfg, cache)
    if not children:
        return node.cost + state_utility(node.state, cfg)
    return min(lookahead_value(c, model, cs, cfg, depth - 1, cache) for c in children)


def _needed_suffix_kinds(kinds: tuple[str, ...], cs: ConstraintSet) -> list[str]:
    counts = {k: 0 for k in plan_mod.ACTION_KINDS}
    for k in kinds:
        counts[k] += 1
    needed = {}
    for c in cs.abs:
        if c.gamma == "=":
            needed[c.alpha] = max(needed.get(c.alpha, 0), c.lam - counts[c.alpha])
        elif c.gamma == ">":
            needed[c.alpha] = max(needed.get(c.alpha, 0), c.lam + 1 - counts[c.alpha])
    changed = True
    while changed:
        changed = False
        for c in cs.rel:
            if needed.get(c.alpha, 0) > 0 and counts[c.beta] == 0 and not needed.get(c.beta):
                needed[c.beta] = 1
                changed = True
    order = ("path", "peel", "refinement", "capture", "end")
    out = []
    for kind in order:
        out.extend([kind] * needed.get(kind, 0))
    return out


def _instantiate(kind: str, node: SearchNode, model, cs, cfg,
                 cache: _FeasibilityCache) -> Action:
    if kind == "path":
        best = None
        for cand in _scored_candidates(node, model, cs, cfg, cache):
            if cand.action.kind == "path":
                best = cand.action
                break
        return best or plan_mod.path(1)
    if kind == "refinement":
        n_r = max(1, sum(1 for s in node.state.sectors if not s.is_sentinel))
        return plan_mod.refinement(n_r)
    return Action(kind)


def _complete(node: SearchNode, model, cs, cfg, cache, audit: list) -> SearchNode:
    """Append the shortest constraint-satisfying suffix (canonical ordering)."""
    kinds = tuple(a.kind for a in node.prefix)
    suffix_kinds = _needed_suffix_kinds(kinds, cs)
    if not plan_mod._kinds_valid(kinds + tuple(suffix_kinds), cs):
        suffix_kinds = _search_suffix(kinds, cs)
        if suffix_kinds is None:
            attempt = kinds + tuple(_needed_suffix_kinds(kinds, cs))
            plan_attempt = DrapingPlan(
                tuple(Action(k) if k not in ("path", "refinement") else
                      (plan_mod.path(1) if k == "path" else plan_mod.refinement(1))
                      for k in attempt) or (plan_mod.end(),), name="attempt")
            violations = validate(plan_attempt, cs)
            binding = violations[0] if violations else "unknown constraint"
            raise SearchError(f"no valid completion within the horizon; binding: {binding}")
    for kind in suffix_kinds:
        action = _instantiate(kind, node, model, cs, cfg, cache)
        after = _propagate(node.state, action, model, cfg, len(node.prefix) + 1)
        cand = _Candidate(action=action, score=0.0, after=after,
                          modeled=model.covers(action))
        node = _child(node, cand, cfg)
        audit.append({"step": len(node.prefix), "action": str(action),
                      "mode": "suffix", "cost": node.cost})
    return node


def _search_suffix(kinds: tuple[str, ...], cs: ConstraintSet,
                   max_extra: int = 6) -> list[str] | None:
    # breadth-first over kind sequences, canonical candidate order
    order = ("path", "peel", "refinement", "capture", "end")
    frontier = [()]
    for _ in range(max_extra + 1):
        next_frontier = []
        for suffix in frontier:
            if plan_mod._kinds_valid(kinds + suffix, cs):
                return list(suffix)
            for kind in order:
                next_frontier.append(suffix + (kind,))
        frontier = next_frontier
    return None


def refine_plan_detailed(initial: SheetState, model: EffectivenessModel,
                         cs: ConstraintSet | None = None,
                         cfg: SearchConfig | None = None,
                         name: str = "refined") -> tuple[DrapingPlan, list[dict]]:
    """Commit-by-lookahead plan construction; returns the plan and an audit trail."""
    cs = cs if cs is not None else standard_constraints()
    cfg = cfg if cfg is not None else SearchConfig()
    if model.is_empty:
        raise SearchError("effectiveness model holds no data")
    cache = _FeasibilityCache(cs, cfg.horizon)
    if not cache.ok(()):
        raise SearchError("constraints admit no plan at all within the horizon")

    node = SearchNode(state=initial, prefix=(), cost=0.0)
    audit: list[dict] = []
    while not node.terminal:
        if len(node.prefix) >= cfg.horizon:
            node = _complete(node, model, cs, cfg, cache, audit)
            break
        cands = _scored_candidates(node, model, cs, cfg, cache)
        if not cands:
            node = _complete(node, model, cs, cfg, cache, audit)
            break
        f_now = state_utility(node.state, cfg)
        best_improvement = max(f_now - state_utility(c.after, cfg) for c in cands)
        if best_improvement < cfg.epsilon_conv:
            node = _complete(node, model, cs, cfg, cache, audit)
            break
        children = [_child(node, c, cfg) for c in cands[:cfg.branching]]
        values = [lookahead_value(ch, model, cs, cfg, cache=cache) for ch in children]
        ranked = sorted(zip(values, children, cands[:cfg.branching]),
                        key=lambda t: (t[0], _action_order(t[1].prefix[-1])))
        value, node, cand = ranked[0]
        audit.append({"step": len(node.prefix), "action": str(cand.action),
                      "score": cand.score, "lookahead": value,
                      "alternatives": [[str(c.action), c.score, float(v)]
                                       for v, _, c in ranked[1:]],
                      "mode": "committed", "cost": node.cost})

    refined = DrapingPlan(actions=node.prefix, name=name)
    remaining = validate(refined, cs)
    if remaining:
        raise SearchError(f"search produced an invalid plan; binding: {remaining[0]}")
    return refined, audit


def refine_plan(initial: SheetState, model: EffectivenessModel,
                cs: ConstraintSet | None = None, cfg: SearchConfig | None = None,
                name: str = "refined") -> DrapingPlan:
    return refine_plan_detailed(initial, model, cs, cfg, name)[0]


def replay_cost(actions, initial: SheetState, model: EffectivenessModel,
                cfg: SearchConfig) -> tuple[float, SheetState]:
    """Recompute a plan's accumulated cost from scratch (drift oracle for tests)."""
    state = initial
    cost = 0.0
    for pos, action in enumerate(actions, start=1):
        state = _propagate(state, action, model, cfg, pos)
        cost += action_cost(action, cfg) + state_utility(state, cfg)
        if not model.covers(action):
            cost += cfg.w_unk
    return cost, state


def generate_refinement_paths(state: SheetState, n: int, geom: SheetGeometry,
                              half_width: float = ROLLER_HALF_WIDTH_DEFAULT) -> list[PathGeometry]:
    """n corrective passes aimed at the worst sectors.

    Sectors rank by severity (mean height times ellipse area, descending) and
    are cycled when n exceeds the non-sentinel count. Each pass runs along
    the sector's mean orientation, signed toward the nearest sheet edge,
    starting one major semi-axis behind the centroid and ending on the
    boundary. With nothing left to fix, n harmless center-to-edge sweeps are
    returned (and flagged in the log).
    """
    if n < 1:
        raise ValueError("n must be positive")
    live = [s for s in state.sectors if not s.is_sentinel]
    if not live:
        logger.warning("refinement paths requested on a fully compacted state; "
                       "emitting %d no-op sweeps", n)
        target = nearest_boundary_point(geom.center, geom.polygon)
        pg = PathGeometry(start=geom.center.copy(), end=target, half_width=half_width)
        return [pg] * n
    live.sort(key=lambda s: (-(s.mu1[2] * s.mu2[0] * s.mu2[1]), s.sector))
    paths = []
    for i in range(n):
        s = live[i % len(live)]
        centroid = clamp_into_polygon(s.mu1[:2], geom.polygon, margin=5.0)
        theta = s.mu2[2]
        u = unit_vector(theta)
        toward_edge = nearest_boundary_point(centroid, geom.polygon) - centroid
        if float(u @ toward_edge) < 0.0:
            u = -u
        a = float(s.mu2[0])
        start = centroid - a * u if a > 0 else centroid.copy()
        end = ray_exit_point(centroid, u, geom.polygon)
        if np.allclose(start, end):
            start = centroid - max(a, 1.0) * u
        paths.append(PathGeometry(start=start, end=end, half_width=half_width))
    return paths
