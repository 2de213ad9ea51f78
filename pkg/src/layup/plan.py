"""Draping plans: action types, ordering/count constraints, validation, file I/O.

A plan is an ordered list of five action kinds:

* ``path``        geometry-planner pass, argument = path index 1..n (n = 16)
* ``peel``        remove the top backing film
* ``capture``     take a camera capture
* ``end``         surrender control to the correction controller
* ``refinement``  insert n freshly generated corrective passes, argument = n

Constraints come in two flavors. An absolute constraint (alpha, gamma, lam)
bounds how often alpha occurs in the whole plan: '>' strictly more than lam,
'=' exactly lam, '<' strictly fewer than lam. A relative constraint
(alpha, beta, gamma, lam) requires every occurrence of alpha at position p to
have some earlier beta at position q whose positional gap g = p - q satisfies
the relation: '>' means g > lam, '=' means g = lam, '<' means g <= lam
(within lam positions). The gap counts positions, not intermediary actions:
beta immediately before alpha has g = 1, so (alpha, beta, '>', 0) is already
satisfied by adjacency. Plans with no alpha satisfy the constraint vacuously.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

ACTION_KINDS = ("path", "peel", "capture", "end", "refinement")
PATH_COUNT_DEFAULT = 16
_KIND_ALIASES = {"refine": "refinement"}
_EXACT_FEASIBILITY_WINDOW = 6  # exhaustive extension search up to this many free slots


class PlanParseError(ValueError):
    """Raised for malformed plan files; carries the offending line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class Action:
    kind: str
    arg: int | None = None

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.kind == "path":
            if self.arg is None or self.arg < 1:
                raise ValueError("path actions need a positive path index")
        elif self.kind == "refinement":
            if self.arg is None or self.arg < 1:
                raise ValueError("refinement actions need a positive count")
        elif self.arg is not None:
            raise ValueError(f"{self.kind} takes no argument")

    def __str__(self):
        return f"({self.kind}, {self.arg})" if self.arg is not None else f"({self.kind},)"


def path(i: int) -> Action:
    return Action("path", i)


def peel() -> Action:
    return Action("peel")


def capture() -> Action:
    return Action("capture")


def end() -> Action:
    return Action("end")


def refinement(n: int) -> Action:
    return Action("refinement", n)


@dataclass(frozen=True)
class DrapingPlan:
    """Ordered action sequence; positions are 1-based throughout."""

    actions: tuple[Action, ...]
    name: str = "plan"

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        if not self.actions:
            raise ValueError("a plan cannot be empty")

    def __len__(self):
        return len(self.actions)

    def kinds(self) -> tuple[str, ...]:
        return tuple(a.kind for a in self.actions)

    @property
    def path_equivalents(self) -> int:
        """In-plan passes: path actions plus the sum of refinement arguments."""
        total = 0
        for a in self.actions:
            if a.kind == "path":
                total += 1
            elif a.kind == "refinement":
                total += a.arg
        return total


@dataclass(frozen=True)
class RelConstraint:
    alpha: str
    beta: str
    gamma: str  # one of > = <
    lam: int

    def __post_init__(self):
        _check_constraint_fields(self.alpha, self.gamma, self.lam)
        if self.beta not in ACTION_KINDS:
            raise ValueError(f"unknown action kind {self.beta!r}")
        if self.alpha == self.beta:
            raise ValueError("relative constraints need distinct kinds")

    def __str__(self):
        return f"({self.alpha}, {self.beta}, {self.gamma}, {self.lam})"


@dataclass(frozen=True)
class AbsConstraint:
    alpha: str
    gamma: str
    lam: int

    def __post_init__(self):
        _check_constraint_fields(self.alpha, self.gamma, self.lam)

    def __str__(self):
        return f"({self.alpha}, {self.gamma}, {self.lam})"


def _check_constraint_fields(alpha, gamma, lam):
    if alpha not in ACTION_KINDS:
        raise ValueError(f"unknown action kind {alpha!r}")
    if gamma not in (">", "=", "<"):
        raise ValueError(f"bad relation {gamma!r}")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")


@dataclass(frozen=True)
class ConstraintSet:
    rel: tuple[RelConstraint, ...] = ()
    abs: tuple[AbsConstraint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rel", tuple(self.rel))
        object.__setattr__(self, "abs", tuple(self.abs))

    def to_json(self) -> dict:
        return {"version": 1,
                "rel": [[c.alpha, c.beta, c.gamma, c.lam] for c in self.rel],
                "abs": [[c.alpha, c.gamma, c.lam] for c in self.abs]}

    @classmethod
    def from_json(cls, obj: dict) -> "ConstraintSet":
        return cls(rel=tuple(RelConstraint(a, b, g, int(l)) for a, b, g, l in obj.get("rel", ())),
                   abs=tuple(AbsConstraint(a, g, int(l)) for a, g, l in obj.get("abs", ())))


def standard_constraints() -> ConstraintSet:
    """Ordering and count rules enforced when searching for refined plans.

    End must come after at least one path, the peel, the capture and the
    refinement block; peel and end occur at least once, capture and
    refinement exactly once.
    """
    return ConstraintSet(
        rel=(RelConstraint("end", "path", ">", 0),
             RelConstraint("end", "peel", ">", 0),
             RelConstraint("end", "capture", ">", 0),
             RelConstraint("end", "refinement", ">", 0)),
        abs=(AbsConstraint("peel", ">", 0),
             AbsConstraint("end", ">", 0),
             AbsConstraint("refinement", "=", 1),
             AbsConstraint("capture", "=", 1)),
    )


def initial_plan_constraints() -> ConstraintSet:
    """The subset applying to expert-crafted plans, which predate refinement.

    Identical to ``standard_constraints`` minus the two rules about the
    refinement action, so classic 16-path expert plans validate cleanly.
    """
    full = standard_constraints()
    return ConstraintSet(
        rel=tuple(c for c in full.rel if c.beta != "refinement"),
        abs=tuple(c for c in full.abs if c.alpha != "refinement"),
    )


@dataclass(frozen=True)
class Violation:
    constraint: RelConstraint | AbsConstraint
    position: int  # first witnessing position, 0 when none applies
    message: str

    def __str__(self):
        return self.message


def check_abs(plan: DrapingPlan, c: AbsConstraint) -> bool:
    count = sum(1 for a in plan.actions if a.kind == c.alpha)
    return _compare_count(count, c.gamma, c.lam)


def _compare_count(count: int, gamma: str, lam: int) -> bool:
    if gamma == ">":
        return count > lam
    if gamma == "=":
        return count == lam
    return count < lam


def check_rel(plan: DrapingPlan, c: RelConstraint) -> bool:
    return _first_rel_violation_pos(plan.kinds(), c) is None


def _gap_ok(gap: int, gamma: str, lam: int) -> bool:
    if gamma == ">":
        return gap > lam
    if gamma == "=":
        return gap == lam
    return gap <= lam


def _first_rel_violation_pos(kinds, c: RelConstraint) -> int | None:
    beta_positions = [q for q, k in enumerate(kinds, start=1) if k == c.beta]
    for p, k in enumerate(kinds, start=1):
        if k != c.alpha:
            continue
        if not any(q < p and _gap_ok(p - q, c.gamma, c.lam) for q in beta_positions):
            return p
    return None


def validate(plan: DrapingPlan, cs: ConstraintSet) -> list[Violation]:
    """Every failed constraint with its first witnessing position; [] means valid."""
    out = []
    kinds = plan.kinds()
    for c in cs.abs:
        count = sum(1 for k in kinds if k == c.alpha)
        if not _compare_count(count, c.gamma, c.lam):
            positions = [p for p, k in enumerate(kinds, start=1) if k == c.alpha]
            witness = positions[c.lam] if c.gamma in ("=", "<") and len(positions) > c.lam else \
                (positions[-1] if positions else 0)
            out.append(Violation(c, witness,
                                 f"{c}: {c.alpha} occurs {count} time(s)"))
    for c in cs.rel:
        p = _first_rel_violation_pos(kinds, c)
        if p is not None:
            out.append(Violation(c, p,
                                 f"{c}: {c.alpha} at position {p} lacks a qualifying earlier {c.beta}"))
    return out


def _kinds_valid(kinds: tuple[str, ...], cs: ConstraintSet) -> bool:
    for c in cs.abs:
        if not _compare_count(sum(1 for k in kinds if k == c.alpha), c.gamma, c.lam):
            return False
    for c in cs.rel:
        if _first_rel_violation_pos(kinds, c) is not None:
            return False
    return True


def prefix_feasible(prefix, cs: ConstraintSet, horizon: int) -> bool:
    """Can the prefix still be extended to a constraint-satisfying plan?

    Exhaustive over kind-extensions while at most 6 slots remain (constraints
    never look at action arguments); beyond that a necessary-condition screen
    runs instead: relative constraints already broken by placed actions are
    final, exceeded exact/upper counts are final, and the outstanding
    lower-bound counts (plus the earlier-occurrence kinds they drag in) must
    fit in the remaining slots.
    """
    kinds = _as_kinds(prefix)
    if horizon < len(kinds):
        raise ValueError(f"horizon {horizon} shorter than prefix of length {len(kinds)}")
    if horizon - len(kinds) <= _EXACT_FEASIBILITY_WINDOW:
        return _feasible_exact(kinds, cs, horizon)
    return _feasible_screen(kinds, cs, horizon)


def _as_kinds(prefix) -> tuple[str, ...]:
    if isinstance(prefix, DrapingPlan):
        return prefix.kinds()
    return tuple(a.kind if isinstance(a, Action) else str(a) for a in prefix)


def _feasible_exact(kinds: tuple[str, ...], cs: ConstraintSet, horizon: int) -> bool:
    if _kinds_valid(kinds, cs):
        return True
    if len(kinds) >= horizon:
        return False
    # a relative break among placed actions is final (beta must precede alpha),
    # as is an exceeded '=' or '<' count: prune such subtrees outright
    for c in cs.rel:
        if _first_rel_violation_pos(kinds, c) is not None:
            return False
    for c in cs.abs:
        if c.gamma in ("=", "<"):
            count = sum(1 for k in kinds if k == c.alpha)
            if (c.gamma == "=" and count > c.lam) or (c.gamma == "<" and count >= c.lam):
                return False
    return any(_feasible_exact(kinds + (k,), cs, horizon) for k in ACTION_KINDS)


def _feasible_screen(kinds: tuple[str, ...], cs: ConstraintSet, horizon: int) -> bool:
    counts = {k: 0 for k in ACTION_KINDS}
    for k in kinds:
        counts[k] += 1
    # relative constraints over already-placed alphas are decided for good
    for c in cs.rel:
        if _first_rel_violation_pos(kinds, c) is not None:
            return False
    needed = {}
    for c in cs.abs:
        have = counts[c.alpha]
        if c.gamma == "=":
            if have > c.lam:
                return False
            needed[c.alpha] = max(needed.get(c.alpha, 0), c.lam - have)
        elif c.gamma == "<":
            if have >= c.lam:
                return False
        else:  # '>'
            needed[c.alpha] = max(needed.get(c.alpha, 0), c.lam + 1 - have)
    needed = {k: v for k, v in needed.items() if v > 0}
    # a future alpha needs some earlier beta; pull missing betas in transitively
    changed = True
    while changed:
        changed = False
        for c in cs.rel:
            if needed.get(c.alpha, 0) > 0 and counts[c.beta] == 0 and c.beta not in needed:
                needed[c.beta] = 1
                changed = True
    return sum(needed.values()) <= horizon - len(kinds)


_LINE_RE = re.compile(r"^\(\s*([A-Za-z]+)\s*(?:,\s*([0-9]*)\s*)?\)$")


def parse_plan_text(text: str, name: str = "plan") -> DrapingPlan:
    actions = []
    plan_name = name
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = re.match(r"#\s*plan:\s*(.+)$", line)
            if m:
                plan_name = m.group(1).strip()
            continue
        m = _LINE_RE.match(line)
        if not m:
            raise PlanParseError(lineno, f"unparseable action {line!r}")
        kind = _KIND_ALIASES.get(m.group(1).lower(), m.group(1).lower())
        arg = int(m.group(2)) if m.group(2) else None
        try:
            actions.append(Action(kind, arg))
        except ValueError as exc:
            raise PlanParseError(lineno, str(exc)) from exc
    if not actions:
        raise PlanParseError(0, "plan file holds no actions")
    return DrapingPlan(actions=tuple(actions), name=plan_name)


def emit_plan_text(plan: DrapingPlan) -> str:
    lines = [f"# plan: {plan.name}"]
    lines.extend(str(a) for a in plan.actions)
    return "\n".join(lines) + "\n"


def parse_plan(path) -> DrapingPlan:
    with open(path) as fh:
        return parse_plan_text(fh.read())


def emit_plan(plan: DrapingPlan, path) -> None:
    with open(path, "w") as fh:
        fh.write(emit_plan_text(plan))


def expert_plan(variant: int, name: str | None = None) -> DrapingPlan:
    """The two built-in expert-style 16-path plans (variant 1 or 2).

    Both lay the odd paths first in a crossing order that visits the
    historically troublesome directions early, then sweep the even paths in
    ascending order, then peel, capture and hand over.
    """
    odd_orders = {1: [1, 7, 9, 3, 13, 5, 11, 15], 2: [13, 5, 11, 15, 1, 9, 7, 3]}
    if variant not in odd_orders:
        raise ValueError("variant must be 1 or 2")
    actions = [path(i) for i in odd_orders[variant]]
    actions += [path(i) for i in range(2, 17, 2)]
    actions += [peel(), capture(), end()]
    return DrapingPlan(actions=tuple(actions), name=name or f"D{variant}")
