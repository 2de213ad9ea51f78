"""The draping-plan language: actions, ordering/count constraints, validation.

Shows the built-in expert plans, what the standard constraint set demands,
and how validation reports broken rules.
"""
from layup.plan import (DrapingPlan, capture, emit_plan_text, end, expert_plan,
                        initial_plan_constraints, parse_plan_text, path, peel,
                        prefix_feasible, refinement, standard_constraints,
                        validate)

d1 = expert_plan(1)
print("expert plan D1 (16 geometry passes, then peel / capture / hand-over):")
print(emit_plan_text(d1))

cs_full = standard_constraints()
cs_initial = initial_plan_constraints()
print("standard constraint set (used when refining):")
for c in cs_full.rel:
    print(f"  relative {c}")
for c in cs_full.abs:
    print(f"  absolute {c}")

print("\nD1 against the initial-plan rules:", validate(d1, cs_initial) or "valid")
print("D1 against the full rules:")
for v in validate(d1, cs_full):
    print(f"  broken: {v}")

refined_style = DrapingPlan(
    tuple([path(i) for i in (3, 11, 7)] + [peel(), path(5), refinement(4),
                                           capture(), end()]),
    name="refined_style")
print("\na refined-style plan:", " ".join(str(a) for a in refined_style.actions))
print("against the full rules:", validate(refined_style, cs_full) or "valid")

# dead prefixes are detected before the search wastes time on them
print("\nprefix feasibility under the full rules (horizon 20):")
for prefix in ([], [end()], [capture(), capture()], [path(1), peel()]):
    label = " ".join(str(a) for a in prefix) or "(empty)"
    print(f"  {label:28s} -> {prefix_feasible(prefix, cs_full, 20)}")

# plans round-trip through their text form
assert parse_plan_text(emit_plan_text(d1)) == d1
print("\nplan text round-trip: ok")
