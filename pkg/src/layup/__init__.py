"""Draping-plan refinement for robotic composite sheet layup.

The pipeline: simulate layup experiments (`simulator`), summarize captures
into per-sector Gaussian states (`sheet_state`), learn per-action effect
distributions from the logs (`effectiveness`), and search for a refined,
constraint-satisfying plan (`search`, constraints in `plan`). `cli` wires
the stages into the `layup` command.
"""

__version__ = "0.1.0"
