"""Term-list design matrix construction.

A model is a list of terms over named data columns: "1" for the
intercept and colon-joined products ("x1:x4") for interactions.  The
intercept is always term 0.
"""
import numpy as np

from .errors import DimensionError

FULL_MODEL_TERMS = [
    "1", "x2c", "d1", "d2", "d3", "x4",
    "d1:x2c", "d2:x2c", "d3:x2c", "x2c:x4", "d1:x4", "d2:x4", "d3:x4",
]

REDUCED_M1_TERMS = ["1", "x1", "d1", "d2", "d3", "x4"]

REDUCED_M2_TERMS = [
    "1", "x1", "d1", "d2", "d3", "x4",
    "x1:d1", "x1:d2", "x1:d3", "x1:x4", "d1:x4", "d2:x4", "d3:x4",
]


def build_design(columns, terms):
    """N x len(terms) design matrix from a dict of named columns."""
    n = len(next(iter(columns.values())))
    cols = []
    for term in terms:
        if term == "1":
            cols.append(np.ones(n))
            continue
        col = np.ones(n)
        for name in term.split(":"):
            if name not in columns:
                raise DimensionError(f"term {term!r} references unknown column {name!r}")
            col = col * np.asarray(columns[name], dtype=float)
        cols.append(col)
    return np.column_stack(cols)
