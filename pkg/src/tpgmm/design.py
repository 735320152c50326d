"""Two-phase sampling designs: strata, selection probabilities, samplers.

A design is a set of (d, s) cells -- outcome level d in {0, 1} crossed
with a phase-I stratum s in {1..J} -- each carrying phase-I and phase-II
counts and a selection probability.  Strata ids are supplied by the
caller; this module never infers strata from covariate values.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DesignValidationError,
    EmptyCellError,
    InsufficientCellError,
    ParseError,
)


@dataclass
class TwoPhaseDesign:
    j: int
    pi: dict = field(default_factory=dict)            # (d, s) -> probability
    counts_phase1: dict = field(default_factory=dict)  # (d, s) -> N_ds
    counts_phase2: dict = field(default_factory=dict)  # (d, s) -> n_ds

    def validate(self):
        for (d, s), p in self.pi.items():
            if d not in (0, 1) or not (1 <= s <= self.j):
                raise DesignValidationError(f"cell ({d},{s}) outside declared strata")
            if not (0.0 < p <= 1.0):
                raise DesignValidationError(f"pi({d},{s})={p} not in (0,1]")
        for key, n1 in self.counts_phase1.items():
            n2 = self.counts_phase2.get(key, 0)
            if n2 > n1:
                raise DesignValidationError(f"n_ds > N_ds in cell {key}")
            if n1 > 0 and key not in self.pi:
                raise DesignValidationError(f"cell {key} has N_ds > 0 but no pi")
        return self

    def pi_rows(self, y, s):
        """Per-row selection probability pi(y_i, s_i)."""
        out = np.empty(len(y))
        for i, (d, si) in enumerate(zip(y, s)):
            key = (int(d), int(si))
            if key not in self.pi:
                raise DesignValidationError(f"no pi defined for cell {key}")
            out[i] = self.pi[key]
        return out

    def offset_rows(self, s):
        """Per-row sampling offset log(pi(1, s_i) / pi(0, s_i))."""
        out = np.empty(len(s))
        for i, si in enumerate(s):
            si = int(si)
            for d in (0, 1):
                if (d, si) not in self.pi:
                    raise DesignValidationError(f"no pi defined for cell ({d},{si})")
            out[i] = math.log(self.pi[(1, si)] / self.pi[(0, si)])
        return out


@dataclass
class PhaseTwoSample:
    r: np.ndarray         # binary selection indicators, length N
    indices: np.ndarray   # selected row ids, sorted


def _draw_cell(rng, cell_indices, size):
    if size > len(cell_indices):
        raise InsufficientCellError(
            f"requested {size} from a cell of size {len(cell_indices)}"
        )
    if size == len(cell_indices):
        return cell_indices
    return cell_indices[rng.choice(len(cell_indices), size=size, replace=False)]


def sample_case_control(y, n_cases, n_controls, rng):
    """Draw a phase-II case-control subsample (single stratum, J=1).

    Selects n_cases rows with y=1 and n_controls rows with y=0 uniformly
    without replacement; the returned design records pi(d, 1) = n_d/N_d.
    """
    y = np.asarray(y)
    cases = np.flatnonzero(y == 1)
    controls = np.flatnonzero(y == 0)
    picked = np.concatenate([
        _draw_cell(rng, cases, n_cases),
        _draw_cell(rng, controls, n_controls),
    ])
    picked.sort()
    r = np.zeros(len(y), dtype=np.int8)
    r[picked] = 1
    design = TwoPhaseDesign(
        j=1,
        pi={(1, 1): n_cases / len(cases), (0, 1): n_controls / len(controls)},
        counts_phase1={(1, 1): len(cases), (0, 1): len(controls)},
        counts_phase2={(1, 1): n_cases, (0, 1): n_controls},
    ).validate()
    return PhaseTwoSample(r=r, indices=picked), design


def sample_balanced(y, s, quota, rng):
    """Draw per-(d, s) cell simple random samples of the given quotas.

    quota maps (d, s) -> count.  Records pi(d, s) = quota / N_ds.
    Raises EmptyCellError for a positive quota on an empty cell and
    InsufficientCellError when a quota exceeds its cell.
    """
    y = np.asarray(y)
    s = np.asarray(s)
    j = int(s.max())
    picked_parts = []
    pi = {}
    counts1 = {}
    counts2 = {}
    for d in (0, 1):
        for si in range(1, j + 1):
            counts1[(d, si)] = int(np.sum((y == d) & (s == si)))
    for key in sorted(quota):
        want = int(quota[key])
        d, si = key
        cell = np.flatnonzero((y == d) & (s == si))
        if len(cell) == 0:
            if want > 0:
                raise EmptyCellError(f"quota {want} on empty cell {key}")
            continue
        picked_parts.append(_draw_cell(rng, cell, want))
        pi[key] = want / len(cell)
        counts2[key] = want
    picked = np.sort(np.concatenate(picked_parts)) if picked_parts else np.array([], dtype=int)
    r = np.zeros(len(y), dtype=np.int8)
    r[picked] = 1
    design = TwoPhaseDesign(j=j, pi=pi, counts_phase1=counts1, counts_phase2=counts2)
    return PhaseTwoSample(r=r, indices=picked), design


def quotas_from_probabilities(y, s, pi):
    """Integer quotas from per-cell probabilities: round to nearest, ties up."""
    y = np.asarray(y)
    s = np.asarray(s)
    quota = {}
    for key in sorted(pi):
        d, si = key
        n_cell = int(np.sum((y == d) & (s == si)))
        quota[key] = min(n_cell, int(math.floor(pi[key] * n_cell + 0.5)))
    return quota


def empirical_pi(design):
    """Realized selection probabilities n_ds / N_ds per cell."""
    out = {}
    for key, n2 in design.counts_phase2.items():
        n1 = design.counts_phase1.get(key, 0)
        if n1 == 0:
            raise EmptyCellError(f"cell {key} has n_ds > 0 but N_ds = 0")
        out[key] = n2 / n1
    return out


def with_empirical_pi(design):
    """Copy of the design with pi replaced by the realized n_ds/N_ds."""
    return TwoPhaseDesign(
        j=design.j,
        pi=empirical_pi(design),
        counts_phase1=dict(design.counts_phase1),
        counts_phase2=dict(design.counts_phase2),
    ).validate()


def write_design(design, path):
    lines = [f"J = {design.j}"]
    lines.append("# cell d s N_ds n_ds pi")
    keys = sorted(set(design.counts_phase1) | set(design.counts_phase2) | set(design.pi))
    for d, s in keys:
        n1 = design.counts_phase1.get((d, s), 0)
        n2 = design.counts_phase2.get((d, s), 0)
        p = design.pi.get((d, s))
        lines.append(f"cell {d} {s} {n1} {n2} {'' if p is None else repr(p)}".rstrip())
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_design(path):
    j = None
    pi = {}
    counts1 = {}
    counts2 = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("J"):
                try:
                    j = int(line.split("=", 1)[1])
                except (IndexError, ValueError) as exc:
                    raise ParseError(f"{path}:{lineno}: bad J line {line!r}") from exc
                continue
            parts = line.split()
            if parts[0] != "cell" or len(parts) not in (5, 6):
                raise ParseError(f"{path}:{lineno}: unrecognized line {line!r}")
            try:
                d, s, n1, n2 = (int(p) for p in parts[1:5])
                key = (d, s)
                counts1[key] = n1
                counts2[key] = n2
                if len(parts) == 6:
                    pi[key] = float(parts[5])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad cell line {line!r}") from exc
    if j is None:
        raise ParseError(f"{path}: missing 'J = ...' line")
    return TwoPhaseDesign(j=j, pi=pi, counts_phase1=counts1, counts_phase2=counts2).validate()
