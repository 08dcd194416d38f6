"""The incidence data model: W matrix, Y frequencies, f_k counts, rebinning.

An element-by-sampling-unit incidence matrix is stored sparsely as, per
element, the sorted tuple of unit indices in which it was covered.  All
estimator inputs (incidence frequencies Y_i, frequency counts f_k, the
observed richness) derive from it; merging consecutive units by logical OR
(rebinning) simulates coarser sampling-unit sizes on the same campaign.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

log = logging.getLogger(__name__)


class IncidenceError(ValueError):
    pass


@dataclass(frozen=True)
class IncidenceMatrix:
    t: int
    element_ids: tuple  # ascending
    rows: dict  # element id -> sorted tuple of unit indices (Y_i >= 1)

    def incidence_frequency(self, element_id) -> int:
        return len(self.rows[element_id])

    def column(self, j) -> frozenset:
        return frozenset(i for i in self.element_ids if j in set(self.rows[i]))

    def units(self):
        """Reconstruct the per-unit coverage sets."""
        out = [set() for _ in range(self.t)]
        for i, cols in self.rows.items():
            for j in cols:
                out[j].add(i)
        return [frozenset(u) for u in out]


@dataclass(frozen=True)
class FrequencyCounts:
    t: int
    f: dict  # k -> f_k, only k >= 1 with f_k > 0
    s_obs: int
    y: tuple  # per-element incidence frequencies, element-id order

    def fk(self, k: int) -> int:
        return self.f.get(k, 0)

    @property
    def total_incidence(self) -> int:
        return sum(k * fk for k, fk in self.f.items())


def build_incidence_matrix(units) -> IncidenceMatrix:
    """W from a sequence of per-unit coverage sets; element order is ascending id."""
    units = list(units)
    if not units:
        raise IncidenceError("empty campaign log")
    rows = {}
    for j, unit in enumerate(units):
        for el in unit:
            rows.setdefault(el, []).append(j)
    ids = tuple(sorted(rows))
    return IncidenceMatrix(
        t=len(units),
        element_ids=ids,
        rows={i: tuple(rows[i]) for i in ids},
    )


def frequency_counts(matrix: IncidenceMatrix) -> FrequencyCounts:
    y = tuple(len(matrix.rows[i]) for i in matrix.element_ids)
    f = {}
    for yi in y:
        f[yi] = f.get(yi, 0) + 1
    return FrequencyCounts(t=matrix.t, f=f, s_obs=len(y), y=y)


def observed_richness(counts: FrequencyCounts) -> int:
    return sum(counts.f.values())


def saturation_indicator(counts: FrequencyCounts) -> bool:
    """Stopping heuristic: doubleton count has reached the singleton count."""
    return counts.fk(2) >= counts.fk(1)


def rebin(matrix: IncidenceMatrix, m: int) -> IncidenceMatrix:
    """Merge every m consecutive units by logical OR.

    A trailing remainder of fewer than m units is dropped with a warning
    rather than padded (padding would fabricate absence data).
    """
    if m < 1:
        raise IncidenceError("merge factor must be >= 1")
    if m > matrix.t:
        raise IncidenceError(f"merge factor {m} exceeds unit count {matrix.t}")
    if m == 1:
        return matrix
    t_new = matrix.t // m
    if matrix.t % m:
        log.warning("rebin: dropping %d trailing units (t=%d, m=%d)", matrix.t % m, matrix.t, m)
    rows = {}
    for i, cols in matrix.rows.items():
        merged = sorted({j // m for j in cols if j // m < t_new})
        if merged:
            rows[i] = tuple(merged)
    ids = tuple(sorted(rows))
    return IncidenceMatrix(t=t_new, element_ids=ids, rows={i: rows[i] for i in ids})


def resample_units(matrix: IncidenceMatrix, unit_indices) -> FrequencyCounts:
    """Frequency counts of a bootstrap resample of unit columns (with replacement)."""
    units = matrix.units()
    y = {}
    for j in unit_indices:
        for el in units[j]:
            y[el] = y.get(el, 0) + 1
    f = {}
    for yi in y.values():
        f[yi] = f.get(yi, 0) + 1
    return FrequencyCounts(
        t=len(list(unit_indices)),
        f=f,
        s_obs=len(y),
        y=tuple(y[i] for i in sorted(y)),
    )


# ---------------------------------------------------------------------------
# Dense CSV export/import for external statistical tools.
# Header: element_id,u0,u1,...; one 0/1 row per element.
# ---------------------------------------------------------------------------

def to_dense_csv(matrix: IncidenceMatrix) -> str:
    header = "element_id," + ",".join(f"u{j}" for j in range(matrix.t))
    lines = [header]
    for i in matrix.element_ids:
        present = set(matrix.rows[i])
        lines.append(str(i) + "," + ",".join("1" if j in present else "0" for j in range(matrix.t)))
    return "\n".join(lines) + "\n"


def from_dense_csv(text: str) -> IncidenceMatrix:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise IncidenceError("empty CSV")
    header = lines[0].split(",")
    if header[0] != "element_id":
        raise IncidenceError("line 1: expected 'element_id' header column")
    t = len(header) - 1
    rows = {}
    for lineno, ln in enumerate(lines[1:], start=2):
        cells = ln.split(",")
        if len(cells) != t + 1:
            raise IncidenceError(f"line {lineno}: expected {t + 1} columns, got {len(cells)}")
        try:
            el = int(cells[0])
        except ValueError as exc:
            raise IncidenceError(f"line {lineno}: bad element id {cells[0]!r}") from exc
        cols = []
        for j, cell in enumerate(cells[1:]):
            if cell == "1":
                cols.append(j)
            elif cell != "0":
                raise IncidenceError(
                    f"line {lineno}, column {j + 2}: non-binary entry {cell!r}"
                )
        if el in rows:
            raise IncidenceError(f"line {lineno}: duplicate element id {el}")
        if cols:
            rows[el] = tuple(cols)
    ids = tuple(sorted(rows))
    return IncidenceMatrix(t=t, element_ids=ids, rows={i: rows[i] for i in ids})
