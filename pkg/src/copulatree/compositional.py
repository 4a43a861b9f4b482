"""Compositional preprocessing for the influenza subtype pipeline.

Weekly counts of the three co-circulating subtypes (A/H1N1pdm, A/H3N2,
B) are aggregated to unit-season totals, filtered to a minimum case
count, turned into strictly positive proportions (zero cells take a 0.5
pseudo-count) and mapped to unconstrained coordinates by the isometric
log-ratio transform

    y1 = sqrt(2/3) * ln( B% / sqrt(H1% * H3%) )
    y2 = sqrt(1/2) * ln( H1% / H3% )

whose inverse is closed form (exponentiate and renormalise).
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from datetime import date

from .errors import DomainError, IngestionError

__all__ = [
    "Composition3",
    "IlrPoint",
    "WeeklyRecord",
    "UnitYear",
    "ilr_forward",
    "ilr_inverse",
    "aggregate_counts",
    "read_weekly_csv",
    "write_ilr_csv",
    "read_ilr_csv",
]

_SQRT23 = math.sqrt(2.0 / 3.0)
_SQRT12 = math.sqrt(0.5)


@dataclass(frozen=True)
class Composition3:
    """Strictly positive shares of (A/H1N1pdm, A/H3N2, B) summing to one."""

    p1: float
    p2: float
    p3: float

    def __post_init__(self):
        if min(self.p1, self.p2, self.p3) <= 0.0:
            raise DomainError("composition components must be strictly positive")
        if abs(self.p1 + self.p2 + self.p3 - 1.0) > 1e-12:
            raise DomainError("composition must sum to 1 within 1e-12")


@dataclass(frozen=True)
class IlrPoint:
    y1: float
    y2: float


def ilr_forward(c: Composition3) -> IlrPoint:
    y1 = _SQRT23 * math.log(c.p3 / math.sqrt(c.p1 * c.p2))
    y2 = _SQRT12 * math.log(c.p1 / c.p2)
    return IlrPoint(y1, y2)


def ilr_inverse(p: IlrPoint) -> Composition3:
    # invert: ln(p3 / sqrt(p1 p2)) = y1 * sqrt(3/2), ln(p1/p2) = y2 * sqrt(2)
    a = p.y1 / _SQRT23
    b = p.y2 / _SQRT12
    e1 = math.exp(b / 2.0)
    e2 = math.exp(-b / 2.0)
    e3 = math.exp(a)
    total = e1 + e2 + e3
    return Composition3(e1 / total, e2 / total, e3 / total)


@dataclass(frozen=True)
class WeeklyRecord:
    unit_id: str
    iso_week: str  # "YYYY-Www"
    count_h1: int
    count_h3: int
    count_b: int
    itz: str | None = None


@dataclass(frozen=True)
class UnitYear:
    unit_id: str
    season: str  # e.g. "2014/2015"
    composition: Composition3
    total: int
    itz: str | None = None


_WEEK_RE = re.compile(r"^(\d{4})-W(\d{2})$")


def _season_of(iso_week: str, boundary_month: int, boundary_day: int) -> str:
    m = _WEEK_RE.match(iso_week)
    if not m:
        raise IngestionError(f"bad iso_week {iso_week!r}, expected YYYY-Www")
    year, week = int(m.group(1)), int(m.group(2))
    try:
        monday = date.fromisocalendar(year, week, 1)
    except ValueError as exc:
        raise IngestionError(f"bad iso_week {iso_week!r}: {exc}") from None
    start = monday.year if monday >= date(monday.year, boundary_month, boundary_day) else monday.year - 1
    return f"{start}/{start + 1}"


def aggregate_counts(
    records,
    min_total: int = 50,
    pseudo_count: float = 0.5,
    boundary_month: int = 4,
    boundary_day: int = 1,
) -> list[UnitYear]:
    """Sum weekly counts to unit-seasons and emit positive compositions.

    Seasons run boundary-to-boundary (default April 1): a week belongs to
    the season whose start its Monday falls on or after.  Unit-seasons
    with fewer than ``min_total`` raw cases are dropped; zero cells then
    take the pseudo-count before normalisation.
    """
    sums: dict[tuple[str, str], list] = {}
    for i, rec in enumerate(records):
        if min(rec.count_h1, rec.count_h3, rec.count_b) < 0:
            raise IngestionError(f"row {i}: negative count")
        season = _season_of(rec.iso_week, boundary_month, boundary_day)
        key = (rec.unit_id, season)
        entry = sums.setdefault(key, [0, 0, 0, rec.itz])
        entry[0] += rec.count_h1
        entry[1] += rec.count_h3
        entry[2] += rec.count_b
        if rec.itz is not None:
            entry[3] = rec.itz

    out = []
    for (unit, season) in sorted(sums):
        h1, h3, b, itz = sums[(unit, season)]
        total = h1 + h3 + b
        if total < min_total:
            continue
        parts = [c if c > 0 else pseudo_count for c in (h1, h3, b)]
        denom = sum(parts)
        comp = Composition3(parts[0] / denom, parts[1] / denom, parts[2] / denom)
        out.append(UnitYear(unit, season, comp, total, itz))
    return out


def read_weekly_csv(path) -> list[WeeklyRecord]:
    required = ["unit_id", "iso_week", "count_h1", "count_h3", "count_b"]
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise IngestionError(f"{path}: missing columns {missing}")
        for i, row in enumerate(reader):
            try:
                records.append(
                    WeeklyRecord(
                        row["unit_id"],
                        row["iso_week"],
                        int(row["count_h1"]),
                        int(row["count_h3"]),
                        int(row["count_b"]),
                        row.get("itz") or None,
                    )
                )
            except (ValueError, KeyError) as exc:
                raise IngestionError(f"{path} row {i}: {exc}") from None
    return records


def write_ilr_csv(unit_years: list[UnitYear], path) -> None:
    """Output schema: unit_id, season, y1, y2, itz (blank when absent)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["unit_id", "season", "y1", "y2", "itz"])
        for uy in unit_years:
            pt = ilr_forward(uy.composition)
            writer.writerow([uy.unit_id, uy.season, repr(pt.y1), repr(pt.y2), uy.itz or ""])


def read_ilr_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in ("unit_id", "season", "y1", "y2") if c not in (reader.fieldnames or [])]
        if missing:
            raise IngestionError(f"{path}: missing columns {missing}")
        out = []
        for row in reader:
            out.append(
                {
                    "unit_id": row["unit_id"],
                    "season": row["season"],
                    "point": IlrPoint(float(row["y1"]), float(row["y2"])),
                    "itz": row.get("itz") or None,
                }
            )
    return out
