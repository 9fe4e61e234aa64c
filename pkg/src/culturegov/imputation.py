"""Nearest-neighbour completion of culture scores and redistribution of
unknown-origin migrants."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DataError
from .ingest import DIMENSIONS, MigrantStockTensor

EARTH_RADIUS_KM = 6371.0088


def great_circle_km(lat1, lon1, lat2, lon2):
    """Great-circle distance between two points in kilometres (haversine)."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


@dataclass(frozen=True)
class ImputedHofstedeTable:
    """Complete culture scores with provenance of every filled cell.

    ``provenance`` marks a country "imputed" when at least one of its
    dimensions was filled; ``donors`` lists the donor countries used, in
    ascending distance order, for imputed countries only.
    """

    scores: dict  # code -> {dimension: float}, complete
    provenance: dict  # code -> "observed" | "imputed"
    donors: dict  # code -> tuple of donor codes
    imputed_cells: frozenset  # (code, dimension) pairs that were filled

    def is_complete(self, code):
        return code in self.scores

    @property
    def countries(self):
        return tuple(self.scores)


def impute_hofstede(table, registry, k_neighbors=5):
    """Fill missing culture scores from the k nearest fully observed countries.

    Distance is the great-circle distance between registry centroids, with
    ties broken by ascending country code.  Donors are countries whose six
    dimensions are all observed, so imputed values never feed later
    imputations.  A country keeps its observed dimensions and fills only the
    gaps, using a single donor set for all of them; a fully missing country
    takes the donor mean on every dimension.
    """
    if k_neighbors < 1:
        raise DataError(f"k_neighbors must be positive, got {k_neighbors}")
    pool = [code for code in table.scores if table.is_complete(code)]
    if len(pool) < k_neighbors:
        raise DataError(
            f"only {len(pool)} fully observed countries available, "
            f"need at least {k_neighbors} donors"
        )

    scores, provenance, donors, filled = {}, {}, {}, []
    for code in table.scores:
        row = table.scores[code]
        if table.is_complete(code):
            scores[code] = dict(row)
            provenance[code] = "observed"
            continue
        for c in (code, *pool):
            if c not in registry:
                raise DataError(f"no registry centroid for {c}, cannot impute")
        lat, lon = registry.centroid(code)
        ranked = sorted(
            (great_circle_km(lat, lon, *registry.centroid(d)), d) for d in pool
        )
        nearest = tuple(d for _, d in ranked[:k_neighbors])
        new_row = {}
        for dim in DIMENSIONS:
            if row[dim] is not None:
                new_row[dim] = row[dim]
            else:
                new_row[dim] = sum(table.scores[d][dim] for d in nearest) / len(nearest)
                filled.append((code, dim))
        scores[code] = new_row
        provenance[code] = "imputed"
        donors[code] = nearest
    return ImputedHofstedeTable(scores, provenance, donors, frozenset(filled))


def redistribute_unknown(tensor):
    """Assign unknown-origin migrants to origins by worldwide emigrant share.

    For each (dest, year) with unknown mass, every origin o != dest receives
    a share proportional to o's total emigrants that year, computed from the
    original counts before any redistribution.  The destination itself never
    receives a share, resulting counts may be fractional, and total mass per
    (dest, year) is conserved.  The returned tensor has unknown mass zero.
    """
    emigrants = {}
    for (dest, year), row in tensor.counts.items():
        for origin, count in row.items():
            if origin != dest:
                year_totals = emigrants.setdefault(year, {})
                year_totals[origin] = year_totals.get(origin, 0.0) + count

    counts = {key: dict(row) for key, row in tensor.counts.items()}
    for (dest, year), mass in tensor.unknown.items():
        if mass == 0.0:
            continue
        totals = emigrants.get(year, {})
        denom = sum(t for origin, t in totals.items() if origin != dest)
        if denom <= 0.0:
            raise DataError(
                f"cannot redistribute {mass:g} unknown-origin migrants for "
                f"{dest},{year}: no recorded emigrants elsewhere that year"
            )
        row = counts.setdefault((dest, year), {})
        for origin, total in totals.items():
            if origin == dest or total == 0.0:
                continue
            row[origin] = row.get(origin, 0.0) + mass * (total / denom)

    unknown = {key: 0.0 for key in tensor.unknown}
    return MigrantStockTensor(counts, unknown, tensor.years, tensor.report)
