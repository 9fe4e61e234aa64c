"""Culture-mix indicators and the immigrant-share weight matrix.

For destination i, year t and culture dimension k, with population
POP[i,t], birthplace counts BIC[i,t,o] and origin scores HCD[o,k], the
cultural level and diversity indicators are the population-share weighted
mean and standard deviation of the origin scores:

    level[i,t,k]     = sum_o s[i,t,o] * HCD[o,k]
    diversity[i,t,k] = sqrt( sum_o s[i,t,o] * (HCD[o,k] - level[i,t,k])**2 )

where s[i,t,o] = BIC[i,t,o] / POP[i,t] and residents not attributed to any
origin count as native born, so the shares sum to one.

The spatial weight of origin o for destination i is o's share of the
foreign-born population of i:

    w[t][i][o] = BIC[i,t,o] / (POP[i,t] - BIC[i,t,i])   for o != i,

with a zero diagonal.  Rows of countries without foreign born are zero, and
columns are restricted to the grid without renormalising, so row sums are
at most one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .ingest import DIMENSIONS

POP_SHORTFALL_RTOL = 1e-9


@dataclass(frozen=True)
class IndicatorPanel:
    """Cultural level/diversity panels plus own-country scores.

    ``cli`` and ``cdi`` are (n_countries, n_years, n_dimensions) arrays;
    ``cdi`` is None until the diversity pass has run.  ``hcd`` holds each
    grid country's own (imputed) scores, shape (n_countries, n_dimensions).
    """

    countries: tuple
    years: tuple
    dimensions: tuple
    cli: np.ndarray
    cdi: np.ndarray | None
    hcd: np.ndarray


@dataclass(frozen=True)
class SpatialWeights:
    """Immigrant-share weight matrices, one (N, N) matrix per year."""

    countries: tuple
    years: tuple
    w: np.ndarray  # (n_years, N, N)

    def matrix(self, year):
        return self.w[self.years.index(year)]

    def restrict(self, countries):
        """Project onto a subset of countries, keeping year order."""
        missing = [c for c in countries if c not in self.countries]
        if missing:
            raise DataError(f"weights do not cover countries: {', '.join(missing)}")
        idx = np.array([self.countries.index(c) for c in countries])
        return SpatialWeights(tuple(countries), self.years, self.w[:, idx[:, None], idx])


def _origin_shares(tensor, panel, code, year):
    """Population shares by country of birth, residual mass to the natives.

    Returns (origin codes, shares) with shares summing to one.  A recorded
    birthplace mass above population is a hard error.
    """
    row = tensor.counts.get((code, year), {})
    pop = panel.population[(code, year)]
    counted = sum(row.values())
    mass = counted + tensor.unknown.get((code, year), 0.0)
    if mass - pop > POP_SHORTFALL_RTOL * pop:
        raise DataError(
            f"birthplace counts for {code},{year} exceed population "
            f"({mass:g} > {pop:g})"
        )
    shares = {origin: count / pop for origin, count in row.items()}
    shares[code] = shares.get(code, 0.0) + max(pop - counted, 0.0) / pop
    return tuple(shares), np.array([shares[o] for o in shares])


def _score_matrix(hofstede):
    codes = tuple(hofstede.scores)
    matrix = np.array(
        [[hofstede.scores[c][dim] for dim in DIMENSIONS] for c in codes], dtype=float
    )
    return {c: r for r, c in enumerate(codes)}, matrix


def _resolve_rows(origins, shares, index, code, year):
    keep, rows = [], []
    for pos, origin in enumerate(origins):
        if shares[pos] == 0.0:
            continue
        row = index.get(origin)
        if row is None:
            raise DataError(
                f"origin {origin} has positive share for {code},{year} "
                f"but no culture scores"
            )
        keep.append(pos)
        rows.append(row)
    return np.asarray(keep, dtype=int), np.asarray(rows, dtype=int)


def compute_cli(tensor, hofstede, panel, grid):
    """Cultural level: share-weighted mean of origin scores per (i, t, k).

    ``hofstede`` must be complete for every origin with positive share (in
    practice the imputed table).  Unknown-origin mass must have been
    redistributed or be zero; any remaining unknown mass folds into the
    native share through the population residual.
    """
    index, matrix = _score_matrix(hofstede)
    n, t_len, k_len = len(grid.countries), len(grid.years), len(DIMENSIONS)
    cli = np.empty((n, t_len, k_len))
    hcd = np.empty((n, k_len))
    for i, code in enumerate(grid.countries):
        row = index.get(code)
        if row is None:
            raise DataError(f"grid country {code} has no culture scores")
        hcd[i] = matrix[row]
        for t, year in enumerate(grid.years):
            origins, shares = _origin_shares(tensor, panel, code, year)
            keep, rows = _resolve_rows(origins, shares, index, code, year)
            cli[i, t] = shares[keep] @ matrix[rows]
    return IndicatorPanel(grid.countries, grid.years, DIMENSIONS, cli, None, hcd)


def compute_cdi(tensor, hofstede, panel, cli_panel, grid):
    """Cultural diversity: share-weighted standard deviation around the level.

    Uses the same shares as the level pass; the level entering the deviation
    is taken from ``cli_panel`` so both indicators are mutually consistent.
    """
    if cli_panel.countries != grid.countries or cli_panel.years != grid.years:
        raise DataError("level panel does not match the observation grid")
    index, matrix = _score_matrix(hofstede)
    cdi = np.empty_like(cli_panel.cli)
    for i, code in enumerate(grid.countries):
        for t, year in enumerate(grid.years):
            origins, shares = _origin_shares(tensor, panel, code, year)
            keep, rows = _resolve_rows(origins, shares, index, code, year)
            dev = matrix[rows] - cli_panel.cli[i, t]
            cdi[i, t] = np.sqrt(shares[keep] @ (dev * dev))
    return IndicatorPanel(
        grid.countries, grid.years, DIMENSIONS, cli_panel.cli, cdi, cli_panel.hcd
    )


def build_weights(tensor, panel, grid):
    """Immigrant-share spatial weight matrices over the grid countries.

    w[t][i][o] = counts[i,t,o] / (pop[i,t] - counts[i,t,i]) for o != i.
    Origins outside the grid are dropped without renormalising.  A zero
    denominator with no foreign born yields a zero row; a zero or negative
    denominator alongside positive foreign counts is a hard error.
    """
    n = len(grid.countries)
    pos = {code: i for i, code in enumerate(grid.countries)}
    w = np.zeros((len(grid.years), n, n))
    for t, year in enumerate(grid.years):
        for i, code in enumerate(grid.countries):
            row = tensor.counts.get((code, year), {})
            native = row.get(code, 0.0)
            foreign = {o: c for o, c in row.items() if o != code and c > 0.0}
            denom = panel.population[(code, year)] - native
            if denom <= 0.0:
                if foreign:
                    raise DataError(
                        f"no foreign-born denominator for {code},{year} "
                        f"but positive foreign counts recorded"
                    )
                continue
            for origin, count in foreign.items():
                j = pos.get(origin)
                if j is not None:
                    w[t, i, j] = count / denom
    return SpatialWeights(grid.countries, grid.years, w)
