"""Shared builders for hand-made test datasets."""

import numpy as np

from culturegov.ingest import (
    DIMENSIONS,
    WGI_INDICATORS,
    Country,
    CountryPanel,
    CountryRegistry,
    HofstedeTable,
    LoadReport,
    MigrantStockTensor,
)


def registry_of(coords):
    """CountryRegistry from {code: (lat, lon)}."""
    return CountryRegistry(
        [Country(code, f"Country {code}", lat, lon) for code, (lat, lon) in coords.items()]
    )


def hofstede_of(rows):
    """HofstedeTable from {code: score | {dim: score | None}}.

    A scalar fills every dimension with the same value.
    """
    scores = {}
    for code, row in rows.items():
        if isinstance(row, dict):
            scores[code] = {dim: row.get(dim) for dim in DIMENSIONS}
        else:
            scores[code] = {dim: row for dim in DIMENSIONS}
    return HofstedeTable(scores, LoadReport())


def tensor_of(counts, unknown=None, years=None):
    """MigrantStockTensor from {(dest, year): {origin: count}}."""
    if years is None:
        years = tuple(sorted({year for _, year in counts}))
    return MigrantStockTensor(
        {key: dict(row) for key, row in counts.items()},
        dict(unknown or {}),
        tuple(years),
        LoadReport(),
    )


def panel_of(population, wgi=None):
    """CountryPanel from {(code, year): pop} and {(code, year): {ind: value}}."""
    return CountryPanel(
        dict(population),
        {key: dict(row) for key, row in (wgi or {}).items()},
        LoadReport(),
    )


def full_wgi(codes, years, value=0.0):
    return {
        (code, year): {ind: value for ind in WGI_INDICATORS}
        for code in codes
        for year in years
    }


def write_lines(path, *lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def random_spd(rng, m, scale=1.0):
    a = rng.uniform(0.2, 1.0, size=(m, m))
    return scale * (a @ a.T + m * np.eye(m) * 0.3)
