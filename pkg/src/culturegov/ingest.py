"""Loaders and alignment for the input datasets.

Five UTF-8 comma-separated files with a header row feed the pipeline:

    registry     code,name,lat,lon
    hofstede     code,pdi,idv,mas,uai,lto,ivr
    migrants     dest,year,origin,count     (origin OTHER = unknown origin)
    population   code,year,pop
    wgi          code,year,va,pv,ge,rq,rl,cc

An empty cell is a missing value.  Rows that fail validation abort the load
with a DataError naming the offending line.  Rows whose country code is well
formed but absent from the registry are collected in the loader's report
instead of being silently dropped, so rows_read == rows_stored +
len(report.unresolved) holds for every loader.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass

from .errors import DataError

logger = logging.getLogger(__name__)

DIMENSIONS = ("PDI", "IDV", "MAS", "UAI", "LTO", "IVR")
WGI_INDICATORS = ("VA", "PV", "GE", "RQ", "RL", "CC")
UNKNOWN_ORIGIN = "OTHER"

HOFSTEDE_RANGE = (0.0, 120.0)
WGI_RANGE = (-2.5, 2.5)

_CODE_RE = re.compile(r"[A-Z]{3}\Z")


@dataclass(frozen=True)
class Country:
    code: str
    name: str
    lat: float
    lon: float


@dataclass(frozen=True)
class LoadReport:
    """Row accounting for one loader.

    Every data row read is either stored in the output structure or listed
    in ``unresolved`` as a (key, reason) pair.
    """

    rows_read: int = 0
    rows_stored: int = 0
    unresolved: tuple = ()


class CountryRegistry:
    """Country identity: unique 3-letter codes with names and centroids."""

    def __init__(self, entries):
        self._by_code = {}
        for entry in entries:
            if entry.code in self._by_code:
                raise DataError(f"duplicate registry code {entry.code}")
            self._by_code[entry.code] = entry

    def __contains__(self, code):
        return code in self._by_code

    def __getitem__(self, code):
        return self._by_code[code]

    def __len__(self):
        return len(self._by_code)

    def __iter__(self):
        return iter(self._by_code)

    @property
    def codes(self):
        return tuple(self._by_code)

    def centroid(self, code):
        entry = self._by_code[code]
        return entry.lat, entry.lon


@dataclass(frozen=True)
class HofstedeTable:
    """Culture scores per country; None marks a missing score."""

    scores: dict  # code -> {dimension: float | None}
    report: LoadReport

    def is_complete(self, code):
        row = self.scores.get(code)
        return row is not None and all(v is not None for v in row.values())

    @property
    def countries(self):
        return tuple(self.scores)


@dataclass(frozen=True)
class MigrantStockTensor:
    """Foreign-born counts by destination, year and origin.

    ``counts[(dest, year)]`` maps origin code to persons; the native
    population of a destination is stored under origin == dest.
    ``unknown[(dest, year)]`` holds migrants whose origin the source could
    not attribute.
    """

    counts: dict  # (dest, year) -> {origin: float}
    unknown: dict  # (dest, year) -> float
    years: tuple
    report: LoadReport

    def count(self, dest, year, origin):
        return self.counts.get((dest, year), {}).get(origin, 0.0)

    def total(self, dest, year):
        return sum(self.counts.get((dest, year), {}).values())


@dataclass(frozen=True)
class CountryPanel:
    """Population and governance observations keyed by (country, year)."""

    population: dict  # (code, year) -> float
    wgi: dict  # (code, year) -> {indicator: float}, present values only
    report: LoadReport

    def population_years(self):
        return tuple(sorted({year for _, year in self.population}))

    def wgi_years(self):
        return tuple(sorted({year for _, year in self.wgi}))

    def has_full_wgi(self, code, year):
        row = self.wgi.get((code, year))
        return row is not None and len(row) == len(WGI_INDICATORS)


@dataclass(frozen=True)
class ObservationGrid:
    """Countries and years retained for the estimation sample."""

    countries: tuple
    years: tuple
    exclusions: tuple  # (code, reason) pairs, one per dropped country


def _read_rows(path, columns):
    """Return [(line_no, fields)] for each data row, validating the header."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(
                f"{path}: empty file, expected header {','.join(columns)}"
            ) from None
        got = tuple(cell.strip().lower() for cell in header)
        if got != columns:
            raise DataError(
                f"{path}: malformed header {','.join(got)!r}, "
                f"expected {','.join(columns)!r}"
            )
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(columns):
                raise DataError(
                    f"{path}:{line_no}: expected {len(columns)} fields, got {len(row)}"
                )
            rows.append((line_no, [cell.strip() for cell in row]))
        return rows


def _parse_code(raw, path, line_no, field="country code"):
    if not _CODE_RE.match(raw):
        raise DataError(f"{path}:{line_no}: malformed {field} {raw!r}")
    return raw


def _parse_year(raw, path, line_no):
    try:
        return int(raw)
    except ValueError:
        raise DataError(f"{path}:{line_no}: malformed year {raw!r}") from None


def _parse_float(raw, path, line_no, field):
    try:
        return float(raw)
    except ValueError:
        raise DataError(f"{path}:{line_no}: malformed {field} {raw!r}") from None


def load_registry(path):
    """Load the country registry: code,name,lat,lon."""
    rows = _read_rows(path, ("code", "name", "lat", "lon"))
    entries, seen = [], {}
    for line_no, (code_raw, name, lat_raw, lon_raw) in rows:
        code = _parse_code(code_raw, path, line_no)
        if code in seen:
            raise DataError(
                f"{path}:{line_no}: duplicate country {code} "
                f"(first at line {seen[code]})"
            )
        seen[code] = line_no
        lat = _parse_float(lat_raw, path, line_no, "lat")
        lon = _parse_float(lon_raw, path, line_no, "lon")
        if not -90.0 <= lat <= 90.0:
            raise DataError(f"{path}:{line_no}: lat {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise DataError(f"{path}:{line_no}: lon {lon} outside [-180, 180]")
        entries.append(Country(code, name, lat, lon))
    if not entries:
        raise DataError(f"{path}: registry has no entries")
    return CountryRegistry(entries)


def load_hofstede(path, registry):
    """Load culture scores: code,pdi,idv,mas,uai,lto,ivr.

    Empty or unparseable cells become missing values; parseable values
    outside [0, 120] abort the load.  Countries absent from the registry go
    to the report.
    """
    columns = ("code",) + tuple(d.lower() for d in DIMENSIONS)
    rows = _read_rows(path, columns)
    scores, seen, unresolved = {}, {}, []
    lo, hi = HOFSTEDE_RANGE
    for line_no, fields in rows:
        code = _parse_code(fields[0], path, line_no)
        if code in seen:
            raise DataError(
                f"{path}:{line_no}: duplicate country {code} "
                f"(first at line {seen[code]})"
            )
        seen[code] = line_no
        if code not in registry:
            unresolved.append((code, "country code not in registry"))
            continue
        row = {}
        for dim, raw in zip(DIMENSIONS, fields[1:]):
            if not raw:
                row[dim] = None
                continue
            try:
                value = float(raw)
            except ValueError:
                row[dim] = None
                continue
            if not lo <= value <= hi:
                raise DataError(
                    f"{path}:{line_no}: {dim} score {value} outside "
                    f"[{lo:g}, {hi:g}]"
                )
            row[dim] = value
        scores[code] = row
    report = LoadReport(len(rows), len(scores), tuple(unresolved))
    return HofstedeTable(scores, report)


def load_migrant_stock(path, registry):
    """Load birthplace counts: dest,year,origin,count.

    Origin ``OTHER`` marks unknown-origin migrants and accumulates per
    (dest, year); any other (dest, year, origin) key may appear only once.
    Counts must be non-negative numbers.  Rows whose destination or origin
    is absent from the registry go to the report.
    """
    rows = _read_rows(path, ("dest", "year", "origin", "count"))
    counts, unknown, seen, unresolved, years = {}, {}, {}, [], set()
    for line_no, (dest_raw, year_raw, origin_raw, count_raw) in rows:
        dest = _parse_code(dest_raw, path, line_no, "dest code")
        year = _parse_year(year_raw, path, line_no)
        if origin_raw == UNKNOWN_ORIGIN:
            origin = UNKNOWN_ORIGIN
        else:
            origin = _parse_code(origin_raw, path, line_no, "origin code")
        count = _parse_float(count_raw, path, line_no, "count")
        if count < 0:
            raise DataError(f"{path}:{line_no}: negative count {count}")
        if dest == UNKNOWN_ORIGIN:
            raise DataError(f"{path}:{line_no}: dest may not be {UNKNOWN_ORIGIN}")
        if dest not in registry:
            unresolved.append((dest, f"dest code not in registry (line {line_no})"))
            continue
        if origin != UNKNOWN_ORIGIN and origin not in registry:
            unresolved.append(
                (origin, f"origin code not in registry (line {line_no})")
            )
            continue
        key = (dest, year, origin)
        if origin == UNKNOWN_ORIGIN:
            unknown[(dest, year)] = unknown.get((dest, year), 0.0) + count
        else:
            if key in seen:
                raise DataError(
                    f"{path}:{line_no}: duplicate entry {dest},{year},{origin} "
                    f"(first at line {seen[key]})"
                )
            seen[key] = line_no
            counts.setdefault((dest, year), {})[origin] = count
        years.add(year)
    stored = len(rows) - len(unresolved)
    report = LoadReport(len(rows), stored, tuple(unresolved))
    return MigrantStockTensor(counts, unknown, tuple(sorted(years)), report)


def load_panel(population_path, wgi_path, registry):
    """Load population (code,year,pop) and governance (code,year,va,...,cc).

    Positive population is required where present; an empty pop cell sends
    the row to the report.  Governance cells may be empty (missing); values
    outside [-2.5, 2.5] are accepted with a warning.  Years present in only
    one of the two files are noted in the report.
    """
    pop_rows = _read_rows(population_path, ("code", "year", "pop"))
    population, seen, unresolved = {}, {}, []
    for line_no, (code_raw, year_raw, pop_raw) in pop_rows:
        code = _parse_code(code_raw, population_path, line_no)
        year = _parse_year(year_raw, population_path, line_no)
        if (code, year) in seen:
            raise DataError(
                f"{population_path}:{line_no}: duplicate entry {code},{year} "
                f"(first at line {seen[(code, year)]})"
            )
        seen[(code, year)] = line_no
        if code not in registry:
            unresolved.append((code, f"country code not in registry (line {line_no})"))
            continue
        if not pop_raw:
            unresolved.append((code, f"empty population in year {year} (line {line_no})"))
            continue
        pop = _parse_float(pop_raw, population_path, line_no, "pop")
        if pop <= 0:
            raise DataError(
                f"{population_path}:{line_no}: population {pop:g} must be positive"
            )
        population[(code, year)] = pop

    columns = ("code", "year") + tuple(ind.lower() for ind in WGI_INDICATORS)
    wgi_rows = _read_rows(wgi_path, columns)
    wgi, seen_wgi = {}, {}
    lo, hi = WGI_RANGE
    for line_no, fields in wgi_rows:
        code = _parse_code(fields[0], wgi_path, line_no)
        year = _parse_year(fields[1], wgi_path, line_no)
        if (code, year) in seen_wgi:
            raise DataError(
                f"{wgi_path}:{line_no}: duplicate entry {code},{year} "
                f"(first at line {seen_wgi[(code, year)]})"
            )
        seen_wgi[(code, year)] = line_no
        if code not in registry:
            unresolved.append((code, f"country code not in registry (line {line_no})"))
            continue
        row = {}
        for ind, raw in zip(WGI_INDICATORS, fields[2:]):
            if not raw:
                continue
            value = _parse_float(raw, wgi_path, line_no, ind)
            if not lo <= value <= hi:
                logger.warning(
                    "%s:%d: %s value %g outside [%g, %g], accepted",
                    wgi_path, line_no, ind, value, lo, hi,
                )
            row[ind] = value
        wgi[(code, year)] = row

    pop_years = {year for _, year in population}
    wgi_years = {year for _, year in wgi}
    for year in sorted(pop_years - wgi_years):
        unresolved.append((str(year), "year present only in population file"))
    for year in sorted(wgi_years - pop_years):
        unresolved.append((str(year), "year present only in governance file"))

    rows_read = len(pop_rows) + len(wgi_rows)
    mismatches = len((pop_years - wgi_years) | (wgi_years - pop_years))
    stored = rows_read - (len(unresolved) - mismatches)
    report = LoadReport(rows_read, stored, tuple(unresolved))
    return CountryPanel(population, wgi, report)


def check_population_consistency(tensor, panel, rtol=1e-6):
    """Verify recorded birthplace mass never exceeds population.

    Returns the (code, year) pairs violating the bound instead of raising,
    so callers can decide between exclusion and abort.
    """
    bad = []
    for (dest, year), row in tensor.counts.items():
        pop = panel.population.get((dest, year))
        if pop is None:
            continue
        mass = sum(row.values()) + tensor.unknown.get((dest, year), 0.0)
        if mass > pop * (1.0 + rtol):
            bad.append((dest, year))
    return tuple(sorted(bad))


def build_observation_grid(tensor, panel, hofstede):
    """Intersect the datasets into a balanced country-by-year grid.

    Years are those common to the migrant tensor, the population series and
    the governance series.  A country enters the grid when its culture
    scores are complete (before imputation), population and migrant columns
    cover every grid year, recorded birthplace mass fits inside population,
    and all six governance indicators are observed in at least one grid
    year.  Dropped countries are listed with the first failing reason.
    """
    years = sorted(
        set(tensor.years)
        & {year for _, year in panel.population}
        & {year for _, year in panel.wgi}
    )
    if not years:
        raise DataError("no common years across migrants, population and governance")

    candidates = sorted(
        set(hofstede.scores)
        | {code for code, _ in panel.population}
        | {dest for dest, _ in tensor.counts}
    )
    overfull = set(check_population_consistency(tensor, panel))

    kept, exclusions = [], []
    for code in candidates:
        reason = None
        if not hofstede.is_complete(code):
            reason = "incomplete culture scores"
        if reason is None:
            for year in years:
                if (code, year) not in panel.population:
                    reason = f"population missing for year {year}"
                    break
        if reason is None:
            for year in years:
                if (code, year) not in tensor.counts:
                    reason = f"migrant stock missing for year {year}"
                    break
        if reason is None:
            for year in years:
                if (code, year) in overfull:
                    reason = f"migrant stock exceeds population in year {year}"
                    break
        if reason is None:
            if not any(panel.has_full_wgi(code, year) for year in years):
                reason = "no complete governance observation"
        if reason is None:
            kept.append(code)
        else:
            exclusions.append((code, reason))
    if not kept:
        raise DataError("observation grid is empty after exclusions")
    return ObservationGrid(tuple(kept), tuple(years), tuple(exclusions))
