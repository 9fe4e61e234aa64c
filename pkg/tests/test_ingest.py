"""Loader validation, reporting and grid construction."""

import logging

import pytest

from culturegov.errors import DataError
from culturegov.ingest import (
    DIMENSIONS,
    UNKNOWN_ORIGIN,
    build_observation_grid,
    load_hofstede,
    load_migrant_stock,
    load_panel,
    load_registry,
)
from helpers import full_wgi, hofstede_of, panel_of, tensor_of, write_lines


@pytest.fixture
def registry(tmp_path):
    path = write_lines(
        tmp_path / "registry.csv",
        "code,name,lat,lon",
        "AAA,Alpha,10.0,20.0",
        "BBB,Beta,-5.0,30.0",
        "CCC,Gamma,48.5,-100.25",
    )
    return load_registry(path)


def test_load_registry(registry):
    assert registry.codes == ("AAA", "BBB", "CCC")
    assert registry.centroid("CCC") == (48.5, -100.25)
    assert "ZZZ" not in registry


def test_registry_rejects_duplicates(tmp_path):
    path = write_lines(
        tmp_path / "r.csv",
        "code,name,lat,lon",
        "AAA,Alpha,0,0",
        "AAA,Alias,1,1",
    )
    with pytest.raises(DataError, match="duplicate country AAA"):
        load_registry(path)


def test_registry_rejects_bad_coordinates(tmp_path):
    path = write_lines(tmp_path / "r.csv", "code,name,lat,lon", "AAA,Alpha,91,0")
    with pytest.raises(DataError, match=r"lat .* outside"):
        load_registry(path)


def test_registry_rejects_malformed_code(tmp_path):
    path = write_lines(tmp_path / "r.csv", "code,name,lat,lon", "aa1,Alpha,0,0")
    with pytest.raises(DataError, match="malformed country code"):
        load_registry(path)


def test_malformed_header_rejected(tmp_path):
    path = write_lines(tmp_path / "r.csv", "code,name,latitude,lon", "AAA,Alpha,0,0")
    with pytest.raises(DataError, match="malformed header"):
        load_registry(path)


def test_wrong_field_count_rejected(tmp_path):
    path = write_lines(tmp_path / "r.csv", "code,name,lat,lon", "AAA,Alpha,0")
    with pytest.raises(DataError, match="expected 4 fields"):
        load_registry(path)


def test_load_hofstede_missing_and_unparseable(tmp_path, registry):
    path = write_lines(
        tmp_path / "h.csv",
        "code,pdi,idv,mas,uai,lto,ivr",
        "AAA,10,20,30,40,50,60",
        "BBB,15,,35,abc,55,65",
        "ZZZ,1,2,3,4,5,6",
    )
    table = load_hofstede(path, registry)
    assert table.is_complete("AAA")
    assert not table.is_complete("BBB")
    assert table.scores["BBB"]["IDV"] is None  # empty cell
    assert table.scores["BBB"]["UAI"] is None  # unparseable cell
    assert table.scores["BBB"]["PDI"] == 15
    # no silent loss: the unresolved ZZZ row is accounted for
    assert "ZZZ" not in table.scores
    assert table.report.rows_read == 3
    assert table.report.rows_stored == 2
    assert table.report.unresolved == (("ZZZ", "country code not in registry"),)


def test_load_hofstede_range_check(tmp_path, registry):
    path = write_lines(
        tmp_path / "h.csv",
        "code,pdi,idv,mas,uai,lto,ivr",
        "AAA,10,20,30,40,50,121",
    )
    with pytest.raises(DataError, match=r"IVR score 121.* outside"):
        load_hofstede(path, registry)


def test_load_hofstede_duplicate(tmp_path, registry):
    path = write_lines(
        tmp_path / "h.csv",
        "code,pdi,idv,mas,uai,lto,ivr",
        "AAA,10,20,30,40,50,60",
        "AAA,11,21,31,41,51,61",
    )
    with pytest.raises(DataError, match="duplicate country AAA"):
        load_hofstede(path, registry)


def test_load_migrants(tmp_path, registry):
    path = write_lines(
        tmp_path / "m.csv",
        "dest,year,origin,count",
        "AAA,2000,AAA,70",
        "AAA,2000,BBB,20.5",
        "AAA,2000,OTHER,3",
        "AAA,2000,OTHER,2",
        "BBB,2000,BBB,50",
        "AAA,2000,QQQ,9",
    )
    tensor = load_migrant_stock(path, registry)
    assert tensor.count("AAA", 2000, "BBB") == 20.5
    assert tensor.count("AAA", 2000, "AAA") == 70
    assert tensor.unknown[("AAA", 2000)] == 5  # OTHER rows accumulate
    assert tensor.years == (2000,)
    assert tensor.report.rows_read == 6
    assert tensor.report.rows_stored == 5
    assert tensor.report.unresolved[0][0] == "QQQ"


def test_load_migrants_rejects_duplicates_and_negatives(tmp_path, registry):
    dup = write_lines(
        tmp_path / "dup.csv",
        "dest,year,origin,count",
        "AAA,2000,BBB,1",
        "AAA,2000,BBB,2",
    )
    with pytest.raises(DataError, match="duplicate entry AAA,2000,BBB"):
        load_migrant_stock(dup, registry)
    neg = write_lines(
        tmp_path / "neg.csv", "dest,year,origin,count", "AAA,2000,BBB,-1"
    )
    with pytest.raises(DataError, match="negative count"):
        load_migrant_stock(neg, registry)
    bad_dest = write_lines(
        tmp_path / "bd.csv", "dest,year,origin,count", f"{UNKNOWN_ORIGIN},2000,BBB,1"
    )
    with pytest.raises(DataError, match="malformed dest code"):
        load_migrant_stock(bad_dest, registry)


def test_load_panel(tmp_path, registry, caplog):
    pop = write_lines(
        tmp_path / "p.csv",
        "code,year,pop",
        "AAA,2000,1000",
        "BBB,2000,",
        "AAA,2005,1100",
    )
    wgi = write_lines(
        tmp_path / "w.csv",
        "code,year,va,pv,ge,rq,rl,cc",
        "AAA,2000,0.5,-0.25,1.0,,0.1,0.2",
        "AAA,2010,3.1,0,0,0,0,0",
    )
    with caplog.at_level(logging.WARNING, logger="culturegov.ingest"):
        panel = load_panel(pop, wgi, registry)
    assert panel.population[("AAA", 2000)] == 1000
    assert ("BBB", 2000) not in panel.population
    assert panel.wgi[("AAA", 2000)]["VA"] == 0.5
    assert "RQ" not in panel.wgi[("AAA", 2000)]
    assert not panel.has_full_wgi("AAA", 2000)
    # out-of-range accepted with a warning
    assert panel.wgi[("AAA", 2010)]["VA"] == 3.1
    assert any("outside" in record.message for record in caplog.records)
    # empty population row and year mismatches are reported
    reasons = dict(panel.report.unresolved)
    assert "empty population" in reasons["BBB"]
    assert reasons["2005"] == "year present only in population file"
    assert reasons["2010"] == "year present only in governance file"


def test_load_panel_rejects_nonpositive_population(tmp_path, registry):
    pop = write_lines(tmp_path / "p.csv", "code,year,pop", "AAA,2000,0")
    wgi = write_lines(tmp_path / "w.csv", "code,year,va,pv,ge,rq,rl,cc",
                      "AAA,2000,0,0,0,0,0,0")
    with pytest.raises(DataError, match="must be positive"):
        load_panel(pop, wgi, registry)


def test_grid_membership_and_reasons():
    years = (2000, 2005)
    codes = ("AAA", "BBB", "CCC", "DDD", "EEE")
    hofstede = hofstede_of({
        "AAA": 50,
        "BBB": {dim: (None if dim == "LTO" else 40) for dim in DIMENSIONS},
        "CCC": 60,
        "DDD": 70,
        "EEE": 80,
    })
    counts = {
        (code, year): {code: 90.0}
        for code in codes
        for year in years
        if not (code == "DDD" and year == 2005)
    }
    population = {(code, year): 100.0 for code in codes for year in years}
    del population[("CCC", 2005)]
    wgi = full_wgi(codes, years, 0.5)
    del wgi[("EEE", 2000)]["VA"]
    del wgi[("EEE", 2005)]["GE"]
    panel = panel_of(population, wgi)
    tensor = tensor_of(counts, years=years)

    grid = build_observation_grid(tensor, panel, hofstede)
    assert grid.countries == ("AAA",)
    assert grid.years == years
    reasons = dict(grid.exclusions)
    assert reasons["BBB"] == "incomplete culture scores"
    assert reasons["CCC"] == "population missing for year 2005"
    assert reasons["DDD"] == "migrant stock missing for year 2005"
    assert reasons["EEE"] == "no complete governance observation"


def test_grid_wgi_needs_one_full_year_only():
    years = (2000, 2005)
    hofstede = hofstede_of({"AAA": 50, "BBB": 60})
    tensor = tensor_of({(c, y): {c: 90.0} for c in ("AAA", "BBB") for y in years})
    wgi = full_wgi(("AAA", "BBB"), years, 0.1)
    del wgi[("AAA", 2005)]["CC"]  # still fine: 2000 is complete
    panel = panel_of({(c, y): 100.0 for c in ("AAA", "BBB") for y in years}, wgi)
    grid = build_observation_grid(tensor, panel, hofstede)
    assert grid.countries == ("AAA", "BBB")


def test_grid_excludes_overfull_migrant_stock():
    years = (2000,)
    hofstede = hofstede_of({"AAA": 50, "BBB": 60})
    tensor = tensor_of({
        ("AAA", 2000): {"AAA": 80.0, "BBB": 30.0},  # 110 > 100
        ("BBB", 2000): {"BBB": 90.0},
    })
    panel = panel_of(
        {("AAA", 2000): 100.0, ("BBB", 2000): 100.0},
        full_wgi(("AAA", "BBB"), years),
    )
    grid = build_observation_grid(tensor, panel, hofstede)
    assert grid.countries == ("BBB",)
    assert dict(grid.exclusions)["AAA"] == "migrant stock exceeds population in year 2000"


def test_grid_empty_years_is_error():
    hofstede = hofstede_of({"AAA": 50})
    tensor = tensor_of({("AAA", 2000): {"AAA": 1.0}})
    panel = panel_of({("AAA", 2005): 10.0}, full_wgi(("AAA",), (2005,)))
    with pytest.raises(DataError, match="no common years"):
        build_observation_grid(tensor, panel, hofstede)
