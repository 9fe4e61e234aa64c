"""Culture-mix indicators against per-person enumeration, plus weights."""

import numpy as np
import pytest

from culturegov.errors import DataError
from culturegov.indicators import build_weights, compute_cdi, compute_cli
from culturegov.ingest import DIMENSIONS, ObservationGrid
from helpers import full_wgi, hofstede_of, panel_of, tensor_of

YEAR = 2000


def _grid(countries, years=(YEAR,)):
    return ObservationGrid(tuple(countries), tuple(years), ())


def _panels(tensor, hofstede, population, grid):
    panel = panel_of(population, full_wgi(grid.countries, grid.years))
    level = compute_cli(tensor, hofstede, panel, grid)
    return compute_cdi(tensor, hofstede, panel, level, grid), panel


def test_two_point_hand_case():
    # 80 natives scoring 50, 20 migrants scoring 90:
    # level = 0.8*50 + 0.2*90 = 58, diversity = sqrt(0.16*1600) = 16
    hofstede = hofstede_of({"AAA": 50.0, "BBB": 90.0})
    tensor = tensor_of({(c, YEAR): {c: 1.0} for c in ("AAA", "BBB")})
    tensor.counts[("AAA", YEAR)] = {"AAA": 80.0, "BBB": 20.0}
    grid = _grid(("AAA", "BBB"))
    panel, _ = _panels(tensor, hofstede, {("AAA", YEAR): 100.0, ("BBB", YEAR): 100.0}, grid)
    assert panel.cli[0, 0, 0] == 58.0
    assert panel.cdi[0, 0, 0] == 16.0


def test_unattributed_residents_count_as_native():
    # only 50 natives recorded out of 80: the 30-person gap joins the natives
    hofstede = hofstede_of({"AAA": 50.0, "BBB": 90.0})
    tensor = tensor_of({
        ("AAA", YEAR): {"AAA": 50.0, "BBB": 20.0},
        ("BBB", YEAR): {"BBB": 1.0},
    })
    grid = _grid(("AAA", "BBB"))
    panel, _ = _panels(tensor, hofstede, {("AAA", YEAR): 100.0, ("BBB", YEAR): 100.0}, grid)
    assert panel.cli[0, 0, 0] == 58.0
    assert panel.cdi[0, 0, 0] == 16.0


def test_single_country_level_is_own_score():
    hofstede = hofstede_of({"AAA": {dim: 10.0 * (k + 1) for k, dim in enumerate(DIMENSIONS)}})
    tensor = tensor_of({("AAA", YEAR): {"AAA": 70.0}})
    grid = _grid(("AAA",))
    panel, _ = _panels(tensor, hofstede, {("AAA", YEAR): 100.0}, grid)
    assert np.array_equal(panel.cli[0, 0], panel.hcd[0])
    assert np.array_equal(panel.cli[0, 0], [10, 20, 30, 40, 50, 60])
    assert np.all(panel.cdi == 0.0)


def test_matches_per_person_enumeration():
    rng = np.random.default_rng(2024)
    codes = [f"{c}{c}{c}" for c in "ABCDEFGH"]
    for _ in range(60):
        scores = {c: {dim: float(rng.integers(0, 121)) for dim in DIMENSIONS} for c in codes}
        hofstede = hofstede_of(scores)
        dest = codes[int(rng.integers(len(codes)))]
        pop = int(rng.integers(50, 200))
        # integer counts so each resident can be enumerated explicitly
        n_foreign = int(rng.integers(0, pop // 2))
        origins = [c for c in codes if c != dest]
        counts = {dest: pop - n_foreign}
        left = n_foreign
        for origin in origins[:-1]:
            take = int(rng.integers(0, left + 1))
            if take:
                counts[origin] = take
            left -= take
        if left:
            counts[origins[-1]] = left
        tensor = tensor_of({(dest, YEAR): dict(counts)})
        grid = _grid((dest,))
        panel, _ = _panels(tensor, hofstede, {(dest, YEAR): float(pop)}, grid)

        for k, dim in enumerate(DIMENSIONS):
            people = np.concatenate([
                np.full(c, scores[origin][dim]) for origin, c in counts.items()
            ])
            assert people.size == pop
            assert abs(panel.cli[0, 0, k] - people.mean()) < 1e-10
            assert abs(panel.cdi[0, 0, k] - people.std()) < 1e-10


def test_missing_origin_score_is_error():
    hofstede = hofstede_of({"AAA": 50.0})
    tensor = tensor_of({("AAA", YEAR): {"AAA": 80.0, "BBB": 20.0}})
    grid = _grid(("AAA",))
    panel = panel_of({("AAA", YEAR): 100.0}, full_wgi(("AAA",), (YEAR,)))
    with pytest.raises(DataError, match="origin BBB has positive share"):
        compute_cli(tensor, hofstede, panel, grid)


def test_overfull_counts_are_an_error():
    hofstede = hofstede_of({"AAA": 50.0, "BBB": 90.0})
    tensor = tensor_of({("AAA", YEAR): {"AAA": 90.0, "BBB": 20.0}})
    grid = _grid(("AAA",))
    panel = panel_of({("AAA", YEAR): 100.0}, full_wgi(("AAA",), (YEAR,)))
    with pytest.raises(DataError, match="exceed population"):
        compute_cli(tensor, hofstede, panel, grid)


def test_weights_hand_case():
    hofstede = hofstede_of({"AAA": 50.0, "BBB": 60.0, "CCC": 70.0})
    tensor = tensor_of({
        ("AAA", YEAR): {"AAA": 40.0, "BBB": 30.0, "CCC": 10.0},
        ("BBB", YEAR): {"BBB": 70.0},
        ("CCC", YEAR): {"CCC": 50.0, "AAA": 25.0},
    })
    grid = _grid(("AAA", "BBB", "CCC"))
    panel = panel_of(
        {("AAA", YEAR): 80.0, ("BBB", YEAR): 70.0, ("CCC", YEAR): 100.0},
        full_wgi(grid.countries, (YEAR,)),
    )
    weights = build_weights(tensor, panel, grid)
    w = weights.matrix(YEAR)
    # AAA: denominator 80 - 40 = 40
    assert np.allclose(w[0], [0.0, 0.75, 0.25])
    # BBB has no foreign born: zero row
    assert np.array_equal(w[1], [0.0, 0.0, 0.0])
    # CCC: 25 / (100 - 50) = 0.5 toward AAA
    assert np.allclose(w[2], [0.5, 0.0, 0.0])
    assert np.all(np.diag(w) == 0.0)


def test_weights_drop_outside_grid_without_renormalising():
    hofstede = hofstede_of({"AAA": 50.0, "BBB": 60.0})
    tensor = tensor_of({
        ("AAA", YEAR): {"AAA": 40.0, "BBB": 30.0, "ZZZ": 10.0},
        ("BBB", YEAR): {"BBB": 70.0},
    })
    grid = _grid(("AAA", "BBB"))
    panel = panel_of(
        {("AAA", YEAR): 80.0, ("BBB", YEAR): 70.0},
        full_wgi(grid.countries, (YEAR,)),
    )
    w = build_weights(tensor, panel, grid).matrix(YEAR)
    assert np.allclose(w[0], [0.0, 0.75])  # ZZZ's 0.25 share simply disappears
    assert w[0].sum() < 1.0


def test_weights_zero_denominator_with_foreign_counts_is_error():
    hofstede = hofstede_of({"AAA": 50.0, "BBB": 60.0})
    tensor = tensor_of({
        ("AAA", YEAR): {"AAA": 80.0, "BBB": 5.0},
        ("BBB", YEAR): {"BBB": 70.0},
    })
    grid = _grid(("AAA", "BBB"))
    panel = panel_of(
        {("AAA", YEAR): 80.0, ("BBB", YEAR): 70.0},
        full_wgi(grid.countries, (YEAR,)),
    )
    with pytest.raises(DataError, match="no foreign-born denominator"):
        build_weights(tensor, panel, grid)


def test_weights_restrict_reorders_and_subsets():
    hofstede = hofstede_of({c: 50.0 for c in ("AAA", "BBB", "CCC")})
    tensor = tensor_of({
        ("AAA", YEAR): {"AAA": 40.0, "BBB": 30.0, "CCC": 10.0},
        ("BBB", YEAR): {"BBB": 70.0, "CCC": 7.0},
        ("CCC", YEAR): {"CCC": 50.0},
    })
    grid = _grid(("AAA", "BBB", "CCC"))
    panel = panel_of(
        {(c, YEAR): 100.0 for c in grid.countries}, full_wgi(grid.countries, (YEAR,))
    )
    weights = build_weights(tensor, panel, grid)
    sub = weights.restrict(("BBB", "AAA"))
    assert sub.countries == ("BBB", "AAA")
    full = weights.matrix(YEAR)
    assert sub.matrix(YEAR)[0, 1] == full[1, 0]
    assert sub.matrix(YEAR)[1, 0] == full[0, 1]
    with pytest.raises(DataError, match="do not cover"):
        weights.restrict(("AAA", "ZZZ"))


def test_level_and_diversity_share_identical_weights():
    # diversity of a constant score vector must be exactly zero even with
    # many origins, which requires both passes to use the same shares
    rng = np.random.default_rng(7)
    codes = [f"{c}{c}{c}" for c in "ABCDE"]
    hofstede = hofstede_of({c: 64.25 for c in codes})
    counts = {codes[0]: 50.0}
    for c in codes[1:]:
        counts[c] = float(rng.uniform(0, 10))
    tensor = tensor_of({(codes[0], YEAR): counts})
    grid = _grid((codes[0],))
    panel, _ = _panels(tensor, hofstede, {(codes[0], YEAR): 120.0}, grid)
    assert np.allclose(panel.cli, 64.25)
    assert np.all(panel.cdi == 0.0)
