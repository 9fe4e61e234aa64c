"""Simulation of the exact data-generating process.

`simulate_panel` draws an abstract panel (uniform regressors, random
substochastic weights, Gaussian innovations pushed through the spatial and
serial recursions) for estimator checks.  `simulate_world` additionally
manufactures a full synthetic dataset (registry, culture scores, migrant
stocks, population, governance) whose governance responses are generated
from the model itself, so the file pipeline can be driven end to end with a
known truth.  `dense_covariance` builds the implied covariance of the
stacked errors directly from the innovation map for small problems, as an
independent check on the likelihood.
"""

from __future__ import annotations

import dataclasses
import itertools
import string
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DataError
from .estimator import DesignMatrices, ModelSpec, assemble_design
from .imputation import impute_hofstede, redistribute_unknown
from .indicators import SpatialWeights, build_weights, compute_cdi, compute_cli
from .ingest import (
    DIMENSIONS,
    WGI_INDICATORS,
    Country,
    CountryPanel,
    CountryRegistry,
    HofstedeTable,
    LoadReport,
    MigrantStockTensor,
    ObservationGrid,
    UNKNOWN_ORIGIN,
    build_observation_grid,
)
from .likelihood import ErrorParams

WEIGHT_SCHEMES = ("random-row-substochastic", "from-file")


@dataclass(frozen=True)
class TrueParams:
    """Generating parameters: coefficients plus the error process."""

    theta: np.ndarray  # (M, P)
    err: ErrorParams


@dataclass(frozen=True)
class SimulationResult:
    design: DesignMatrices
    weights: SpatialWeights
    truth: TrueParams


def _default_theta(m, p):
    base = np.linspace(-1.0, 1.0, p) if p > 1 else np.array([0.0])
    theta = np.array([base * (1.0 + 0.25 * j) for j in range(m)])
    theta[:, 0] = 0.25 * (np.arange(m) + 1)
    return theta


def _default_lambda(m):
    return np.linspace(0.15, 0.10, m) if m > 1 else np.array([0.15])


def _default_phi(m):
    return np.linspace(0.80, 0.78, m) if m > 1 else np.array([0.80])


def _default_sigma(m):
    var = np.linspace(0.10, 0.12, m) if m > 1 else np.array([0.10])
    sd = np.sqrt(var)
    sigma = 0.35 * np.outer(sd, sd)
    np.fill_diagonal(sigma, var)
    return sigma


@dataclass
class SimulationConfig:
    """Dimensions, true parameters and weight scheme for simulated panels.

    Unset true parameters fall back to deterministic defaults sized to the
    requested dimensions.
    """

    n_countries: int = 100
    n_periods: int = 5
    n_equations: int = 2
    n_regressors: int = 3  # slope columns; an intercept is always added
    true_theta: object = None
    true_lambda: object = None
    true_phi: object = None
    true_sigma: object = None
    weight_scheme: str = "random-row-substochastic"
    weight_row_sum: float = 0.8
    weight_file: str | None = None
    seed: int = 0

    def resolve(self):
        """Validate the configuration and return the TrueParams it implies."""
        m, p = self.n_equations, self.n_regressors + 1
        if min(self.n_countries, self.n_periods, m) < 1 or self.n_regressors < 0:
            raise DataError("simulation dimensions must be positive")
        if self.weight_scheme not in WEIGHT_SCHEMES:
            raise DataError(
                f"unknown weight scheme {self.weight_scheme!r}, expected one of "
                f"{', '.join(WEIGHT_SCHEMES)}"
            )
        if self.weight_scheme == "from-file" and not self.weight_file:
            raise DataError("weight_scheme from-file requires weight_file")
        if not 0.0 <= self.weight_row_sum < 1.0:
            raise DataError(
                f"weight row sum {self.weight_row_sum} outside [0, 1)"
            )
        theta = (
            _default_theta(m, p)
            if self.true_theta is None
            else np.asarray(self.true_theta, dtype=float)
        )
        if theta.shape != (m, p):
            raise DataError(
                f"true_theta must have shape ({m}, {p}), got {theta.shape}"
            )
        lam = (
            _default_lambda(m)
            if self.true_lambda is None
            else np.asarray(self.true_lambda, dtype=float)
        )
        phi = (
            _default_phi(m)
            if self.true_phi is None
            else np.asarray(self.true_phi, dtype=float)
        )
        for name, vec in (("spatial", lam), ("serial", phi)):
            if vec.shape != (m,):
                raise DataError(f"{name} coefficients must have shape ({m},)")
            bad = vec[np.abs(vec) >= 1.0]
            if bad.size:
                raise DataError(
                    f"{name} coefficient {bad[0]:g} outside the open interval (-1, 1)"
                )
        sigma = (
            _default_sigma(m)
            if self.true_sigma is None
            else np.asarray(self.true_sigma, dtype=float)
        )
        if sigma.shape != (m, m) or not np.allclose(sigma, sigma.T):
            raise DataError(f"true_sigma must be a symmetric ({m}, {m}) matrix")
        try:
            scipy.linalg.cholesky(sigma, lower=True)
        except scipy.linalg.LinAlgError:
            raise DataError("true_sigma is not positive definite") from None
        return TrueParams(theta, ErrorParams(lam, phi, sigma))


def _codes(n):
    made = []
    for tup in itertools.product(string.ascii_uppercase, repeat=3):
        made.append("".join(tup))
        if len(made) == n:
            return tuple(made)
    raise DataError(f"cannot generate {n} distinct country codes")


def random_weights(rng, countries, years, row_sum):
    """Random substochastic weight matrices: zero diagonal, rows scaled to
    ``row_sum`` (zero rows stay zero when there is a single country)."""
    n = len(countries)
    w = np.empty((len(years), n, n))
    for t in range(len(years)):
        a = rng.uniform(size=(n, n))
        np.fill_diagonal(a, 0.0)
        sums = a.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            a = np.where(sums > 0, a / sums * row_sum, 0.0)
        w[t] = a
    return SpatialWeights(tuple(countries), tuple(years), w)


def load_weight_file(path):
    """Read weight matrices from a year,dest,origin,weight CSV."""
    import csv

    entries = []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != [
            "year", "dest", "origin", "weight",
        ]:
            raise DataError(f"{path}: expected header year,dest,origin,weight")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{line_no}: expected 4 fields")
            year_raw, dest, origin, weight_raw = (c.strip() for c in row)
            try:
                year = int(year_raw)
                weight = float(weight_raw)
            except ValueError:
                raise DataError(f"{path}:{line_no}: malformed row") from None
            if weight < 0 or not np.isfinite(weight):
                raise DataError(f"{path}:{line_no}: invalid weight {weight_raw}")
            if dest == origin and weight != 0.0:
                raise DataError(f"{path}:{line_no}: nonzero self-weight for {dest}")
            entries.append((year, dest, origin, weight))
    if not entries:
        raise DataError(f"{path}: no weight entries")
    years = tuple(sorted({e[0] for e in entries}))
    countries = tuple(sorted({e[1] for e in entries} | {e[2] for e in entries}))
    pos = {c: i for i, c in enumerate(countries)}
    w = np.zeros((len(years), len(countries), len(countries)))
    for year, dest, origin, weight in entries:
        w[years.index(year), pos[dest], pos[origin]] = weight
    return SpatialWeights(countries, years, w)


def _push_innovations(e, w, truth):
    """Run the spatial and serial recursions: innovations (N, T, M) to errors."""
    n, t_len, m = e.shape
    u = np.empty_like(e)
    lam, phi = truth.err.lam, truth.err.phi
    eye = np.eye(n)
    for j in range(m):
        prev = np.zeros(n)
        for t in range(t_len):
            rhs = e[:, t, j] + phi[j] * prev
            if lam[j] != 0.0:
                prev = np.linalg.solve(eye - lam[j] * w[t], rhs)
            else:
                prev = rhs
            u[:, t, j] = prev
    return u


def simulate_panel(cfg, weights=None):
    """Draw one panel from the generating process.

    Draw order at fixed seed: weight matrices (unless supplied or read from
    file), then regressors, then innovations, so outputs are reproducible.
    Returns a SimulationResult bundling the design, the weights it was
    generated with and the true parameters.
    """
    truth = cfg.resolve()
    rng = np.random.default_rng(cfg.seed)
    m = cfg.n_equations

    if weights is None:
        if cfg.weight_scheme == "from-file":
            weights = load_weight_file(cfg.weight_file)
        else:
            countries = _codes(cfg.n_countries)
            years = tuple(2000 + 5 * t for t in range(cfg.n_periods))
            weights = random_weights(rng, countries, years, cfg.weight_row_sum)
    countries, years = weights.countries, weights.years
    n, t_len = len(countries), len(years)

    x = np.concatenate(
        [np.ones((n, t_len, 1)), rng.uniform(size=(n, t_len, cfg.n_regressors))],
        axis=2,
    )
    chol = scipy.linalg.cholesky(truth.err.sigma, lower=True)
    e = rng.standard_normal((n, t_len, m)) @ chol.T
    u = _push_innovations(e, weights.w, truth)
    y = np.einsum("ntp,jp->ntj", x, truth.theta) + u

    design = DesignMatrices(
        y=y,
        X=x,
        countries=countries,
        years=years,
        equations=tuple(f"Y{j + 1}" for j in range(m)),
        regressors=("const",) + tuple(f"X{k + 1}" for k in range(cfg.n_regressors)),
    )
    return SimulationResult(design, weights, truth)


def dense_covariance(lam, phi, sigma, w):
    """Covariance of the stacked errors implied by the innovation map.

    Stacking order is equation-major, then period, then unit: index
    (j, t, i) sits at position j*T*N + t*N + i.  Intended for small
    problems; the matrix is built densely.
    """
    lam = np.asarray(lam, dtype=float)
    phi = np.asarray(phi, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    t_len, n, _ = w.shape
    m = lam.size
    tn = t_len * n
    eye = np.eye(n)
    a = np.zeros((m * tn, m * tn))
    for j in range(m):
        for t in range(t_len):
            r = j * tn + t * n
            a[r:r + n, r:r + n] = eye - lam[j] * w[t]
            if t > 0:
                a[r:r + n, r - n:r] = -phi[j] * eye
    a_inv = np.linalg.inv(a)
    cov_e = np.kron(sigma, np.eye(tn))
    return a_inv @ cov_e @ a_inv.T


def empirical_covariance_check(cfg, n_draws=60000, seed=1234501):
    """Monte Carlo check of dense_covariance against simulated errors.

    Returns the maximum absolute deviation between the empirical and the
    dense covariance, relative to the largest dense entry.
    """
    truth = cfg.resolve()
    n, t_len, m = cfg.n_countries, cfg.n_periods, cfg.n_equations
    if n * t_len * m > 64:
        raise DataError("empirical covariance check is meant for small problems")
    rng = np.random.default_rng(cfg.seed)
    weights = random_weights(
        rng, _codes(n), tuple(range(t_len)), cfg.weight_row_sum
    )
    draw_rng = np.random.default_rng(seed)
    chol = scipy.linalg.cholesky(truth.err.sigma, lower=True)
    e = draw_rng.standard_normal((n_draws, n, t_len, m)) @ chol.T
    u = np.empty_like(e)
    eye = np.eye(n)
    for j in range(m):
        prev = np.zeros((n_draws, n))
        for t in range(t_len):
            rhs = e[:, :, t, j] + truth.err.phi[j] * prev
            b = eye - truth.err.lam[j] * weights.w[t]
            prev = np.linalg.solve(b, rhs.T).T
            u[:, :, t, j] = prev
    stacked = u.transpose(0, 3, 2, 1).reshape(n_draws, -1)  # (draw, j*TN + t*N + i)
    emp = stacked.T @ stacked / n_draws
    dense = dense_covariance(truth.err.lam, truth.err.phi, truth.err.sigma, weights.w)
    return float(np.max(np.abs(emp - dense)) / np.max(np.abs(dense)))


@dataclass(frozen=True)
class SyntheticWorld:
    """A file-faithful synthetic dataset with its generating truth."""

    registry: CountryRegistry
    hofstede: HofstedeTable
    tensor: MigrantStockTensor  # as written to disk, unknown mass included
    panel: CountryPanel
    truth: TrueParams
    grid: ObservationGrid
    weights: SpatialWeights
    design: DesignMatrices


def simulate_world(
    n_countries=30,
    years=(2000, 2005, 2010, 2015, 2019),
    seed=0,
    regressor_set="level_and_diversity",
    truth=None,
):
    """Manufacture a synthetic dataset whose governance follows the model.

    Culture scores, centroids, populations and migrant stocks are drawn at
    random; the governance panel is then generated as X theta + u where X
    holds the culture indicators computed by the real pipeline (including
    redistribution of a small unknown-origin mass) and u follows the error
    process.  When ``truth`` is None the generating parameters are drawn
    from the same seed.
    """
    if n_countries < 6:
        raise DataError("a synthetic world needs at least 6 countries")
    rng = np.random.default_rng(seed)
    codes = _codes(n_countries)
    years = tuple(int(y) for y in years)
    m = len(WGI_INDICATORS)

    entries = [
        Country(code, f"Country {code}",
                float(rng.uniform(-60.0, 70.0)), float(rng.uniform(-180.0, 180.0)))
        for code in codes
    ]
    registry = CountryRegistry(entries)

    scores = {
        code: {dim: float(rng.uniform(5.0, 115.0)) for dim in DIMENSIONS}
        for code in codes
    }
    hofstede = HofstedeTable(scores, LoadReport())

    population, counts, unknown = {}, {}, {}
    base_pop = rng.uniform(1e6, 5e7, size=n_countries)
    growth = rng.uniform(0.0, 0.02, size=n_countries)
    foreign_share = rng.uniform(0.05, 0.30, size=n_countries)
    for i, code in enumerate(codes):
        others = [c for c in codes if c != code]
        n_origins = int(rng.integers(3, min(9, len(others) + 1)))
        origins = list(rng.choice(others, size=n_origins, replace=False))
        mix = rng.dirichlet(np.ones(n_origins))
        for t, year in enumerate(years):
            pop = float(base_pop[i] * (1.0 + growth[i]) ** (5 * t))
            population[(code, year)] = pop
            foreign = pop * foreign_share[i]
            row = {code: pop - foreign}
            for origin, share in zip(origins, mix):
                row[origin] = foreign * 0.80 * float(share)
            counts[(code, year)] = row
            unknown[(code, year)] = foreign * 0.05
    tensor = MigrantStockTensor(counts, unknown, years, LoadReport())

    zero_wgi = {
        (code, year): {ind: 0.0 for ind in WGI_INDICATORS}
        for code in codes
        for year in years
    }
    panel0 = CountryPanel(population, zero_wgi, LoadReport())

    worked = redistribute_unknown(tensor)
    imputed = impute_hofstede(hofstede, registry)
    grid = build_observation_grid(worked, panel0, hofstede)
    level = compute_cli(worked, imputed, panel0, grid)
    indicators = compute_cdi(worked, imputed, panel0, level, grid)
    weights = build_weights(worked, panel0, grid)
    spec = ModelSpec(regressor_set, "all")
    design0 = assemble_design(indicators, panel0, spec, grid)

    p = design0.X.shape[2]
    if truth is None:
        theta = rng.uniform(-0.8, 0.8, size=(m, p))
        slope_mean = np.einsum(
            "ntp,jp->j", design0.X[:, :, 1:], theta[:, 1:]
        ) / (design0.X.shape[0] * design0.X.shape[1])
        theta[:, 0] = -slope_mean
        lam = rng.uniform(0.05, 0.20, size=m)
        phi = rng.uniform(0.70, 0.85, size=m)
        sd = rng.uniform(0.25, 0.45, size=m)
        sigma = 0.40 * np.outer(sd, sd)
        np.fill_diagonal(sigma, sd * sd)
        truth = TrueParams(theta, ErrorParams(lam, phi, sigma))
    elif truth.theta.shape != (m, p):
        raise DataError(f"truth.theta must have shape ({m}, {p})")

    chol = scipy.linalg.cholesky(truth.err.sigma, lower=True)
    e = rng.standard_normal((design0.X.shape[0], len(years), m)) @ chol.T
    u = _push_innovations(e, weights.w, truth)
    y = np.einsum("ntp,jp->ntj", design0.X, truth.theta) + u

    wgi = {}
    for i, code in enumerate(design0.countries):
        for t, year in enumerate(years):
            wgi[(code, year)] = {
                ind: float(y[i, t, j]) for j, ind in enumerate(WGI_INDICATORS)
            }
    panel = CountryPanel(population, wgi, LoadReport())
    design = dataclasses.replace(design0, y=y)
    return SyntheticWorld(
        registry, hofstede, tensor, panel, truth, grid, weights, design
    )


def write_world_csvs(world, outdir):
    """Write the synthetic dataset as the five input CSVs.

    Values are written with full round-trip precision so reloading them
    reproduces the world exactly.  Returns {name: path}.
    """
    import os

    os.makedirs(outdir, exist_ok=True)
    paths = {}

    def full(value):
        return repr(float(value))

    def emit(name, header, rows):
        path = os.path.join(outdir, f"{name}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(row) + "\n")
        paths[name] = path
        return path

    reg = world.registry
    emit(
        "registry",
        "code,name,lat,lon",
        [
            (code, reg[code].name, full(reg[code].lat), full(reg[code].lon))
            for code in reg.codes
        ],
    )
    emit(
        "hofstede",
        "code," + ",".join(d.lower() for d in DIMENSIONS),
        [
            (code,) + tuple(full(world.hofstede.scores[code][d]) for d in DIMENSIONS)
            for code in world.hofstede.countries
        ],
    )
    migrant_rows = []
    for (dest, year), row in world.tensor.counts.items():
        for origin, count in row.items():
            migrant_rows.append((dest, str(year), origin, full(count)))
        extra = world.tensor.unknown.get((dest, year), 0.0)
        if extra > 0.0:
            migrant_rows.append((dest, str(year), UNKNOWN_ORIGIN, full(extra)))
    emit("migrants", "dest,year,origin,count", migrant_rows)
    emit(
        "population",
        "code,year,pop",
        [
            (code, str(year), full(pop))
            for (code, year), pop in world.panel.population.items()
        ],
    )
    emit(
        "wgi",
        "code,year," + ",".join(ind.lower() for ind in WGI_INDICATORS),
        [
            (code, str(year)) + tuple(full(row[ind]) for ind in WGI_INDICATORS)
            for (code, year), row in world.panel.wgi.items()
        ],
    )
    return paths


def recovery_study(cfg, n_replications, fit_fn):
    """Fit fresh draws of the generating process and tabulate recovery.

    ``fit_fn(design, weights)`` must return a FitResult.  Returns (rows,
    summary): per-replication parameter rows (replication, name, truth,
    estimate, std_error, abs_error, within_3se) and per-parameter summaries
    (name, n, coverage, mae).
    """
    rows = []
    for rep in range(n_replications):
        sim = simulate_panel(dataclasses.replace(cfg, seed=cfg.seed + rep))
        result = fit_fn(sim.design, sim.weights)
        labels, truths, ests, ses = [], [], [], []
        for j, eq in enumerate(result.equations):
            for k, reg in enumerate(result.regressors):
                labels.append(f"{eq}:{reg}")
                truths.append(sim.truth.theta[j, k])
                ests.append(result.coef[j, k])
                ses.append(result.coef_se[j, k] if result.coef_se is not None else np.nan)
            labels.append(f"lambda:{eq}")
            truths.append(sim.truth.err.lam[j])
            ests.append(result.lam[j])
            ses.append(result.lam_se[j] if result.lam_se is not None else np.nan)
            labels.append(f"phi:{eq}")
            truths.append(sim.truth.err.phi[j])
            ests.append(result.phi[j])
            ses.append(result.phi_se[j] if result.phi_se is not None else np.nan)
        for name, tru, est, se in zip(labels, truths, ests, ses):
            err = abs(est - tru)
            covered = bool(np.isfinite(se) and err <= 3.0 * se)
            rows.append((rep, name, float(tru), float(est), float(se), float(err), covered))

    summary = []
    for name in dict.fromkeys(r[1] for r in rows):
        sub = [r for r in rows if r[1] == name]
        coverage = sum(r[6] for r in sub) / len(sub)
        mae = sum(r[5] for r in sub) / len(sub)
        summary.append((name, len(sub), coverage, mae))
    return rows, summary
