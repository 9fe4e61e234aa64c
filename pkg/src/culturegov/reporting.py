"""CSV and JSON writers for pipeline outputs.

Numeric CSV cells carry six significant digits; JSON files keep full
precision.  Row order is deterministic: input order for panels, ascending
keys elsewhere.
"""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .errors import DataError
from .indicators import IndicatorPanel
from .ingest import DIMENSIONS, WGI_INDICATORS


def fmt(value):
    """Six-significant-digit cell; empty for missing."""
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "nan"
    return "%.6g" % value


def significance_stars(p):
    """Stars at the 0.05 / 0.01 / 0.001 levels."""
    if p is None or not np.isfinite(p):
        return ""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def _write(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    return path


def write_indicators_csv(panel, path):
    """Long panel: code,year,dimension,cli,cdi (cdi blank if not computed)."""
    rows = []
    for i, code in enumerate(panel.countries):
        for t, year in enumerate(panel.years):
            for k, dim in enumerate(panel.dimensions):
                cdi = fmt(panel.cdi[i, t, k]) if panel.cdi is not None else ""
                rows.append((code, str(year), dim, fmt(panel.cli[i, t, k]), cdi))
    return _write(path, ("code", "year", "dimension", "cli", "cdi"), rows)


def write_indicators_avg_csv(panel, path):
    """Per-country average over years: code,dimension,cli,cdi."""
    cli_avg = panel.cli.mean(axis=1)
    cdi_avg = panel.cdi.mean(axis=1) if panel.cdi is not None else None
    rows = []
    for i, code in enumerate(panel.countries):
        for k, dim in enumerate(panel.dimensions):
            cdi = fmt(cdi_avg[i, k]) if cdi_avg is not None else ""
            rows.append((code, dim, fmt(cli_avg[i, k]), cdi))
    return _write(path, ("code", "dimension", "cli", "cdi"), rows)


def read_indicators_csv(path, grid, hcd):
    """Load a precomputed code,year,dimension,cli,cdi panel over the grid.

    Every grid cell must be present; the cdi column must be filled for all
    cells or for none.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from None
    cells = {}
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != [
            "code", "year", "dimension", "cli", "cdi",
        ]:
            raise DataError(f"{path}: expected header code,year,dimension,cli,cdi")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise DataError(f"{path}:{line_no}: expected 5 fields")
            code, year_raw, dim, cli_raw, cdi_raw = (c.strip() for c in row)
            try:
                year = int(year_raw)
                cli_val = float(cli_raw)
                cdi_val = float(cdi_raw) if cdi_raw else None
            except ValueError:
                raise DataError(f"{path}:{line_no}: malformed row") from None
            key = (code, year, dim)
            if key in cells:
                raise DataError(f"{path}:{line_no}: duplicate cell {key}")
            cells[key] = (cli_val, cdi_val)

    n, t_len, k_len = len(grid.countries), len(grid.years), len(DIMENSIONS)
    cli = np.empty((n, t_len, k_len))
    cdi = np.empty((n, t_len, k_len))
    n_cdi = 0
    for i, code in enumerate(grid.countries):
        for t, year in enumerate(grid.years):
            for k, dim in enumerate(DIMENSIONS):
                got = cells.get((code, year, dim))
                if got is None:
                    raise DataError(
                        f"{path}: missing indicator cell {code},{year},{dim}"
                    )
                cli[i, t, k] = got[0]
                if got[1] is not None:
                    cdi[i, t, k] = got[1]
                    n_cdi += 1
    if 0 < n_cdi < n * t_len * k_len:
        raise DataError(f"{path}: cdi column is only partially filled")
    return IndicatorPanel(
        grid.countries, grid.years, DIMENSIONS, cli,
        cdi if n_cdi else None, hcd,
    )


def write_weights_csvs(weights, outdir):
    """One file per year with the nonzero entries: year,dest,origin,weight."""
    paths = []
    for t, year in enumerate(weights.years):
        rows = []
        for i, dest in enumerate(weights.countries):
            for j, origin in enumerate(weights.countries):
                value = weights.w[t, i, j]
                if value != 0.0:
                    rows.append((str(year), dest, origin, fmt(value)))
        path = os.path.join(outdir, f"weights_{year}.csv")
        paths.append(_write(path, ("year", "dest", "origin", "weight"), rows))
    return paths


def write_exclusions_csv(entries, path):
    """code,reason rows for dropped countries and unresolved inputs."""
    rows = [(code, reason.replace(",", ";")) for code, reason in entries]
    return _write(path, ("code", "reason"), rows)


def write_provenance_csv(imputed, path):
    """code,dimension,value,provenance,donors for every culture score."""
    rows = []
    for code in imputed.countries:
        donors = ";".join(imputed.donors.get(code, ()))
        for dim, value in imputed.scores[code].items():
            cell_prov = (
                "imputed" if (code, dim) in imputed.imputed_cells else "observed"
            )
            rows.append(
                (code, dim, fmt(value), cell_prov,
                 donors if cell_prov == "imputed" else "")
            )
    return _write(path, ("code", "dimension", "value", "provenance", "donors"), rows)


def write_coefficients_csv(result, path):
    """equation,regressor,estimate,std_error,p_value,stars rows.

    Spatial and serial coefficients appear as pseudo-regressors "lambda"
    and "phi" when the structure frees them.
    """
    rows = []
    m, p = result.coef.shape
    for j, eq in enumerate(result.equations):
        for k, reg in enumerate(result.regressors):
            se = result.coef_se[j, k] if result.coef_se is not None else None
            pv = result.coef_p[j, k] if result.coef_p is not None else None
            rows.append(
                (eq, reg, fmt(result.coef[j, k]), fmt(se), fmt(pv),
                 significance_stars(pv))
            )
        if result.spec.spatial:
            se = result.lam_se[j] if result.lam_se is not None else None
            pv = result.lam_p[j] if result.lam_p is not None else None
            rows.append((eq, "lambda", fmt(result.lam[j]), fmt(se), fmt(pv),
                         significance_stars(pv)))
        if result.spec.serial:
            se = result.phi_se[j] if result.phi_se is not None else None
            pv = result.phi_p[j] if result.phi_p is not None else None
            rows.append((eq, "phi", fmt(result.phi[j]), fmt(se), fmt(pv),
                         significance_stars(pv)))
    return _write(
        path,
        ("equation", "regressor", "estimate", "std_error", "p_value", "stars"),
        rows,
    )


def write_loglik_csv(results, path):
    """regressors,error_structure,loglik,convergence rows, one per fit."""
    rows = [
        (r.spec.regressor_set, r.spec.error_structure, fmt(r.loglik), r.convergence)
        for r in results
    ]
    return _write(path, ("regressors", "error_structure", "loglik", "convergence"), rows)


def write_loglik_grid_csv(grid, regressor_sets, structures, path):
    """Matrix view: one row per regressor set, one column per structure."""
    rows = []
    for regset in regressor_sets:
        rows.append(
            (regset,) + tuple(fmt(grid[(regset, s)]) for s in structures)
        )
    return _write(path, ("regressors",) + tuple(structures), rows)


def write_r2_csv(result, path):
    """equation,r2 rows plus pooled and mean summary rows."""
    rows = [(eq, fmt(result.r2[j])) for j, eq in enumerate(result.equations)]
    rows.append(("pooled", fmt(result.r2_pooled)))
    rows.append(("mean", fmt(result.r2_mean)))
    return _write(path, ("equation", "r2"), rows)


def write_r2_grid_csv(grid, regressor_sets, path):
    """One row per regressor set: per-equation R2 then the pooled value."""
    header = ("regressors",) + WGI_INDICATORS + ("pooled",)
    rows = []
    for regset in regressor_sets:
        r2, pooled = grid[regset]
        rows.append((regset,) + tuple(fmt(v) for v in r2) + (fmt(pooled),))
    return _write(path, header, rows)


def write_residual_cov_csv(result, path):
    """Square matrix: variances on the diagonal, covariances below,
    correlations above."""
    cov = result.residual_cov
    corr = result.residual_corr
    if corr is None:
        d = np.sqrt(np.diag(cov))
        corr = cov / np.outer(d, d)
    eqs = result.equations
    rows = []
    for i, eq in enumerate(eqs):
        cells = []
        for j in range(len(eqs)):
            if i == j:
                cells.append(fmt(cov[i, i]))
            elif i > j:
                cells.append(fmt(cov[i, j]))
            else:
                cells.append(fmt(corr[i, j]))
        rows.append((eq, *cells))
    return _write(path, ("equation",) + tuple(eqs), rows)


def fit_result_to_dict(result):
    """JSON-ready dictionary of a fit, full precision."""
    def arr(a):
        return None if a is None else np.asarray(a).tolist()

    return {
        "regressor_set": result.spec.regressor_set,
        "error_structure": result.spec.error_structure,
        "equations": list(result.equations),
        "regressors": list(result.regressors),
        "countries": list(result.countries),
        "years": list(result.years),
        "n_obs": result.n_obs,
        "loglik": result.loglik,
        "convergence": result.convergence,
        "coef": arr(result.coef),
        "coef_se": arr(result.coef_se),
        "coef_p": arr(result.coef_p),
        "lambda": arr(result.lam),
        "lambda_se": arr(result.lam_se),
        "lambda_p": arr(result.lam_p),
        "phi": arr(result.phi),
        "phi_se": arr(result.phi_se),
        "phi_p": arr(result.phi_p),
        "sigma": arr(result.sigma),
        "residual_cov": arr(result.residual_cov),
        "residual_corr": arr(result.residual_corr),
        "r2": arr(result.r2),
        "r2_pooled": result.r2_pooled,
        "r2_mean": result.r2_mean,
    }


def write_json(payload, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    return path


def write_truth_json(truth, path):
    payload = {
        "theta": truth.theta.tolist(),
        "lambda": truth.err.lam.tolist(),
        "phi": truth.err.phi.tolist(),
        "sigma": truth.err.sigma.tolist(),
    }
    return write_json(payload, path)


def write_recovery_csvs(rows, summary, outdir):
    detail = _write(
        os.path.join(outdir, "recovery.csv"),
        ("replication", "parameter", "truth", "estimate", "std_error",
         "abs_error", "within_3se"),
        [
            (str(rep), name, fmt(tru), fmt(est), fmt(se), fmt(err),
             "1" if cov else "0")
            for rep, name, tru, est, se, err, cov in rows
        ],
    )
    summary_path = _write(
        os.path.join(outdir, "recovery_summary.csv"),
        ("parameter", "n", "coverage", "mae"),
        [
            (name, str(n), fmt(cov), fmt(mae))
            for name, n, cov, mae in summary
        ],
    )
    return detail, summary_path
