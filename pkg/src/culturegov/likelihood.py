"""Exact Gaussian log-likelihood for the panel error structure.

Per equation j the regression error follows a spatial autoregression within
each period and an AR(1) across periods:

    u[:, t, j] = lam[j] * W_t @ u[:, t, j] + phi[j] * u[:, t-1, j] + e[:, t, j]

with u[:, -1, j] = 0, so innovations are recovered by the linear filter

    e[:, t, j] = (I - lam[j] * W_t) @ u[:, t, j] - phi[j] * u[:, t-1, j].

Innovation vectors e[i, t, :] across equations are i.i.d. Gaussian with
covariance Sigma, giving the log-likelihood

    -NTM/2 log 2pi - NT/2 log det Sigma
        + sum_{j,t} log |det(I - lam[j] * W_t)|
        - 1/2 sum_{i,t} e[i,t,:]' Sigma^{-1} e[i,t,:].

At fixed (lam, phi) the coefficients and Sigma have closed-form optima and
are concentrated out by `profile_theta_sigma`; `ParamPacking` maps all free
parameters to an unconstrained vector (atanh for lam and phi, log-Cholesky
for Sigma) for optimisation and curvature-based standard errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DataError, ModelError


@dataclass(frozen=True)
class ErrorParams:
    """Error-process parameters: spatial lam (M,), serial phi (M,), Sigma (M, M)."""

    lam: np.ndarray
    phi: np.ndarray
    sigma: np.ndarray

    def validate(self, n_eq):
        lam, phi, sigma = map(np.asarray, (self.lam, self.phi, self.sigma))
        if lam.shape != (n_eq,) or phi.shape != (n_eq,):
            raise ModelError(
                f"lam/phi must have shape ({n_eq},), got {lam.shape} and {phi.shape}"
            )
        if np.any(np.abs(lam) >= 1.0):
            raise ModelError(f"spatial coefficients {lam} outside (-1, 1)")
        if np.any(np.abs(phi) >= 1.0):
            raise ModelError(f"serial coefficients {phi} outside (-1, 1)")
        if sigma.shape != (n_eq, n_eq) or not np.allclose(sigma, sigma.T):
            raise ModelError("sigma must be a symmetric (M, M) matrix")


def _chol_lower(sigma):
    try:
        return scipy.linalg.cholesky(sigma, lower=True)
    except scipy.linalg.LinAlgError:
        raise ModelError("sigma is not positive definite") from None


def spatial_logdet(w, lam):
    """sum_t log |det(I - lam * W_t)| for one equation."""
    if lam == 0.0:
        return 0.0
    total = 0.0
    eye = np.eye(w.shape[1])
    for t in range(w.shape[0]):
        sign, ld = np.linalg.slogdet(eye - lam * w[t])
        if sign == 0 or not np.isfinite(ld):
            raise ModelError(f"singular spatial filter at lam={lam:g}, period {t}")
        total += ld
    return total


def _filter(arr, w, lam, phi):
    """Apply the innovation filter of one equation to an (N, T) or (N, T, P)
    panel, returning an array of the same shape."""
    out = np.empty_like(arr)
    t_len = arr.shape[1]
    for t in range(t_len):
        bx = arr[:, t] - lam * (w[t] @ arr[:, t]) if lam != 0.0 else arr[:, t].copy()
        if t > 0 and phi != 0.0:
            bx -= phi * arr[:, t - 1]
        out[:, t] = bx
    return out


def _check_weights(design, weights):
    n, t_len, _ = design.y.shape
    if weights.years != design.years:
        raise DataError(
            f"weight years {weights.years} do not match design years {design.years}"
        )
    if weights.countries != design.countries:
        raise DataError("weight countries do not match design countries")
    if weights.w.shape != (t_len, n, n):
        raise DataError(f"weight matrices have shape {weights.w.shape}, expected "
                        f"({t_len}, {n}, {n})")


def log_likelihood(theta, err, design, weights):
    """Exact log-likelihood of the panel at the given parameters.

    Parameters
    ----------
    theta : (M, P) array of regression coefficients per equation.
    err : ErrorParams with lam (M,), phi (M,), sigma (M, M).
    design : DesignMatrices with y (N, T, M) and X (N, T, P).
    weights : SpatialWeights aligned with the design.

    Returns
    -------
    float log-likelihood.  Raises ModelError outside the parameter domain.
    """
    _check_weights(design, weights)
    y, x = design.y, design.X
    n, t_len, m = y.shape
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (m, x.shape[2]):
        raise ModelError(f"theta must have shape ({m}, {x.shape[2]}), got {theta.shape}")
    err.validate(m)

    u = y - np.einsum("ntp,jp->ntj", x, theta)
    e = np.empty_like(u)
    logdet = 0.0
    for j in range(m):
        logdet += spatial_logdet(weights.w, err.lam[j])
        e[:, :, j] = _filter(u[:, :, j], weights.w, err.lam[j], err.phi[j])

    chol = _chol_lower(np.asarray(err.sigma, dtype=float))
    z = scipy.linalg.solve_triangular(chol, e.reshape(-1, m).T, lower=True)
    quad = float(np.sum(z * z))
    ld_sigma = 2.0 * float(np.sum(np.log(np.diag(chol))))
    nt = n * t_len
    return -0.5 * nt * m * np.log(2.0 * np.pi) - 0.5 * nt * ld_sigma + logdet - 0.5 * quad


def filter_design(design, weights, lam, phi):
    """Filtered responses and regressors per equation.

    Returns (yf (M, NT), xf (M, NT, P), logdet) where rows are stacked
    period-major so that row t*N + i matches across equations, and logdet is
    the summed spatial log-determinant term.
    """
    y, x = design.y, design.X
    n, t_len, m = y.shape
    p = x.shape[2]
    yf = np.empty((m, t_len * n))
    xf = np.empty((m, t_len * n, p))
    logdet = 0.0
    for j in range(m):
        logdet += spatial_logdet(weights.w, lam[j])
        yf[j] = _filter(y[:, :, j], weights.w, lam[j], phi[j]).T.reshape(-1)
        xf[j] = _filter(x, weights.w, lam[j], phi[j]).transpose(1, 0, 2).reshape(-1, p)
    return yf, xf, logdet


def _slogdet_cov(sigma):
    sign, ld = np.linalg.slogdet(sigma)
    if sign <= 0 or not np.isfinite(ld):
        raise ModelError("concentrated covariance became singular")
    return ld


def profile_theta_sigma(yf, xf, full_sigma, tol=1e-12, max_iter=500):
    """Concentrated coefficients and covariance at fixed filters.

    With a diagonal covariance the system decouples into per-equation least
    squares, solved in one pass.  The full case starts from that solution
    and alternates the two closed-form updates (GLS coefficients given
    Sigma, mean outer product of innovations given coefficients); each step
    does not decrease the likelihood, so iterating from the diagonal
    optimum yields a value at least as high.  At the covariance update the
    concentrated likelihood depends on Sigma only through det Sigma, which
    the alternation drives down monotonically, so the iteration stops once
    log det Sigma no longer falls by more than tol.

    Returns (theta (M, P), sigma (M, M), innovations (NT, M)).
    """
    m, nt, p = xf.shape
    theta = np.empty((m, p))
    for j in range(m):
        theta[j], *_ = np.linalg.lstsq(xf[j], yf[j], rcond=None)
    resid = yf - np.einsum("jnp,jp->jn", xf, theta)
    if not full_sigma:
        sigma = np.diag((resid * resid).mean(axis=1))
        return theta, sigma, resid.T.copy()

    sigma = (resid @ resid.T) / nt
    xs = xf.transpose(1, 0, 2).reshape(nt, m * p)
    gram = xs.T @ xs  # (j*P+a, l*P+b) block = xf_j' xf_l
    xty = np.einsum("jnp,ln->jlp", xf, yf)  # xty[j, l] = xf_j' yf_l
    ones = np.ones((p, p))
    prev_ld = _slogdet_cov(sigma)
    for _ in range(max_iter):
        try:
            s_inv = np.linalg.inv(sigma)
        except np.linalg.LinAlgError:
            raise ModelError("concentrated covariance became singular") from None
        lhs = gram * np.kron(s_inv, ones)
        rhs = np.einsum("jl,jlp->jp", s_inv, xty).reshape(-1)
        try:
            factor = scipy.linalg.cho_factor(lhs, lower=True, check_finite=False)
            theta_new = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
        except scipy.linalg.LinAlgError:
            theta_new, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
        resid_new = yf - np.einsum("jnp,jp->jn", xf, theta_new.reshape(m, p))
        sigma_new = (resid_new @ resid_new.T) / nt
        ld = _slogdet_cov(sigma_new)
        if ld > prev_ld:
            break  # numerical noise floor reached; keep the previous iterate
        theta, sigma, resid = theta_new.reshape(m, p), sigma_new, resid_new
        done = prev_ld - ld <= tol * max(1.0, abs(ld))
        prev_ld = ld
        if done:
            break
    return theta, sigma, resid.T.copy()


def loglik_at(sigma, innovations, logdet):
    """Log-likelihood from innovations and a covariance, plus the spatial term."""
    nt, m = innovations.shape
    chol = _chol_lower(sigma)
    z = scipy.linalg.solve_triangular(chol, innovations.T, lower=True)
    quad = float(np.sum(z * z))
    ld_sigma = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return -0.5 * nt * m * np.log(2.0 * np.pi) - 0.5 * nt * ld_sigma + logdet - 0.5 * quad


def profiled_loglik(design, weights, lam, phi, full_sigma, tol=1e-12, max_iter=500):
    """Profile out coefficients and covariance at fixed (lam, phi).

    Returns (loglik, theta, sigma, innovations (NT, M)).
    """
    yf, xf, logdet = filter_design(design, weights, lam, phi)
    theta, sigma, innov = profile_theta_sigma(yf, xf, full_sigma, tol, max_iter)
    return loglik_at(sigma, innov, logdet), theta, sigma, innov


@dataclass(frozen=True)
class ParamPacking:
    """Layout of the unconstrained transformed parameter vector.

    Order: coefficients row-major by equation, then atanh(lam) if spatial is
    free, then atanh(phi) if serial is free, then the covariance: the lower
    Cholesky factor row-major with logged diagonal for the full case, or the
    per-equation log standard deviations for the diagonal case.
    """

    n_eq: int
    n_reg: int
    spatial: bool
    serial: bool
    full_sigma: bool

    @property
    def n_sigma(self):
        m = self.n_eq
        return m * (m + 1) // 2 if self.full_sigma else m

    @property
    def size(self):
        m = self.n_eq
        return (
            m * self.n_reg
            + (m if self.spatial else 0)
            + (m if self.serial else 0)
            + self.n_sigma
        )

    def pack(self, theta, lam, phi, sigma):
        parts = [np.asarray(theta, dtype=float).ravel()]
        if self.spatial:
            parts.append(np.arctanh(np.asarray(lam, dtype=float)))
        if self.serial:
            parts.append(np.arctanh(np.asarray(phi, dtype=float)))
        if self.full_sigma:
            chol = _chol_lower(np.asarray(sigma, dtype=float))
            tri = []
            for r in range(self.n_eq):
                tri.extend(chol[r, :r])
                tri.append(np.log(chol[r, r]))
            parts.append(np.array(tri))
        else:
            parts.append(0.5 * np.log(np.diag(np.asarray(sigma, dtype=float))))
        return np.concatenate(parts)

    def unpack(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.size,):
            raise ModelError(f"packed vector has shape {v.shape}, expected ({self.size},)")
        m, p = self.n_eq, self.n_reg
        pos = m * p
        theta = v[:pos].reshape(m, p)
        lam = np.zeros(m)
        phi = np.zeros(m)
        if self.spatial:
            lam = np.tanh(v[pos:pos + m])
            pos += m
        if self.serial:
            phi = np.tanh(v[pos:pos + m])
            pos += m
        if self.full_sigma:
            chol = np.zeros((m, m))
            for r in range(m):
                chol[r, :r] = v[pos:pos + r]
                chol[r, r] = np.exp(v[pos + r])
                pos += r + 1
            sigma = chol @ chol.T
        else:
            sigma = np.diag(np.exp(2.0 * v[pos:pos + m]))
        return theta, lam, phi, sigma


class PackedLoglik:
    """Full log-likelihood over the packed transformed vector.

    Filtered designs depend only on (lam, phi), so they are cached; sweeps
    that move only coefficients or covariance entries, the bulk of a
    finite-difference Hessian, reuse the cached filter.
    """

    def __init__(self, design, weights, packing):
        _check_weights(design, weights)
        self.design = design
        self.weights = weights
        self.packing = packing
        self._cache = {}

    def __call__(self, v):
        theta, lam, phi, sigma = self.packing.unpack(v)
        key = (lam.tobytes(), phi.tobytes())
        cached = self._cache.get(key)
        if cached is None:
            if len(self._cache) > 256:
                self._cache.clear()
            cached = filter_design(self.design, self.weights, lam, phi)
            self._cache[key] = cached
        yf, xf, logdet = cached
        innov = (yf - np.einsum("jnp,jp->jn", xf, theta)).T
        return loglik_at(sigma, innov, logdet)


def central_hessian(fn, x, rel_step=1e-4):
    """Numerical Hessian of a scalar function by central differences.

    Per-coordinate step h_i = rel_step * max(1, |x_i|).  The result is
    symmetrised by construction.
    """
    x = np.asarray(x, dtype=float)
    k = x.size
    h = rel_step * np.maximum(1.0, np.abs(x))
    hess = np.empty((k, k))
    f0 = fn(x)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        hess[i, i] = (fn(x + ei) + fn(x - ei) - 2.0 * f0) / (h[i] * h[i])
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            fpp = fn(x + ei + ej)
            fpm = fn(x + ei - ej)
            fmp = fn(x - ei + ej)
            fmm = fn(x - ei - ej)
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j])
    return hess
