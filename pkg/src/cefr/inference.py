"""Covariance estimation and pointwise/uniform confidence bands.

The covariance sandwich uses the unregularized denominator matrix even when
ridge was used for the coefficients (the bands are then approximate). The
uniform critical value is the empirical (1-delta)-quantile of the sup over
the grid of the absolute studentized Gaussian-bootstrap process; the
pointwise one is the two-sided normal quantile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .basis import BasisSpec, eval_matrix
from .errors import ConfigError, DegenerateVarianceError
from .estimator import SeriesRatioFit
from .numerics import SeededRng, SymMatrix, psd_sqrt, solve_sym

SIGMA_FLOOR = 1e-12
_BOOT_BLOCK = 65536


@dataclass
class InferenceReport:
    """Everything needed to plot or re-derive the fitted bands."""

    omega: SymMatrix
    grid: np.ndarray
    theta_grid: np.ndarray
    sigma_grid: np.ndarray
    pointwise_lo: np.ndarray
    pointwise_hi: np.ndarray
    uniform_lo: np.ndarray
    uniform_hi: np.ndarray
    critical_pointwise: float
    critical_uniform: float
    delta: float
    b_draws: int
    n: int


def estimate_covariance(fit: SeriesRatioFit, p, u, t) -> SymMatrix:
    """Sandwich covariance from the joint sample that produced the fit."""
    values = p.values if hasattr(p, "values") else np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    t = np.asarray(t, dtype=float)
    if values.shape[0] != u.shape[0] or u.shape != t.shape:
        raise ValueError("basis rows and signal lengths must agree")
    resid = u - t * (values @ fit.beta)
    meat = (values * (resid ** 2)[:, None]).T @ values / values.shape[0]
    half = solve_sym(fit.q_hat, meat)
    omega = solve_sym(fit.q_hat, half.T)
    return SymMatrix(omega)


def sigma_grid(omega: SymMatrix, basis: BasisSpec, grid) -> np.ndarray:
    """sqrt(p(v)' Omega p(v)) for each grid row, floored at zero."""
    pg = eval_matrix(basis, grid)
    quad = np.einsum("ij,jk,ik->i", pg, omega.values, pg)
    return np.sqrt(np.maximum(quad, 0.0))


def sigma_at(omega: SymMatrix, basis: BasisSpec, v) -> float:
    """Standard deviation of the fitted function at a single point."""
    return float(sigma_grid(omega, basis, np.atleast_2d(np.asarray(v, dtype=float)))[0])


def critical_value(omega: SymMatrix, basis: BasisSpec, grid, delta: float,
                   b: int, rng: SeededRng, mode: str) -> float:
    """Pointwise or uniform critical value at level 1-delta.

    Pointwise is the two-sided normal quantile and ignores the bootstrap
    arguments; uniform is the empirical quantile over b draws of
    sup_j |p(v_j)' Omega^{1/2} N(0, I_k)| / sigma(v_j), skipping grid points
    with sigma below SIGMA_FLOOR.
    """
    if not 0.0 < delta < 1.0:
        raise ConfigError("delta must be in (0, 1)")
    if mode == "pointwise":
        return float(norm.ppf(1.0 - delta / 2.0))
    if mode != "uniform":
        raise ConfigError(f"unknown critical value mode {mode!r}")
    if b < 100:
        raise ConfigError("uniform mode needs at least 100 bootstrap draws")
    pg = eval_matrix(basis, grid)
    if pg.shape[0] < 1:
        raise ConfigError("grid must have at least one point")
    sig = sigma_grid(omega, basis, grid)
    keep = sig >= SIGMA_FLOOR
    if not keep.any():
        raise DegenerateVarianceError(
            "every grid point has (numerically) zero variance")
    loadings = (pg[keep] @ psd_sqrt(omega)) / sig[keep, None]
    k = omega.dim
    sups = np.empty(b)
    done = 0
    while done < b:
        block = min(_BOOT_BLOCK, b - done)
        draws = rng.normal(k * block).reshape(k, block)
        sups[done:done + block] = np.abs(loadings @ draws).max(axis=0)
        done += block
    return float(np.quantile(sups, 1.0 - delta))


def confidence_band(fit: SeriesRatioFit, omega: SymMatrix, grid, delta: float,
                    b: int, rng: SeededRng) -> InferenceReport:
    """Pointwise and uniform bands p(v)'beta +- c * sigma(v) / sqrt(n)."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    theta = eval_matrix(fit.basis, grid) @ fit.beta
    sig = sigma_grid(omega, fit.basis, grid)
    c_pw = critical_value(omega, fit.basis, grid, delta, b, rng, "pointwise")
    c_un = critical_value(omega, fit.basis, grid, delta, b, rng, "uniform")
    scale = np.sqrt(fit.n)
    half_pw = c_pw * sig / scale
    half_un = c_un * sig / scale
    return InferenceReport(
        omega=omega, grid=grid, theta_grid=theta, sigma_grid=sig,
        pointwise_lo=theta - half_pw, pointwise_hi=theta + half_pw,
        uniform_lo=theta - half_un, uniform_hi=theta + half_un,
        critical_pointwise=c_pw, critical_uniform=c_un,
        delta=delta, b_draws=b, n=fit.n)


def default_grid(v_obs, size: int = 100) -> np.ndarray:
    """Equispaced grid between the 1st and 99th percentiles of observed V.

    Only defined for one-dimensional targets; multi-dimensional targets
    need a user-specified grid.
    """
    v = np.asarray(v_obs, dtype=float)
    if v.ndim == 2:
        if v.shape[1] != 1:
            raise ConfigError(
                "default grids exist only for 1-d targets; supply a grid")
        v = v[:, 0]
    lo, hi = np.quantile(v, [0.01, 0.99])
    return np.linspace(lo, hi, size)[:, None]


def band_table(report: InferenceReport) -> tuple:
    """(header, rows) for the band CSV; column order is part of the contract."""
    q = report.grid.shape[1]
    header = [f"v{i + 1}" for i in range(q)] + [
        "theta_hat", "sigma", "pw_lo", "pw_hi", "unif_lo", "unif_hi"]
    rows = []
    for j in range(report.grid.shape[0]):
        rows.append(list(report.grid[j]) + [
            report.theta_grid[j], report.sigma_grid[j],
            report.pointwise_lo[j], report.pointwise_hi[j],
            report.uniform_lo[j], report.uniform_hi[j]])
    return header, rows
