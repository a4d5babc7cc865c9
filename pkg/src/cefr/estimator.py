"""Series-ratio second stage.

Fits beta solving (E_N[p p' t] + lam I) beta = E_N[p u]. The same closed
form serves the direct estimator on raw signals and the orthogonal
estimator on cross-fitted signals, and the two moment blocks may come from
separately observed samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisMatrix, BasisSpec, eval_matrix
from .errors import SingularSystemError
from .numerics import SymMatrix, solve_sym


@dataclass(frozen=True)
class SeriesRatioFit:
    """Fitted series ratio: coefficients plus the pieces inference needs.

    ``q_hat`` is stored unregularized even when lam > 0 was used for beta.
    ``n`` is the numerator-sample size (equal to the joint sample size when
    both moment blocks come from the same rows).
    """

    beta: np.ndarray
    q_hat: SymMatrix
    lam: float
    basis: BasisSpec
    n: int


def fit_series_ratio_split(p_u: BasisMatrix, u, p_t: BasisMatrix, t,
                           lam: float = 0.0) -> SeriesRatioFit:
    """Fit from separately observed numerator and denominator samples.

    ``p_u`` pairs with ``u`` and ``p_t`` with ``t``; when both pairs are the
    same arrays this is exactly the joint-sample fit.
    """
    if p_u.spec != p_t.spec:
        raise ValueError("numerator and denominator bases must match")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    u = np.asarray(u, dtype=float)
    t = np.asarray(t, dtype=float)
    if u.shape != (p_u.n,) or t.shape != (p_t.n,):
        raise ValueError("signal lengths must match their basis rows")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(t))):
        raise ValueError("signals must be finite")
    k = p_u.k
    if p_u.n < k or p_t.n < k:
        raise ValueError(f"need at least k={k} rows in each sample")

    moment = p_u.values.T @ u / p_u.n
    q = (p_t.values * t[:, None]).T @ p_t.values / p_t.n
    q_hat = SymMatrix(q)
    system = SymMatrix(q_hat.values + lam * np.eye(k))
    try:
        beta = solve_sym(system, moment)
    except SingularSystemError as err:
        hint = (" (try a positive ridge lambda or a smaller basis)"
                if lam == 0.0 else "")
        raise SingularSystemError(f"series-ratio system singular{hint}: {err}") from err
    return SeriesRatioFit(beta=beta, q_hat=q_hat, lam=lam,
                          basis=p_u.spec, n=p_u.n)


def fit_series_ratio(p: BasisMatrix, u, t, lam: float = 0.0) -> SeriesRatioFit:
    """Fit from a joint sample supplying both signals on the same rows."""
    return fit_series_ratio_split(p, u, p, t, lam)


def predict_theta(fit: SeriesRatioFit, v_grid) -> np.ndarray:
    """Evaluate the fitted function p(v)'beta at each grid row."""
    return eval_matrix(fit.basis, v_grid) @ fit.beta
