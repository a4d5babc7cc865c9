"""Cross-validated choice of basis size and ridge penalty.

The criterion mean(t * theta^2) - 2 * mean(u * theta) ranks candidates like
the (denominator-weighted) mean squared error whenever the denominator
function is strictly positive, without requiring the unobservable target.
Selection therefore refuses to run unless the caller declares positivity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .basis import BasisMatrix, BasisSpec, basis_dim, eval_matrix
from .crossfit import make_folds
from .errors import ConfigError, DataError, NumericError, SingularSystemError
from .estimator import fit_series_ratio_split
from .numerics import SeededRng

POSITIVITY_REFUSAL = (
    "model selection by the ratio CV criterion is only valid when the "
    "denominator function is strictly positive; declare "
    "denominator_positive=true if that holds a priori, or fix (k, lambda) "
    "manually")


@dataclass(frozen=True)
class Candidate:
    basis: BasisSpec
    lam: float

    @property
    def k(self) -> int:
        return basis_dim(self.basis)


@dataclass
class SelectionResult:
    chosen: Candidate
    scores: list  # one dict per candidate: k, degree, lam, score, excluded
    folds: int


def cv_criterion(theta_hat, u, t) -> float:
    """mean(t * theta^2) - 2 * mean(u * theta); rank-equivalent to MSE
    for positive denominators. The u- and t-blocks may have different
    lengths when the samples are separate."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    u = np.asarray(u, dtype=float)
    t = np.asarray(t, dtype=float)
    if theta_hat.shape != u.shape or u.shape != t.shape:
        raise ValueError("cv_criterion expects equal-length vectors")
    if u.size == 0:
        raise DataError("empty validation fold")
    return float(np.mean(t * theta_hat ** 2) - 2.0 * np.mean(u * theta_hat))


def _split_criterion(theta_u, u, theta_t, t) -> float:
    if u.size == 0 or t.size == 0:
        raise DataError("empty validation fold")
    return float(np.mean(t * theta_t ** 2) - 2.0 * np.mean(u * theta_u))


def select_model(candidates, u, t, v_u, v_t=None, *, folds: int,
                 rng: SeededRng, denominator_positive: bool,
                 signal_builder=None) -> SelectionResult:
    """Pick the candidate minimizing the cross-validated criterion.

    ``(v_u, u)`` is the numerator sample and ``(v_t, t)`` the denominator
    sample; leave ``v_t`` as None for joint data (both signals on the same
    rows, one shared fold plan). ``signal_builder``, when given, maps a
    candidate to its own (u, t) vectors (same rows and lengths as the
    defaults) so the signal construction can depend on the candidate; fold
    plans are shared across candidates either way. Ties break toward the
    smallest basis, then the smallest lambda. Candidates with a non-finite
    score (or a singular fold fit) are excluded with a warning.
    """
    if not denominator_positive:
        raise ConfigError(POSITIVITY_REFUSAL)
    candidates = list(candidates)
    if not candidates:
        raise ConfigError("select_model needs at least one candidate")
    u = np.asarray(u, dtype=float)
    t = np.asarray(t, dtype=float)
    joint = v_t is None
    if joint and u.shape != t.shape:
        raise ValueError("joint selection needs equal-length u and t")

    plan_u = make_folds(len(u), folds, rng.child(1))
    plan_t = plan_u if joint else make_folds(len(t), folds, rng.child(2))

    rows = []
    for cand in candidates:
        if signal_builder is None:
            u_c, t_c = u, t
        else:
            u_c, t_c = signal_builder(cand)
            u_c = np.asarray(u_c, dtype=float)
            t_c = np.asarray(t_c, dtype=float)
            if u_c.shape != u.shape or t_c.shape != t.shape:
                raise ValueError("signal_builder must keep signal lengths")
        pu = eval_matrix(cand.basis, v_u)
        pt = pu if joint else eval_matrix(cand.basis, v_t)
        score = 0.0
        excluded = False
        try:
            for f in range(folds):
                tr_u = plan_u.assignment != f
                tr_t = plan_t.assignment != f
                fit = fit_series_ratio_split(
                    BasisMatrix(pu[tr_u], cand.basis), u_c[tr_u],
                    BasisMatrix(pt[tr_t], cand.basis), t_c[tr_t], cand.lam)
                score += _split_criterion(
                    pu[~tr_u] @ fit.beta, u_c[~tr_u],
                    pt[~tr_t] @ fit.beta, t_c[~tr_t])
            score /= folds
            if not np.isfinite(score):
                raise NumericError("non-finite CV score")
        except (SingularSystemError, NumericError) as err:
            warnings.warn(
                f"candidate (k={cand.k}, lam={cand.lam}) excluded: {err}",
                stacklevel=2)
            excluded = True
            score = float("nan")
        rows.append({"k": cand.k, "degree": cand.basis.max_degree,
                     "lam": cand.lam, "score": score, "excluded": excluded})

    viable = [(row["score"], cand.k, cand.lam, cand)
              for row, cand in zip(rows, candidates) if not row["excluded"]]
    if not viable:
        raise NumericError("model selection failed: every candidate was excluded")
    _, _, _, best = min(viable, key=lambda item: (item[0], item[1], item[2]))
    return SelectionResult(chosen=best, scores=rows, folds=folds)
