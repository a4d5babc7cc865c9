"""G-fold partitioning and out-of-fold signal construction.

For each fold, every nuisance is fit on the complement only (outcome and
treatment models on the complement rows with the relevant arm value) and
signals for the fold's rows are evaluated with those models, so no model
ever scores its own training rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._parallel import parallel_map
from .dataset import ColumnFrame, ColumnMapping
from .errors import ConfigError, DegenerateFoldError
from .nuisance import LearnerSpec, fit
from .numerics import SeededRng
from .signals import (NuisanceSet, SignalPair, SignalSpec, arm_condition,
                      arm_target, build_signals, cell_labels, estimand_plan,
                      required_columns)


@dataclass(frozen=True)
class FoldPlan:
    """Balanced random fold assignment, deterministic in (n, g, seed)."""

    n: int
    g_folds: int
    assignment: np.ndarray


def make_folds(n: int, g: int, rng: SeededRng) -> FoldPlan:
    """Uniform random partition into g folds with sizes differing by <= 1."""
    if g < 2 or g > n:
        raise ConfigError(f"fold count must satisfy 2 <= g <= n, got g={g}, n={n}")
    assignment = np.empty(n, dtype=np.int64)
    assignment[rng.permutation(n)] = np.arange(n) % g
    return FoldPlan(n=n, g_folds=g, assignment=assignment)


def _required_roles(plan) -> list:
    roles = []
    if plan.outcome_arms:
        roles.append("outcome")
    if plan.treatment_arms:
        roles.append("treatment")
    if plan.propensity_classes:
        roles.append("propensity")
    return roles


def _fit_fold_nuisances(g, comp, spec, cols, x, learners, rng):
    est = spec.estimand
    plan = estimand_plan(est)
    nuis = NuisanceSet()
    for kind, arms, models in (
            ("outcome", plan.outcome_arms, nuis.outcome_models),
            ("treatment", plan.treatment_arms, nuis.treatment_models)):
        target = arm_target(est, kind, cols) if arms else None
        kind_idx = 0 if kind == "outcome" else 1
        for slot, arm in enumerate(arms):
            mask = comp & arm_condition(est, kind, arm, cols)
            if mask.sum() < 2:
                raise DegenerateFoldError(
                    f"fold {g}: complement has {int(mask.sum())} rows for "
                    f"{kind} arm {arm}; need at least 2")
            models[arm] = fit(learners[kind], x[mask], target[mask],
                              rng.child(2 * slot + kind_idx + 1))
    if plan.propensity_classes:
        labels = cell_labels(est, cols)
        c = plan.propensity_classes
        present = np.bincount(labels[comp], minlength=c) > 0
        if not present.all():
            empty = int(np.flatnonzero(~present)[0])
            raise DegenerateFoldError(
                f"fold {g}: no complement rows for propensity cell {empty} "
                f"of {c}")
        nuis.propensity_model = fit(learners["propensity"], x[comp],
                                    labels[comp].astype(float),
                                    rng.child(997), n_classes=c)
    return nuis


def crossfit_signals(spec: SignalSpec, frame: ColumnFrame,
                     mapping: ColumnMapping, learners: dict,
                     plan: FoldPlan, rng: SeededRng,
                     n_jobs: int = 1) -> SignalPair:
    """Cross-fitted orthogonal signals for every row of the frame."""
    if plan.n != frame.n_rows:
        raise ConfigError("fold plan does not match the frame's row count")
    est_plan = estimand_plan(spec.estimand)
    names = required_columns(spec, mapping)

    if spec.estimand == "RAW":
        pair = build_signals(spec, frame, mapping, NuisanceSet(),
                             np.arange(frame.n_rows))
        pair.fold_id = plan.assignment.copy()
        return pair

    missing = [r for r in _required_roles(est_plan) if r not in learners]
    if missing:
        raise ConfigError(
            f"estimand {spec.estimand} needs learners for roles {missing}")
    for role, lspec in learners.items():
        if not isinstance(lspec, LearnerSpec):
            raise ConfigError(f"learner for role {role!r} is not a LearnerSpec")

    cols = {role: frame.column(name) for role, name in names.items()}
    x = frame.subvector(mapping.covariates)

    def one_fold(g: int):
        comp = plan.assignment != g
        nuis = _fit_fold_nuisances(g, comp, spec, cols, x, learners,
                                   rng.child(1000 + g))
        rows = np.flatnonzero(~comp)
        pair = build_signals(spec, frame, mapping, nuis, rows)
        return rows, pair.u, pair.t

    u = np.empty(frame.n_rows)
    t = np.empty(frame.n_rows)
    for rows, u_g, t_g in parallel_map(one_fold, list(range(plan.g_folds)),
                                       n_jobs=n_jobs):
        u[rows] = u_g
        t[rows] = t_g
    return SignalPair(u=u, t=t, fold_id=plan.assignment.copy())
