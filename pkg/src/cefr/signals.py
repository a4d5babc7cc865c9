"""Per-observation orthogonal signals for each supported estimand.

Every signal is assembled from the doubly robust correction
``m + 1{cell} * (response - m) / prob``: a plug-in regression term plus an
inverse-probability-weighted residual. Cell probabilities always pass
through trimming before they reach a denominator.

Estimand catalog (U identifies the numerator, T the denominator):

* ``LATE``             instrumented contrast of Y over Z, and of D over Z.
* ``RATIO_CATE``       treated-arm mean of Y over control-arm mean of Y.
* ``ALT_RATIO_CATE``   difference over sum of the two arm corrections.
* ``RATIO_LATE``       instrumented contrasts of DY and of (1-D)Y.
* ``ALT_RATIO_LATE``   instrumented contrasts of Y and of (2D-1)Y.
* ``IDID``             signed (time, assignment)-cell sum, four cells.
* ``DATA_COMB``        mixed-column contrasts across regimes; outcome
                       corrections use dataset H=1, treatment H=0.
* ``TWO_SAMPLE_LATE``  like LATE but Y and D live in separate datasets.
* ``TWO_SAMPLE_IDID``  signed cell sum with eight (H, W, Z) cells.
* ``RAW``              u and t observed directly; no nuisances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import ColumnFrame, ColumnMapping
from .errors import ConfigError, NumericError
from .nuisance import FittedModel, clip_probability, predict

ESTIMANDS = ("LATE", "RATIO_CATE", "ALT_RATIO_CATE", "RATIO_LATE",
             "ALT_RATIO_LATE", "IDID", "DATA_COMB", "TWO_SAMPLE_LATE",
             "TWO_SAMPLE_IDID", "RAW")


@dataclass(frozen=True)
class SignalSpec:
    estimand: str
    trim_eps: float = 0.01

    def __post_init__(self):
        if self.estimand not in ESTIMANDS:
            raise ConfigError(
                f"unknown estimand {self.estimand!r}; expected one of {ESTIMANDS}")
        if not 0.0 < self.trim_eps < 0.5:
            raise ConfigError("trim_eps must be in (0, 0.5)")


@dataclass
class NuisanceSet:
    """Fitted nuisances keyed by arm: outcome mu-hat, treatment pi-hat,
    and a single (binary or multi-class) cell-probability model."""

    outcome_models: dict = field(default_factory=dict)
    treatment_models: dict = field(default_factory=dict)
    propensity_model: FittedModel | None = None


@dataclass
class SignalPair:
    """Orthogonal signals with the fold that produced each row."""

    u: np.ndarray
    t: np.ndarray
    fold_id: np.ndarray


@dataclass(frozen=True)
class EstimandPlan:
    """What an estimand needs: mapping roles, nuisance arms, cell classes.

    ``propensity_classes`` is 0 when no probability model is needed, 2 for
    a binary score, and 4/8 for cell posteriors. ``cell_roles`` names the
    mapping roles (in label-significance order) that define the cells.
    """

    roles: tuple
    outcome_arms: tuple
    treatment_arms: tuple
    propensity_classes: int
    cell_roles: tuple = ()


_PLANS = {
    "LATE": EstimandPlan(("outcome", "treatment", "instrument"),
                         (1, 0), (1, 0), 2, ("instrument",)),
    "RATIO_CATE": EstimandPlan(("outcome", "treatment"),
                               (1, 0), (), 2, ("treatment",)),
    "ALT_RATIO_CATE": EstimandPlan(("outcome", "treatment"),
                                   (1, 0), (), 2, ("treatment",)),
    "RATIO_LATE": EstimandPlan(("outcome", "treatment", "instrument"),
                               (1, 0), (1, 0), 2, ("instrument",)),
    "ALT_RATIO_LATE": EstimandPlan(("outcome", "treatment", "instrument"),
                                   (1, 0), (1, 0), 2, ("instrument",)),
    "IDID": EstimandPlan(("outcome", "treatment", "instrument", "time"),
                         ((0, 0), (0, 1), (1, 0), (1, 1)),
                         ((0, 0), (0, 1), (1, 0), (1, 1)),
                         4, ("time", "instrument")),
    "DATA_COMB": EstimandPlan(("outcome", "time", "dataset_indicator"),
                              (1, 0), (1, 0), 4,
                              ("dataset_indicator", "time")),
    "TWO_SAMPLE_LATE": EstimandPlan(("outcome", "instrument", "dataset_indicator"),
                                    (1, 0), (1, 0), 4,
                                    ("dataset_indicator", "instrument")),
    "TWO_SAMPLE_IDID": EstimandPlan(
        ("outcome", "instrument", "time", "dataset_indicator"),
        ((0, 0), (0, 1), (1, 0), (1, 1)),
        ((0, 0), (0, 1), (1, 0), (1, 1)),
        8, ("dataset_indicator", "time", "instrument")),
    "RAW": EstimandPlan(("numerator", "denominator"), (), (), 0),
}


def estimand_plan(estimand: str) -> EstimandPlan:
    return _PLANS[estimand]


def required_columns(spec: SignalSpec, mapping: ColumnMapping) -> dict:
    """Role -> column name for the estimand; raises if a role is unmapped."""
    plan = estimand_plan(spec.estimand)
    out = {}
    missing = []
    for role in plan.roles:
        name = getattr(mapping, role)
        if name is None:
            missing.append(role)
        else:
            out[role] = name
    if missing:
        raise ConfigError(
            f"estimand {spec.estimand} needs mapping roles {missing}")
    return out


def dr_correction(m, indicator, response, prob):
    """Doubly robust correction m + indicator * (response - m) / prob.

    ``prob`` must already be trimmed strictly inside (0, 1).
    """
    m = np.asarray(m, dtype=float)
    prob = np.asarray(prob, dtype=float)
    if np.any(prob <= 0.0) or np.any(prob >= 1.0):
        raise NumericError(
            "dr_correction received an untrimmed probability outside (0, 1)")
    return m + np.asarray(indicator, dtype=float) * (
        np.asarray(response, dtype=float) - m) / prob


def arm_condition(estimand: str, kind: str, arm, cols: dict) -> np.ndarray:
    """Row mask on which the (kind, arm) nuisance regression is defined."""
    if estimand in ("LATE", "RATIO_LATE", "ALT_RATIO_LATE"):
        return cols["instrument"] == arm
    if estimand in ("RATIO_CATE", "ALT_RATIO_CATE"):
        return cols["treatment"] == arm
    if estimand == "IDID":
        w, z = arm
        return (cols["time"] == w) & (cols["instrument"] == z)
    if estimand == "DATA_COMB":
        h = 1 if kind == "outcome" else 0
        return (cols["dataset_indicator"] == h) & (cols["time"] == arm)
    if estimand == "TWO_SAMPLE_LATE":
        h = 1 if kind == "outcome" else 0
        return (cols["dataset_indicator"] == h) & (cols["instrument"] == arm)
    if estimand == "TWO_SAMPLE_IDID":
        h = 1 if kind == "outcome" else 0
        w, z = arm
        return ((cols["dataset_indicator"] == h) & (cols["time"] == w)
                & (cols["instrument"] == z))
    raise ConfigError(f"estimand {estimand} has no {kind} arms")


def arm_target(estimand: str, kind: str, cols: dict) -> np.ndarray:
    """Regression target for the (kind, arm) nuisance fits."""
    y = cols["outcome"]
    if estimand == "RATIO_LATE":
        d = cols["treatment"]
        return d * y if kind == "outcome" else (1.0 - d) * y
    if estimand == "ALT_RATIO_LATE":
        d = cols["treatment"]
        return y if kind == "outcome" else (2.0 * d - 1.0) * y
    if estimand in ("LATE", "IDID"):
        return y if kind == "outcome" else cols["treatment"]
    # ratio CATE variants and all mixed-column settings regress the outcome
    # column itself (restricted to the relevant dataset/arm rows)
    return y


def cell_labels(estimand: str, cols: dict) -> np.ndarray:
    """Integer class labels for the cell-probability model."""
    plan = estimand_plan(estimand)
    if plan.propensity_classes == 2:
        return cols[plan.cell_roles[0]].astype(np.int64)
    label = np.zeros(len(cols[plan.cell_roles[0]]), dtype=np.int64)
    for role in plan.cell_roles:
        label = 2 * label + cols[role].astype(np.int64)
    return label


def validate_nuisances(spec: SignalSpec, nuis: NuisanceSet) -> None:
    plan = estimand_plan(spec.estimand)
    if set(nuis.outcome_models) != set(plan.outcome_arms):
        raise ConfigError(
            f"{spec.estimand}: outcome models for arms "
            f"{sorted(map(str, plan.outcome_arms))} required, got "
            f"{sorted(map(str, nuis.outcome_models))}")
    if set(nuis.treatment_models) != set(plan.treatment_arms):
        raise ConfigError(
            f"{spec.estimand}: treatment models for arms "
            f"{sorted(map(str, plan.treatment_arms))} required, got "
            f"{sorted(map(str, nuis.treatment_models))}")
    if plan.propensity_classes and nuis.propensity_model is None:
        raise ConfigError(f"{spec.estimand}: propensity model required")


def _cell_probs(model, x, n_classes: int, eps: float) -> np.ndarray:
    """(m, n_classes) trimmed cell probabilities from a fitted classifier."""
    p = predict(model, x)
    if n_classes == 2:
        p = np.asarray(p, dtype=float)
        if p.ndim != 1:
            raise ConfigError("binary propensity model must predict a vector")
        p = clip_probability(p, eps)
        return np.column_stack([1.0 - p, p])
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[1] != n_classes:
        raise ConfigError(
            f"cell propensity model must predict {n_classes} columns")
    return clip_probability(p, eps)


def build_signals(spec: SignalSpec, frame: ColumnFrame, mapping: ColumnMapping,
                  nuis: NuisanceSet, row_indices) -> SignalPair:
    """Signals for the selected rows, evaluated with the given nuisances.

    fold_id is zero-filled here; cross-fitting overwrites it per fold.
    """
    est = spec.estimand
    names = required_columns(spec, mapping)
    rows = np.asarray(row_indices)
    cols = {role: frame.column(name)[rows] for role, name in names.items()}

    if est == "RAW":
        return SignalPair(u=cols["numerator"].copy(),
                          t=cols["denominator"].copy(),
                          fold_id=np.zeros(len(rows), dtype=np.int64))

    validate_nuisances(spec, nuis)
    x = frame.subvector(mapping.covariates)[rows]
    plan = estimand_plan(est)
    mu = {arm: predict(nuis.outcome_models[arm], x) for arm in plan.outcome_arms}
    pi = {arm: predict(nuis.treatment_models[arm], x)
          for arm in plan.treatment_arms}
    probs = _cell_probs(nuis.propensity_model, x, plan.propensity_classes,
                        spec.trim_eps)

    y = cols["outcome"]
    if est in ("LATE", "ALT_RATIO_LATE", "RATIO_LATE"):
        z = cols["instrument"]
        d = cols["treatment"]
        rho = probs[:, 1]
        if est == "LATE":
            resp_u, resp_t = y, d
            u = (dr_correction(mu[1], z, resp_u, rho)
                 - dr_correction(mu[0], 1.0 - z, resp_u, 1.0 - rho))
            t = (dr_correction(pi[1], z, resp_t, rho)
                 - dr_correction(pi[0], 1.0 - z, resp_t, 1.0 - rho))
        elif est == "ALT_RATIO_LATE":
            resp_t = (2.0 * d - 1.0) * y
            u = (dr_correction(mu[1], z, y, rho)
                 - dr_correction(mu[0], 1.0 - z, y, 1.0 - rho))
            t = (dr_correction(pi[1], z, resp_t, rho)
                 - dr_correction(pi[0], 1.0 - z, resp_t, 1.0 - rho))
        else:  # RATIO_LATE
            resp_u = d * y
            resp_t = (1.0 - d) * y
            u = (dr_correction(mu[1], z, resp_u, rho)
                 - dr_correction(mu[0], 1.0 - z, resp_u, 1.0 - rho))
            t = (dr_correction(pi[0], 1.0 - z, resp_t, 1.0 - rho)
                 - dr_correction(pi[1], z, resp_t, rho))
    elif est in ("RATIO_CATE", "ALT_RATIO_CATE"):
        d = cols["treatment"]
        prop = probs[:, 1]
        treated = dr_correction(mu[1], d, y, prop)
        control = dr_correction(mu[0], 1.0 - d, y, 1.0 - prop)
        if est == "RATIO_CATE":
            u, t = treated, control
        else:
            u, t = treated - control, treated + control
    elif est == "IDID":
        z = cols["instrument"]
        w = cols["time"]
        d = cols["treatment"]
        u = np.zeros(len(rows))
        t = np.zeros(len(rows))
        for (wv, zv) in plan.outcome_arms:
            sign = -1.0 if (wv + zv) % 2 else 1.0
            ind = ((w == wv) & (z == zv)).astype(float)
            cell = probs[:, 2 * wv + zv]
            u += sign * dr_correction(mu[(wv, zv)], ind, y, cell)
            t += sign * dr_correction(pi[(wv, zv)], ind, d, cell)
    elif est in ("DATA_COMB", "TWO_SAMPLE_LATE"):
        h = cols["dataset_indicator"]
        arm_col = cols["time"] if est == "DATA_COMB" else cols["instrument"]
        # cell label order: (H, arm) with H the high bit
        u = (dr_correction(mu[1], h * arm_col, y, probs[:, 3])
             - dr_correction(mu[0], h * (1.0 - arm_col), y, probs[:, 2]))
        t = (dr_correction(pi[1], (1.0 - h) * arm_col, y, probs[:, 1])
             - dr_correction(pi[0], (1.0 - h) * (1.0 - arm_col), y, probs[:, 0]))
    elif est == "TWO_SAMPLE_IDID":
        h = cols["dataset_indicator"]
        w = cols["time"]
        z = cols["instrument"]
        u = np.zeros(len(rows))
        t = np.zeros(len(rows))
        for (wv, zv) in plan.outcome_arms:
            sign = -1.0 if (wv + zv) % 2 else 1.0
            ind_u = (h * (w == wv) * (z == zv)).astype(float)
            ind_t = ((1.0 - h) * (w == wv) * (z == zv)).astype(float)
            u += sign * dr_correction(mu[(wv, zv)], ind_u, y,
                                      probs[:, 4 + 2 * wv + zv])
            t += sign * dr_correction(pi[(wv, zv)], ind_t, y,
                                      probs[:, 2 * wv + zv])
    else:  # pragma: no cover - estimand list is closed
        raise ConfigError(f"unhandled estimand {est}")

    return SignalPair(u=u, t=t, fold_id=np.zeros(len(rows), dtype=np.int64))
