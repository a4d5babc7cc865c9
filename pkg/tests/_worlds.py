"""Synthetic worlds with known nuisance functions for signal tests.

Each world draws observations from a fully specified design, exposes the
true nuisance functions as fitted-model lookalikes, and carries a second
set of deliberately wrong nuisance functions to serve as a perturbation
direction (all probability-valued components stay strictly inside (0, 1)
along the whole mixing path).
"""

from dataclasses import dataclass

import numpy as np

from cefr.dataset import ColumnFrame, ColumnMapping
from cefr.nuisance import FittedModel
from cefr.numerics import SeededRng
from cefr.signals import NuisanceSet, SignalSpec, estimand_plan


def sigm(x):
    return 1.0 / (1.0 + np.exp(-x))


class OracleModel(FittedModel):
    """Wraps a closed-form function of the covariates as a fitted model."""

    def __init__(self, fn, feature_dim, n_classes=0):
        self.kind = "oracle"
        self.feature_dim = feature_dim
        self.n_classes = n_classes
        self.fn = fn

    def predict(self, x):
        return self.fn(self._check_features(x))


@dataclass
class World:
    estimand: str
    frame: ColumnFrame
    mapping: ColumnMapping
    spec: SignalSpec
    truth: NuisanceSet
    wrong: NuisanceSet
    nu0: callable      # numerator conditional mean, at the covariate level
    zeta0: callable
    denominator_positive: bool


def _nuisance_set(estimand, mu_fns, pi_fns, rho_fn, q, n_classes):
    plan = estimand_plan(estimand)
    return NuisanceSet(
        outcome_models={arm: OracleModel(mu_fns[arm], q)
                        for arm in plan.outcome_arms},
        treatment_models={arm: OracleModel(pi_fns[arm], q)
                          for arm in plan.treatment_arms},
        propensity_model=OracleModel(rho_fn, q, n_classes=n_classes))


def mix_nuisances(a: NuisanceSet, b: NuisanceSet, s: float) -> NuisanceSet:
    """Pointwise mixture (1-s) * a + s * b of two nuisance sets."""

    def mix_model(m0, m1):
        return OracleModel(
            lambda x, f0=m0, f1=m1: (1.0 - s) * f0.predict(x) + s * f1.predict(x),
            m0.feature_dim, n_classes=m0.n_classes)

    return NuisanceSet(
        outcome_models={k: mix_model(m, b.outcome_models[k])
                        for k, m in a.outcome_models.items()},
        treatment_models={k: mix_model(m, b.treatment_models[k])
                          for k, m in a.treatment_models.items()},
        propensity_model=(mix_model(a.propensity_model, b.propensity_model)
                          if a.propensity_model is not None else None))


def _covariates(rng, n):
    x1 = rng.normal(n)
    x2 = rng.normal(n)
    return np.column_stack([x1, x2])


def _mapping(**roles):
    return ColumnMapping(covariates=("x1", "x2"),
                         target_covariates=("x1", "x2"), **roles)


def _bump(x):
    # smooth, bounded perturbation component
    return 0.35 * np.sin(x[:, 0]) + 0.15 * np.cos(2.0 * x[:, 1])


def _prob_shift(p, x, scale=0.12):
    return np.clip(p + scale * np.tanh(x[:, 0] - 0.3 * x[:, 1]), 0.04, 0.96)


def _cells2(p_hi, p_lo):
    """Stack four-cell probabilities (hi bit, lo bit) -> (n, 4) columns."""
    return np.column_stack([
        (1 - p_hi) * (1 - p_lo), (1 - p_hi) * p_lo,
        p_hi * (1 - p_lo), p_hi * p_lo])


def make_world(estimand: str, rng: SeededRng, n: int,
               trim_eps: float = 0.01) -> World:
    builder = _BUILDERS[estimand]
    return builder(rng, n, trim_eps)


def _late_like_world(estimand, rng, n, trim_eps):
    x = _covariates(rng.child(1), n)
    rho = sigm(0.4 * x[:, 0] - 0.3 * x[:, 1])
    z = rng.child(2).bernoulli(rho)

    def p_d(zv, xv):
        return sigm(0.6 * xv[:, 0] + 1.2 * zv - 0.4)

    d = rng.child(3).bernoulli(p_d(z, x))
    a = sigm(x[:, 0] + x[:, 1])
    b = 0.5 + 0.3 * x[:, 0]
    y0 = 2.0 + sigm(x[:, 0])  # positive base level, used by the ratio forms
    eps = 0.5 * rng.child(4).normal(n)

    if estimand in ("LATE", "ALT_RATIO_LATE"):
        y = a + b * d + eps
    else:  # RATIO_LATE
        tau = 0.8 + 0.2 * x[:, 1]
        y = y0 + tau * d + eps

    frame = ColumnFrame({"y": y, "d": d, "z": z,
                         "x1": x[:, 0], "x2": x[:, 1]})
    mapping = _mapping(outcome="y", treatment="d", instrument="z")

    if estimand == "LATE":
        mu = {zv: (lambda xv, zv=zv: sigm(xv[:, 0] + xv[:, 1])
                   + (0.5 + 0.3 * xv[:, 0]) * p_d(zv, xv)) for zv in (0, 1)}
        pi = {zv: (lambda xv, zv=zv: p_d(zv, xv)) for zv in (0, 1)}
        nu0 = lambda xv: mu[1](xv) - mu[0](xv)
        zeta0 = lambda xv: pi[1](xv) - pi[0](xv)
        positive = True   # one-sided-style compliance gap is positive here
    elif estimand == "ALT_RATIO_LATE":
        mu = {zv: (lambda xv, zv=zv: sigm(xv[:, 0] + xv[:, 1])
                   + (0.5 + 0.3 * xv[:, 0]) * p_d(zv, xv)) for zv in (0, 1)}

        def pi_fn(zv):
            def f(xv):
                av = sigm(xv[:, 0] + xv[:, 1])
                bv = 0.5 + 0.3 * xv[:, 0]
                pd = p_d(zv, xv)
                # E[(2D-1)Y | Z=z, X]
                return 2.0 * pd * (av + bv) - (av + bv * pd)
            return f

        pi = {zv: pi_fn(zv) for zv in (0, 1)}
        nu0 = lambda xv: mu[1](xv) - mu[0](xv)
        zeta0 = lambda xv: pi[1](xv) - pi[0](xv)
        positive = False
    else:  # RATIO_LATE
        def mu_fn(zv):
            def f(xv):
                yv = 2.0 + sigm(xv[:, 0])
                tv = 0.8 + 0.2 * xv[:, 1]
                return p_d(zv, xv) * (yv + tv)
            return f

        def pi_fn(zv):
            def f(xv):
                yv = 2.0 + sigm(xv[:, 0])
                return (1.0 - p_d(zv, xv)) * yv
            return f

        mu = {zv: mu_fn(zv) for zv in (0, 1)}
        pi = {zv: pi_fn(zv) for zv in (0, 1)}
        nu0 = lambda xv: mu[1](xv) - mu[0](xv)
        zeta0 = lambda xv: pi[0](xv) - pi[1](xv)
        positive = True

    rho_fn = lambda xv: sigm(0.4 * xv[:, 0] - 0.3 * xv[:, 1])
    truth = _nuisance_set(estimand, mu, pi, rho_fn, 2, 2)
    wrong = _nuisance_set(
        estimand,
        {k: (lambda xv, f=f: f(xv) + _bump(xv)) for k, f in mu.items()},
        {k: (lambda xv, f=f: f(xv) + 0.8 * _bump(xv)) for k, f in pi.items()},
        lambda xv: _prob_shift(rho_fn(xv), xv), 2, 2)
    return World(estimand, frame, mapping, SignalSpec(estimand, trim_eps),
                 truth, wrong, nu0, zeta0, positive)


def _ratio_cate_world(estimand, rng, n, trim_eps):
    x = _covariates(rng.child(1), n)
    prop = sigm(0.5 * x[:, 0] + 0.2 * x[:, 1])
    d = rng.child(2).bernoulli(prop)

    def mu_fn(dv):
        def f(xv):
            return 1.5 + sigm(xv[:, 0]) + dv * (0.8 + 0.2 * xv[:, 1])
        return f

    mu = {dv: mu_fn(dv) for dv in (0, 1)}
    y = mu[1](x) * d + mu[0](x) * (1.0 - d) + 0.5 * rng.child(3).normal(n)
    frame = ColumnFrame({"y": y, "d": d, "x1": x[:, 0], "x2": x[:, 1]})
    mapping = _mapping(outcome="y", treatment="d")
    prop_fn = lambda xv: sigm(0.5 * xv[:, 0] + 0.2 * xv[:, 1])
    truth = _nuisance_set(estimand, mu, {}, prop_fn, 2, 2)
    wrong = _nuisance_set(
        estimand,
        {k: (lambda xv, f=f: f(xv) + _bump(xv)) for k, f in mu.items()},
        {}, lambda xv: _prob_shift(prop_fn(xv), xv), 2, 2)
    if estimand == "RATIO_CATE":
        nu0 = mu[1]
        zeta0 = mu[0]
    else:
        nu0 = lambda xv: mu[1](xv) - mu[0](xv)
        zeta0 = lambda xv: mu[1](xv) + mu[0](xv)
    return World(estimand, frame, mapping, SignalSpec(estimand, trim_eps),
                 truth, wrong, nu0, zeta0, True)


def _idid_world(estimand, rng, n, trim_eps):
    x = _covariates(rng.child(1), n)
    pw = sigm(0.3 * x[:, 0])
    pz = sigm(0.2 * x[:, 1] + 0.1)
    w = rng.child(2).bernoulli(pw)
    z = rng.child(3).bernoulli(pz)

    def mu_fn(arm):
        wv, zv = arm

        def f(xv):
            return (0.5 + 0.4 * xv[:, 0] + wv * (0.3 + 0.1 * xv[:, 1])
                    + 0.5 * zv + wv * zv * (0.6 + 0.2 * xv[:, 0]))
        return f

    def pi_fn(arm):
        wv, zv = arm

        def f(xv):
            return sigm(0.2 * xv[:, 0] + 0.8 * wv * zv + 0.3 * zv - 0.2)
        return f

    arms = ((0, 0), (0, 1), (1, 0), (1, 1))
    mu = {arm: mu_fn(arm) for arm in arms}
    pi = {arm: pi_fn(arm) for arm in arms}
    wz = (w.astype(int), z.astype(int))
    mu_obs = np.select(
        [(w == a[0]) & (z == a[1]) for a in arms], [mu[a](x) for a in arms])
    pi_obs = np.select(
        [(w == a[0]) & (z == a[1]) for a in arms], [pi[a](x) for a in arms])
    y = mu_obs + 0.5 * rng.child(4).normal(n)
    d = rng.child(5).bernoulli(pi_obs)
    frame = ColumnFrame({"y": y, "d": d, "z": z, "w": w,
                         "x1": x[:, 0], "x2": x[:, 1]})
    mapping = _mapping(outcome="y", treatment="d", instrument="z", time="w")

    def rho_fn(xv):
        pwv = sigm(0.3 * xv[:, 0])
        pzv = sigm(0.2 * xv[:, 1] + 0.1)
        return _cells2(pwv, pzv)  # label = 2w + z

    def rho_wrong(xv):
        pwv = _prob_shift(sigm(0.3 * xv[:, 0]), xv)
        pzv = _prob_shift(sigm(0.2 * xv[:, 1] + 0.1), xv, scale=0.10)
        return _cells2(pwv, pzv)

    signs = {arm: (-1.0 if (arm[0] + arm[1]) % 2 else 1.0) for arm in arms}
    nu0 = lambda xv: sum(signs[a] * mu[a](xv) for a in arms)
    zeta0 = lambda xv: sum(signs[a] * pi[a](xv) for a in arms)
    truth = _nuisance_set(estimand, mu, pi, rho_fn, 2, 4)
    wrong = _nuisance_set(
        estimand,
        {k: (lambda xv, f=f: f(xv) + _bump(xv)) for k, f in mu.items()},
        {k: (lambda xv, f=f: np.clip(f(xv) + 0.3 * _bump(xv), 0.02, 0.98))
         for k, f in pi.items()},
        rho_wrong, 2, 4)
    return World(estimand, frame, mapping, SignalSpec(estimand, trim_eps),
                 truth, wrong, nu0, zeta0, False)


def _data_comb_world(estimand, rng, n, trim_eps):
    x = _covariates(rng.child(1), n)
    ph = sigm(-0.15 * x[:, 0])
    pw = sigm(0.2 * x[:, 0] - 0.1 * x[:, 1])
    h = rng.child(2).bernoulli(ph)
    w = rng.child(3).bernoulli(pw)
    comp = sigm(0.3 * x[:, 0] + 0.5)
    d1 = rng.child(4).bernoulli(comp)
    d = w * d1
    a = sigm(x[:, 0] + x[:, 1])
    b = 0.7 + 0.2 * x[:, 1]
    y = a + b * d + 0.4 * rng.child(5).normal(n)
    value = h * y + (1.0 - h) * d
    frame = ColumnFrame({"value": value, "w": w, "h": h,
                         "x1": x[:, 0], "x2": x[:, 1]})
    mapping = _mapping(outcome="value", time="w", dataset_indicator="h")

    def mu_fn(wv):
        def f(xv):
            av = sigm(xv[:, 0] + xv[:, 1])
            bv = 0.7 + 0.2 * xv[:, 1]
            return av + bv * wv * sigm(0.3 * xv[:, 0] + 0.5)
        return f

    def pi_fn(wv):
        def f(xv):
            return wv * sigm(0.3 * xv[:, 0] + 0.5)
        return f

    mu = {wv: mu_fn(wv) for wv in (0, 1)}
    pi = {wv: pi_fn(wv) for wv in (0, 1)}

    def rho_fn(xv):
        phv = sigm(-0.15 * xv[:, 0])
        pwv = sigm(0.2 * xv[:, 0] - 0.1 * xv[:, 1])
        return _cells2(phv, pwv)  # label = 2h + w

    def rho_wrong(xv):
        phv = _prob_shift(sigm(-0.15 * xv[:, 0]), xv)
        pwv = _prob_shift(sigm(0.2 * xv[:, 0] - 0.1 * xv[:, 1]), xv, scale=0.10)
        return _cells2(phv, pwv)

    nu0 = lambda xv: mu[1](xv) - mu[0](xv)
    zeta0 = lambda xv: pi[1](xv) - pi[0](xv)
    truth = _nuisance_set(estimand, mu, pi, rho_fn, 2, 4)
    wrong = _nuisance_set(
        estimand,
        {k: (lambda xv, f=f: f(xv) + _bump(xv)) for k, f in mu.items()},
        {k: (lambda xv, f=f: np.clip(f(xv) + 0.3 * _bump(xv), 0.0, 0.98))
         for k, f in pi.items()},
        rho_wrong, 2, 4)
    return World(estimand, frame, mapping, SignalSpec(estimand, trim_eps),
                 truth, wrong, nu0, zeta0, True)


def _two_sample_late_world(estimand, rng, n, trim_eps):
    x = _covariates(rng.child(1), n)
    ph = sigm(0.1 * x[:, 0])
    pz = sigm(0.3 * x[:, 0] - 0.2 * x[:, 1])
    h = rng.child(2).bernoulli(ph)
    z = rng.child(3).bernoulli(pz)

    def p_d(zv, xv):
        return sigm(0.5 * xv[:, 0] + 1.1 * zv - 0.3)

    d = rng.child(4).bernoulli(p_d(z, x))
    a = sigm(x[:, 0] + x[:, 1])
    b = 0.6 + 0.25 * x[:, 0]
    y = a + b * d + 0.4 * rng.child(5).normal(n)
    value = h * y + (1.0 - h) * d
    frame = ColumnFrame({"value": value, "z": z, "h": h,
                         "x1": x[:, 0], "x2": x[:, 1]})
    mapping = _mapping(outcome="value", instrument="z", dataset_indicator="h")

    def mu_fn(zv):
        def f(xv):
            av = sigm(xv[:, 0] + xv[:, 1])
            bv = 0.6 + 0.25 * xv[:, 0]
            return av + bv * p_d(zv, xv)
        return f

    pi = {zv: (lambda xv, zv=zv: p_d(zv, xv)) for zv in (0, 1)}
    mu = {zv: mu_fn(zv) for zv in (0, 1)}

    def rho_fn(xv):
        phv = sigm(0.1 * xv[:, 0])
        pzv = sigm(0.3 * xv[:, 0] - 0.2 * xv[:, 1])
        return _cells2(phv, pzv)  # label = 2h + z

    def rho_wrong(xv):
        phv = _prob_shift(sigm(0.1 * xv[:, 0]), xv)
        pzv = _prob_shift(sigm(0.3 * xv[:, 0] - 0.2 * xv[:, 1]), xv, scale=0.10)
        return _cells2(phv, pzv)

    nu0 = lambda xv: mu[1](xv) - mu[0](xv)
    zeta0 = lambda xv: pi[1](xv) - pi[0](xv)
    truth = _nuisance_set(estimand, mu, pi, rho_fn, 2, 4)
    wrong = _nuisance_set(
        estimand,
        {k: (lambda xv, f=f: f(xv) + _bump(xv)) for k, f in mu.items()},
        {k: (lambda xv, f=f: np.clip(f(xv) + 0.3 * _bump(xv), 0.02, 0.98))
         for k, f in pi.items()},
        rho_wrong, 2, 4)
    return World(estimand, frame, mapping, SignalSpec(estimand, trim_eps),
                 truth, wrong, nu0, zeta0, True)


def _two_sample_idid_world(estimand, rng, n, trim_eps):
    x = _covariates(rng.child(1), n)
    ph = sigm(0.1 * x[:, 0])
    pw = sigm(0.3 * x[:, 0])
    pz = sigm(0.2 * x[:, 1] + 0.1)
    h = rng.child(2).bernoulli(ph)
    w = rng.child(3).bernoulli(pw)
    z = rng.child(4).bernoulli(pz)
    arms = ((0, 0), (0, 1), (1, 0), (1, 1))

    def mu_fn(arm):
        wv, zv = arm

        def f(xv):
            return (0.5 + 0.4 * xv[:, 0] + wv * (0.3 + 0.1 * xv[:, 1])
                    + 0.5 * zv + wv * zv * (0.6 + 0.2 * xv[:, 0]))
        return f

    def pi_fn(arm):
        wv, zv = arm

        def f(xv):
            return sigm(0.2 * xv[:, 0] + 0.8 * wv * zv + 0.3 * zv - 0.2)
        return f

    mu = {arm: mu_fn(arm) for arm in arms}
    pi = {arm: pi_fn(arm) for arm in arms}
    mu_obs = np.select(
        [(w == a[0]) & (z == a[1]) for a in arms], [mu[a](x) for a in arms])
    pi_obs = np.select(
        [(w == a[0]) & (z == a[1]) for a in arms], [pi[a](x) for a in arms])
    y = mu_obs + 0.5 * rng.child(5).normal(n)
    d = rng.child(6).bernoulli(pi_obs)
    value = h * y + (1.0 - h) * d
    frame = ColumnFrame({"value": value, "z": z, "w": w, "h": h,
                         "x1": x[:, 0], "x2": x[:, 1]})
    mapping = _mapping(outcome="value", instrument="z", time="w",
                       dataset_indicator="h")

    def cell_stack(phv, pwv, pzv):
        cols = []
        for hv in (0, 1):
            ph_ = phv if hv else 1.0 - phv
            for wv in (0, 1):
                pw_ = pwv if wv else 1.0 - pwv
                for zv in (0, 1):
                    pz_ = pzv if zv else 1.0 - pzv
                    cols.append(ph_ * pw_ * pz_)
        return np.column_stack(cols)  # label = 4h + 2w + z

    def rho_fn(xv):
        return cell_stack(sigm(0.1 * xv[:, 0]), sigm(0.3 * xv[:, 0]),
                          sigm(0.2 * xv[:, 1] + 0.1))

    def rho_wrong(xv):
        return cell_stack(
            _prob_shift(sigm(0.1 * xv[:, 0]), xv, scale=0.08),
            _prob_shift(sigm(0.3 * xv[:, 0]), xv, scale=0.08),
            _prob_shift(sigm(0.2 * xv[:, 1] + 0.1), xv, scale=0.08))

    signs = {arm: (-1.0 if (arm[0] + arm[1]) % 2 else 1.0) for arm in arms}
    nu0 = lambda xv: sum(signs[a] * mu[a](xv) for a in arms)
    zeta0 = lambda xv: sum(signs[a] * pi[a](xv) for a in arms)
    truth = _nuisance_set(estimand, mu, pi, rho_fn, 2, 8)
    wrong = _nuisance_set(
        estimand,
        {k: (lambda xv, f=f: f(xv) + _bump(xv)) for k, f in mu.items()},
        {k: (lambda xv, f=f: np.clip(f(xv) + 0.3 * _bump(xv), 0.02, 0.98))
         for k, f in pi.items()},
        rho_wrong, 2, 8)
    return World(estimand, frame, mapping, SignalSpec(estimand, trim_eps),
                 truth, wrong, nu0, zeta0, False)


_BUILDERS = {
    "LATE": lambda r, n, e: _late_like_world("LATE", r, n, e),
    "RATIO_LATE": lambda r, n, e: _late_like_world("RATIO_LATE", r, n, e),
    "ALT_RATIO_LATE": lambda r, n, e: _late_like_world("ALT_RATIO_LATE", r, n, e),
    "RATIO_CATE": lambda r, n, e: _ratio_cate_world("RATIO_CATE", r, n, e),
    "ALT_RATIO_CATE": lambda r, n, e: _ratio_cate_world("ALT_RATIO_CATE", r, n, e),
    "IDID": lambda r, n, e: _idid_world("IDID", r, n, e),
    "DATA_COMB": lambda r, n, e: _data_comb_world("DATA_COMB", r, n, e),
    "TWO_SAMPLE_LATE": lambda r, n, e: _two_sample_late_world(
        "TWO_SAMPLE_LATE", r, n, e),
    "TWO_SAMPLE_IDID": lambda r, n, e: _two_sample_idid_world(
        "TWO_SAMPLE_IDID", r, n, e),
}

NUISANCE_ESTIMANDS = tuple(_BUILDERS)
