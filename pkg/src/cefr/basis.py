"""Polynomial tensor-product bases over the target covariates.

Monomials are ordered by total degree; within a degree the pure powers
(x1^d, ..., xq^d) come first, followed by the mixed terms in descending
lexicographic order of their exponent vectors. The first basis function is
always the constant 1, and the degree-(d-1) basis is a prefix of the
degree-d basis at every point.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np


@dataclass(frozen=True)
class BasisSpec:
    """Polynomial basis definition for a q-dimensional target covariate."""

    n_vars: int
    max_degree: int
    include_interactions: bool = True

    def __post_init__(self):
        if self.n_vars < 1:
            raise ValueError("n_vars must be >= 1")
        if self.max_degree < 0:
            raise ValueError("max_degree must be >= 0")


def basis_dim(spec: BasisSpec) -> int:
    """Number of basis functions k."""
    if spec.include_interactions:
        return comb(spec.n_vars + spec.max_degree, spec.max_degree)
    return 1 + spec.n_vars * spec.max_degree


def _mixed_exponents(q: int, degree: int):
    """All exponent vectors of total degree ``degree`` over q variables
    with at least two nonzero entries, in descending lexicographic order."""
    vecs = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            vecs.append(prefix + (remaining,))
            return
        for e in range(remaining, -1, -1):
            rec(prefix + (e,), remaining - e, slots - 1)

    rec((), degree, q)
    return [v for v in vecs if sum(1 for e in v if e > 0) >= 2]


@lru_cache(maxsize=256)
def _exponent_table(n_vars: int, max_degree: int, include_interactions: bool):
    q = n_vars
    rows = [(0,) * q]
    for d in range(1, max_degree + 1):
        for j in range(q):
            pure = [0] * q
            pure[j] = d
            rows.append(tuple(pure))
        if include_interactions and q > 1:
            rows.extend(_mixed_exponents(q, d))
    return np.array(rows, dtype=np.int64)


def monomial_exponents(spec: BasisSpec) -> np.ndarray:
    """k x q integer matrix of monomial exponents, in basis order."""
    table = _exponent_table(spec.n_vars, spec.max_degree, spec.include_interactions)
    assert table.shape[0] == basis_dim(spec)
    return table


def eval_matrix(spec: BasisSpec, points) -> np.ndarray:
    """Evaluate the basis at each row of ``points`` (m x q) -> m x k."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[1] != spec.n_vars:
        raise ValueError(
            f"basis expects {spec.n_vars} variables, got {pts.shape[1]}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("basis evaluation requires finite inputs")
    exps = monomial_exponents(spec)
    out = np.ones((pts.shape[0], exps.shape[0]))
    for j in range(spec.n_vars):
        col = pts[:, j]
        maxdeg = int(exps[:, j].max(initial=0))
        if maxdeg == 0:
            continue
        powers = np.empty((maxdeg + 1, pts.shape[0]))
        powers[0] = 1.0
        for d in range(1, maxdeg + 1):
            powers[d] = powers[d - 1] * col
        out *= powers[exps[:, j]].T
    return out


def eval_basis(spec: BasisSpec, v) -> np.ndarray:
    """Evaluate the basis at a single point v (length q) -> length k."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != spec.n_vars:
        raise ValueError(
            f"basis expects a vector of length {spec.n_vars}, got shape {v.shape}")
    return eval_matrix(spec, v[None, :])[0]


@dataclass(frozen=True)
class BasisMatrix:
    """Basis evaluated at sample points; column 0 is the constant."""

    values: np.ndarray
    spec: BasisSpec

    @classmethod
    def build(cls, spec: BasisSpec, points) -> "BasisMatrix":
        return cls(values=eval_matrix(spec, points), spec=spec)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]
