"""Deterministic linear algebra and random number primitives.

All estimation and bootstrap code draws randomness through :class:`SeededRng`
so that results are reproducible bit-for-bit across runs, platforms, and
worker-pool sizes. The generator is counter-based (Philox) and normal
variates are produced by the polar (Marsaglia) transform on top of the raw
uniform stream, so the stream does not depend on any library's sampling
internals.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Philox

from .errors import SingularSystemError

_INV_2_53 = 1.0 / (1 << 53)
_MASK64 = (1 << 64) - 1

# Reciprocal condition number below which a symmetric system is treated as
# singular. Well below any meaningful k x k Gram matrix at N >= 100.
RCOND_FLOOR = 1e-14


def _mix_stream(parent: int, tag: int) -> int:
    """64-bit splitmix-style combine so nested child streams never collide."""
    z = (parent * 0x9E3779B97F4A7C15 + tag + 1) & _MASK64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return (z ^ (z >> 31)) & _MASK64


class SeededRng:
    """Counter-based deterministic random stream.

    Identical ``(seed, stream)`` pairs produce identical draws on every
    platform. Instances are stateful and must not be shared across workers;
    parallel code derives one rng per worker, either with
    ``SeededRng(base_seed + worker_index)`` or via :meth:`child`.
    """

    __slots__ = ("seed", "stream", "_bits")

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF,
                        self.stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
        self._bits = Philox(key=key)

    def child(self, tag: int) -> "SeededRng":
        """Independent derived stream; nesting is collision-safe."""
        return SeededRng(self.seed, _mix_stream(self.stream, tag))

    def uniform(self, n: int) -> np.ndarray:
        """n doubles uniform on [0, 1), from the raw 64-bit counter stream."""
        if n < 0:
            raise ValueError("draw count must be non-negative")
        if n == 0:
            return np.empty(0)
        raw = self._bits.random_raw(n)
        return (raw >> 11) * _INV_2_53

    def normal(self, n: int) -> np.ndarray:
        """n iid standard normal variates via the polar (Marsaglia) method."""
        if n < 0:
            raise ValueError("draw count must be non-negative")
        out = np.empty(n)
        filled = 0
        while filled < n:
            # acceptance rate is pi/4; each accepted pair yields two variates
            pairs = max(16, int((n - filled) * 0.7) + 8)
            u = 2.0 * self.uniform(pairs) - 1.0
            v = 2.0 * self.uniform(pairs) - 1.0
            s = u * u + v * v
            ok = (s > 0.0) & (s < 1.0)
            s = s[ok]
            f = np.sqrt(-2.0 * np.log(s) / s)
            z = np.concatenate([u[ok] * f, v[ok] * f])
            take = min(len(z), n - filled)
            out[filled:filled + take] = z[:take]
            filled += take
        return out

    def permutation(self, n: int) -> np.ndarray:
        """Uniform random permutation of range(n) (random-key sort)."""
        return np.argsort(self.uniform(n), kind="stable")

    def bernoulli(self, p) -> np.ndarray:
        """0/1 draws with success probabilities ``p`` (scalar or vector)."""
        p = np.asarray(p, dtype=float)
        n = p.size if p.ndim else 1
        draw = self.uniform(int(n)) < np.ravel(p)
        return draw.astype(float).reshape(p.shape) if p.ndim else draw.astype(float)


def std_normal_draws(rng: SeededRng, n: int) -> np.ndarray:
    """n iid standard normal draws; deterministic per (seed, stream)."""
    return rng.normal(n)


class SymMatrix:
    """Dense symmetric matrix, symmetrized on construction."""

    __slots__ = ("values",)

    def __init__(self, values):
        a = np.asarray(values, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        self.values = (a + a.T) / 2.0

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def __repr__(self) -> str:  # pragma: no cover
        return f"SymMatrix(dim={self.dim})"


def _eigh_checked(a: SymMatrix, context: str):
    vals = a.values
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"{context}: matrix has non-finite entries")
    lam, vec = np.linalg.eigh(vals)
    return lam, vec


def solve_sym(a: SymMatrix, b) -> np.ndarray:
    """Solve a @ x = b for symmetric ``a``.

    Uses the spectral factorization (with one step of iterative refinement)
    and raises :class:`SingularSystemError` when the reciprocal condition
    number falls below ``RCOND_FLOOR``.

    ``b`` may be a vector of length k or a k x m matrix of stacked
    right-hand sides.
    """
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("solve_sym: right-hand side has non-finite entries")
    if b.shape[0] != a.dim:
        raise ValueError(
            f"solve_sym: dimension mismatch (matrix {a.dim}, rhs {b.shape[0]})")
    lam, vec = _eigh_checked(a, "solve_sym")
    abslam = np.abs(lam)
    largest = float(abslam.max())
    smallest = float(abslam.min())
    if largest == 0.0 or smallest / largest < RCOND_FLOOR:
        raise SingularSystemError(
            f"symmetric system is numerically singular "
            f"(smallest pivot {smallest:.3e}, largest {largest:.3e})")

    def apply_inverse(r):
        return vec @ ((vec.T @ r).T / lam).T

    x = apply_inverse(b)
    # one refinement pass keeps the residual near machine precision even
    # for moderately ill-conditioned systems
    resid = b - a.values @ x
    return x + apply_inverse(resid)


def psd_sqrt(m: SymMatrix) -> np.ndarray:
    """Symmetric square root of ``m`` with negative eigenvalues clipped to 0.

    Returns S with S @ S.T equal to the clipped matrix up to rounding.
    """
    lam, vec = _eigh_checked(m, "psd_sqrt")
    root = np.sqrt(np.clip(lam, 0.0, None))
    return (vec * root) @ vec.T
