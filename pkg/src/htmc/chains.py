"""Chains, generalized Laplacians, pseudoinverses and synthetic generators.

A discrete-time chain is stored as its row-stochastic matrix ``M`` and a
continuous-time chain as its rate matrix ``K``.  Both share the generalized
Laplacian ``L = I - M`` (discrete) or ``L = -K`` (continuous), whose
Moore-Penrose pseudoinverse is the variable the learner optimizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

DISCRETE = "discrete"
CONTINUOUS = "continuous"
MODES = (DISCRETE, CONTINUOUS)

ROW_TOL = 1e-9
PINV_RTOL = 1e-10
STATIONARY_FLOOR = 1e-12
GRAPH_KINDS = ("complete", "star", "lollipop", "grid")


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Chain:
    """A discrete-time transition matrix or continuous-time rate matrix."""

    mode: str
    matrix: np.ndarray

    def __post_init__(self):
        check_mode(self.mode)
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise ParameterError(f"chain matrix must be square and nonempty, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ParameterError("chain matrix has non-finite entries")
        rows = m.sum(axis=1)
        if self.mode == DISCRETE:
            if np.any(m < 0):
                raise ParameterError("transition matrix has negative entries")
            if np.any(np.abs(rows - 1.0) > ROW_TOL):
                raise ParameterError("transition matrix rows must sum to 1")
        else:
            off = m - np.diag(np.diag(m))
            if np.any(off < 0):
                raise ParameterError("rate matrix has negative off-diagonal entries")
            if np.any(np.abs(rows) > ROW_TOL):
                raise ParameterError("rate matrix rows must sum to 0")
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def discrete(self) -> bool:
        return self.mode == DISCRETE

    def allclose(self, other: "Chain", atol: float = 1e-12) -> bool:
        return (
            self.mode == other.mode
            and self.n == other.n
            and np.allclose(self.matrix, other.matrix, rtol=0.0, atol=atol)
        )


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """``C`` chains of one mode and size, with starting probabilities ``alpha[i, u]``."""

    chains: tuple
    alpha: np.ndarray

    def __post_init__(self):
        chains = tuple(self.chains)
        if not chains:
            raise ParameterError("a mixture needs at least one chain")
        modes = {c.mode for c in chains}
        sizes = {c.n for c in chains}
        if len(modes) != 1 or len(sizes) != 1:
            raise ParameterError("mixture chains must share mode and state count")
        alpha = _frozen(self.alpha)
        if alpha.shape != (len(chains), chains[0].n):
            raise ParameterError(f"alpha must have shape (C, n), got {alpha.shape}")
        if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > ROW_TOL:
            raise ParameterError("alpha must be nonnegative and sum to 1")
        object.__setattr__(self, "chains", chains)
        object.__setattr__(self, "alpha", alpha)

    @property
    def C(self) -> int:
        return len(self.chains)

    @property
    def n(self) -> int:
        return self.chains[0].n

    @property
    def mode(self) -> str:
        return self.chains[0].mode

    def permuted(self, order) -> "MixtureModel":
        order = list(order)
        return MixtureModel(tuple(self.chains[i] for i in order), self.alpha[order])


def _adjacency(kind: str, n: int) -> np.ndarray:
    A = np.zeros((n, n))
    if kind == "complete":
        A[:] = 1.0
        np.fill_diagonal(A, 0.0)
    elif kind == "star":
        A[0, 1:] = A[1:, 0] = 1.0
    elif kind == "lollipop":
        if n % 2:
            raise ParameterError(f"lollipop requires even n, got {n}")
        h = n // 2
        A[:h, :h] = 1.0
        np.fill_diagonal(A, 0.0)
        for u in range(h - 1, n - 1):
            A[u, u + 1] = A[u + 1, u] = 1.0
    elif kind == "grid":
        side = math.isqrt(n)
        if side * side != n:
            raise ParameterError(f"grid requires n to be a perfect square, got {n}")
        for r in range(side):
            for c in range(side):
                u = r * side + c
                if c + 1 < side:
                    A[u, u + 1] = A[u + 1, u] = 1.0
                if r + 1 < side:
                    A[u, u + side] = A[u + side, u] = 1.0
    else:
        raise ParameterError(f"unknown graph kind {kind!r}; expected one of {GRAPH_KINDS}")
    return A


def graph_chain(kind: str, n: int) -> Chain:
    """Uniform random walk on a named undirected graph.

    Node numbering: the star is centred at 0; the lollipop has the clique on
    ``0..n/2-1`` and the path on ``n/2..n-1`` joined by the edge
    ``(n/2-1, n/2)``; the grid is the 4-neighbour lattice in row-major order.
    """
    if n < 2:
        raise ParameterError(f"graph chains need n >= 2, got {n}")
    A = _adjacency(kind, n)
    return Chain(DISCRETE, A / A.sum(axis=1, keepdims=True))


def random_chain(mode: str, n: int, rng: np.random.Generator) -> Chain:
    """Random chain with U[0, 1] weights (discrete, row-normalized) or rates."""
    check_mode(mode)
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    W = rng.random((n, n))
    if mode == DISCRETE:
        return Chain(DISCRETE, W / W.sum(axis=1, keepdims=True))
    np.fill_diagonal(W, 0.0)
    np.fill_diagonal(W, -W.sum(axis=1))
    return Chain(CONTINUOUS, W)


def random_mixture(mode: str, C: int, n: int, rng: np.random.Generator) -> MixtureModel:
    if C < 1:
        raise ParameterError(f"C must be >= 1, got {C}")
    chains = tuple(random_chain(mode, n, rng) for _ in range(C))
    return MixtureModel(chains, np.full((C, n), 1.0 / (C * n)))


def to_laplacian(chain: Chain) -> np.ndarray:
    if chain.mode == DISCRETE:
        return np.eye(chain.n) - chain.matrix
    return -np.array(chain.matrix)


def chain_matrix_from_laplacian(L: np.ndarray, mode: str) -> np.ndarray:
    """Inverse of :func:`to_laplacian` on raw arrays (no feasibility check)."""
    check_mode(mode)
    L = np.asarray(L, dtype=float)
    return np.eye(L.shape[0]) - L if mode == DISCRETE else -L


def pseudoinverse(L: np.ndarray, rtol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse by SVD, dropping singular values below ``rtol * s_max``."""
    L = np.asarray(L, dtype=float)
    if not np.all(np.isfinite(L)):
        raise ParameterError("pseudoinverse input has non-finite entries")
    return np.linalg.pinv(L, rcond=rtol)


def stationary(L: np.ndarray, Lp: np.ndarray) -> np.ndarray:
    """Stationary distribution ``d / |d|_1`` with ``d = 1 - L Lp 1``.

    Entries of ``d`` are floored at 1e-12 so that iterates off the exact
    pseudoinverse manifold still give a strictly positive vector.
    """
    d = stationary_weights(L, Lp)
    return d / d.sum()


def stationary_weights(L: np.ndarray, Lp: np.ndarray) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    ones = np.ones(L.shape[0])
    d = ones - L @ (np.asarray(Lp, dtype=float) @ ones)
    return np.maximum(d, STATIONARY_FLOOR)


def stationary_of(chain: Chain) -> np.ndarray:
    L = to_laplacian(chain)
    return stationary(L, pseudoinverse(L))
