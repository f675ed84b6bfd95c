"""Single-chain reconstruction from (partial, noisy) hitting times."""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .chains import (
    CONTINUOUS,
    DISCRETE,
    Chain,
    chain_matrix_from_laplacian,
    check_mode,
    pseudoinverse,
    random_chain,
    to_laplacian,
)
from .errors import NumericWarning, ParameterError
from .gradients import apply_direction_step, loss_and_grad


@dataclass
class LearnConfig:
    mode: str = DISCRETE
    iterations: int = 10000
    lr: float = 1e-4
    beta1: float = 0.99
    beta2: float = 0.999
    adam_eps: float = 1e-8
    project_every: int = 1
    init: str = "wsbt"
    seed: Optional[int] = None
    loss_tol: float = 0.0

    def __post_init__(self):
        check_mode(self.mode)
        if self.iterations < 0:
            raise ParameterError(f"iterations must be >= 0, got {self.iterations}")
        if not self.lr > 0:
            raise ParameterError(f"lr must be > 0, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ParameterError("beta1 and beta2 must lie in [0, 1)")
        if self.project_every < 1:
            raise ParameterError(f"project_every must be >= 1, got {self.project_every}")
        if self.init not in ("random", "wsbt", "given"):
            raise ParameterError(f"init must be random, wsbt or given, got {self.init!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "LearnConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "LearnConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class LearnReport:
    chain: Chain
    loss_curve: np.ndarray
    iterations_run: int
    warnings: list = field(default_factory=list)
    best_loss: float = float("inf")
    best_iteration: int = 0

    def to_dict(self) -> dict:
        return {
            "chain": {"mode": self.chain.mode, "n": self.chain.n, "matrix": self.chain.matrix.tolist()},
            "loss_curve": [float(x) for x in self.loss_curve],
            "iterations_run": self.iterations_run,
            "best_loss": self.best_loss,
            "best_iteration": self.best_iteration,
            "warnings": list(self.warnings),
        }


def project_chain(raw: np.ndarray, mode: str) -> Chain:
    """Clamp to the feasible set of the given mode.

    Discrete: negative entries to 0, rows renormalized, all-zero rows become
    uniform.  Continuous: negative off-diagonal rates to 0, diagonal set to
    minus the row's off-diagonal sum.
    """
    check_mode(mode)
    X = np.array(raw, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ParameterError("cannot project a matrix with non-finite entries")
    n = X.shape[0]
    if mode == DISCRETE:
        X = np.maximum(X, 0.0)
        sums = X.sum(axis=1)
        dead = sums <= 0
        X[dead] = 1.0 / n
        sums[dead] = 1.0
        return Chain(DISCRETE, X / sums[:, None])
    np.fill_diagonal(X, 0.0)
    X = np.maximum(X, 0.0)
    np.fill_diagonal(X, -X.sum(axis=1))
    return Chain(CONTINUOUS, X)


def wsbt_system(H: np.ndarray, u: int, mode: str):
    """First-step equations for row ``u`` of the chain given all hitting times.

    Rows: ``sum_w X[u, w] H[w, v] = H[u, v] - 1`` (discrete) or ``= -1``
    (continuous) for every ``v != u``, plus the row-sum constraint.
    """
    n = H.shape[0]
    others = np.r_[0:u, u + 1:n]
    A = np.vstack([H[:, others].T, np.ones((1, n))])
    if mode == DISCRETE:
        rhs = np.append(H[u, others] - 1.0, 1.0)
    else:
        rhs = np.append(-np.ones(others.size), 0.0)
    return A, rhs


def wsbt_raw(H_hat: np.ndarray, mode: str = DISCRETE):
    """Unprojected linear-system reconstruction and any warnings it produced."""
    check_mode(mode)
    H = np.asarray(H_hat, dtype=float)
    n = H.shape[0]
    X = np.zeros((n, n))
    notes = []
    for u in range(n):
        A, rhs = wsbt_system(H, u, mode)
        sol, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
        if rank < n:
            notes.append(f"row {u}: singular system (rank {rank} < {n}); used minimum-norm least squares")
        X[u] = sol
    return X, notes


def wsbt_init(H_hat: np.ndarray, mask: np.ndarray = None, mode: str = DISCRETE) -> Chain:
    """Linear-system reconstruction from a complete hitting-time matrix, then projected."""
    if mask is not None and not np.all(mask):
        raise ParameterError("the linear-system initializer needs every hitting time; censor missing entries first")
    X, notes = wsbt_raw(H_hat, mode)
    for note in notes:
        warnings.warn(note, NumericWarning, stacklevel=2)
    return project_chain(X, mode)


class Adam:
    """Adam on a single array; state survives across calls to :meth:`step`."""

    def __init__(self, shape, lr=1e-4, beta1=0.99, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        """Advance the moments and return the update to subtract."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _initial_chain(H_target, mask, config: LearnConfig, init_chain):
    if init_chain is not None:
        if init_chain.mode != config.mode:
            raise ParameterError("initial chain mode does not match the config")
        return init_chain, []
    if config.init == "given":
        raise ParameterError("init='given' needs an initial chain")
    if config.init == "random":
        return random_chain(config.mode, H_target.shape[0], np.random.default_rng(config.seed)), []
    H = np.where(mask, H_target, np.nan)
    if np.isnan(H).any():
        raise ParameterError("wsbt init needs a complete hitting-time matrix; censor missing entries first")
    X, notes = wsbt_raw(H_target, config.mode)
    return project_chain(X, config.mode), notes


def _iterate_from_chain(chain: Chain):
    L = to_laplacian(chain)
    return pseudoinverse(L), L


def learn_single(H_target, mask=None, config: LearnConfig = None, init_chain: Chain = None) -> LearnReport:
    """Projected Adam descent on the Laplacian pseudoinverse.

    Each iteration evaluates the masked loss and its gradient, takes an Adam
    step on ``Lp`` and, every ``project_every`` iterations, maps the iterate
    back to a feasible chain (``L = pinv(Lp)``, then :func:`project_chain`)
    and continues from that chain's exact pseudoinverse.  Adam moments are
    not reset at projections.  The returned chain is the feasible iterate
    with the lowest loss seen.
    """
    config = config or LearnConfig()
    H_target = np.asarray(H_target, dtype=float)
    n = H_target.shape[0]
    mask = np.ones((n, n), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    W = mask.astype(float)
    np.fill_diagonal(W, 0.0)
    H_target = np.where(mask, H_target, 0.0)

    chain, notes = _initial_chain(H_target, mask, config, init_chain)
    notes = list(notes)
    Lp, L = _iterate_from_chain(chain)
    adam = Adam((n, n), config.lr, config.beta1, config.beta2, config.adam_eps)

    best = (float("inf"), chain, 0)
    curve = []
    prev = None
    retried = False
    projected = True
    while len(curve) < config.iterations:
        it = len(curve)
        loss, grad = loss_and_grad(Lp, H_target, W, L)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            if prev is None or retried:
                notes.append(f"iteration {it}: non-finite loss; stopped")
                break
            notes.append(f"iteration {it}: non-finite loss; retrying with half the step")
            Lp, chain, step = prev
            Lp, L, chain = _advance(Lp, 0.5 * step, chain, config, it, project=True)
            retried, projected = True, True
            continue
        retried = False
        curve.append(loss)
        if projected and loss < best[0]:
            best = (loss, chain, it)
        if loss <= config.loss_tol:
            break
        step = adam.step(grad)
        prev = (Lp, chain, step)
        projected = (it + 1) % config.project_every == 0
        Lp, L, chain = _advance(Lp, step, chain, config, it, project=projected)
    else:
        if projected:
            loss = loss_and_grad(Lp, H_target, W, L)[0]
            if loss < best[0]:
                best = (loss, chain, len(curve))
    best_loss, best_chain, best_it = best
    return LearnReport(best_chain, np.array(curve), len(curve), notes, best_loss, best_it)


def _advance(Lp, step, chain, config, it, project):
    Lp = apply_direction_step(Lp, step)
    if not project:
        return Lp, pseudoinverse(Lp), chain
    return _feasible(Lp, chain, config, it)


def _feasible(Lp, chain, config, it):
    try:
        raw = chain_matrix_from_laplacian(pseudoinverse(Lp), config.mode)
        chain = project_chain(raw, config.mode)
    except ParameterError:
        warnings.warn(f"iteration {it}: projection failed; keeping previous chain", NumericWarning, stacklevel=3)
    Lp, L = _iterate_from_chain(chain)
    return Lp, L, chain
