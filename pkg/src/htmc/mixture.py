"""EM over trails for mixtures of chains, with hitting-time refits per chain."""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .chains import DISCRETE, Chain, MixtureModel, random_chain, random_mixture
from .errors import NumericWarning, ParameterError
from .hitting import estimate_from_sums, trail_hitting_sums
from .learn import LearnConfig, learn_single
from .metrics import mixture_recovery_error, recovery_error

EMPTY_CLUSTER = 1e-6


@dataclass(frozen=True, eq=False)
class SoftAssignment:
    """``p[k, i]``: posterior weight of chain ``i`` for trail ``k``."""

    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 2 or np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise ParameterError("soft assignment rows must be nonnegative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    def entropy(self) -> float:
        """Mean per-trail entropy in nats."""
        if self.p.size == 0:
            return 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(self.p > 0, self.p * np.log(self.p), 0.0)
        return float(-terms.sum(axis=1).mean())


def _default_inner() -> LearnConfig:
    return LearnConfig(iterations=2000, init="given")


@dataclass
class MixtureConfig:
    em_iterations: int = 100
    inner: LearnConfig = field(default_factory=_default_inner)
    convergence_tol: float = 1e-4
    seed: Optional[int] = None
    use_alpha: bool = False

    def __post_init__(self):
        if isinstance(self.inner, dict):
            self.inner = LearnConfig.from_dict({"init": "given", **self.inner})
        if self.em_iterations < 1:
            raise ParameterError(f"em_iterations must be >= 1, got {self.em_iterations}")
        if self.convergence_tol < 0:
            raise ParameterError("convergence_tol must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "MixtureConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class MixtureResult:
    mixture: MixtureModel
    history: list
    assignment: SoftAssignment
    warnings: list = field(default_factory=list)

    def history_dict(self) -> dict:
        return {"rounds": self.history, "warnings": list(self.warnings)}


class _TrailStats:
    """Per-trail sufficient statistics, computed once and reused every round."""

    def __init__(self, trails, n: int):
        m = len(trails)
        self.mode = trails[0].mode
        self.weight = np.array([t.weight for t in trails])
        self.start = np.array([t.states[0] for t in trails])
        self.T = np.zeros((m, n, n))
        self.C = np.zeros((m, n, n))
        self.N = np.zeros((m, n, n))
        self.hold = np.zeros((m, n))
        for k, trail in enumerate(trails):
            self.T[k], self.C[k] = trail_hitting_sums(trail, n)
            _transition_counts(trail, n, self.N[k], self.hold[k])

    def log_likelihood(self, chain: Chain) -> np.ndarray:
        return _loglik_from_counts(chain, self.N, self.hold)

    def estimate(self, w: np.ndarray):
        return estimate_from_sums(np.tensordot(w, self.T, axes=1), np.tensordot(w, self.C, axes=1))


def _transition_counts(trail, n, N, hold):
    x = trail.states
    np.add.at(N, (x[:-1], x[1:]), 1.0)
    if trail.holds is not None:
        np.add.at(hold, x, trail.holds)


def _loglik_from_counts(chain: Chain, N: np.ndarray, hold: np.ndarray) -> np.ndarray:
    """Log-likelihood for a stack of count tables ``N`` (and hold totals ``hold``)."""
    X = np.array(chain.matrix)
    if chain.mode == DISCRETE:
        P = X
        rates = None
    else:
        rates = X.sum(axis=1) - np.diag(X)
        P = X.copy()
        np.fill_diagonal(P, 1.0)  # self-transitions never appear in continuous trails
    with np.errstate(divide="ignore"):
        logP = np.log(P)
    impossible = np.any((N > 0) & np.isneginf(logP)[None], axis=(1, 2))
    ll = np.einsum("kuv,uv->k", N, np.where(np.isneginf(logP), 0.0, logP))
    if rates is not None:
        ll = ll - hold @ rates
    ll[impossible] = -np.inf
    return ll


def trail_log_likelihood(chain: Chain, trail) -> float:
    """Log-probability (or log-density) of a trail given its start state.

    Continuous trails score each completed visit as ``log K[u, v] - h r_u``
    and the censored final visit as ``-h r_u``.  An impossible transition
    gives ``-inf``.
    """
    if trail.mode != chain.mode:
        raise ParameterError("trail and chain modes differ")
    n = chain.n
    if trail.states.max() >= n:
        raise ParameterError(f"trail visits state {int(trail.states.max())} but n = {n}")
    N = np.zeros((1, n, n))
    hold = np.zeros((1, n))
    _transition_counts(trail, n, N[0], hold[0])
    return float(_loglik_from_counts(chain, N, hold)[0])


def _posterior(loglik: np.ndarray) -> np.ndarray:
    """Row-wise softmax; rows that are ``-inf`` everywhere become uniform."""
    m, C = loglik.shape
    p = np.full((m, C), 1.0 / C)
    ok = np.isfinite(loglik).any(axis=1) if m else np.zeros(0, dtype=bool)
    if ok.any():
        rows = loglik[ok]
        p[ok] = np.exp(rows - logsumexp(rows, axis=1, keepdims=True))
    return p


def soft_assign(mixture: MixtureModel, trails, use_alpha: bool = False) -> SoftAssignment:
    ll = np.column_stack([[trail_log_likelihood(c, t) for t in trails] for c in mixture.chains]) if trails else np.zeros((0, mixture.C))
    if use_alpha and trails:
        starts = np.array([t.states[0] for t in trails])
        with np.errstate(divide="ignore"):
            ll = ll + np.log(mixture.alpha[:, starts]).T
    return SoftAssignment(_posterior(ll))


def _alpha(p: np.ndarray, stats: _TrailStats, n: int) -> np.ndarray:
    C = p.shape[1]
    alpha = np.zeros((C, n))
    w = p * stats.weight[:, None]
    for i in range(C):
        alpha[i] = np.bincount(stats.start, weights=w[:, i], minlength=n)
    total = alpha.sum()
    return alpha / total if total > 0 else np.full((C, n), 1.0 / (C * n))


def ultra_mc(trails, C: int, config: MixtureConfig = None, n: int = None, init: MixtureModel = None, truth: MixtureModel = None) -> MixtureResult:
    """Fit ``C`` chains to unlabeled trails.

    Each round computes the posterior of every trail under the current
    chains, re-estimates each chain's hitting times from the weighted
    trails, and refits each chain by projected descent warm-started at its
    current value.  Posteriors are computed once per round before any chain
    changes, so chain order never influences the result.
    """
    config = config or MixtureConfig()
    trails = list(trails)
    if C < 1:
        raise ParameterError(f"C must be >= 1, got {C}")
    if not trails:
        raise ParameterError("need at least one trail")
    modes = {t.mode for t in trails}
    if len(modes) != 1:
        raise ParameterError("all trails must share one time mode")
    mode = modes.pop()
    if n is None:
        n = int(max(t.states.max() for t in trails)) + 1 if init is None else init.n
    rng = np.random.default_rng(config.seed)
    if init is None:
        init = random_mixture(mode, C, n, rng)
    if init.C != C or init.n != n or init.mode != mode:
        raise ParameterError("initial mixture does not match C, n or the trail mode")
    inner = config.inner.replace(mode=mode, init="given")

    stats = _TrailStats(trails, n)
    chains = list(init.chains)
    alpha = np.array(init.alpha)
    history, notes = [], []
    p = None
    for rnd in range(config.em_iterations):
        ll = np.column_stack([stats.log_likelihood(c) for c in chains])
        if config.use_alpha:
            with np.errstate(divide="ignore"):
                ll = ll + np.log(alpha[:, stats.start]).T
        p = _posterior(ll)
        new, losses = [], []
        for i in range(C):
            w = p[:, i] * stats.weight
            if w.sum() < EMPTY_CLUSTER:
                msg = f"round {rnd}: chain {i} has no assigned weight; re-seeded at random"
                warnings.warn(msg, NumericWarning, stacklevel=2)
                notes.append(msg)
                new.append(random_chain(mode, n, rng))
                losses.append(None)
                continue
            est = stats.estimate(w)
            report = learn_single(est.H_hat, est.mask, inner, init_chain=chains[i])
            notes.extend(f"round {rnd}, chain {i}: {msg}" for msg in report.warnings)
            new.append(report.chain)
            losses.append(report.best_loss)
        change = max(recovery_error(a, b) for a, b in zip(chains, new))
        chains = new
        alpha = _alpha(p, stats, n)
        entry = {
            "round": rnd,
            "losses": losses,
            "entropy": SoftAssignment(p).entropy(),
            "max_change": change,
        }
        if truth is not None:
            entry["recovery_error"] = mixture_recovery_error(MixtureModel(tuple(chains), alpha), truth).recovery_error
        history.append(entry)
        if change < config.convergence_tol:
            break
    mixture = MixtureModel(tuple(chains), alpha)
    return MixtureResult(mixture, history, SoftAssignment(p), notes)
