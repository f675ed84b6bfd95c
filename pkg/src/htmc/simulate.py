"""Random-walk trails from single chains and from mixtures."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chains import CONTINUOUS, DISCRETE, Chain, MixtureModel, check_mode
from .errors import GenerationError, ParameterError

_CHUNK = 512


@dataclass(frozen=True, eq=False)
class Trail:
    """An observed walk.

    ``holds`` is present only for continuous-time trails; it has one positive
    duration per visit and the last one is censored at the horizon.
    """

    mode: str
    states: np.ndarray
    holds: Optional[np.ndarray] = None
    weight: float = 1.0
    label: Optional[int] = None

    def __post_init__(self):
        check_mode(self.mode)
        states = np.array(self.states, dtype=np.int64).reshape(-1)
        if states.size == 0:
            raise ParameterError("a trail needs at least one state")
        if np.any(states < 0):
            raise ParameterError("state ids must be nonnegative")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)
        if self.mode == CONTINUOUS:
            if self.holds is None:
                raise ParameterError("continuous trails need holding times")
            holds = np.array(self.holds, dtype=float).reshape(-1)
            if holds.shape != states.shape:
                raise ParameterError("need exactly one holding time per visited state")
            if np.any(~np.isfinite(holds)) or np.any(holds <= 0):
                raise ParameterError("holding times must be positive and finite")
            holds.setflags(write=False)
            object.__setattr__(self, "holds", holds)
        elif self.holds is not None:
            raise ParameterError("discrete trails carry no holding times")
        if not (self.weight >= 0 and np.isfinite(self.weight)):
            raise ParameterError(f"trail weight must be finite and >= 0, got {self.weight}")
        object.__setattr__(self, "weight", float(self.weight))
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))

    def __len__(self):
        return self.states.size

    def with_weight(self, weight: float) -> "Trail":
        return Trail(self.mode, self.states, self.holds, weight, self.label)

    def visit_times(self) -> np.ndarray:
        """Time at which each visit starts: step index, or elapsed time."""
        if self.mode == DISCRETE:
            return np.arange(self.states.size, dtype=float)
        return np.concatenate(([0.0], np.cumsum(self.holds[:-1])))


def _cumulative_rows(P: np.ndarray) -> np.ndarray:
    sums = P.sum(axis=1)
    bad = np.flatnonzero(sums <= 1e-300)
    if bad.size:
        raise GenerationError(f"state {int(bad[0])} has no outgoing probability mass")
    cum = np.cumsum(P / sums[:, None], axis=1)
    cum[:, -1] = np.inf
    return cum


def _walk_discrete(M: np.ndarray, starts: np.ndarray, length: int, rng) -> np.ndarray:
    cum = _cumulative_rows(M)
    out = np.empty((starts.size, length), dtype=np.int64)
    out[:, 0] = starts
    for t in range(1, length):
        u = rng.random(starts.size)
        out[:, t] = np.argmax(cum[out[:, t - 1]] > u[:, None], axis=1)
    return out


def _walk_continuous(K: np.ndarray, starts: np.ndarray, horizon: float, rng):
    """Lockstep simulation of several walks; returns lists of (states, holds)."""
    off = K - np.diag(np.diag(K))
    rates = off.sum(axis=1)
    jump = np.zeros_like(off)
    moving = rates > 0
    jump[moving] = off[moving] / rates[moving, None]
    cum = np.cumsum(jump, axis=1)
    cum[:, -1] = np.inf

    m = starts.size
    state = starts.copy()
    clock = np.zeros(m)
    active = np.arange(m)
    log_id, log_hold, log_next = [], [], []
    while active.size:
        r = rates[state[active]]
        hold = np.full(active.size, np.inf)
        pos = r > 0
        hold[pos] = rng.exponential(1.0, active.size)[pos] / r[pos]
        u = rng.random(active.size)
        nxt = np.argmax(cum[state[active]] > u[:, None], axis=1)
        ends = clock[active] + hold >= horizon
        log_id.append(active)
        log_hold.append(np.where(ends, horizon - clock[active], hold))
        log_next.append(np.where(ends, -1, nxt))
        go = ~ends
        clock[active[go]] += hold[go]
        state[active[go]] = nxt[go]
        active = active[go]
    ids = np.concatenate(log_id)
    order = np.argsort(ids, kind="stable")
    holds_all = np.concatenate(log_hold)[order]
    next_all = np.concatenate(log_next)[order]
    bounds = np.cumsum(np.bincount(ids, minlength=m))[:-1]
    states_log, holds_log = [], []
    for i, (h, nx) in enumerate(zip(np.split(holds_all, bounds), np.split(next_all, bounds))):
        states_log.append(np.concatenate(([starts[i]], nx[:-1])))
        holds_log.append(h)
    return states_log, holds_log


def _check_start(chain: Chain, start: int):
    if not 0 <= start < chain.n:
        raise ParameterError(f"start state {start} outside [0, {chain.n})")


def sample_trail_discrete(chain: Chain, start: int, length: int, rng: np.random.Generator) -> Trail:
    if chain.mode != DISCRETE:
        raise ParameterError("sample_trail_discrete needs a discrete chain")
    _check_start(chain, start)
    if length < 1:
        raise ParameterError(f"length must be >= 1, got {length}")
    states = _walk_discrete(chain.matrix, np.array([start]), length, rng)[0]
    return Trail(DISCRETE, states)


def sample_trail_continuous(chain: Chain, start: int, horizon: float, rng: np.random.Generator) -> Trail:
    """Competing-exponentials walk observed on ``[0, horizon)``.

    A state with zero total out-rate is absorbing: the walk stays there with
    its hold censored at the horizon.
    """
    if chain.mode != CONTINUOUS:
        raise ParameterError("sample_trail_continuous needs a continuous chain")
    _check_start(chain, start)
    if not horizon > 0:
        raise ParameterError(f"horizon must be > 0, got {horizon}")
    states, holds = _walk_continuous(chain.matrix, np.array([start]), float(horizon), rng)
    return Trail(CONTINUOUS, states[0], holds[0])


def sample_mixture_trails(mixture: MixtureModel, count: int, length_or_horizon, rng: np.random.Generator) -> list:
    """Draw ``count`` trails; each picks ``(chain, start)`` from ``alpha`` then walks.

    ``length_or_horizon`` is a step count for discrete mixtures and a time
    horizon for continuous ones.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    C, n = mixture.alpha.shape
    flat = mixture.alpha.reshape(-1)
    picks = rng.choice(C * n, size=count, p=flat / flat.sum())
    labels, starts = np.divmod(picks, n)
    trails = [None] * count
    for i, chain in enumerate(mixture.chains):
        members = np.flatnonzero(labels == i)
        for lo in range(0, members.size, _CHUNK):
            chunk = members[lo:lo + _CHUNK]
            if mixture.mode == DISCRETE:
                length = int(length_or_horizon)
                if length < 1:
                    raise ParameterError(f"length must be >= 1, got {length}")
                walks = _walk_discrete(chain.matrix, starts[chunk], length, rng)
                for k, j in enumerate(chunk):
                    trails[j] = Trail(DISCRETE, walks[k], label=i)
            else:
                horizon = float(length_or_horizon)
                if not horizon > 0:
                    raise ParameterError(f"horizon must be > 0, got {horizon}")
                states, holds = _walk_continuous(chain.matrix, starts[chunk], horizon, rng)
                for k, j in enumerate(chunk):
                    trails[j] = Trail(CONTINUOUS, states[k], holds[k], label=i)
    return trails


def sample_trails(chain: Chain, count: int, length_or_horizon, rng: np.random.Generator, starts=None) -> list:
    """Trails from a single chain; starts are uniform unless given."""
    if starts is None:
        alpha = np.full((1, chain.n), 1.0 / chain.n)
    else:
        alpha = np.zeros((1, chain.n))
        np.add.at(alpha[0], np.asarray(starts), 1.0)
        alpha /= alpha.sum()
    return sample_mixture_trails(MixtureModel((chain,), alpha), count, length_or_horizon, rng)
