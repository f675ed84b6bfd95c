"""Recovery error, mixture matching, estimate error and transition pruning."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .chains import DISCRETE, Chain, MixtureModel
from .errors import ParameterError
from .learn import project_chain


@dataclass
class EvalReport:
    recovery_error: float
    per_chain_errors: list
    assignment: list
    frobenius_ht_error: Optional[float] = None

    def to_dict(self) -> dict:
        out = {
            "recovery_error": self.recovery_error,
            "per_chain_errors": list(self.per_chain_errors),
            "assignment": list(self.assignment),
        }
        if self.frobenius_ht_error is not None:
            out["frobenius_ht_error"] = self.frobenius_ht_error
        return out


def tv_row(row, other) -> float:
    """Half the L1 distance; also used for rows that are not distributions."""
    row = np.asarray(row, dtype=float)
    other = np.asarray(other, dtype=float)
    if row.shape != other.shape:
        raise ParameterError("rows must have equal length")
    return 0.5 * float(np.abs(row - other).sum())


def _rows(chain):
    if isinstance(chain, Chain):
        return chain.matrix, chain.mode
    return np.asarray(chain, dtype=float), DISCRETE


def recovery_error(chain, other) -> float:
    """Mean row-wise TV distance.

    Continuous chains compare off-diagonal rates only, since the diagonal is
    determined by them.  Plain arrays are treated as discrete rows.
    """
    A, mode = _rows(chain)
    B, mode_b = _rows(other)
    if A.shape != B.shape:
        raise ParameterError(f"shape mismatch: {A.shape} vs {B.shape}")
    if isinstance(chain, Chain) and isinstance(other, Chain) and mode != mode_b:
        raise ParameterError("cannot compare chains of different modes")
    diff = np.abs(A - B)
    if mode != DISCRETE:
        np.fill_diagonal(diff, 0.0)
    return float(0.5 * diff.sum(axis=1).mean())


def pairwise_errors(a: MixtureModel, b: MixtureModel) -> np.ndarray:
    return np.array([[recovery_error(x, y) for y in b.chains] for x in a.chains])


def mixture_recovery_error(a: MixtureModel, b: MixtureModel) -> EvalReport:
    """Mean recovery error under the best one-to-one matching of chains."""
    if a.C != b.C or a.n != b.n or a.mode != b.mode:
        raise ParameterError("mixtures must agree in C, n and mode")
    cost = pairwise_errors(a, b)
    rows, cols = linear_sum_assignment(cost)
    per = cost[rows, cols]
    return EvalReport(float(per.mean()), [float(x) for x in per], [int(c) for c in cols])


def frobenius_error(H_hat, H, mask=None) -> float:
    D = np.asarray(H_hat, dtype=float) - np.asarray(H, dtype=float)
    if mask is not None:
        D = np.where(mask, D, 0.0)
    return float(np.sqrt(np.sum(D * D)))


def prune_small_transitions(chain: Chain, ratio: float = 0.1) -> Chain:
    """Drop every ``M[u, v] <= ratio * max_w M[u, w]`` and renormalize rows."""
    if chain.mode != DISCRETE:
        raise ParameterError("pruning is defined for discrete chains")
    if not 0 <= ratio < 1:
        raise ParameterError(f"ratio must lie in [0, 1), got {ratio}")
    M = np.array(chain.matrix)
    M[M <= ratio * M.max(axis=1, keepdims=True)] = 0.0
    return project_chain(M, DISCRETE)
