"""Exact hitting times, their estimation from trails, noise and censoring."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .chains import DISCRETE, Chain, pseudoinverse, stationary, to_laplacian
from .errors import IrreducibilityError, NumericWarning, ParameterError

S_FLOOR = 1e-12


def hitting_time_terms(Lp: np.ndarray, s: np.ndarray):
    """Split the hitting-time matrix as ``H = A - B``.

    With ``b = Lp 1``::

        A = b 1^T - 1 b^T
        B = (Lp - 1 diag(Lp)^T) diag(s)^-1

    so that ``H[u, v] = b[u] - b[v] - (Lp[u, v] - Lp[v, v]) / s[v]``.
    """
    Lp = np.asarray(Lp, dtype=float)
    s = np.asarray(s, dtype=float)
    b = Lp.sum(axis=1)
    A = b[:, None] - b[None, :]
    B = (Lp - np.diag(Lp)[None, :]) / s[None, :]
    return A, B


def exact_hitting_times(Lp: np.ndarray, s: np.ndarray, mode: str = DISCRETE) -> np.ndarray:
    """Hitting-time matrix from a Laplacian pseudoinverse and stationary vector.

    The same closed form serves both time modes; ``mode`` is accepted for
    symmetry with the rest of the API.  A stationary entry at or below 1e-12
    raises a :class:`NumericWarning` but the matrix is still returned.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s <= S_FLOOR):
        warnings.warn(
            f"stationary mass {s.min():.3g} at the floor; hitting times toward it are unreliable",
            NumericWarning,
            stacklevel=2,
        )
    A, B = hitting_time_terms(Lp, s)
    H = A - B
    np.fill_diagonal(H, 0.0)
    return H


def hitting_times(chain: Chain) -> np.ndarray:
    L = to_laplacian(chain)
    Lp = pseudoinverse(L)
    return exact_hitting_times(Lp, stationary(L, Lp), chain.mode)


def exact_hitting_times_oracle(chain: Chain) -> np.ndarray:
    """Per-target linear solves of the first-step equations.

    For each target ``v``: ``L[I, I] h = 1`` on ``I = [n] minus {v}``, which is
    ``h_u = 1 + sum_w M_uw h_w`` (discrete) or ``sum_w K_uw h_w = -1``
    (continuous) with ``h_v = 0``.
    """
    L = to_laplacian(chain)
    n = chain.n
    H = np.zeros((n, n))
    for v in range(n):
        rest = np.r_[0:v, v + 1:n]
        if rest.size == 0:
            continue
        sub = L[np.ix_(rest, rest)]
        if np.linalg.cond(sub) > 1e13:
            raise IrreducibilityError(f"state {v} is not reachable from every other state")
        H[rest, v] = np.linalg.solve(sub, np.ones(rest.size))
    return H


@dataclass(frozen=True, eq=False)
class HittingTimeEstimate:
    """Estimated hitting times with the observed-entry mask and weight totals."""

    H_hat: np.ndarray
    mask: np.ndarray
    weight_sum: np.ndarray

    @property
    def n(self) -> int:
        return self.H_hat.shape[0]

    @property
    def weights(self) -> np.ndarray:
        """Loss weights: 1 on observed off-diagonal entries, 0 elsewhere."""
        W = self.mask.astype(float)
        np.fill_diagonal(W, 0.0)
        return W


def trail_hitting_sums(trail, n: int):
    """Unweighted sample totals and counts ``(T, C)`` contributed by one trail.

    For every visit at time ``t`` to ``u`` and every state ``v`` occurring at
    some ``t' >= t``, the sample ``time(t') - time(t)`` with the smallest such
    ``t'`` is added to ``T[u, v]``.  Times are step indices for discrete
    trails and visit start times for continuous ones.
    """
    x = trail.states
    if x.max() >= n:
        raise ParameterError(f"trail visits state {int(x.max())} but n = {n}")
    tau = trail.visit_times()
    idx = np.arange(x.size)
    T = np.zeros((n, n))
    C = np.zeros((n, n))
    for v in np.unique(x):
        pos = np.flatnonzero(x == v)
        k = np.searchsorted(pos, idx)
        ok = k < pos.size
        dt = tau[pos[k[ok]]] - tau[ok]
        T[:, v] += np.bincount(x[ok], weights=dt, minlength=n)
        C[:, v] += np.bincount(x[ok], minlength=n)
    np.fill_diagonal(T, 0.0)
    np.fill_diagonal(C, 0.0)
    return T, C


def estimate_from_sums(T: np.ndarray, C: np.ndarray) -> HittingTimeEstimate:
    mask = C > 0
    H = np.zeros_like(T)
    H[mask] = T[mask] / C[mask]
    W = np.where(mask, C, 0.0)
    np.fill_diagonal(H, 0.0)
    np.fill_diagonal(W, 0.0)
    np.fill_diagonal(mask, True)
    return HittingTimeEstimate(H, mask, W)


def estimate_hitting_times(trails, n: int, weights=None) -> HittingTimeEstimate:
    """Weighted average of first-passage samples over all trails.

    Each trail contributes with its own ``weight`` (times ``weights[k]`` when
    given).  Pairs never observed stay unmasked.
    """
    T = np.zeros((n, n))
    C = np.zeros((n, n))
    for k, trail in enumerate(trails):
        w = trail.weight if weights is None else trail.weight * float(weights[k])
        if w == 0:
            continue
        t, c = trail_hitting_sums(trail, n)
        T += w * t
        C += w * c
    return estimate_from_sums(T, C)


def add_noise(H: np.ndarray, rng: np.random.Generator, *, sigma=None, t_cover=None) -> np.ndarray:
    """Independent Gaussian noise on off-diagonal entries.

    Homoscedastic with standard deviation ``sigma``, or heteroscedastic with
    ``sigma_uv = 2 H_uv / t_cover``.  Negative results are kept.
    """
    if (sigma is None) == (t_cover is None):
        raise ParameterError("give exactly one of sigma or t_cover")
    H = np.asarray(H, dtype=float)
    if sigma is not None:
        if sigma < 0:
            raise ParameterError(f"sigma must be >= 0, got {sigma}")
        scale = np.full(H.shape, float(sigma))
    else:
        if not t_cover > 0:
            raise ParameterError(f"t_cover must be > 0, got {t_cover}")
        scale = 2.0 * np.abs(H) / t_cover
    out = H + scale * rng.standard_normal(H.shape)
    np.fill_diagonal(out, 0.0)
    return out


def censor_missing(estimate: HittingTimeEstimate, fill_value: float) -> HittingTimeEstimate:
    """Replace unobserved hitting times by ``fill_value`` and mark everything observed."""
    if not fill_value > 0:
        raise ParameterError(f"fill_value must be > 0, got {fill_value}")
    H = np.where(estimate.mask, estimate.H_hat, float(fill_value))
    np.fill_diagonal(H, 0.0)
    return HittingTimeEstimate(H, np.ones_like(estimate.mask, dtype=bool), estimate.weight_sum.copy())


def max_hitting_time(H: np.ndarray) -> float:
    """Largest off-diagonal entry, used as the cover-time scale."""
    H = np.asarray(H, dtype=float)
    off = ~np.eye(H.shape[0], dtype=bool)
    if not off.any():
        return 0.0
    return float(H[off].max())
