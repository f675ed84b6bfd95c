"""Hitting-time least-squares loss and its analytical gradient.

The variable is the Laplacian pseudoinverse ``Lp``.  Everything else is a
function of it: ``L = pinv(Lp)``, ``d = 1 - L Lp 1`` (floored at 1e-12),
``s = d / |d|_1`` and, with ``b = Lp 1``,

    H[x, y] = b[x] - b[y] - (Lp[x, y] - Lp[y, y]) / s[y].

Coordinates.  Entry ``(i, j)``, ``i != j``, of a gradient returned here is
the derivative along ``E_ij = e_i e_j^T - e_j e_j^T``: raise ``Lp[i, j]`` and
lower ``Lp[j, j]`` by the same amount.  These moves keep every column sum of
``Lp`` fixed, so an iterate with ``1^T Lp = 0`` keeps it, keeps rank ``n - 1``
and ``pinv`` stays smooth along the path.  Diagonal entries are always 0.

Derivative of ``L`` along a direction ``P`` uses the constant-rank
pseudoinverse derivative

    dL = -L P L + L L^T P^T (I - Lp L) + (I - L Lp) P^T L^T L

of which only the first and last terms survive in ``dL Lp 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chains import STATIONARY_FLOOR, pseudoinverse


@dataclass
class GradientWorkspace:
    Lp: np.ndarray
    L: np.ndarray
    d: np.ndarray
    active: np.ndarray
    s: np.ndarray
    b: np.ndarray
    H: np.ndarray
    Delta: np.ndarray = None


def default_weights(n: int) -> np.ndarray:
    W = np.ones((n, n))
    np.fill_diagonal(W, 0.0)
    return W


def workspace(Lp: np.ndarray, L: np.ndarray = None) -> GradientWorkspace:
    Lp = np.asarray(Lp, dtype=float)
    if L is None:
        L = pseudoinverse(Lp)
    n = Lp.shape[0]
    ones = np.ones(n)
    raw = ones - L @ (Lp @ ones)
    active = raw > STATIONARY_FLOOR
    d = np.where(active, raw, STATIONARY_FLOOR)
    s = d / d.sum()
    b = Lp @ ones
    with np.errstate(all="ignore"):
        H = b[:, None] - b[None, :] - (Lp - np.diag(Lp)[None, :]) / s[None, :]
    np.fill_diagonal(H, 0.0)
    return GradientWorkspace(Lp, L, d, active, s, b, H)


def _residual(ws: GradientWorkspace, H_target, W):
    n = ws.Lp.shape[0]
    W = default_weights(n) if W is None else np.asarray(W, dtype=float)
    R = W * (ws.H - np.asarray(H_target, dtype=float))
    np.fill_diagonal(R, 0.0)
    return W, R


def hitting_loss(Lp, H_target, W=None, L=None) -> float:
    """``0.5 * |W o (H(Lp) - H_target)|_F^2``; ``inf`` when the iterate is degenerate."""
    try:
        ws = workspace(Lp, L)
    except (np.linalg.LinAlgError, ValueError):
        return float("inf")
    _, R = _residual(ws, H_target, W)
    val = 0.5 * float(np.sum(R * R))
    return val if np.isfinite(val) else float("inf")


def to_direction_coords(Gamma: np.ndarray) -> np.ndarray:
    """Map an entrywise gradient to derivatives along the ``E_ij`` moves."""
    G = Gamma - np.diag(Gamma)[None, :]
    np.fill_diagonal(G, 0.0)
    return G


def apply_direction_step(Lp: np.ndarray, step: np.ndarray) -> np.ndarray:
    """``Lp - sum_ij step[i, j] E_ij`` (diagonal of ``step`` ignored)."""
    step = np.array(step, dtype=float)
    np.fill_diagonal(step, 0.0)
    out = np.asarray(Lp, dtype=float) - step
    out[np.diag_indices_from(out)] += step.sum(axis=0)
    return out


def a_term_gradient(Delta: np.ndarray) -> np.ndarray:
    """Contribution of ``A = b 1^T - 1 b^T`` to the gradient, already contracted with ``Delta``."""
    Delta = np.asarray(Delta, dtype=float)
    g = Delta.sum(axis=1) - Delta.sum(axis=0)
    return to_direction_coords(np.outer(g, np.ones(g.size)))


def b_term_gradient(ws: GradientWorkspace, Delta: np.ndarray) -> np.ndarray:
    """Contribution of ``B = (Lp - 1 diag(Lp)^T) diag(s)^-1`` contracted with ``Delta``.

    Two parts: the explicit dependence on ``Lp`` and the dependence through
    ``1/s``.  The second needs the stationary Jacobian and, through it, the
    Jacobian of ``L = pinv(Lp)``; it collapses to two outer products after
    precomputing ``phi`` (the sensitivity of the loss to ``d``).
    """
    n = Delta.shape[0]
    ones = np.ones(n)
    r = 1.0 / ws.s
    direct = Delta * r[None, :] - np.diag(r * Delta.sum(axis=0))

    S = ws.d.sum()
    q = np.sum(Delta * (ws.Lp - np.diag(ws.Lp)[None, :]), axis=0)
    phi = np.where(ws.active, np.sum(q / ws.d) - S * q / ws.d**2, 0.0)
    proj = phi - ws.L @ (ws.Lp @ phi)
    via_s = -np.outer(ws.L.T @ phi, ws.d) - np.outer(ws.L.T @ ones, proj)
    return to_direction_coords(direct + via_s)


def loss_and_grad(Lp, H_target, W=None, L=None):
    ws = workspace(Lp, L)
    W, R = _residual(ws, H_target, W)
    loss = 0.5 * float(np.sum(R * R))
    if not np.isfinite(loss):
        return float("inf"), np.full(ws.Lp.shape, np.nan)
    Delta = W * R
    ws.Delta = Delta
    return loss, a_term_gradient(Delta) - b_term_gradient(ws, Delta)


def grad_hitting_loss(Lp, H_target, W=None, L=None) -> np.ndarray:
    """Analytical gradient of :func:`hitting_loss` in ``E_ij`` coordinates, O(n^3)."""
    return loss_and_grad(Lp, H_target, W, L)[1]


def perturbation_direction(n: int, i: int, j: int) -> np.ndarray:
    E = np.zeros((n, n))
    E[i, j] += 1.0
    E[j, j] -= 1.0
    return E


def fd_gradient(Lp, H_target, W=None, step: float = 1e-6) -> np.ndarray:
    """Central differences of the loss along every ``E_ij``; ``L`` is recomputed each time."""
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")
    Lp = np.asarray(Lp, dtype=float)
    n = Lp.shape[0]
    G = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            E = perturbation_direction(n, i, j)
            up = hitting_loss(Lp + step * E, H_target, W)
            down = hitting_loss(Lp - step * E, H_target, W)
            G[i, j] = (up - down) / (2.0 * step)
    return G


def forward_fd_gradient(Lp, H_target, W=None, step: float = 1e-6) -> np.ndarray:
    """One-sided differences; half the loss evaluations of :func:`fd_gradient`."""
    Lp = np.asarray(Lp, dtype=float)
    n = Lp.shape[0]
    base = hitting_loss(Lp, H_target, W)
    G = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                G[i, j] = (hitting_loss(Lp + step * perturbation_direction(n, i, j), H_target, W) - base) / step
    return G


def hitting_time_jacobian(Lp, L=None) -> np.ndarray:
    """Full tensor ``J[x, y, i, j] = dH[x, y] / d(E_ij)`` built term by term, O(n^5).

    Slow reference used to check the contracted formulas on small ``n``.
    """
    ws = workspace(Lp, L)
    Lp, L = ws.Lp, ws.L
    n = Lp.shape[0]
    ones = np.ones(n)
    eye = np.eye(n)
    S = ws.d.sum()
    N = Lp - np.diag(Lp)[None, :]
    r = 1.0 / ws.s
    J = np.zeros((n, n, n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            P = perturbation_direction(n, i, j)
            dL = -L @ P @ L + L @ L.T @ P.T @ (eye - Lp @ L) + (eye - L @ Lp) @ P.T @ L.T @ L
            dd = -(dL @ Lp @ ones) - L @ (P @ ones)
            dd = np.where(ws.active, dd, 0.0)
            dr = dd.sum() / ws.d - S * dd / ws.d**2
            db = P @ ones
            dA = db[:, None] - db[None, :]
            dN = P - np.diag(P)[None, :]
            dB = dN * r[None, :] + N * dr[None, :]
            dH = dA - dB
            np.fill_diagonal(dH, 0.0)
            J[:, :, i, j] = dH
    return J


def naive_gradient(Lp, H_target, W=None, L=None) -> np.ndarray:
    """Gradient by contracting the full Jacobian tensor with the weighted residual."""
    ws = workspace(Lp, L)
    W, R = _residual(ws, H_target, W)
    return np.einsum("xyij,xy->ij", hitting_time_jacobian(ws.Lp, ws.L), W * R)
