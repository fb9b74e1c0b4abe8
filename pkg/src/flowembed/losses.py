"""Loss terms with analytic gradients.

All functions return ``(value, gradient(s))`` and work on plain arrays.
"""

from __future__ import annotations

import numpy as np

COINCIDENT_EPS = 1e-12


def distance_loss(embedded, manifold_d):
    """Mean squared mismatch between embedded and target pairwise distances.

    Averaged over the ``B (B - 1)`` ordered pairs ``i != j``.  Returns
    ``(loss, d loss / d embedded)``.
    """
    E = np.asarray(embedded, dtype=float)
    D = np.asarray(manifold_d, dtype=float)
    b = E.shape[0]
    if b < 2:
        raise ValueError("distance loss needs at least 2 points")
    if D.shape != (b, b):
        raise ValueError(f"target distances have shape {D.shape}, expected {(b, b)}")
    diff = E[:, None, :] - E[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    resid = dist - D
    np.fill_diagonal(resid, 0.0)
    n_pairs = b * (b - 1)
    loss = float(np.sum(resid * resid)) / n_pairs
    # subgradient: no direction for (near-)coincident points
    safe = dist > COINCIDENT_EPS
    coef = np.zeros_like(dist)
    coef[safe] = (resid + resid.T)[safe] / dist[safe]
    grad = (2.0 / n_pairs) * np.einsum("ij,ijk->ik", coef, diff)
    return loss, grad


def flow_neighbor_loss(center_embed, neighbor_embeds, psi_at_center):
    """Sum over neighbours of ``|(e_j - e_i) - psi_i|^2``.

    Returns ``(loss, grad_center, grad_neighbors, grad_psi)``.
    """
    c = np.asarray(center_embed, dtype=float)
    nb = np.asarray(neighbor_embeds, dtype=float)
    psi = np.asarray(psi_at_center, dtype=float)
    if nb.ndim != 2 or nb.shape[0] == 0:
        raise ValueError("flow loss needs a nonempty neighbour set")
    resid = (nb - c) - psi
    loss = float(np.sum(resid * resid))
    g_nb = 2.0 * resid
    g_c = -g_nb.sum(axis=0)
    return loss, g_c, g_nb, g_c.copy()


def laplacian_smoothness(field_at_points, L):
    """Sum over output coordinates of the Rayleigh quotient ``v^T L v / v^T v``.

    Columns with norm below ``1e-12`` contribute zero value and gradient.
    """
    F = np.asarray(field_at_points, dtype=float)
    L = getattr(L, "L", L)
    L = np.asarray(L, dtype=float)
    value = 0.0
    grad = np.zeros_like(F)
    for c in range(F.shape[1]):
        v = F[:, c]
        den = float(v @ v)
        if np.sqrt(den) < 1e-12:
            continue
        Lv = L @ v
        q = float(v @ Lv) / den
        value += q
        grad[:, c] = ((Lv + L.T @ v) - 2.0 * q * v) / den
    return value, grad
