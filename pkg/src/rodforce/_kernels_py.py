"""Pure numpy implementation of the hot kernels.

These routines are the reference implementation; `rodforce.kernels` swaps in
the compiled extension when it is available.  All take C-contiguous float64
arrays and make no attempt to validate physical invariants -- callers do that.

Conventions:
  * ``nodes``: (n+1, 3) positions, ``rest``: (n,) per-piece rest lengths.
  * Discrete curvature at interior vertex j (1..n-1) is
    ``kb_j = 2 (e_{j-1} x e_j) / (|e_{j-1}||e_j| + e_{j-1}.e_j)``.
  * Bending energy ``E = sum_j EI/(2 lbar_j) |kb_j|^2`` with the Voronoi rest
    length ``lbar_j = (rest_{j-1} + rest_j) / 2``.
  * The per-vertex moment returned by :func:`bend_state` is the exact
    energy-conjugate one, ``EI/lbar * kb * 2|e_{j-1}||e_j|/D_j``: rotating the
    following piece rigidly by dtheta changes the energy by -M.dtheta.  The
    moment set therefore satisfies action-reaction exactly and the per-piece
    torque from its two boundary vertices equals ``-e_i x dE/de_i``.

Degenerate folds (denominator D -> 0) return ``inf`` energy so that a line
search backs off, rather than raising mid-solve.
"""

from __future__ import annotations

import numpy as np

IMPLEMENTATION = "python"

# Below this fraction of |e1||e2|, adjacent edges count as folded back.
FOLD_EPS = 1e-12


def bend_state(nodes, rest, ei):
    """Bending energy, its node-position gradient, and vertex moments.

    Returns ``(energy, grad, moments)`` with ``grad`` shaped like ``nodes``
    and ``moments`` shaped (n+1, 3); rows 0 and n stay zero so that the
    torque on piece i is ``moments[i+1] - moments[i]``.
    """
    nodes = np.asarray(nodes, dtype=np.float64)
    rest = np.asarray(rest, dtype=np.float64)
    n = nodes.shape[0] - 1
    grad = np.zeros_like(nodes)
    moments = np.zeros_like(nodes)
    if n < 2:
        return 0.0, grad, moments

    e = nodes[1:] - nodes[:-1]                      # (n, 3)
    lc = np.linalg.norm(e, axis=1)                  # current lengths
    a = lc[:-1] * lc[1:]                            # (n-1,) per vertex
    dots = np.einsum("ij,ij->i", e[:-1], e[1:])
    denom = a + dots
    if np.any(denom <= FOLD_EPS * a):
        return np.inf, grad, moments

    lbar = 0.5 * (rest[:-1] + rest[1:])
    kb = 2.0 * np.cross(e[:-1], e[1:]) / denom[:, None]
    kb2 = np.einsum("ij,ij->i", kb, kb)
    energy = float(np.sum(ei / (2.0 * lbar) * kb2))

    moments[1:-1] = (ei / lbar * 2.0 * a / denom)[:, None] * kb

    # Gradients w.r.t. the two edges of each vertex, then scatter to nodes.
    coef = (ei / (lbar * denom))[:, None]
    unit_prev = e[:-1] / lc[:-1, None]
    unit_next = e[1:] / lc[1:, None]
    g_prev = coef * (
        2.0 * np.cross(e[1:], kb)
        - kb2[:, None] * (unit_prev * lc[1:, None] + e[1:])
    )
    g_next = coef * (
        2.0 * np.cross(kb, e[:-1])
        - kb2[:, None] * (unit_next * lc[:-1, None] + e[:-1])
    )
    p = np.zeros((n, 3))
    p[:-1] += g_prev
    p[1:] += g_next
    grad[:-1] -= p
    grad[1:] += p
    return energy, grad, moments


def stretch_state(nodes, rest, ks):
    """Stretching penalty energy and gradient.

    ``ks`` is the per-piece stiffness (N); energy per piece is
    ``ks/(2 rest) (|e| - rest)^2``.
    """
    nodes = np.asarray(nodes, dtype=np.float64)
    rest = np.asarray(rest, dtype=np.float64)
    ks = np.asarray(ks, dtype=np.float64)
    e = nodes[1:] - nodes[:-1]
    lc = np.linalg.norm(e, axis=1)
    if np.any(lc <= 0.0):
        return np.inf, np.zeros_like(nodes)
    strain = lc - rest
    energy = float(np.sum(0.5 * ks / rest * strain * strain))
    p = (ks * strain / (rest * lc))[:, None] * e
    grad = np.zeros_like(nodes)
    grad[:-1] -= p
    grad[1:] += p
    return energy, grad
