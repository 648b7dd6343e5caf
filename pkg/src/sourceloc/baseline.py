"""Label-propagation source scoring baseline.

Infected/uninfected states become +1/-1 labels, spread through the
row-normalized adjacency to a fixpoint, and the converged score field is
read out: sources are the nodes scoring positive and at least as high as
every neighbor.
"""

from __future__ import annotations

import numpy as np

from .graphs import Graph


def lpsi_baseline(
    g: Graph,
    observation,
    alpha: float = 0.5,
    tol: float = 1e-6,
    max_sweeps: int = 1000,
):
    """Returns (converged scores, binary source prediction).

    Iterates x <- alpha * S x + (1 - alpha) * x0 with S the row-stochastic
    adjacency and x0 the +/-1 observation labels; raises if the sweep cap is
    reached before the residual drops below tol.
    """
    obs = np.asarray(observation, dtype=np.float64)
    if obs.shape != (g.num_nodes,):
        raise ValueError(f"observation length {obs.shape} != {g.num_nodes} nodes")
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must be in [0, 1)")
    x0 = np.where(obs >= 0.5, 1.0, -1.0)
    x = x0.copy()
    s = g.norm_adjacency
    for _ in range(max_sweeps):
        x_next = alpha * (s @ x) + (1.0 - alpha) * x0
        residual = float(np.max(np.abs(x_next - x)))
        x = x_next
        if residual < tol:
            break
    else:
        raise RuntimeError(f"label propagation did not converge; residual {residual:.3e} after {max_sweeps} sweeps")
    neighbor_max = np.full(g.num_nodes, -np.inf)
    adj = g.adjacency.tocoo()
    np.maximum.at(neighbor_max, adj.row, x[adj.col])
    prediction = ((x > 0) & (x >= neighbor_max)).astype(np.float64)
    return x, prediction
