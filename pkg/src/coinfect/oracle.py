"""Brute-force reference computations for cross-checking the analytic code.

Nothing here uses closed forms, branch structure or analytic derivatives
beyond the Newton kernel's Jacobian, so agreement with the main modules is
meaningful evidence.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.stats import qmc

from . import kernels
from .equilibria import EquilibriumRecord, Provenance, type_code_of, type_threshold
from .model import State, ValidatedParams, recovered_equilibrium, rhs

DEDUP_DIST = 1e-6
RESIDUAL_TOL = 1e-10
NEG_DISCARD = 1e-9

_LABELS = {
    (0, 0, 0): "G000", (1, 0, 0): "G100", (0, 1, 0): "G010", (0, 0, 1): "G001",
    (1, 0, 1): "G101", (0, 1, 1): "G011", (1, 1, 1): "G111",
}


def fd_jacobian(f: Callable, x, h_scale: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of ``f`` at ``x`` with steps ``h_scale * (1 + |x_j|)``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x), dtype=float)
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        h = h_scale * (1.0 + abs(x[j]))
        e = np.zeros_like(x)
        e[j] = h
        J[:, j] = (np.asarray(f(x + e), dtype=float) - np.asarray(f(x - e), dtype=float)) / (2 * h)
    return J


def seed_box(p: ValidatedParams) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper corners of the box every equilibrium is searched in."""
    s1, _, s3 = p.sigma
    a1, a2, a3 = p.alpha
    lo = np.array([s1, 0.0, 0.0, 0.0])
    hi = np.array([s3, p.r / a1, p.r / a2, p.r / (a3 + p.beta_bar)])
    return lo, hi


def sobol_seeds(p: ValidatedParams, n_seeds: int, seed: int = 0) -> np.ndarray:
    """``n_seeds`` scrambled Sobol points scaled into :func:`seed_box`."""
    m = max(0, int(np.ceil(np.log2(max(n_seeds, 1)))))
    u = qmc.Sobol(d=4, scramble=True, seed=seed).random_base2(m)[:n_seeds]
    lo, hi = seed_box(p)
    return qmc.scale(u, lo, hi) if np.all(hi > lo) else lo + u * (hi - lo)


def dedup(points, dist: float = DEDUP_DIST) -> np.ndarray:
    """Greedy max-norm clustering; the first point of each cluster is kept."""
    kept = []
    for x in np.asarray(points, dtype=float):
        if all(np.max(np.abs(x - k)) > dist for k in kept):
            kept.append(x)
    return np.array(kept).reshape(-1, 4)


def grid_equilibria(p: ValidatedParams, K: float | None = None, n_seeds: int = 1000,
                    seed: int = 0) -> list[EquilibriumRecord]:
    """Every equilibrium Newton finds from ``n_seeds`` quasi-random starts.

    The two disease-free points are added to the seeds. Roots with a component
    below ``-1e-9`` are dropped and tiny negatives are clipped to zero.
    Survivors must have residual ``<= 1e-10 r`` and are deduplicated at
    max-norm distance ``1e-6``. Records are sorted by type code and then by
    ``S``; stability is left unclassified.
    """
    q = p if K is None else p.with_K(K)
    # G000 sits at S = K, outside the box once K > sigma3
    seeds = np.vstack([sobol_seeds(q, n_seeds, seed), [[q.K, 0, 0, 0], [0, 0, 0, 0]]])
    roots, status, _, _ = kernels.newton_batch(q.to_vector(), seeds, 1e-13 * q.r, 100, False)
    good = []
    for x, st in zip(roots, status):
        if st != kernels.NEWTON_CONVERGED or not np.all(np.isfinite(x)):
            continue
        if np.any(x < -NEG_DISCARD):
            continue
        x = np.maximum(x, 0.0)
        if np.max(np.abs(rhs(q, x)[:4])) > RESIDUAL_TOL * q.r:
            continue
        good.append(x)
    uniq = dedup(good)
    eps = type_threshold(q)
    out = []
    for x in uniq:
        code = type_code_of(q, x)
        label = "O" if x[0] <= eps and code == (0, 0, 0) else _LABELS[code]
        out.append(EquilibriumRecord(
            point=State(*(float(v) for v in x), recovered_equilibrium(q, x)),
            type_code=code, K=float(q.K), provenance=Provenance.NEWTON, label=label,
        ))
    out.sort(key=lambda e: (e.type_code, e.point.S))
    return out


def interior_roots(records) -> list[EquilibriumRecord]:
    """Records whose four components are all strictly positive."""
    return [e for e in records if e.type_code == (1, 1, 1)]
