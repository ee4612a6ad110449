"""Seeded parameter sets for each branch scenario."""

import numpy as np

from coinfect.model import make_params

TARGETS = {
    "S1": lambda rng: (rng.uniform(0.3, 0.9), rng.uniform(0.3, 3.0)),
    "S2": lambda rng: (lambda e1: (e1, e1 * rng.uniform(1.3, 2.0)))(rng.uniform(1.3, 3.0)),
    "S3": lambda rng: (lambda e2: (e2 * rng.uniform(1.3, 2.0), e2))(rng.uniform(1.3, 2.5)),
    "S4": lambda rng: (rng.uniform(1.5, 4.0), rng.uniform(0.2, 0.8)),
}


def scenario_params(rng, scenario, beta=(0.0, 0.0), gamma=(0.0, 0.0), K=1.0):
    """Random rates whose ``(eta1*, eta2*)`` fall in ``scenario``."""
    alpha = rng.uniform(2.0, 6.0, 3)
    gaps = rng.uniform(0.05, 0.2, 3)
    sigma = np.cumsum(gaps)
    mu = sigma * alpha
    es1, es2 = TARGETS[scenario](rng)
    r = 1.0
    eta = (es1 * alpha[0] * alpha[2] * (sigma[2] - sigma[0]) / r,
           es2 * alpha[1] * alpha[2] * (sigma[2] - sigma[1]) / r)
    return make_params(
        r=r, K=K, alpha=tuple(alpha), mu=tuple(mu), eta=eta, gamma=tuple(gamma),
        beta=tuple(beta), rho=(0.1, 0.1, 0.1), d4=0.1,
    )


def scenario_sets(scenario, n, seed, total=0.0):
    """``n`` sets with ``beta_bar + gamma_bar = total`` split evenly over the four."""
    rng = np.random.default_rng(seed)
    t = total / 4
    return [scenario_params(rng, scenario, (t, t), (t, t)) for _ in range(n)]
