"""Parameters, state and vector field of the two-pathogen coinfection model.

The susceptible class grows logistically towards the carrying capacity ``K``;
``I1``/``I2`` are single infections, ``I12`` is the coinfected class and ``R``
collects recoveries. ``R`` never feeds back into the other four equations, so
all equilibrium work happens on the ``(S, I1, I2, I12)`` block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import kernels
from .errors import (
    DegenerateDeltaAlpha,
    DegenerateEta,
    NonPositiveParameter,
    SigmaOrderViolation,
    ValidationError,
)

DEGENERACY_RTOL = 1e-12

CONFIG_KEYS = (
    "r", "K",
    "alpha1", "alpha2", "alpha3",
    "mu1", "mu2", "mu3",
    "eta1", "eta2",
    "gamma1", "gamma2",
    "beta1", "beta2",
    "rho1", "rho2", "rho3",
    "d4",
)


class State(NamedTuple):
    S: float
    I1: float
    I2: float
    I12: float
    R: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


@dataclass(frozen=True)
class Params:
    """Model constants plus the carrying capacity ``K``.

    Tuples hold the per-compartment rates: ``alpha``/``mu``/``rho`` are indexed
    by (I1, I2, I12), ``eta``/``gamma``/``beta`` by (I1, I2).
    """

    r: float
    K: float
    alpha: tuple[float, float, float]
    mu: tuple[float, float, float]
    eta: tuple[float, float]
    gamma: tuple[float, float] = (0.0, 0.0)
    beta: tuple[float, float] = (0.0, 0.0)
    rho: tuple[float, float, float] = (0.1, 0.1, 0.1)
    d4: float = 0.1

    @property
    def sigma(self) -> tuple[float, float, float]:
        return tuple(m / a for m, a in zip(self.mu, self.alpha))

    @property
    def gamma_bar(self) -> float:
        return self.gamma[0] + self.gamma[1]

    @property
    def beta_bar(self) -> float:
        return self.beta[0] + self.beta[1]

    @property
    def coinfection_size(self) -> float:
        """``beta_bar + gamma_bar``, the size of the coinfection constants."""
        return self.beta_bar + self.gamma_bar

    def with_K(self, K: float) -> "Params":
        return replace(self, K=float(K))

    def replace(self, **changes) -> "Params":
        return replace(self, **changes)

    def to_vector(self, K: float | None = None) -> np.ndarray:
        """Flat parameter vector in the kernel layout."""
        return np.array(
            [self.r, self.K if K is None else K, *self.alpha, *self.mu, *self.eta,
             *self.gamma, *self.beta, *self.rho, self.d4],
            dtype=float,
        )

    def to_mapping(self) -> dict[str, float]:
        return dict(zip(CONFIG_KEYS, self.to_vector().tolist()))

    @classmethod
    def from_mapping(cls, data: Mapping[str, float]) -> "Params":
        missing = [k for k in CONFIG_KEYS if k not in data]
        if missing:
            raise ValidationError(f"missing parameter(s): {', '.join(missing)}")
        unknown = sorted(set(data) - set(CONFIG_KEYS))
        if unknown:
            raise ValidationError(f"unknown parameter(s): {', '.join(unknown)}")
        v = {k: float(data[k]) for k in CONFIG_KEYS}
        return cls(
            r=v["r"], K=v["K"],
            alpha=(v["alpha1"], v["alpha2"], v["alpha3"]),
            mu=(v["mu1"], v["mu2"], v["mu3"]),
            eta=(v["eta1"], v["eta2"]),
            gamma=(v["gamma1"], v["gamma2"]),
            beta=(v["beta1"], v["beta2"]),
            rho=(v["rho1"], v["rho2"], v["rho3"]),
            d4=v["d4"],
        )


@dataclass(frozen=True)
class ValidatedParams(Params):
    """:class:`Params` whose invariants have been checked.

    Construct through :func:`validate_params`; downstream code relies on the
    ordering ``sigma1 < sigma2 < sigma3`` and on the non-degeneracy conditions.
    """

    @property
    def eta_star(self) -> tuple[float, float]:
        s1, s2, s3 = self.sigma
        a1, a2, a3 = self.alpha
        return (
            self.r * self.eta[0] / (a1 * a3 * (s3 - s1)),
            self.r * self.eta[1] / (a2 * a3 * (s3 - s2)),
        )

    def with_K(self, K: float) -> "ValidatedParams":
        if not (K > 0 and np.isfinite(K)):
            raise NonPositiveParameter(f"K must be positive, got {K}")
        return replace(self, K=float(K))

    def replace(self, **changes) -> "ValidatedParams":
        return validate_params(Params.replace(self, **changes))


def validate_params(raw: Params) -> ValidatedParams:
    """Check every model invariant and return the validated parameters.

    Rates in the basic group, ``K``, ``rho`` and ``d4`` must be strictly
    positive. The coinfection constants ``gamma`` and ``beta`` may be zero,
    which is the reduced system with closed-form equilibria.

    Raises:
        NonPositiveParameter, SigmaOrderViolation, DegenerateEta,
        DegenerateDeltaAlpha
    """
    positive = {
        "r": [raw.r], "K": [raw.K], "alpha": raw.alpha, "mu": raw.mu,
        "eta": raw.eta, "rho": raw.rho, "d4": [raw.d4],
    }
    for name, vals in positive.items():
        for i, v in enumerate(vals):
            if not (np.isfinite(v) and v > 0):
                label = name if len(vals) == 1 else f"{name}{i + 1}"
                raise NonPositiveParameter(f"{label} must be positive, got {v}")
    for name, vals in (("gamma", raw.gamma), ("beta", raw.beta)):
        for i, v in enumerate(vals):
            if not (np.isfinite(v) and v >= 0):
                raise NonPositiveParameter(f"{name}{i + 1} must be non-negative, got {v}")
    if len(raw.alpha) != 3 or len(raw.mu) != 3 or len(raw.rho) != 3:
        raise ValidationError("alpha, mu and rho need three entries")
    if len(raw.eta) != 2 or len(raw.gamma) != 2 or len(raw.beta) != 2:
        raise ValidationError("eta, gamma and beta need two entries")

    s1, s2, s3 = raw.sigma
    if not (s1 < s2 < s3):
        raise SigmaOrderViolation(
            f"need sigma1 < sigma2 < sigma3, got ({s1:.6g}, {s2:.6g}, {s3:.6g})"
        )

    a1, a2, _ = raw.alpha
    e1, e2 = raw.eta
    delta_alpha = a2 * e1 - a1 * e2
    if abs(delta_alpha) < DEGENERACY_RTOL * a2 * e1:
        raise DegenerateDeltaAlpha(f"alpha2*eta1 - alpha1*eta2 = {delta_alpha:.3g} vanishes")

    vals = {f.name: getattr(raw, f.name) for f in fields(Params)}
    vals = {k: tuple(float(t) for t in v) if isinstance(v, (tuple, list)) else float(v)
            for k, v in vals.items()}
    p = ValidatedParams(**vals)
    es1, es2 = p.eta_star
    for label, es in (("eta1*", es1), ("eta2*", es2)):
        if abs(es - 1.0) <= DEGENERACY_RTOL:
            raise DegenerateEta(f"{label} = {es!r} equals 1")
    if abs(es1 - es2) <= DEGENERACY_RTOL * max(es1, es2):
        raise DegenerateEta(f"eta1* = {es1!r} equals eta2* = {es2!r}")
    return p


def make_params(**kw) -> ValidatedParams:
    """Convenience constructor: ``make_params(r=1, K=1, alpha=(5, 4, 3), ...)``."""
    return validate_params(Params(**kw))


def canonical_params(**overrides) -> ValidatedParams:
    """The worked parameter set used throughout the docs and tests.

    ``r=1, alpha=(5, 4, 3), mu=(1, 1.2, 1.5), eta=(9, 1.2)`` gives
    ``sigma=(0.2, 0.3, 0.5)``, ``eta1*=2`` and ``eta2*=0.5``.
    """
    base = dict(
        r=1.0, K=1.0, alpha=(5.0, 4.0, 3.0), mu=(1.0, 1.2, 1.5), eta=(9.0, 1.2),
        gamma=(1e-3, 1e-3), beta=(1e-3, 1e-3), rho=(0.1, 0.1, 0.1), d4=0.1,
    )
    base.update(overrides)
    return make_params(**base)


def _as_state_array(x: Sequence[float]) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape == (4,):
        arr = np.append(arr, 0.0)
    if arr.shape != (5,):
        raise ValueError(f"state needs 4 or 5 components, got shape {arr.shape}")
    return arr


def rhs(p: ValidatedParams, x: Sequence[float]) -> np.ndarray:
    """Time derivative ``(S', I1', I2', I12', R')`` at state ``x`` (K = ``p.K``)."""
    return kernels.rhs5(p.to_vector(), _as_state_array(x))


def g_values(p: ValidatedParams, x: Sequence[float]) -> np.ndarray:
    """The four per-capita factors ``(g1, g2, g3, g4)``.

    With them the first four equations read ``g1 S``, ``g2 I1 + beta1 S I12``,
    ``g3 I2 + beta2 S I12`` and ``g4 I12 + gamma_bar I1 I2``.
    """
    S, I1, I2, I12 = (float(v) for v in np.asarray(x, dtype=float)[:4])
    a1, a2, a3 = p.alpha
    m1, m2, m3 = p.mu
    e1, e2 = p.eta
    g1, g2 = p.gamma
    return np.array([
        p.r * (1.0 - S / p.K) - a1 * I1 - a2 * I2 - (a3 + p.beta_bar) * I12,
        a1 * S - e1 * I12 - g1 * I2 - m1,
        a2 * S - e2 * I12 - g2 * I1 - m2,
        a3 * S + e1 * I1 + e2 * I2 - m3,
    ])


def rhs_from_g(p: ValidatedParams, x: Sequence[float]) -> np.ndarray:
    """First four derivatives rebuilt from :func:`g_values`."""
    S, I1, I2, I12 = (float(v) for v in np.asarray(x, dtype=float)[:4])
    g = g_values(p, x)
    b1, b2 = p.beta
    return np.array([
        g[0] * S,
        g[1] * I1 + b1 * S * I12,
        g[2] * I2 + b2 * S * I12,
        g[3] * I12 + p.gamma_bar * I1 * I2,
    ])


def jacobian_rhs(p: ValidatedParams, x: Sequence[float]) -> np.ndarray:
    """Analytic 4x4 Jacobian of ``(S', I1', I2', I12')`` w.r.t. ``(S, I1, I2, I12)``."""
    return kernels.jac4(p.to_vector(), np.asarray(x, dtype=float)[:4])


def recovered_equilibrium(p: ValidatedParams, x: Sequence[float]) -> float:
    """Equilibrium value of ``R`` given the infected compartments of ``x``."""
    _, I1, I2, I12 = np.asarray(x, dtype=float)[:4]
    r1, r2, r3 = p.rho
    return float((r1 * I1 + r2 * I2 + r3 * I12) / p.d4)


def load_config(path: str | Path, overrides: Mapping[str, float] | None = None) -> ValidatedParams:
    """Read a flat TOML or JSON parameter file and validate it.

    ``overrides`` (e.g. from command-line flags) take precedence over the file.
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        data = tomllib.loads(text)
    data = dict(data)
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    return validate_params(Params.from_mapping(data))


def dump_config(p: Params, path: str | Path) -> None:
    """Write ``p`` as JSON (``.json``) or TOML (anything else)."""
    path = Path(path)
    m = p.to_mapping()
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps(m, indent=2) + "\n")
    else:
        path.write_text("".join(f"{k} = {v!r}\n" for k, v in m.items()))

