"""Rademacher complexities and the generalization bounds built on them.

All logarithms are natural.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse

from .errors import ArgumentError


def _matrix(samples, dimension=None):
    if sparse.issparse(samples) or isinstance(samples, np.ndarray):
        return samples
    from .clustering import as_matrix

    return as_matrix(list(samples), dimension)


def _signed_norms(X, sigma: np.ndarray) -> np.ndarray:
    S = np.asarray((X.T @ sigma.T).T) if sparse.issparse(X) else sigma @ np.asarray(X)
    return np.linalg.norm(S, axis=1)


def mc_rademacher_draws(samples, normalizer: int, B: float, draws: int, seed: int) -> np.ndarray:
    """Per-draw values ``(2/normalizer) * B * ||sum_i sigma_i x_i||`` for the linear class."""
    if draws < 1:
        raise ArgumentError("draws must be >= 1")
    if B <= 0:
        raise ArgumentError("B must be > 0")
    X = _matrix(samples)
    m = X.shape[0]
    if m == 0:
        return np.zeros(draws)
    rng = np.random.default_rng(seed)
    sigma = rng.integers(0, 2, size=(draws, m)) * 2.0 - 1.0
    return (2.0 / normalizer) * B * _signed_norms(X, sigma)


def mc_rademacher_linear(samples, normalizer: int, B: float, draws: int, seed: int) -> float:
    return float(mc_rademacher_draws(samples, normalizer, B, draws, seed).mean())


def exact_rademacher_linear(samples, normalizer: int, B: float) -> float:
    """Expectation over all 2^m sign vectors; only for small m."""
    X = _matrix(samples)
    m = X.shape[0]
    if m == 0:
        return 0.0
    if m > 20:
        raise ArgumentError("enumeration limited to 20 samples")
    sigma = np.array(list(itertools.product((-1.0, 1.0), repeat=m)))
    return float((2.0 / normalizer) * B * _signed_norms(X, sigma).mean())


def closed_form_rademacher(count: int, normalizer: int, R: float, B: float, G: int = 1) -> float:
    """``2 R B sqrt(G * count / normalizer^2)``, the Cauchy-Schwarz bound over G clusters."""
    if count < 0 or normalizer <= 0:
        raise ArgumentError("count must be >= 0 and normalizer > 0")
    return 2.0 * R * B * math.sqrt(G * count / normalizer**2)


def closed_form_per_cluster(counts, normalizer: int, R: float, B: float) -> float:
    """Sum over clusters of ``(2/normalizer) R B sqrt(count_j)`` (before Cauchy-Schwarz)."""
    return float(sum(2.0 / normalizer * R * B * math.sqrt(c) for c in counts))


@dataclass(frozen=True)
class RademacherEstimates:
    r_star_n: float
    r_star_u: float
    r_n: float
    mc_draws: int
    closed_form_r_star_n: float
    closed_form_r_star_u: float
    closed_form_r_n: float
    stderr_r_star_n: float = 0.0
    stderr_r_star_u: float = 0.0
    stderr_r_n: float = 0.0
    per_cluster_n: dict = field(default_factory=dict)
    per_cluster_u: dict = field(default_factory=dict)

    @classmethod
    def closed_form(cls, G, n, u, n_eta, u_eta, R, B) -> "RademacherEstimates":
        """Estimates equal to the closed-form bounds (no sampling)."""
        a = closed_form_rademacher(n_eta, n, R, B, G)
        b = closed_form_rademacher(u_eta, u, R, B, G)
        c = closed_form_rademacher(n - n_eta, n, R, B)
        return cls(a, b, c, 0, a, b, c)

    def to_json(self) -> dict:
        out = asdict(self)
        out["per_cluster_n"] = {str(k): v for k, v in self.per_cluster_n.items()}
        out["per_cluster_u"] = {str(k): v for k, v in self.per_cluster_u.items()}
        return out


def estimate_rademacher(batch, G: int, R: float, B: float, draws: int = 200, seed: int = 0) -> RademacherEstimates:
    """Monte-Carlo complexities inside / outside the confident clusters of ``batch``."""
    n, u = batch.n, batch.u
    ids = list(batch.confident_ids)
    seeds = np.random.SeedSequence(seed).spawn(2 * len(ids) + 1)
    per_n, per_u, var_n, var_u = {}, {}, 0.0, 0.0
    for k, j in enumerate(ids):
        dn = mc_rademacher_draws(batch.X_lab[batch.lab_cluster == j], n, B, draws, seeds[2 * k])
        du = mc_rademacher_draws(batch.X_pen[batch.pen_cluster == j], max(u, 1), B, draws, seeds[2 * k + 1])
        per_n[j], per_u[j] = float(dn.mean()), float(du.mean())
        var_n += dn.var(ddof=1) / draws if draws > 1 else 0.0
        var_u += du.var(ddof=1) / draws if draws > 1 else 0.0
    outside = ~np.isin(batch.lab_cluster, ids)
    do = mc_rademacher_draws(batch.X_lab[outside], n, B, draws, seeds[-1])
    n_eta = int((~outside).sum())
    u_eta = int(batch.X_pen.shape[0])
    return RademacherEstimates(
        r_star_n=math.fsum(per_n.values()),
        r_star_u=math.fsum(per_u.values()),
        r_n=float(do.mean()),
        mc_draws=draws,
        closed_form_r_star_n=closed_form_rademacher(n_eta, n, R, B, G),
        closed_form_r_star_u=closed_form_rademacher(u_eta, u, R, B, G) if u else 0.0,
        closed_form_r_n=closed_form_rademacher(n - n_eta, n, R, B),
        stderr_r_star_n=math.sqrt(var_n),
        stderr_r_star_u=math.sqrt(var_u),
        stderr_r_n=float(do.std(ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0,
        per_cluster_n=per_n,
        per_cluster_u=per_u,
    )


@dataclass(frozen=True)
class BoundParams:
    n: int
    u: int
    G: int
    K: int
    kappa: int
    rho: float
    delta: float
    L: float
    n_eta: int
    u_eta: int
    R: float | None = None
    B: float | None = None

    def check(self):
        if not 0 < self.delta < 1:
            raise ArgumentError("delta must lie in (0, 1)")
        if self.n < 2 or self.u < 2:
            raise ArgumentError("need n, u >= 2")
        if self.rho <= 0 or self.L < 0:
            raise ArgumentError("need rho > 0 and L >= 0")
        if not (0 <= self.n_eta <= self.n and 0 <= self.u_eta <= self.u):
            raise ArgumentError("n_eta / u_eta out of range")


def inverse_s(p: BoundParams) -> float:
    return 2 * p.G / (p.n - 1) + p.G / (p.u - 1)


def inverse_s_appendix(p: BoundParams) -> float:
    return 2 / (p.n - 1) + 1 / (p.u - 1)


def inverse_t(p: BoundParams) -> float:
    return p.L**2 / p.u + 1 / p.n


def inverse_v(p: BoundParams) -> float:
    return p.G * p.kappa * p.u_eta / (2 * p.u**2) + (p.G * p.kappa * p.n_eta + p.K * (p.n - p.n_eta)) / (2 * p.n**2)


def grouped_complexity(p: BoundParams) -> float:
    """``K^2 G u_eta/u^2 + kappa^2 G n_eta/n^2 + K^2 (n - n_eta)/n^2``."""
    return p.K**2 * p.G * p.u_eta / p.u**2 + p.kappa**2 * p.G * p.n_eta / p.n**2 + p.K**2 * (p.n - p.n_eta) / p.n**2


def rate_diagnostic(n: int, u: int, K: int) -> float:
    if n < 1 or u < 1:
        raise ArgumentError("need n, u >= 1")
    return math.sqrt(K / n) + K * math.sqrt(K / u)


@dataclass(frozen=True)
class BoundReport:
    variant: str
    empirical_risk: float
    stability_term: float
    rademacher_term: float
    s_term: float
    t_term: float
    v_term: float
    total: float
    rate_diagnostic: float
    inputs: dict
    inverse_s: float
    inverse_t: float
    inverse_v: float
    discrepancies: dict = field(default_factory=dict)
    rademacher: dict | None = None
    L_is_estimate: bool = True

    def to_json(self) -> dict:
        return asdict(self)


def _risk_value(risk) -> float:
    return float(getattr(risk, "total", risk))


def _common_terms(p: BoundParams):
    p.check()
    s_inv, t_inv, v_inv = inverse_s(p), inverse_t(p), inverse_v(p)
    s_term = 7 * p.G * math.log(14 * p.G / p.delta) / 3 * s_inv
    t_term = math.sqrt(math.log(14 / p.delta) * t_inv)
    return s_inv, t_inv, v_inv, s_term, t_term


def theorem3_bound(risk, rad: RademacherEstimates, params: BoundParams, L_is_estimate: bool = True) -> BoundReport:
    """Data-dependent risk bound from empirical risk, stability and Rademacher terms."""
    p = params
    s_inv, t_inv, v_inv, s_term, t_term = _common_terms(p)
    v_term = 9 * math.sqrt(math.log(14 * p.K * p.G / p.delta) * v_inv)
    rad_term = (2 * p.K / p.rho) * (rad.r_star_u + rad.r_n) + (2 * p.kappa / p.rho) * rad.r_star_n
    emp = _risk_value(risk)
    stab = p.L / p.u
    s_alt = inverse_s_appendix(p)
    return BoundReport(
        variant="Theorem3",
        empirical_risk=emp,
        stability_term=stab,
        rademacher_term=rad_term,
        s_term=s_term,
        t_term=t_term,
        v_term=v_term,
        total=emp + stab + rad_term + s_term + t_term + v_term,
        rate_diagnostic=rate_diagnostic(p.n, p.u, p.K),
        inputs=asdict(p),
        inverse_s=s_inv,
        inverse_t=t_inv,
        inverse_v=v_inv,
        discrepancies={
            "s_star": "main-text 1/s* = 2G/(n-1) + G/(u-1) used",
            "inverse_s_appendix": s_alt,
            "s_term_appendix": 7 * p.G * math.log(14 * p.G / p.delta) / 3 * s_alt,
        },
        rademacher=rad.to_json(),
        L_is_estimate=L_is_estimate,
    )


def corollary4_bound(risk, params: BoundParams, L_is_estimate: bool = True) -> BoundReport:
    """Kernel-class bound with the grouped closed-form Rademacher term (needs R and B)."""
    p = params
    if p.R is None or p.B is None or p.R <= 0 or p.B <= 0:
        raise ArgumentError("corollary bound needs R > 0 and B > 0")
    s_inv, t_inv, v_inv, s_term, t_term = _common_terms(p)
    q = grouped_complexity(p)
    rad_term = (2 / p.rho) * p.R * p.B * math.sqrt(3 * q)
    v_term = 5 * math.sqrt(3 * math.log(14 * p.K * p.G / p.delta) * v_inv)
    emp = _risk_value(risk)
    stab = p.L / p.u
    return BoundReport(
        variant="Corollary4",
        empirical_risk=emp,
        stability_term=stab,
        rademacher_term=rad_term,
        s_term=s_term,
        t_term=t_term,
        v_term=v_term,
        total=emp + stab + rad_term + s_term + t_term + v_term,
        rate_diagnostic=rate_diagnostic(p.n, p.u, p.K),
        inputs=asdict(p),
        inverse_s=s_inv,
        inverse_t=t_inv,
        inverse_v=v_inv,
        discrepancies={
            "grouped_complexity": q,
            "rademacher_reading": "sqrt(3 * k*^2/v*) used; displayed formula reads sqrt(3 k*^2 / s*)",
            "rademacher_term_s_reading": (2 / p.rho) * p.R * p.B * math.sqrt(3 * q / s_inv),
            "s_term_without_G": 7 * math.log(14 * p.G / p.delta) / 3 * s_inv,
        },
        L_is_estimate=L_is_estimate,
    )


def lemma2_diagnostics(risk, rad: RademacherEstimates, confident, params: BoundParams) -> dict:
    """Per-cluster bound terms, under both printed confidence constants (16K and 8K)."""
    p = params
    p.check()
    out = {}
    tail = 7 * math.log(8 / p.delta) / (3 * (p.n - 1)) + 7 * math.log(8 / p.delta) / (3 * (p.u - 1))
    for c in confident.clusters:
        j = c.cluster_id
        base = risk.per_cluster.get(j, 0.0) + confident.eta / p.G
        base += (2 * p.kappa / p.rho) * rad.per_cluster_n.get(j, 0.0) + (2 * p.K / p.rho) * rad.per_cluster_u.get(j, 0.0)
        entry = {"n_eta_j": c.labeled_count, "u_eta_j": c.unlabeled_count, "empirical_risk": risk.per_cluster.get(j, 0.0)}
        for const in (16, 8):
            lg = math.log(const * p.K / p.delta)
            conc = 5 * math.sqrt(p.kappa * c.labeled_count * lg / (2 * p.n**2)) + 5 * math.sqrt(
                p.kappa * c.unlabeled_count * lg / (2 * p.u**2)
            )
            entry[f"bound_log{const}K"] = base + conc + tail
        out[str(j)] = entry
    return out
