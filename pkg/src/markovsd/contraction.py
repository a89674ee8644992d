"""Hilbert projective metric and Birkhoff contraction analysis.

The contraction coefficient of a strictly positive matrix bounds how fast
state knowledge decays along the chain, which in turn bounds the gap between
the successive-decoding achievable rate and the i.u.d. capacity.
"""

from dataclasses import dataclass

import numpy as np

LN2 = np.log(2.0)
POSITIVITY_FLOOR = 1e-300


class ContractionError(Exception):
    pass


def _check_positive(mat):
    m = np.asarray(mat, dtype=float)
    if np.any(m < POSITIVITY_FLOOR) or not np.all(np.isfinite(m)):
        raise ContractionError("matrix entries must be strictly positive (>= 1e-300)")
    return m


def hilbert_metric(u, v):
    """d(u, v) = ln max_i(u_i/v_i) - ln min_i(u_i/v_i) for positive vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise ContractionError("vectors must be 1-D with equal lengths")
    if np.any(u <= 0) or np.any(v <= 0):
        raise ContractionError("vectors must be strictly positive")
    r = u / v
    return float(np.log(r.max()) - np.log(r.min()))


def birkhoff_tau(P):
    """Contraction coefficient tau(P) = (1 - sqrt(phi)) / (1 + sqrt(phi)).

    phi is the minimum of (P_ik P_jl) / (P_jk P_il) over index quadruples,
    factorized over column pairs for efficiency.  tau = 0 exactly when all
    columns are proportional.
    """
    P = _check_positive(P)
    Q = P.shape[0]
    if P.shape != (Q, Q):
        raise ContractionError("square matrix required")
    phi = 1.0
    for k in range(Q):
        for l in range(Q):
            if k == l:
                continue
            r = P[:, k] / P[:, l]
            phi = min(phi, r.min() / r.max())
    phi = min(phi, 1.0)
    sq = np.sqrt(phi)
    # keep tau strictly below one even when phi underflows the rounding of
    # 1 - sqrt(phi); the coefficient of a positive matrix is < 1 exactly
    return float(min((1.0 - sq) / (1.0 + sq), np.nextafter(1.0, 0.0)))


def max_pair_metric(P):
    """max_{i,j} d(p_i, p_j) over column pairs of P."""
    P = _check_positive(P)
    best = 0.0
    for i in range(P.shape[1]):
        for j in range(i + 1, P.shape[1]):
            best = max(best, hilbert_metric(P[:, i], P[:, j]))
    return best


def theorem_gap_bound(P, levels):
    """Geometric bound on C_iud - R for a K-level rectangular pattern:

        (1/ln 2) * max_{i,j} d(p_i, p_j) * tau(P)^(K-2).
    """
    if levels < 2:
        raise ContractionError("bound defined for K >= 2")
    return max_pair_metric(P) / LN2 * birkhoff_tau(P) ** (levels - 2)


def weight_gap_bound(P, w_k):
    """Per-level gap bound for a random pattern of level weight w_k:

        a * w_k / (1 - tau(P) * (1 - w_k)),  a = max d(p_i, p_j) / ln 2.
    """
    if not 0.0 < w_k <= 1.0:
        raise ContractionError("w_k must be in (0, 1]")
    a = max_pair_metric(P) / LN2
    return a * w_k / (1.0 - birkhoff_tau(P) * (1.0 - w_k))


@dataclass
class ContractionReport:
    tau: float
    max_pair_metric: float
    sampled_ratios: np.ndarray    # d(PDu, PDv) / d(u, v) over random draws

    def bound(self, levels):
        return self.max_pair_metric / LN2 * self.tau ** (levels - 2)


def contraction_report(P, samples=1000, seed=0):
    """Closed-form tau plus a sampled check of the sup definition.

    Draws random positive vector pairs and positive diagonal scalings and
    verifies d(PDu, PDv) <= tau(P) d(u, v) on each.
    """
    P = _check_positive(P)
    tau = birkhoff_tau(P)
    metric = max_pair_metric(P)
    rng = np.random.default_rng(seed)
    Q = P.shape[0]
    ratios = np.empty(samples)
    for i in range(samples):
        u = rng.random(Q) + 1e-3
        v = rng.random(Q) + 1e-3
        d = np.exp(rng.normal(size=Q))
        duv = hilbert_metric(u, v)
        if duv == 0.0:
            ratios[i] = 0.0
            continue
        ratios[i] = hilbert_metric(P @ (d * u), P @ (d * v)) / duv
    return ContractionReport(tau, metric, ratios)
