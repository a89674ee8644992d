"""Extrinsic-information transfer analysis for iterative estimation/decoding.

Estimator transfer curves come either from the pilot-utility curve (closed
form, random patterns) or from Monte-Carlo with synthetic priors.  Decoder
transfer curves are external data; a clearly labeled synthetic family with
the correct area behaviour ships for pipeline work, since real soft decoders
are out of scope.  Code-rate selection finds the largest rate whose inverse
decoder curve stays below the estimator curve by the required tunnel width.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import hyp2f1

from . import _rng, fsmc, trellis
from .inforate import MonteCarlo, burn_in_length, _interior, _map_chunks

LN2 = np.log(2.0)


class ExitError(Exception):
    pass


@dataclass
class ExitCurve:
    i_in: np.ndarray
    i_out: np.ndarray
    errors: np.ndarray | None = None
    label: str = ""


# ---------------------------------------------------------------------------
# information content of Gaussian log-LLR priors (binary-AWGN J function)

_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(96)


def gaussian_prior_info(sigma):
    """Mutual information carried by log-LLRs ~ N(x*sigma^2/2, sigma^2)."""
    if sigma <= 0:
        return 0.0
    lam = sigma * sigma / 2.0 + sigma * np.sqrt(2.0) * _GH_NODES
    vals = np.logaddexp(0.0, -lam) / LN2
    return float(1.0 - (_GH_WEIGHTS @ vals) / np.sqrt(np.pi))


def gaussian_prior_sigma(info):
    """Inverse of gaussian_prior_info on [0, 1)."""
    if not 0.0 <= info < 1.0:
        raise ExitError("prior information must lie in [0, 1)")
    if info == 0.0:
        return 0.0
    hi = 1.0
    while gaussian_prior_info(hi) < info:
        hi *= 2.0
        if hi > 1e6:
            raise ExitError("prior information too close to 1")
    return brentq(lambda s: gaussian_prior_info(s) - info, 0.0, hi, xtol=1e-12)


def decoder_input_info(sigma_w_sq):
    """I.u.d. binary-input capacity of a known-state Rayleigh fading channel
    with noise variance sigma_w_sq, via the closed hypergeometric form."""
    if sigma_w_sq <= 0:
        raise ExitError("noise variance must be positive")
    if sigma_w_sq < 1e-12:
        return 1.0
    root = np.sqrt(1.0 + sigma_w_sq)
    l1 = 0.5 * (root - 1.0)
    l2 = 0.5 * (root + 1.0)
    term1 = l2 * hyp2f1(l1 + 1.0, 1.0, l1 + 2.0, -1.0) / ((l1 + l2) * (l1 + 1.0) * LN2)
    term2 = l1 * hyp2f1(l2, 1.0, l2 + 1.0, -1.0) / (l2 * (l1 + l2) * LN2)
    return float(term1 - term2)


# ---------------------------------------------------------------------------
# estimator transfer curves

def estimator_exit_from_mu(mu, weights, level, grid=None):
    """Closed-form estimator transfer of a random pattern:
    T_k(x) = mu(x * w_k + sum_{i<k} w_i)."""
    from .interleaver import WeightDistribution
    w = weights if isinstance(weights, WeightDistribution) else WeightDistribution(weights)
    if not 1 <= level <= w.levels:
        raise ExitError(f"level {level} out of range")
    x = np.linspace(0.0, 1.0, 33) if grid is None else np.asarray(grid, dtype=float)
    sigma_k = float(w.partial_sums()[level - 1])
    w_k = float(w.weights[level - 1])
    return ExitCurve(x, np.asarray(mu(x * w_k + sigma_k), dtype=float),
                     label=f"level{level}")


def estimator_exit_mc(model, pattern, level, grid, mc, prior="gaussian"):
    """Monte-Carlo estimator transfer at one level of a fixed pattern.

    ``prior='gaussian'`` feeds log-LLRs from a binary-AWGN channel whose
    variance is tuned to each target input information; ``prior='erasure'``
    reveals each data symbol with the target probability instead.
    Output information is measured from the extrinsic outputs at interior
    data positions of the level.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < 0) or np.any(grid > 1):
        raise ExitError("grid must lie in [0, 1]")
    burn = burn_in_length(model, mc.burn_in_cap)
    N = pattern.length
    interior = _interior(N, burn)
    level_slots = pattern.assignment == level
    mask = level_slots & interior
    if not mask.any():
        raise ExitError(f"level {level} has no interior positions")
    lower = (pattern.assignment < level)[None, :]

    i_out = np.empty(len(grid))
    errs = np.empty(len(grid))
    for gi, target in enumerate(grid):
        if prior == "gaussian":
            sigma = gaussian_prior_sigma(min(target, 1.0 - 1e-9))

            def run(ids, sigma=sigma, gi=gi):
                _, x, y = fsmc.simulate_blocks(model, N, mc.seed, ids)
                training = np.where(lower, x, 0)
                priors = np.full(y.shape, 0.5)
                for row, b in enumerate(ids):
                    rng = _rng.stream(mc.seed, _rng.PRIOR, gi, b)
                    lam = rng.normal(x[row, level_slots] * sigma**2 / 2.0, sigma)
                    priors[row, level_slots] = 1.0 / (1.0 + np.exp(-lam))
                llr = trellis._extrinsic_llr_batch(model, y, training, priors)
                vals = trellis.info_bits_from_llr(llr, x)
                return 1.0 - vals[:, mask].mean(axis=1)
        elif prior == "erasure":
            def run(ids, target=target, gi=gi):
                _, x, y = fsmc.simulate_blocks(model, N, mc.seed, ids)
                training = np.where(lower, x, 0)
                for row, b in enumerate(ids):
                    rng = _rng.stream(mc.seed, _rng.PRIOR, gi, b)
                    reveal = level_slots & (rng.random(N) < target)
                    training[row, reveal] = x[row, reveal]
                llr = trellis._extrinsic_llr_batch(model, y, training)
                vals = trellis.info_bits_from_llr(llr, x)
                return 1.0 - vals[:, mask].mean(axis=1)
        else:
            raise ExitError(f"unknown prior kind {prior!r}")

        means = _map_chunks(mc, model, run)
        i_out[gi] = means.mean()
        errs[gi] = means.std(ddof=1) / np.sqrt(len(means)) if len(means) > 1 else 0.0
    return ExitCurve(grid, i_out, errs, label=f"level{level}_{prior}")


# ---------------------------------------------------------------------------
# decoder curves and rate selection

@dataclass
class DecoderFamily:
    """Map from code rate to the decoder transfer, stored inverse-ready.

    ``inverse[rate]`` holds (x, y) samples of the inverse transfer: y is the
    estimator output information the decoder needs at chart abscissa x.
    """

    rates: np.ndarray
    inverse: dict = field(default_factory=dict)

    def inverse_on(self, x, rate):
        gx, gy = self.inverse[rate]
        return np.interp(x, gx, gy)


def synthetic_decoder_family(rates=None, points=101, sharpness=0.4):
    """Synthetic decoder family for pipeline work (not measured from codes).

    Inverse transfer y = (1+s) * r * x^s: monotone in both the abscissa and
    the rate, the area under the inverse curve equals the code rate (the
    matched-decoder area behaviour), and the convergence threshold
    y(1) = (1+s) r stays below one for the shipped rate range.
    """
    rates = np.arange(0.10, 0.701, 0.01).round(2) if rates is None else np.asarray(rates)
    x = np.linspace(0.0, 1.0, points)
    fam = DecoderFamily(rates.copy())
    for r in rates:
        if not 0.0 < r < 1.0:
            raise ExitError("rates must lie in (0, 1)")
        if (1.0 + sharpness) * r > 1.0:
            raise ExitError(f"rate {r} too large for sharpness {sharpness}")
        fam.inverse[float(r)] = (x, (1.0 + sharpness) * r * x**sharpness)
    return fam


def family_from_inverse(rate_to_curve):
    """Build a family from {rate: (x, y)} inverse-transfer samples."""
    fam = DecoderFamily(np.array(sorted(rate_to_curve)))
    for r, (x, y) in rate_to_curve.items():
        fam.inverse[float(r)] = (np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return fam


def max_supported_rate(estimator, family, d_t=0.0):
    """Largest family rate whose tunnel stays open under the estimator curve.

    The tunnel is open when T(x) - Td_inv(x) > d_t at every grid point.
    Returns None when no rate qualifies.
    """
    if d_t < 0:
        raise ExitError("tunnel width must be >= 0")
    if len(family.rates) == 0:
        raise ExitError("empty decoder family")
    x, t = estimator.i_in, estimator.i_out
    best = None
    for r in family.rates:
        gap = t - family.inverse_on(x, float(r))
        if np.all(gap > d_t) and (best is None or r > best):
            best = float(r)
    return best


def _family_matrix(family, x):
    return np.stack([family.inverse_on(x, float(r)) for r in family.rates])


def optimize_weights_exit(mu, family, levels, d_t=0.0, starts=200, seed=0,
                          grid_points=65):
    """Weight distribution maximizing the overall supported code rate.

    Multi-start local search on the simplex with shrinking pairwise mass
    transfers; the uniform distribution and the rate-optimal weights are
    always included as starts, so the result never underperforms either.
    """
    from .interleaver import WeightDistribution
    from .optimizer import solve_weights

    x = np.linspace(0.0, 1.0, grid_points)
    dec = _family_matrix(family, x)                      # (R, G)
    rates = np.asarray(family.rates, dtype=float)

    def level_rate(sigma_k, w_k):
        t = np.asarray(mu(x * w_k + sigma_k), dtype=float)
        ok = (t[None, :] - dec).min(axis=1) > d_t
        return float(rates[ok].max()) if ok.any() else 0.0

    def objective(w):
        sigma = np.concatenate(([0.0], np.cumsum(w)[:-1]))
        return sum(w[k] * level_rate(sigma[k], w[k]) for k in range(levels))

    if levels == 1:
        w = np.array([1.0])
        r = level_rate(0.0, 1.0)
        return {"weights": w, "level_rates": np.array([r]), "overall": r}

    rng = _rng.stream(seed, _rng.SEARCH, 0)
    init = [np.full(levels, 1.0 / levels)]
    try:
        init.append(solve_weights(mu, levels).weights)
    except Exception:
        pass
    while len(init) < starts:
        init.append(rng.dirichlet(np.ones(levels)))

    best_w, best_obj = None, -1.0
    for w0 in init:
        w = w0.copy()
        obj = objective(w)
        step = 0.25
        while step > 1e-4:
            improved = False
            for i in range(levels):
                for j in range(levels):
                    if i == j or w[i] < 1e-12:
                        continue
                    delta = min(step, w[i])
                    cand = w.copy()
                    cand[i] -= delta
                    cand[j] += delta
                    val = objective(cand)
                    if val > obj + 1e-15:
                        w, obj = cand, val
                        improved = True
            if not improved:
                step *= 0.5
        if obj > best_obj:
            best_w, best_obj = w, obj
    sigma = np.concatenate(([0.0], np.cumsum(best_w)[:-1]))
    level_rates = np.array([level_rate(sigma[k], best_w[k]) for k in range(levels)])
    return {"weights": best_w, "level_rates": level_rates, "overall": best_obj}


# ---------------------------------------------------------------------------
# CSV artifacts

def write_exit_csv(curve, path):
    with open(path, "w", newline="") as fh:
        fh.write("i_in,i_out,stderr\n")
        errs = curve.errors if curve.errors is not None else np.zeros_like(curve.i_in)
        for a, b, e in zip(curve.i_in, curve.i_out, errs):
            fh.write(f"{a:.17g},{b:.17g},{e:.17g}\n")


def write_decoder_family_csv(family, path):
    """Rows are decoder-transfer samples (i_in, i_out), i.e. the inverse
    curves with axes swapped."""
    with open(path, "w", newline="") as fh:
        fh.write("rate,i_in,i_out\n")
        for r in family.rates:
            x, y = family.inverse[float(r)]
            for xo, yo in zip(x, y):
                fh.write(f"{float(r):.17g},{yo:.17g},{xo:.17g}\n")


def load_decoder_family(path):
    rows = np.genfromtxt(path, delimiter=",", names=True)
    rows = np.atleast_1d(rows)
    curves = {}
    for r in np.unique(rows["rate"]):
        sel = rows[rows["rate"] == r]
        # transfer samples (i_in, i_out) -> inverse-ready (x=i_out, y=i_in)
        order = np.argsort(sel["i_out"])
        curves[float(r)] = (np.asarray(sel["i_out"][order], dtype=float),
                            np.asarray(sel["i_in"][order], dtype=float))
    return family_from_inverse(curves)
