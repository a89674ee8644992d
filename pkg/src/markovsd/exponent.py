"""Random-coding error exponents and finite-delay level planning.

The subchannel Gallager function is estimated from trellis posteriors:
per data position, E0(rho) = rho - log2 E[(p_+^s + p_-^s)^(1/s)] with
s = 1/(1+rho) and p_+- the posterior bit probabilities.  Solving
E^r(rbar) = log2(K / Pe) / N_k for each level turns a total-delay budget
into per-level rate bounds, whose weighted sum ranks level counts.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import _rng, fsmc, trellis
from .inforate import burn_in_length, _interior, _map_chunks
from .interleaver import WeightDistribution, rectangular, _draw_assignment

LN2 = np.log(2.0)


class ExponentError(Exception):
    pass


@dataclass
class ExponentCurve:
    rho: np.ndarray
    e0: np.ndarray
    errors: np.ndarray
    level: int = 0
    config: dict = field(default_factory=dict)
    _interp: PchipInterpolator = field(repr=False, default=None)

    def interpolant(self):
        if self._interp is None:
            self._interp = PchipInterpolator(self.rho, self.e0)
        return self._interp

    def concave_within(self, slack):
        """Whether second differences stay below ``slack`` (grid check)."""
        if len(self.rho) < 3:
            return True
        d2 = np.diff(self.e0, 2)
        return bool(np.all(d2 <= slack))


def default_rho_grid(step=0.05):
    return np.round(np.arange(0.0, 1.0 + step / 2, step), 10)


def _block_e0(llr, x, mask, rho_grid):
    """Per-block E0 estimates, (B, len(rho)); ``mask`` is (N,) or (B, N)."""
    B = llr.shape[0]
    signed = np.where(x == 1, llr, -llr)
    mask = np.broadcast_to(mask, signed.shape)
    out = np.empty((B, len(rho_grid)))
    for b in range(B):
        p_true = 1.0 / (1.0 + np.exp(-signed[b, mask[b]]))
        p_other = 1.0 - p_true
        for i, rho in enumerate(rho_grid):
            s = 1.0 / (1.0 + rho)
            bracket = (p_true**s + p_other**s) ** (1.0 + rho)
            out[b, i] = rho - np.log2(bracket.mean())
    return out


def e0_subchannel(model, pattern_or_weights, level, rho_grid, mc):
    """Monte-Carlo Gallager function of one level.

    A fixed pattern is used as-is; a weight distribution stands for the
    random ensemble and a fresh pattern is drawn per block.
    """
    rho_grid = np.asarray(rho_grid, dtype=float)
    if np.any(rho_grid < 0) or np.any(rho_grid > 1):
        raise ExponentError("rho grid must lie in [0, 1]")
    burn = burn_in_length(model, mc.burn_in_cap)
    ensemble = isinstance(pattern_or_weights, WeightDistribution)
    if ensemble:
        N = mc.block_len
        levels = pattern_or_weights.levels
    else:
        N = pattern_or_weights.length
        levels = pattern_or_weights.levels
        fixed_mask = (pattern_or_weights.assignment == level) & _interior(N, burn)
        fixed_lower = (pattern_or_weights.assignment < level)[None, :]
        if not fixed_mask.any():
            raise ExponentError(f"level {level} has no interior positions")
    if not 1 <= level <= levels:
        raise ExponentError(f"level {level} out of range")
    interior = _interior(N, burn)

    def run(ids):
        _, x, y = fsmc.simulate_blocks(model, N, mc.seed, ids)
        if ensemble:
            # fresh pattern per block realizes the ensemble average
            assign = np.stack([_draw_assignment(pattern_or_weights, N,
                                                _rng.stream(mc.seed, _rng.PATTERN, b))
                               for b in ids])
            training = np.where(assign < level, x, 0)
            mask = (assign == level) & interior[None, :]
            if not mask.any(axis=1).all():
                raise ExponentError(f"level {level} empty in some block")
        else:
            training = np.where(fixed_lower, x, 0)
            mask = fixed_mask
        llr = trellis._extrinsic_llr_batch(model, y, training)
        return _block_e0(llr, x, mask, rho_grid)

    parts = _map_chunks(mc, model, run)
    e0 = parts.mean(axis=0)
    errs = parts.std(axis=0, ddof=1) / np.sqrt(parts.shape[0]) if parts.shape[0] > 1 \
        else np.zeros_like(e0)
    cfg = {"level": level, "ensemble": ensemble, "block_len": N,
           "blocks": mc.blocks, "burn_in": burn, "seed": mc.seed}
    return ExponentCurve(rho_grid, e0, errs, level=level, config=cfg)


def error_exponent(curve, r):
    """E^r(r) = max_rho (E0(rho) - rho r), floored at the rho = 0 value."""
    if r < 0:
        raise ExponentError("rate must be >= 0")
    f = curve.interpolant()
    lo, hi = float(curve.rho[0]), float(curve.rho[-1])
    grid = np.linspace(lo, hi, 1001)
    vals = np.asarray(f(grid)) - grid * r
    i = int(np.argmax(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    # golden-section refinement inside the winning cell
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = b - gr * (b - a), a + gr * (b - a)
    for _ in range(60):
        if float(f(c)) - c * r > float(f(d)) - d * r:
            b, d = d, c
            c = b - gr * (b - a)
        else:
            a, c = c, d
            d = a + gr * (b - a)
    best = 0.5 * (a + b)
    return max(float(f(best)) - best * r, 0.0)


def rate_zero_crossing(curve, tol=1e-9):
    """Smallest rate with E^r = 0, i.e. the largest slope E0(rho)/rho."""
    f = curve.interpolant()
    grid = np.linspace(1e-6, float(curve.rho[-1]), 2001)
    return float(np.max(np.asarray(f(grid)) / grid))


def finite_length_rate(curve, n_k, levels_total, p_bar_e):
    """Rate bound from E^r(rbar) = log2(K / Pe) / N_k.

    Solved by bisection on the non-increasing exponent; returns 0 when even
    rate zero misses the requirement, and the zero crossing when the right
    side vanishes.
    """
    if n_k < 1:
        raise ExponentError("level length must be >= 1")
    if not 0.0 < p_bar_e <= levels_total:
        raise ExponentError("target word-error bound must lie in (0, K]")
    rhs = math.log2(levels_total / p_bar_e) / n_k
    if error_exponent(curve, 0.0) < rhs:
        return 0.0
    hi = rate_zero_crossing(curve) + 1.0
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if error_exponent(curve, mid) <= rhs:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def apportion(weights, total):
    """Integer level lengths by largest remainder; sums exactly to total."""
    w = weights.weights if isinstance(weights, WeightDistribution) else np.asarray(weights)
    raw = w * total
    base = np.floor(raw).astype(np.int64)
    short = int(total - base.sum())
    order = np.argsort(-(raw - base))
    base[order[:short]] += 1
    return base


@dataclass
class FiniteLengthPlan:
    total_length: int
    p_bar_e: float
    candidates: list
    tables: dict           # K -> dict(weights, lengths, rate_bounds, overall)
    best_levels: int
    best_rate: float


def optimal_levels(model, family, total_length, p_bar_e, candidates, mc,
                   mu=None, exponent_curves=None, rho_grid=None):
    """Rank level counts under a total-delay budget.

    ``family`` is "rectangular" (uniform weights, fixed pattern) or "random"
    (weights optimized on ``mu``, fresh pattern per block).  Exponent curves
    are measured per candidate level unless supplied; the plan assigns level
    lengths by largest remainder and maximizes the weighted rate bound.
    """
    if not candidates:
        raise ExponentError("no candidate level counts")
    if family not in ("rectangular", "random"):
        raise ExponentError(f"unknown family {family!r}")
    if family == "random" and mu is None and exponent_curves is None:
        raise ExponentError("random family needs a fitted pilot-utility curve")
    rho_grid = default_rho_grid() if rho_grid is None else rho_grid
    curves = exponent_curves if exponent_curves is not None else {}

    tables = {}
    for K in candidates:
        if family == "rectangular":
            weights = WeightDistribution(np.full(K, 1.0 / K))
        else:
            from .optimizer import solve_weights
            weights = WeightDistribution(solve_weights(mu, K).weights) if K > 1 \
                else WeightDistribution(np.array([1.0]))
        if K not in curves:
            if family == "rectangular":
                pattern = rectangular(K, mc.block_len)
                curves[K] = [e0_subchannel(model, pattern, k, rho_grid, mc)
                             for k in range(1, K + 1)]
            else:
                curves[K] = [e0_subchannel(model, weights, k, rho_grid, mc)
                             for k in range(1, K + 1)]
        lengths = apportion(weights, total_length)
        if np.any(lengths < 1):
            raise ExponentError(f"K={K}: a level received zero length")
        bounds = np.array([finite_length_rate(curves[K][k], int(lengths[k]), K, p_bar_e)
                           for k in range(K)])
        wk = lengths / total_length
        overall = float(np.sum(wk * bounds))
        tables[K] = {"weights": wk, "lengths": lengths,
                     "rate_bounds": bounds, "overall": overall}
    best = max(tables, key=lambda K: tables[K]["overall"])
    return FiniteLengthPlan(total_length, p_bar_e, list(candidates), tables,
                            best, tables[best]["overall"])


# ---------------------------------------------------------------------------
# CSV artifacts

def write_exponent_csv(curve, path):
    with open(path, "w", newline="") as fh:
        fh.write("rho,E0,stderr\n")
        for r, e, s in zip(curve.rho, curve.e0, curve.errors):
            fh.write(f"{r:.17g},{e:.17g},{s:.17g}\n")


def write_plan_csv(plan, path):
    with open(path, "w", newline="") as fh:
        fh.write("K,level,N_k,w_k,rbar_k\n")
        for K in plan.candidates:
            tab = plan.tables[K]
            for k in range(K):
                fh.write(f"{K},{k+1},{tab['lengths'][k]},"
                         f"{tab['weights'][k]:.17g},{tab['rate_bounds'][k]:.17g}\n")
            fh.write(f"{K},overall,{plan.total_length},1,{tab['overall']:.17g}\n")
