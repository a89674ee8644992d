"""Monte-Carlo information-rate estimation.

Per level of a pattern, the achievable rate is one minus the average of
-log2 of the posterior probability of the true bit (from the trellis LLRs);
the i.u.d. capacity replaces the LLRs with their causally conditioned
counterparts.  The pilot-utility curve measures the data rate as a function
of the fraction of randomly placed known symbols; rates and capacities of
random patterns are point evaluations and sub-areas of that curve.

All estimates run over independent blocks with burn-in trimming at the block
edges; standard errors are computed over block means.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _rng, contraction, fsmc, trellis
from .interleaver import WeightDistribution

# target residual state influence across the burn-in span
_BURN_IN_RESIDUAL = 1e-8
# memory budget for one batch of posteriors (three (B, N, Q) float64 arrays)
_CHUNK_BYTES = 2.5e8


class InforateError(Exception):
    pass


@dataclass(frozen=True)
class MonteCarlo:
    """Monte-Carlo protocol: block length, block count, burn-in cap, seed."""

    block_len: int = 10_000
    blocks: int = 100
    burn_in_cap: int = 200
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.block_len < 1 or self.blocks < 1:
            raise InforateError("block_len and blocks must be positive")
        if self.seed is None:
            raise InforateError("seed is mandatory")


@dataclass
class RateEstimate:
    mean: float
    std_error: float
    samples: int
    config: dict = field(default_factory=dict)


@dataclass
class PilotUtilityCurve:
    grid: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    es_n0_db: float = np.nan
    model_id: str = ""
    config: dict = field(default_factory=dict)


def burn_in_length(model, cap=200):
    """Positions trimmed at each block edge before averaging.

    ceil(log(residual) / log(tau)) for the model's contraction coefficient,
    capped; zero for memoryless models.
    """
    tau = contraction.birkhoff_tau(model.positive_transition())
    if tau <= 0.0:
        return 0
    need = math.log(_BURN_IN_RESIDUAL) / math.log(tau)
    if not math.isfinite(need):
        return cap
    return int(min(cap, math.ceil(need)))


def default_mu_grid(points=21):
    """Pilot-fraction grid, refined near zero where the curve is steepest."""
    if points < 5:
        raise InforateError("grid needs at least 5 points")
    head = np.array([0.0, 0.0125, 0.025, 0.0375])
    tail = np.linspace(0.05, 1.0, points - len(head))
    return np.concatenate([head, tail])


def _chunks(mc, n_q):
    per_block = 3 * mc.block_len * max(n_q, 1) * 8
    size = max(1, int(_CHUNK_BYTES / per_block))
    return [range(lo, min(lo + size, mc.blocks)) for lo in range(0, mc.blocks, size)]


def _map_chunks(mc, model, fn):
    """Run fn(block_ids) over all chunks, preserving block order."""
    parts = _chunks(mc, model.num_states)
    if mc.threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=mc.threads) as pool:
            results = list(pool.map(fn, parts))
    else:
        results = [fn(ids) for ids in parts]
    return np.concatenate(results)


def _interior(length, burn):
    if 2 * burn >= length:
        raise InforateError(f"block length {length} leaves no interior after "
                            f"burn-in {burn} per edge")
    mask = np.zeros(length, dtype=bool)
    mask[burn:length - burn] = True
    return mask


def _block_rates(vals, mask):
    """Per-block achievable-rate estimates from -log2 posterior values."""
    sel = vals[:, mask]
    return 1.0 - sel.mean(axis=1)


def _finalize(block_means, mask_count, config):
    mean = float(block_means.mean())
    se = float(block_means.std(ddof=1) / np.sqrt(len(block_means))) if len(block_means) > 1 else 0.0
    return RateEstimate(mean, se, samples=int(mask_count * len(block_means)), config=config)


def _level_mask(pattern, level, burn):
    mask = (pattern.assignment == level) & _interior(pattern.length, burn)
    if not mask.any():
        raise InforateError(f"level {level} has no interior positions")
    return mask


def estimate_level_rate(model, pattern, level, mc):
    """Achievable rate of one level under separate estimation and decoding."""
    burn = burn_in_length(model, mc.burn_in_cap)
    N = pattern.length
    mask = _level_mask(pattern, level, burn)
    lower = (pattern.assignment < level)[None, :]

    def run(ids):
        _, x, y = fsmc.simulate_blocks(model, N, mc.seed, ids)
        training = np.where(lower, x, 0)
        llr = trellis._extrinsic_llr_batch(model, y, training)
        return _block_rates(trellis.info_bits_from_llr(llr, x), mask)

    means = _map_chunks(mc, model, run)
    cfg = {"kind": "rate", "level": level, "levels": pattern.levels,
           "block_len": N, "blocks": mc.blocks, "burn_in": burn, "seed": mc.seed}
    return _finalize(means, mask.sum(), cfg)


def estimate_level_capacity(model, pattern, level, mc):
    """I.u.d. capacity of one level (causally conditioned LLRs)."""
    burn = burn_in_length(model, mc.burn_in_cap)
    N = pattern.length
    mask = _level_mask(pattern, level, burn)
    level_mask = (pattern.assignment == level)[None, :]
    lower = (pattern.assignment < level)[None, :]

    def run(ids):
        _, x, y = fsmc.simulate_blocks(model, N, mc.seed, ids)
        training = np.where(lower, x, 0)
        llr = trellis._causal_llr_batch(model, y, training,
                                        np.broadcast_to(level_mask, y.shape), x)
        return _block_rates(trellis.info_bits_from_llr(llr, x), mask)

    means = _map_chunks(mc, model, run)
    cfg = {"kind": "capacity", "level": level, "levels": pattern.levels,
           "block_len": N, "blocks": mc.blocks, "burn_in": burn, "seed": mc.seed}
    return _finalize(means, mask.sum(), cfg)


@dataclass
class OverallRates:
    levels: int
    weights: np.ndarray
    rate_per_level: list
    capacity_per_level: list
    rate: RateEstimate
    capacity: RateEstimate


def overall_rates(model, pattern, mc):
    """Weight-combined achievable rate and i.u.d. capacity of a pattern."""
    w = pattern.level_sizes / pattern.length
    rates, caps = [], []
    for k in range(1, pattern.levels + 1):
        rates.append(estimate_level_rate(model, pattern, k, mc))
        caps.append(estimate_level_capacity(model, pattern, k, mc))

    def combine(parts, kind):
        mean = float(sum(wk * p.mean for wk, p in zip(w, parts)))
        se = float(np.sqrt(sum((wk * p.std_error) ** 2 for wk, p in zip(w, parts))))
        return RateEstimate(mean, se, samples=sum(p.samples for p in parts),
                            config={"kind": kind, "seed": mc.seed})

    return OverallRates(pattern.levels, w, rates, caps,
                        combine(rates, "overall_rate"), combine(caps, "overall_capacity"))


def pilot_utility(model, grid, mc):
    """Estimate the pilot-utility curve on the given fraction grid.

    For each fraction x, every slot independently becomes a known symbol with
    probability x; the extrinsic LLR measured at a slot never involves the
    slot's own status, so all interior positions contribute measurements of
    the data rate, including at x = 1 where every neighbour is known.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < 0) or np.any(grid > 1):
        raise InforateError("grid must lie in [0, 1]")
    burn = burn_in_length(model, mc.burn_in_cap)
    N = mc.block_len
    mask = _interior(N, burn)
    values = np.empty(len(grid))
    errors = np.empty(len(grid))
    for gi, frac in enumerate(grid):
        def run(ids, frac=frac, gi=gi):
            _, x, y = fsmc.simulate_blocks(model, N, mc.seed, ids)
            z = np.stack([_rng.stream(mc.seed, _rng.PILOT_MASK, gi, b).random(N) < frac
                          for b in ids])
            training = np.where(z, x, 0)
            llr = trellis._extrinsic_llr_batch(model, y, training)
            return _block_rates(trellis.info_bits_from_llr(llr, x), mask)

        means = _map_chunks(mc, model, run)
        values[gi] = means.mean()
        errors[gi] = means.std(ddof=1) / np.sqrt(len(means)) if len(means) > 1 else 0.0
    cfg = {"block_len": N, "blocks": mc.blocks, "burn_in": burn, "seed": mc.seed}
    es_n0_db = float(-10.0 * np.log10(model.noise_n0)) if model.noise_n0 > 0 else np.inf
    return PilotUtilityCurve(grid, values, errors, es_n0_db=es_n0_db,
                             model_id=f"Q{model.num_states}_a{model.alpha}", config=cfg)


# ---------------------------------------------------------------------------
# closed-form reconstructions from a fitted pilot-utility interpolant

def rate_from_mu(mu, weights):
    """Overall achievable rate sum_k w_k mu(sigma_k) of a random pattern."""
    w = weights if isinstance(weights, WeightDistribution) else WeightDistribution(weights)
    sigma = w.partial_sums()
    return float(np.sum(w.weights * mu(sigma)))


def level_rates_from_mu(mu, weights):
    """Per-level rates mu(sigma_k) of a random pattern."""
    w = weights if isinstance(weights, WeightDistribution) else WeightDistribution(weights)
    return np.asarray(mu(w.partial_sums()), dtype=float)


def capacity_from_mu(mu, weights):
    """Per-level and overall i.u.d. capacity as sub-areas of the curve.

    Returns (per_level, overall, zero_weight_levels); a zero-weight level
    gets the point value mu(sigma_k), the limit of the vanishing sub-area,
    and is flagged.
    """
    w = weights if isinstance(weights, WeightDistribution) else WeightDistribution(weights)
    sigma = np.concatenate([w.partial_sums(), [1.0]])
    per_level = np.empty(w.levels)
    flagged = []
    for k in range(w.levels):
        if w.weights[k] > 0:
            per_level[k] = mu.integrate(sigma[k], sigma[k + 1]) / w.weights[k]
        else:
            per_level[k] = float(mu(sigma[k]))
            flagged.append(k + 1)
    overall = float(mu.integrate(0.0, 1.0))
    return per_level, overall, flagged


# ---------------------------------------------------------------------------
# CSV artifacts

def write_mu_csv(curve, path):
    with open(path, "w", newline="") as fh:
        fh.write("x,mu,stderr\n")
        for x, v, e in zip(curve.grid, curve.values, curve.errors):
            fh.write(f"{x:.17g},{v:.17g},{e:.17g}\n")


def read_mu_csv(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    return PilotUtilityCurve(np.asarray(data["x"], dtype=float),
                             np.asarray(data["mu"], dtype=float),
                             np.asarray(data["stderr"], dtype=float))


def write_rates_csv(result, path):
    with open(path, "w", newline="") as fh:
        fh.write("level,weight,R,R_se,C,C_se\n")
        for k in range(result.levels):
            r, c = result.rate_per_level[k], result.capacity_per_level[k]
            fh.write(f"{k+1},{result.weights[k]:.17g},{r.mean:.17g},"
                     f"{r.std_error:.17g},{c.mean:.17g},{c.std_error:.17g}\n")
        fh.write(f"overall,1,{result.rate.mean:.17g},{result.rate.std_error:.17g},"
                 f"{result.capacity.mean:.17g},{result.capacity.std_error:.17g}\n")
