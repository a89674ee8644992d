"""Quantized Gauss-Markov fading channel.

A first-order complex Gauss-Markov process h_t = a*h_{t-1} + sqrt(1-a^2)*z_t
with z_t ~ CN(0,1) is discretized by independently quantizing the real and
imaginary parts with a Lloyd-Max quantizer.  The result is a finite-state
Markov channel: Q = levels^2 complex gains, a column-stochastic transition
matrix obtained by integrating the joint density of consecutive samples over
cell rectangles, and the stationary cell masses.  Observations follow
y_t = A[state_t] * x_t + w_t with w_t ~ CN(0, N0).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _rng

# outer integration edge for the unbounded quantizer cells (absolute value on
# the variance-1/2 component; the mass beyond is negligible)
OUTER_EDGE = 6.0


class FsmcError(Exception):
    pass


@dataclass(frozen=True)
class Quantizer1D:
    """Scalar quantizer for a zero-mean Gaussian of the given variance."""

    points: np.ndarray
    boundaries: np.ndarray
    variance: float

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        object.__setattr__(self, "boundaries", np.asarray(self.boundaries, dtype=float))
        p, b = self.points, self.boundaries
        if len(b) != len(p) - 1:
            raise FsmcError("need exactly len(points)-1 boundaries")
        if len(p) > 1 and np.any(np.diff(p) <= 0):
            raise FsmcError("points must be strictly increasing")
        if len(b) > 1 and np.any(np.diff(b) <= 0):
            raise FsmcError("boundaries must be strictly increasing")
        if len(b) and (np.any(b <= p[:-1]) or np.any(b >= p[1:])):
            raise FsmcError("each boundary must lie strictly between its neighbours")
        if self.variance <= 0:
            raise FsmcError("variance must be positive")

    @property
    def levels(self):
        return len(self.points)


def lloyd_max(levels, variance, tol=1e-10, max_iter=50_000):
    """Lloyd-Max quantizer of a zero-mean Gaussian.

    Alternates centroid and midpoint updates from equiprobable-mass initial
    points until the largest point movement falls below ``tol``.  The mean
    squared distortion is checked to be non-increasing along the way.
    """
    if levels < 1:
        raise FsmcError("levels must be >= 1")
    if tol <= 0:
        raise FsmcError("tol must be positive")
    sd = np.sqrt(variance)
    if levels == 1:
        return Quantizer1D(np.array([0.0]), np.array([]), variance)

    pts = stats.norm.ppf((np.arange(levels) + 0.5) / levels, scale=sd)
    prev_dist = np.inf
    for _ in range(max_iter):
        b = 0.5 * (pts[:-1] + pts[1:])
        edges = np.concatenate(([-np.inf], b, [np.inf]))
        cdf = stats.norm.cdf(edges, scale=sd)
        pdf = stats.norm.pdf(edges, scale=sd)
        mass = np.diff(cdf)
        if np.any(mass <= 0):
            raise FsmcError("degenerate quantizer cell during Lloyd iteration")
        # centroid of N(0, var) over [a, b]
        new_pts = variance * (pdf[:-1] - pdf[1:]) / mass
        # E[(X - c)^2 | cell]: var + c^2 - 2 c centroid, averaged over cells
        second = variance + new_pts**2 - 2.0 * new_pts * (variance * (pdf[:-1] - pdf[1:]) / mass)
        dist = float(np.sum(mass * second))
        if dist > prev_dist + 1e-12:
            raise FsmcError("Lloyd iteration increased distortion")
        prev_dist = dist
        move = float(np.max(np.abs(new_pts - pts)))
        pts = new_pts
        if move < tol:
            return Quantizer1D(pts, 0.5 * (pts[:-1] + pts[1:]), variance)
    raise FsmcError(f"Lloyd iteration did not converge; last movement {move:.3e}")


@dataclass(frozen=True)
class StateModel:
    """Finite-state Markov fading channel.

    ``transition`` is column-stochastic: transition[q', q] is the probability
    of moving to state q' from state q.  ``stationary`` is invariant under it.
    """

    states: np.ndarray            # (Q,) complex gains
    transition: np.ndarray        # (Q, Q) column-stochastic
    stationary: np.ndarray        # (Q,)
    noise_n0: float
    symbol_energy: float = 1.0
    alpha: float = field(default=np.nan)           # per-step gain correlation
    levels_per_dim: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "states", np.asarray(self.states, dtype=complex))
        object.__setattr__(self, "transition", np.asarray(self.transition, dtype=float))
        object.__setattr__(self, "stationary", np.asarray(self.stationary, dtype=float))
        Q = len(self.states)
        if self.transition.shape != (Q, Q) or self.stationary.shape != (Q,):
            raise FsmcError("inconsistent state-model shapes")
        if np.any(self.transition < 0) or np.any(self.stationary < 0):
            raise FsmcError("negative probabilities")
        col = self.transition.sum(axis=0)
        if np.max(np.abs(col - 1.0)) > 1e-9:
            raise FsmcError(f"columns not stochastic (max residual {np.max(np.abs(col-1)):.2e})")
        if abs(self.stationary.sum() - 1.0) > 1e-9:
            raise FsmcError("stationary does not sum to 1")
        resid = np.max(np.abs(self.transition @ self.stationary - self.stationary))
        if resid > 1e-8:
            raise FsmcError(f"stationary not invariant (residual {resid:.2e})")
        if self.noise_n0 < 0:
            raise FsmcError("noise power must be >= 0")

    @property
    def num_states(self):
        return len(self.states)

    @property
    def strictly_positive(self):
        """Whether every transition entry is positive (reported, not enforced)."""
        return bool(np.all(self.transition > 0))

    def positive_transition(self, floor=1e-300):
        """Transition matrix with entries floored for contraction analysis."""
        return np.maximum(self.transition, floor)


def _bivariate_cell_integrals(alpha, edges, variance, nodes):
    """Joint mass of consecutive Gauss-Markov samples over cell rectangles.

    Returns joint[j, i] = Pr(next in cell j, previous in cell i), computed
    with a Gauss-Legendre product rule on every rectangle.
    """
    ncell = len(edges) - 1
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    det = variance**2 * (1.0 - alpha**2)
    # per-cell scaled nodes/weights
    un, uw = [], []
    for i in range(ncell):
        a, b = edges[i], edges[i + 1]
        un.append(0.5 * (b - a) * gx + 0.5 * (a + b))
        uw.append(0.5 * (b - a) * gw)
    joint = np.empty((ncell, ncell))
    norm = 1.0 / (2.0 * np.pi * np.sqrt(det))
    for i in range(ncell):
        u = un[i][:, None]
        for j in range(ncell):
            v = un[j][None, :]
            pdf = np.exp(-(variance * u**2 - 2.0 * alpha * variance * u * v + variance * v**2)
                         / (2.0 * det)) * norm
            joint[j, i] = uw[i] @ pdf @ uw[j]
    return joint


def build_fsmc(alpha, quantizer, es_n0_db, nodes=64):
    """Assemble the quantized fading model.

    The per-dimension transition matrix comes from integrating the bivariate
    density of consecutive samples (correlation ``alpha``) over quantizer cell
    rectangles, truncated at +-OUTER_EDGE; columns are normalized by the cell
    masses of the same integral so stationarity holds to machine precision.
    The two dimensions are independent, so the full model is a Kronecker
    product.
    """
    if not 0.0 < alpha < 1.0:
        raise FsmcError("alpha must be in (0, 1)")
    if abs(quantizer.variance - 0.5) > 1e-12:
        raise FsmcError("quantizer must be built for variance 1/2 (unit-power complex gain)")
    edges = np.concatenate(([-OUTER_EDGE], quantizer.boundaries, [OUTER_EDGE]))
    joint = _bivariate_cell_integrals(alpha, edges, quantizer.variance, nodes)
    mass = joint.sum(axis=0)
    for i, m in enumerate(mass):
        if m <= 0 or not np.isfinite(m):
            raise FsmcError(f"zero-probability quantizer cell {i} "
                            f"[{edges[i]:.4g}, {edges[i+1]:.4g}]")
    p1 = joint / mass[None, :]
    p1 /= p1.sum(axis=0, keepdims=True)
    stat1 = mass / mass.sum()

    pts = quantizer.points
    states = (pts[:, None] + 1j * pts[None, :]).ravel()
    transition = np.kron(p1, p1)
    transition /= transition.sum(axis=0, keepdims=True)
    stationary = np.kron(stat1, stat1)
    stationary /= stationary.sum()
    n0 = float(1.0 * 10.0 ** (-es_n0_db / 10.0))
    return StateModel(states, transition, stationary, n0,
                      alpha=float(alpha), levels_per_dim=quantizer.levels)


@dataclass
class ChannelRealization:
    states: np.ndarray    # (N,) state indices
    inputs: np.ndarray    # (N,) +-1
    outputs: np.ndarray   # (N,) complex
    seed: object


def _states_from_uniforms(model, u):
    """State index array driven by a (blocks, length) uniform matrix.

    Row b starts from the stationary law and then follows the transition
    columns; feeding per-block uniforms keeps results independent of how
    blocks are grouped into batches.
    """
    B, N = u.shape
    Q = model.num_states
    cum = np.cumsum(model.transition, axis=0)
    cum_stat = np.cumsum(model.stationary)
    s = np.empty((B, N), dtype=np.int64)
    s[:, 0] = np.searchsorted(cum_stat, u[:, 0])
    for t in range(1, N):
        c = cum[:, s[:, t - 1]]                      # (Q, B)
        s[:, t] = (u[:, t][None, :] > c).sum(axis=0)
    np.clip(s, 0, Q - 1, out=s)
    return s


def _noise(model, rng, shape):
    scale = np.sqrt(model.noise_n0 / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate(model, inputs, seed):
    """One channel realization: y_t = A[state_t] * x_t + w_t.

    Bit-identical for equal seeds; states, inputs and noise use separate
    streams so changing the input sequence does not perturb the state path.
    """
    x = np.asarray(inputs)
    if x.ndim != 1 or len(x) == 0:
        raise FsmcError("inputs must be a nonempty sequence")
    if not np.all(np.abs(x) == 1):
        raise FsmcError("inputs must be +-1")
    N = len(x)
    u = _rng.stream(seed, _rng.SIM_STATES, 0).random((1, N))
    s = _states_from_uniforms(model, u)[0]
    w = _noise(model, _rng.stream(seed, _rng.SIM_NOISE, 0), (N,))
    y = model.states[s] * x + w
    return ChannelRealization(s, x.astype(np.int64), y, seed)


def simulate_blocks(model, block_len, seed, block_ids):
    """Batched i.u.d.-input realizations for the given Monte-Carlo blocks.

    Streams are keyed by block id, never by batch position, so any grouping
    of blocks yields identical draws.
    """
    ids = list(block_ids)
    B = len(ids)
    u = np.stack([_rng.stream(seed, _rng.SIM_STATES, b).random(block_len) for b in ids])
    s = _states_from_uniforms(model, u)
    x = np.stack([_rng.stream(seed, _rng.SIM_INPUTS, b).integers(0, 2, size=block_len)
                  for b in ids]) * 2 - 1
    w = np.stack([_noise(model, _rng.stream(seed, _rng.SIM_NOISE, b), (block_len,))
                  for b in ids])
    return s, x, model.states[s] * x + w


# ---------------------------------------------------------------------------
# plain-text model files (lossless round trip at 17 significant digits)

def _es_n0_db(model):
    if model.noise_n0 == 0:
        return np.inf
    return -10.0 * np.log10(model.noise_n0 / model.symbol_energy)


def save_model(model, path):
    with open(path, "w") as fh:
        fh.write(f"{model.num_states} {model.alpha:.17g} {_es_n0_db(model):.17g} "
                 f"{model.levels_per_dim} {model.noise_n0:.17g}\n")
        for a in model.states:
            fh.write(f"{a.real:.17g} {a.imag:.17g}\n")
        for q in range(model.num_states):          # column-major
            for qp in range(model.num_states):
                fh.write(f"{model.transition[qp, q]:.17g}\n")
        for p in model.stationary:
            fh.write(f"{p:.17g}\n")


def load_model(path):
    with open(path) as fh:
        tokens = fh.read().split()
    it = iter(tokens)
    Q = int(next(it))
    alpha = float(next(it))
    _db = float(next(it))  # informational; noise is stored exactly below
    levels = int(next(it))
    n0 = float(next(it))
    states = np.array([complex(float(next(it)), float(next(it))) for _ in range(Q)])
    transition = np.empty((Q, Q))
    for q in range(Q):
        for qp in range(Q):
            transition[qp, q] = float(next(it))
    stationary = np.array([float(next(it)) for _ in range(Q)])
    return StateModel(states, transition, stationary, n0,
                      alpha=alpha, levels_per_dim=levels)
