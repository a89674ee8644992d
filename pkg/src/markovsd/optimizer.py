"""Pilot-utility interpolation and optimal weight distributions.

The measured curve is projected to be non-decreasing, fitted with a monotone
piecewise cubic, and the simplex-constrained rate maximization is solved
through its first-order conditions: for each multiplier value the partial
sums unwind recursively through the inverse curve, and the weight-sum
constraint picks out the candidate multipliers.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import bisect, isotonic_regression

from .inforate import PilotUtilityCurve, rate_from_mu


class OptimizerError(Exception):
    pass


@dataclass
class MuInterpolant:
    """Monotone cubic fit of a pilot-utility curve with inverse and derivative."""

    knots: np.ndarray
    values: np.ndarray           # isotonic-projected sample means
    errors: np.ndarray
    flat: bool = False
    moved_beyond_sigma: int = 0  # samples the projection moved by more than 1 sigma
    _pchip: PchipInterpolator = field(repr=False, default=None)
    _deriv: PchipInterpolator = field(repr=False, default=None)

    def __call__(self, x):
        return self._pchip(x)

    def derivative(self, x):
        return self._deriv(x)

    def integrate(self, a, b):
        return float(self._pchip.integrate(a, b))

    @property
    def lo(self):
        return float(self.values[0])

    @property
    def hi(self):
        return float(self.values[-1])

    def inverse(self, y):
        """x with mu(x) = y; arguments are clamped to [mu(0), mu(1)]."""
        if self.flat:
            raise OptimizerError("flat curve: inverse undefined")
        y = min(max(float(y), self.lo), self.hi)
        if y <= self.lo:
            return float(self.knots[0])
        if y >= self.hi:
            return float(self.knots[-1])
        return bisect(lambda t: float(self._pchip(t)) - y,
                      float(self.knots[0]), float(self.knots[-1]), xtol=1e-13)


def fit_mu(curve):
    """Isotonic projection followed by monotone cubic interpolation.

    Accepts a PilotUtilityCurve or an (x, values[, errors]) tuple.  A curve
    whose total rise is below five combined standard errors is marked flat
    (its inverse is refused).
    """
    if isinstance(curve, PilotUtilityCurve):
        x, v, e = curve.grid, curve.values, curve.errors
    else:
        x, v = np.asarray(curve[0], dtype=float), np.asarray(curve[1], dtype=float)
        e = np.asarray(curve[2], dtype=float) if len(curve) > 2 else np.zeros_like(v)
    if len(x) < 4:
        raise OptimizerError("need at least 4 grid points")
    if np.any(np.diff(x) <= 0):
        raise OptimizerError("grid must be strictly increasing")

    iso = isotonic_regression(v).x
    moved = int(np.sum(np.abs(iso - v) > e + 1e-15))
    pchip = PchipInterpolator(x, iso)
    rise = iso[-1] - iso[0]
    sigma = float(np.sqrt(e[0] ** 2 + e[-1] ** 2))
    flat = bool(rise <= 5.0 * sigma)
    return MuInterpolant(np.asarray(x), iso, e, flat=flat,
                         moved_beyond_sigma=moved,
                         _pchip=pchip, _deriv=pchip.derivative())


@dataclass
class KktSolution:
    weights: np.ndarray
    lam: float
    sigma: np.ndarray            # partial sums, sigma_k = sum_{j<k} w_j
    residuals: np.ndarray        # stationarity residuals per level
    objective: float
    clamped: bool = False        # inverse argument left [mu(0), mu(1)] during recursion
    no_root: bool = False        # no weight-sum root found; best grid point returned


def kkt_weights(mu, levels, lam):
    """Candidate weights for one multiplier value.

    sigma_K = mu^-1(lam); then sigma_{i-1} = mu^-1(mu(sigma_i) - w_i mu'(sigma_i))
    downwards, clamping each weight at zero.  Returns (weights, sigma, clamped).
    """
    if levels < 1:
        raise OptimizerError("levels must be >= 1")
    if levels == 1:
        return np.array([1.0]), np.array([0.0]), False
    sigma = np.empty(levels + 1)
    w = np.empty(levels + 1)
    clamped = False
    if not mu.lo - 1e-12 <= lam <= mu.hi + 1e-12:
        clamped = True
    sigma[levels] = mu.inverse(lam)
    w[levels] = max(1.0 - sigma[levels], 0.0)
    for i in range(levels, 1, -1):
        target = float(mu(sigma[i])) - w[i] * float(mu.derivative(sigma[i]))
        if target < mu.lo - 1e-12 or target > mu.hi + 1e-12:
            clamped = True
        sigma[i - 1] = mu.inverse(target)
        w[i - 1] = max(sigma[i] - sigma[i - 1], 0.0)
    return w[1:], sigma[1:], clamped


def kkt_residuals(mu, weights, lam):
    """Stationarity residuals mu(sigma_k) + sum_{i>k} w_i mu'(sigma_i) - lam."""
    w = np.asarray(weights, dtype=float)
    K = len(w)
    sigma = np.concatenate(([0.0], np.cumsum(w)[:-1]))
    res = np.empty(K)
    for k in range(K):
        tail = sum(w[i] * float(mu.derivative(sigma[i])) for i in range(k + 1, K))
        res[k] = float(mu(sigma[k])) + tail - lam
    return res


def solve_weights(mu, levels, lam_grid=2001):
    """Globally best weight distribution for a K-level random pattern.

    Scans the multiplier over [mu(0), mu(1)], brackets sign changes of the
    weight-sum defect, bisects each to 1e-12, evaluates the objective at every
    root and returns the maximizer with its stationarity residuals.
    """
    if levels == 1:
        lam = mu.lo
        w = np.array([1.0])
        return KktSolution(w, lam, np.array([0.0]), np.zeros(1), float(mu(0.0)))
    if mu.flat:
        raise OptimizerError("flat curve: optimization undefined")

    def defect(lam):
        w, _, _ = kkt_weights(mu, levels, lam)
        return 1.0 - w.sum()

    # The defect is nonnegative (weights are clamped at zero), so its zero
    # set is a union of intervals.  Interior points of a flat zero stretch
    # are not stationary; the candidates are the interval boundaries, located
    # by bisecting the positive/zero transitions seen on the scan grid.
    lams = np.linspace(mu.lo, mu.hi, lam_grid)
    vals = np.array([defect(l) for l in lams])
    zero = vals <= 1e-14
    roots = []

    def edge(zero_side, pos_side):
        for _ in range(100):
            mid = 0.5 * (zero_side + pos_side)
            if defect(mid) <= 1e-14:
                zero_side = mid
            else:
                pos_side = mid
        return zero_side

    for i in range(len(lams) - 1):
        if not zero[i] and zero[i + 1]:
            roots.append(edge(lams[i + 1], lams[i]))
        elif zero[i] and not zero[i + 1]:
            roots.append(edge(lams[i], lams[i + 1]))
    if zero[0]:
        roots.append(lams[0])
    if zero[-1]:
        roots.append(lams[-1])

    no_root = not roots
    if no_root:
        roots = [lams[int(np.argmin(np.abs(vals)))]]

    best = None
    for lam in roots:
        w, sigma, clamped = kkt_weights(mu, levels, lam)
        s = w.sum()
        if s <= 0:
            continue
        w = w / s
        obj = rate_from_mu(mu, w)
        if best is None or obj > best[0]:
            best = (obj, w, lam, clamped)
    if best is None:
        raise OptimizerError("no feasible weight distribution found")
    obj, w, lam, clamped = best
    sigma = np.concatenate(([0.0], np.cumsum(w)[:-1]))
    res = kkt_residuals(mu, w, lam)
    return KktSolution(w, float(lam), sigma, res, obj, clamped=clamped, no_root=no_root)


def write_solution_csv(solution, path):
    with open(path, "w", newline="") as fh:
        fh.write(f"# lambda={solution.lam:.17g} objective={solution.objective:.17g}\n")
        fh.write("k,w,sigma,residual\n")
        for k, (w, s, r) in enumerate(zip(solution.weights, solution.sigma,
                                          solution.residuals), start=1):
            fh.write(f"{k},{w:.17g},{s:.17g},{r:.17g}\n")
