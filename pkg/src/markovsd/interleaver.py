"""K-level interleaver patterns and level bookkeeping.

A pattern assigns every time slot to one of K levels.  Deterministic
constructions (rectangular, binary-weighted) repeat a fixed subpattern;
random patterns draw the level of each slot i.i.d. from a weight
distribution.  During successive decoding, the symbols of levels below k
act as training for level k.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _rng

ERASED = 0  # marker in training sequences; known symbols are +-1

# empirically good repetition counts for the binary-weighted family
_DEFAULT_REPS = {2: 9, 3: 5, 4: 3, 5: 2}


class InterleaverError(Exception):
    pass


@dataclass(frozen=True)
class WeightDistribution:
    """Per-level fractions of the transmission stream."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or len(w) == 0:
            raise InterleaverError("weights must be a nonempty vector")
        if np.any(w < 0):
            raise InterleaverError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InterleaverError(f"weights sum to {w.sum()!r}, expected 1")

    @property
    def levels(self):
        return len(self.weights)

    def partial_sums(self):
        """sigma_k = sum of weights below level k, for k = 1..K."""
        return np.concatenate(([0.0], np.cumsum(self.weights)[:-1]))


@dataclass(frozen=True)
class InterleaverPattern:
    assignment: np.ndarray                  # (N,) level indices in 1..K
    levels: int
    truncated_from: int | None = None       # requested length before truncation
    level_sizes: np.ndarray = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        object.__setattr__(self, "assignment", a)
        if a.ndim != 1 or len(a) == 0:
            raise InterleaverError("empty pattern")
        if a.min() < 1 or a.max() > self.levels:
            raise InterleaverError("level indices must lie in 1..K")
        sizes = np.bincount(a, minlength=self.levels + 1)[1:]
        object.__setattr__(self, "level_sizes", sizes)

    @property
    def length(self):
        return len(self.assignment)

    def positions(self, level):
        """0-based time indices carrying the given level, increasing."""
        if not 1 <= level <= self.levels:
            raise InterleaverError(f"level {level} out of range 1..{self.levels}")
        return np.flatnonzero(self.assignment == level)

    def time_of(self, i, level):
        """1-based slot t(i, k) of the i-th symbol (1-based) of a level."""
        pos = self.positions(level)
        if not 1 <= i <= len(pos):
            raise InterleaverError(f"symbol index {i} out of range for level {level}")
        return int(pos[i - 1]) + 1

    def weight_distribution(self):
        return WeightDistribution(self.level_sizes / self.length)


def rectangular(levels, length):
    """Repetition of [1, 2, ..., K]; a trailing partial period is dropped."""
    if levels < 1:
        raise InterleaverError("levels must be >= 1")
    used = (length // levels) * levels
    if used == 0:
        raise InterleaverError("length shorter than one period")
    assignment = np.tile(np.arange(1, levels + 1), used // levels)
    return InterleaverPattern(assignment, levels,
                              truncated_from=length if used != length else None)


def nesting_vector(levels):
    """Recursive placement vector v_K of the binary-weighted family.

    v_2 = [2]; v_K interleaves the symbol K around every entry of v_{K-1},
    so level k >= 2 appears 2^(k-2) times and weights double per level.
    """
    if levels < 2:
        raise InterleaverError("nesting vector defined for levels >= 2")
    v = [2]
    for k in range(3, levels + 1):
        out = [k]
        for e in v:
            out += [e, k]
        v = out
    return v


def binary_weighted(levels, reps, length):
    """Subpattern [1, v_K, ..., v_K] with ``reps`` copies, repeated.

    A trailing partial period is dropped and recorded.
    """
    if levels < 2:
        raise InterleaverError("binary-weighted pattern needs levels >= 2")
    if reps < 1:
        raise InterleaverError("reps must be >= 1")
    sub = np.array([1] + nesting_vector(levels) * reps, dtype=np.int64)
    L = len(sub)
    periods = length // L
    if periods == 0:
        raise InterleaverError(f"length {length} shorter than subpattern length {L}")
    used = periods * L
    assignment = np.tile(sub, periods)
    return InterleaverPattern(assignment, levels,
                              truncated_from=length if used != length else None)


def default_reps(levels):
    """Repetition count used when a config does not fix one."""
    return _DEFAULT_REPS.get(levels, 1)


def sample_random(weights, length, seed):
    """I.i.d. pattern with Pr(level k) = w_k; deterministic given seed."""
    w = weights if isinstance(weights, WeightDistribution) else WeightDistribution(weights)
    rng = _rng.stream(seed, _rng.PATTERN, 0)
    assignment = _draw_assignment(w, length, rng)
    return InterleaverPattern(assignment, w.levels)


def _draw_assignment(w, length, rng):
    cum = np.cumsum(w.weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, rng.random(length), side="right").astype(np.int64) + 1


def training_mask(pattern, level, inputs):
    """Training sequence for decoding stage ``level``.

    Slots of levels below ``level`` carry the true symbols (perfect decision
    feedback); every other slot is erased.
    """
    if not 1 <= level <= pattern.levels:
        raise InterleaverError(f"level {level} out of range 1..{pattern.levels}")
    x = np.asarray(inputs)
    if len(x) != pattern.length:
        raise InterleaverError("inputs length does not match pattern length")
    return np.where(pattern.assignment < level, x, ERASED).astype(np.int64)


# ---------------------------------------------------------------------------
# plain-text files

def save_pattern(pattern, path):
    with open(path, "w") as fh:
        fh.write(f"{pattern.levels} {pattern.length}\n")
        fh.write("\n".join(str(int(v)) for v in pattern.assignment))
        fh.write("\n")


def load_pattern(path):
    with open(path) as fh:
        header = fh.readline().split()
        K, N = int(header[0]), int(header[1])
        assignment = np.array([int(line) for line in fh.read().split()], dtype=np.int64)
    if len(assignment) != N:
        raise InterleaverError(f"pattern file announces {N} entries, found {len(assignment)}")
    return InterleaverPattern(assignment, K)


def save_weights(weights, path):
    w = weights.weights if isinstance(weights, WeightDistribution) else np.asarray(weights)
    with open(path, "w") as fh:
        fh.write(" ".join(f"{v:.17g}" for v in w))
        fh.write("\n")


def load_weights(path):
    with open(path) as fh:
        return WeightDistribution(np.array([float(tok) for tok in fh.read().split()]))
