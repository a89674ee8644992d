"""Independent reference computations for small instances.

Everything here sums over all Q^N state paths explicitly (vectorized over
the path table), so it shares no recursion code with the package.
"""

import numpy as np


def _path_table(Q, N):
    grids = np.meshgrid(*([np.arange(Q)] * N), indexing="ij")
    return np.stack(grids).reshape(N, -1).T          # (Q^N, N)


class PathEnumerator:
    """Exact joints over state paths for one short realization."""

    def __init__(self, model, outputs, training, priors=None):
        self.model = model
        self.y = np.asarray(outputs)
        self.training = np.asarray(training)
        self.N = len(self.y)
        self.Q = model.num_states
        self.priors = np.full(self.N, 0.5) if priors is None else np.asarray(priors)
        self.paths = _path_table(self.Q, self.N)
        trans = model.stationary[self.paths[:, 0]].copy()
        for t in range(1, self.N):
            trans *= model.transition[self.paths[:, t], self.paths[:, t - 1]]
        self.state_weight = trans                      # (paths,)
        n0 = model.noise_n0
        self.gp = np.exp(-np.abs(self.y[:, None] - model.states[None, :]) ** 2 / n0) \
            / (np.pi * n0)                             # (N, Q)
        self.gm = np.exp(-np.abs(self.y[:, None] + model.states[None, :]) ** 2 / n0) \
            / (np.pi * n0)

    def emission(self, t, mode):
        """(Q,) emission vector at time t.

        mode: +1 / -1 conditional, "marg" prior-weighted, "skip" all-ones.
        """
        if mode == 1:
            return self.gp[t]
        if mode == -1:
            return self.gm[t]
        if mode == "marg":
            p = self.priors[t]
            return p * self.gp[t] + (1.0 - p) * self.gm[t]
        if mode == "skip":
            return np.ones(self.Q)
        raise ValueError(mode)

    def base_modes(self):
        return [int(u) if u != 0 else "marg" for u in self.training]

    def joint(self, modes):
        """sum over paths of stationary * transitions * per-time emissions."""
        acc = self.state_weight.copy()
        for t in range(self.N):
            acc = acc * self.emission(t, modes[t])[self.paths[:, t]]
        return float(acc.sum())

    def joint_by_state(self, modes, t):
        """Same sum, split by the state occupied at time t."""
        acc = self.state_weight.copy()
        for s in range(self.N):
            acc = acc * self.emission(s, modes[s])[self.paths[:, s]]
        return np.bincount(self.paths[:, t], weights=acc, minlength=self.Q)

    # ----- reference quantities -------------------------------------------

    def log_llr(self, t):
        """Eq. of the extrinsic ratio: own slot conditioned, no prior factor."""
        modes = self.base_modes()
        modes[t] = 1
        num = self.joint(modes)
        modes[t] = -1
        return np.log(num) - np.log(self.joint(modes))

    def log_llr_with_prior(self, t):
        p = self.priors[t]
        return self.log_llr(t) + np.log(p) - np.log1p(-p)

    def causal_log_llr(self, positions, inputs, i):
        """Ratio at positions[i] given true bits at positions[:i]."""
        modes = self.base_modes()
        for j in range(i):
            modes[positions[j]] = int(inputs[j])
        t = positions[i]
        modes[t] = 1
        num = self.joint(modes)
        modes[t] = -1
        return np.log(num) - np.log(self.joint(modes))

    def forward(self, t):
        """alpha_t(q) up to normalization: prefix observations only."""
        modes = self.base_modes()
        for s in range(t, self.N):
            modes[s] = "skip"
        vec = self.joint_by_state(modes, t)
        return vec / vec.sum()

    def backward(self, t):
        """beta_t(q) up to normalization: suffix observations from t on."""
        modes = self.base_modes()
        for s in range(t):
            modes[s] = "skip"
        vec = self.joint_by_state(modes, t) / self.model.stationary
        return vec / vec.sum()

    def state_posterior(self, t):
        vec = self.joint_by_state(self.base_modes(), t)
        return vec / vec.sum()

    def joint_input_posterior_log2(self, positions, inputs):
        """log2 Pr(x_level = inputs | y, u) by two enumerations.

        Conditional emissions carry no input prior, so the uniform prior
        2^-len(positions) of the conditioned bits is restored explicitly.
        """
        modes = self.base_modes()
        for pos, val in zip(positions, inputs):
            modes[pos] = int(val)
        return (np.log(self.joint(modes)) - np.log(self.joint(self.base_modes()))) \
            / np.log(2.0) - len(positions)


def random_instance(rng, q_max=3, n_max=10, training_prob=0.3):
    """Small random model + realization for oracle comparisons."""
    from markovsd.fsmc import StateModel

    Q = int(rng.integers(1, q_max + 1))
    N = int(rng.integers(4, n_max + 1))
    states = rng.normal(size=Q) + 1j * rng.normal(size=Q)
    raw = rng.random((Q, Q)) + 0.1
    transition = raw / raw.sum(axis=0, keepdims=True)
    evals, evecs = np.linalg.eig(transition)
    stat = np.real(evecs[:, np.argmax(np.real(evals))])
    stat = np.abs(stat) / np.abs(stat).sum()
    stat = transition @ stat                    # one extra step tightens residual
    stat /= stat.sum()
    model = StateModel(states, transition, stat, noise_n0=float(rng.uniform(0.3, 2.0)))

    x = rng.choice([-1, 1], size=N)
    s = np.zeros(N, dtype=int)
    s[0] = rng.choice(Q, p=stat)
    for t in range(1, N):
        s[t] = rng.choice(Q, p=transition[:, s[t - 1]])
    w = (rng.normal(size=N) + 1j * rng.normal(size=N)) * np.sqrt(model.noise_n0 / 2)
    y = model.states[s] * x + w
    training = np.where(rng.random(N) < training_prob, x, 0)
    return model, x, y, training
