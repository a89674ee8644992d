"""Forward-backward state estimation over the fading trellis.

Linear-domain recursions with per-step sum normalization; every ratio used
downstream is invariant to positive per-time scaling, so branch metrics are
rescaled by their per-time maximum before exponentiation to avoid underflow.
Log-likelihood ratios are assembled in the log domain at the end.

Training symbols enter the branch metric as conditional emissions; erased
symbols are marginalized against their prior (uniform unless an extrinsic
prior is supplied).  The likelihood ratio emitted at a position never uses
that position's own prior or training status, only its neighbours', which is
exactly the extrinsic quantity exchanged in iterative estimation.
"""

from dataclasses import dataclass

import numpy as np

from .interleaver import ERASED

LN2 = np.log(2.0)


class TrellisError(Exception):
    pass


@dataclass
class TrellisPosteriors:
    """Normalized forward/backward state probabilities and per-bit LLRs."""

    forward: np.ndarray      # (N, Q), rows sum to 1
    backward: np.ndarray     # (N, Q), rows sum to 1
    norm_log: np.ndarray     # (N,) log of forward pre-normalization sums
    llr: np.ndarray          # (N,) log Lambda(X_t = +1), extrinsic

    def state_posteriors(self):
        """Pr(H_t = q | y, u): row-normalized alpha * beta."""
        prod = self.forward * self.backward
        return prod / prod.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# batched internals; arrays are (B, N) or (B, N, Q)

def _check_model_noise(model):
    if model.noise_n0 <= 0:
        raise TrellisError("trellis estimation needs positive noise power")


def _emission_logs(model, outputs):
    """Log Gaussian emission densities for x=+1 and x=-1, up to (pi*N0)^-1.

    |y -+ A|^2 expanded in real arithmetic to avoid complex temporaries.
    """
    a = model.states
    n0 = model.noise_n0
    ypow = (outputs.real**2 + outputs.imag**2)[..., None]
    cross = outputs.real[..., None] * a.real[None, None, :] \
        + outputs.imag[..., None] * a.imag[None, None, :]
    base = ypow + (a.real**2 + a.imag**2)[None, None, :]
    lgp = -(base - 2.0 * cross) / n0
    lgm = -(base + 2.0 * cross) / n0
    return lgp, lgm


def _prepare(model, outputs, training, prior_plus=None):
    """Per-time emission vectors, commonly rescaled.

    Returns (gp, gm, em): conditional emissions for +-1 and the marginal
    branch emission (training-aware, prior-weighted), each (B, N, Q) and
    scaled by exp(-max) per (block, time).  The common rescaling keeps the
    prior mixture a plain linear combination.
    """
    _check_model_noise(model)
    lgp, lgm = _emission_logs(model, outputs)
    scale = np.maximum(lgp.max(axis=-1), lgm.max(axis=-1))[..., None]
    gp = np.exp(lgp - scale)
    gm = np.exp(lgm - scale)
    if prior_plus is None:
        em = 0.5 * (gp + gm)
    else:
        p = np.asarray(prior_plus, dtype=float)[..., None]
        em = p * gp + (1.0 - p) * gm
    em = np.where((training == 1)[..., None], gp, em)
    em = np.where((training == -1)[..., None], gm, em)
    return gp, gm, em


def _forward_pass(model, em):
    """Normalized forward probabilities alpha_t, stored per time."""
    B, N, Q = em.shape
    PT = np.ascontiguousarray(model.transition.T)
    alpha = np.empty_like(em)
    a = np.broadcast_to(model.stationary, (B, Q)).copy()
    for t in range(N):
        alpha[:, t] = a
        a = (em[:, t] * a) @ PT
        s = a.sum(axis=1, keepdims=True)
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise TrellisError(f"forward recursion starved at time {t}")
        a /= s
    return alpha


def _backward_llr(model, em, gp, gm, alpha, keep_backward=False):
    """Backward pass emitting extrinsic log-LLRs at every position.

    The ratio at time t uses alpha_t, the conditional emissions at t and
    bb_t = P^T beta_{t+1}; none of these involve the position's own prior.
    """
    B, N, Q = em.shape
    P = model.transition
    llr = np.empty((B, N))
    beta = np.empty_like(em) if keep_backward else None
    b = np.ones((B, Q))
    with np.errstate(divide="ignore"):
        for t in range(N - 1, -1, -1):
            bb = b @ P                         # bb[q] = sum_q' P[q',q] b[q']
            abb = alpha[:, t] * bb
            llr[:, t] = np.log((abb * gp[:, t]).sum(axis=1)) \
                - np.log((abb * gm[:, t]).sum(axis=1))
            b = em[:, t] * bb
            s = b.sum(axis=1, keepdims=True)
            if np.any(s <= 0) or not np.all(np.isfinite(s)):
                raise TrellisError(f"backward recursion starved at time {t}")
            b /= s
            if keep_backward:
                beta[:, t] = b
    return llr, beta


def _extrinsic_llr_batch(model, outputs, training, prior_plus=None):
    """(B, N) extrinsic log-LLRs under the given training and priors."""
    gp, gm, em = _prepare(model, outputs, training, prior_plus)
    alpha = _forward_pass(model, em)
    llr, _ = _backward_llr(model, em, gp, gm, alpha)
    return llr


def _causal_llr_batch(model, outputs, training, level_mask, inputs):
    """Causally conditioned log-LLRs at masked positions, NaN elsewhere.

    One backward pass with the base training only; one forward pass in which
    each masked position is measured and then switched to a known symbol, so
    position i of the level is conditioned on the true bits 1..i-1.
    """
    gp, gm, em = _prepare(model, outputs, training)
    B, N, Q = em.shape
    P = model.transition
    PT = np.ascontiguousarray(P.T)

    bbs = np.empty_like(em)
    b = np.ones((B, Q))
    for t in range(N - 1, -1, -1):
        bb = b @ P
        bbs[:, t] = bb
        b = em[:, t] * bb
        s = b.sum(axis=1, keepdims=True)
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise TrellisError(f"backward recursion starved at time {t}")
        b /= s

    llr = np.full((B, N), np.nan)
    a = np.broadcast_to(model.stationary, (B, Q)).copy()
    plus = inputs == 1
    with np.errstate(divide="ignore"):
        for t in range(N):
            sel = level_mask[:, t]
            if sel.any():
                abb = a[sel] * bbs[sel, t]
                llr[sel, t] = np.log((abb * gp[sel, t]).sum(axis=1)) \
                    - np.log((abb * gm[sel, t]).sum(axis=1))
            cond = np.where(plus[:, t][:, None], gp[:, t], gm[:, t])
            em_t = np.where(sel[:, None], cond, em[:, t])
            a = (em_t * a) @ PT
            s = a.sum(axis=1, keepdims=True)
            if np.any(s <= 0) or not np.all(np.isfinite(s)):
                raise TrellisError(f"forward recursion starved at time {t}")
            a /= s
    return llr


# ---------------------------------------------------------------------------
# public single-sequence operations

def _as_batch(seq, dtype=None):
    a = np.asarray(seq) if dtype is None else np.asarray(seq, dtype=dtype)
    if a.ndim != 1:
        raise TrellisError("expected a 1-D sequence")
    return a[None, :]


def branch_metric(model, y_t, training_entry, prior_plus=0.5):
    """Q x Q branch metric gamma[q', q] at one time step.

    Known symbols use the conditional emission directly; erased symbols
    marginalize over x = +-1 with the given prior.  Includes the (pi*N0)^-1
    Gaussian normalization so small cases can be checked by direct arithmetic.
    """
    _check_model_noise(model)
    n0 = model.noise_n0
    g = np.exp(-np.abs(y_t - np.array([1, -1])[:, None] * model.states) ** 2 / n0) \
        / (np.pi * n0)                                        # (2, Q)
    if training_entry == 1:
        m = g[0]
    elif training_entry == -1:
        m = g[1]
    elif training_entry == ERASED:
        m = prior_plus * g[0] + (1.0 - prior_plus) * g[1]
    else:
        raise TrellisError(f"training entry must be -1, 0 or +1, got {training_entry!r}")
    return model.transition * m[None, :]


def forward_backward(model, outputs, training, priors=None):
    """Run the full recursion over one sequence.

    ``training`` holds +-1 for known symbols and 0 for erased ones;
    ``priors`` optionally gives Pr(X_t = +1) per slot (default 1/2).
    Boundaries: alpha_1 is the stationary distribution; the backward pass
    starts from a uniform vector so that every quantity equals the exact
    conditional probability of the finite observation window.
    """
    y = _as_batch(outputs, complex)
    u = _as_batch(training, np.int64)
    if y.shape != u.shape:
        raise TrellisError("outputs and training lengths differ")
    p = None if priors is None else _as_batch(priors, float)
    gp, gm, em = _prepare(model, y, u, p)
    B, N, Q = em.shape

    PT = np.ascontiguousarray(model.transition.T)
    alpha = np.empty_like(em)
    norm_log = np.empty(N)
    a = np.broadcast_to(model.stationary, (B, Q)).copy()
    for t in range(N):
        alpha[:, t] = a
        a = (em[:, t] * a) @ PT
        s = a.sum(axis=1, keepdims=True)
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise TrellisError(f"forward recursion starved at time {t}")
        norm_log[t] = np.log(s[0, 0])
        a /= s

    llr, beta = _backward_llr(model, em, gp, gm, alpha, keep_backward=True)
    return TrellisPosteriors(alpha[0], beta[0], norm_log, llr[0])


def bit_llr(posteriors, model, outputs, priors, positions):
    """Per-position log likelihood ratios log Lambda(X_t = +1).

    Evaluated from the stored forward/backward probabilities with the
    conditional branch metric; the prior ratio of the position itself
    multiplies the extrinsic part.
    """
    y = np.asarray(outputs)
    pos = np.asarray(positions, dtype=np.int64)
    N = len(y)
    lgp, lgm = _emission_logs(model, y[None, :])
    scale = np.maximum(lgp.max(axis=-1), lgm.max(axis=-1))[..., None]
    gp = np.exp(lgp - scale)[0]
    gm = np.exp(lgm - scale)[0]

    P = model.transition
    out = np.empty(len(pos))
    with np.errstate(divide="ignore"):
        for j, t in enumerate(pos):
            bb = posteriors.backward[t + 1] @ P if t + 1 < N else np.ones(model.num_states) @ P
            abb = posteriors.forward[t] * bb
            out[j] = np.log((abb * gp[t]).sum()) - np.log((abb * gm[t]).sum())
            if priors is not None:
                p = float(np.asarray(priors)[t])
                out[j] += np.log(p) - np.log1p(-p)
    return out


def causal_llr(model, outputs, training, positions, level_inputs):
    """Log-LLRs with the level's earlier true bits added to the forward pass.

    ``positions`` are the level's slots in increasing order and
    ``level_inputs`` the true bits transmitted there.
    """
    y = _as_batch(outputs, complex)
    u = _as_batch(training, np.int64)
    pos = np.asarray(positions, dtype=np.int64)
    mask = np.zeros_like(u, dtype=bool)
    mask[0, pos] = True
    x = np.zeros_like(u)
    x[0, pos] = np.asarray(level_inputs, dtype=np.int64)
    llr = _causal_llr_batch(model, y, u, mask, x)
    return llr[0, pos]


def ied_step(model, outputs, training, positions, log_extrinsic_in):
    """One estimator half-iteration of iterative estimation and decoding.

    Extrinsic inputs (log likelihood ratios, one per position) act as priors
    at the level's data slots; the returned extrinsic outputs are the
    position-wise LLRs computed without each position's own input, so
    log Lambda = input + output holds per position.
    """
    y = _as_batch(outputs, complex)
    u = _as_batch(training, np.int64)
    pos = np.asarray(positions, dtype=np.int64)
    lin = np.asarray(log_extrinsic_in, dtype=float)
    if len(lin) != len(pos):
        raise TrellisError("one extrinsic input per position required")
    priors = np.full(y.shape, 0.5)
    priors[0, pos] = 1.0 / (1.0 + np.exp(-lin))
    llr = _extrinsic_llr_batch(model, y, u, priors)
    return llr[0, pos]


def info_bits_from_llr(llr, inputs):
    """-log2 of the posterior probability of the true bit, per position.

    NaN positions (unmeasured slots) pass through untouched.
    """
    signed = np.where(np.asarray(inputs) == 1, llr, -llr)
    with np.errstate(invalid="ignore"):
        return np.logaddexp(0.0, -signed) / LN2
