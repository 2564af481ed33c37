"""Hot numeric kernels: transformer forward, hand-written backward, decode step.

Every kernel is written in a numpy subset that numba's nopython mode compiles
directly.  By default the kernels are JIT-compiled; setting the environment
variable ``DPTWIN_DISABLE_NUMBA=1`` (or running without numba installed)
selects the identical un-jitted numpy path.  ``benchmarks/bench_kernels.py``
times both paths.

Architecture (fixed so gradient oracles stay portable): token + position
embedding -> one causal self-attention head with residual -> position-wise
tanh feed-forward with residual -> output projection tied to the token
embedding.  All arithmetic is float64.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = ["NUMBA_ENABLED", "forward_logits", "nll_and_grad", "decode_step"]

_DISABLED = os.environ.get("DPTWIN_DISABLE_NUMBA", "").strip() not in ("", "0", "false")

if not _DISABLED:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False

if not NUMBA_ENABLED:
    def njit(*args, **kwargs):  # noqa: D103 - identity decorator fallback
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def _forward(ids, E, P, Wq, Wk, Wv, Wo, W1, b1, W2, b2):
    """Full forward pass; returns intermediates needed for loss and backward."""
    L = ids.shape[0]
    d = E.shape[1]
    inv = 1.0 / math.sqrt(d)
    h0 = np.empty((L, d))
    for t in range(L):
        h0[t] = E[ids[t]] + P[t]
    Q = np.dot(h0, Wq)
    K = np.dot(h0, Wk)
    Vv = np.dot(h0, Wv)
    A = np.zeros((L, L))
    for i in range(L):
        row = np.dot(K[: i + 1], Q[i]) * inv
        mx = np.max(row)
        e = np.exp(row - mx)
        A[i, : i + 1] = e / np.sum(e)
    C = np.dot(A, Vv)
    att = np.dot(C, Wo)
    h1 = h0 + att
    Z1 = np.dot(h1, W1) + b1
    R = np.tanh(Z1)
    F = np.dot(R, W2) + b2
    h2 = h1 + F
    logits = np.dot(h2, E.T)
    return h0, Q, K, Vv, A, C, h1, Z1, R, h2, logits


@njit(cache=True)
def forward_logits(ids, E, P, Wq, Wk, Wv, Wo, W1, b1, W2, b2):
    """Next-token logits for every position of ``ids``; shape (L, vocab)."""
    out = _forward(ids, E, P, Wq, Wk, Wv, Wo, W1, b1, W2, b2)
    return out[10]


@njit(cache=True)
def nll_and_grad(ids, loss_from, E, P, Wq, Wk, Wv, Wo, W1, b1, W2, b2):
    """Sequence NLL (nats) and its exact gradient w.r.t. every parameter array.

    Position t predicts token ids[t+1]; a target position contributes iff its
    index is >= ``loss_from`` (1 counts every predicted token).
    """
    L = ids.shape[0]
    d = E.shape[1]
    V = E.shape[0]
    inv = 1.0 / math.sqrt(d)
    h0, Q, K, Vv, A, C, h1, Z1, R, h2, logits = _forward(
        ids, E, P, Wq, Wk, Wv, Wo, W1, b1, W2, b2
    )
    dlogits = np.zeros((L, V))
    nll = 0.0
    for t in range(L - 1):
        if t + 1 < loss_from:
            continue
        row = logits[t]
        mx = np.max(row)
        ex = np.exp(row - mx)
        Z = np.sum(ex)
        nll += math.log(Z) + mx - row[ids[t + 1]]
        dlogits[t] = ex / Z
        dlogits[t, ids[t + 1]] -= 1.0
    # tied output projection
    dh2 = np.dot(dlogits, E)
    gE = np.dot(dlogits.T, h2)
    # feed-forward with residual
    dF = dh2
    gW2 = np.dot(R.T, dF)
    gb2 = np.sum(dF, axis=0)
    dR = np.dot(dF, W2.T)
    dZ1 = dR * (1.0 - R * R)
    gW1 = np.dot(h1.T, dZ1)
    gb1 = np.sum(dZ1, axis=0)
    dh1 = dh2 + np.dot(dZ1, W1.T)
    # attention with residual
    datt = dh1
    gWo = np.dot(C.T, datt)
    dC = np.dot(datt, Wo.T)
    dA = np.dot(dC, Vv.T)
    dVv = np.dot(A.T, dC)
    dS = np.zeros((L, L))
    for i in range(L):
        a = A[i, : i + 1]
        da = dA[i, : i + 1]
        rowdot = np.sum(a * da)
        dS[i, : i + 1] = a * (da - rowdot)
    dQ = np.dot(dS, K) * inv
    dK = np.dot(dS.T, Q) * inv
    gWq = np.dot(h0.T, dQ)
    gWk = np.dot(h0.T, dK)
    gWv = np.dot(h0.T, dVv)
    dh0 = dh1 + np.dot(dQ, Wq.T) + np.dot(dK, Wk.T) + np.dot(dVv, Wv.T)
    gP = np.zeros_like(P)
    for t in range(L):
        gE[ids[t]] += dh0[t]
        gP[t] += dh0[t]
    return nll, gE, gP, gWq, gWk, gWv, gWo, gW1, gb1, gW2, gb2


@njit(cache=True)
def decode_step(tok, pos, Kc, Vc, E, P, Wq, Wk, Wv, Wo, W1, b1, W2, b2):
    """Incremental decode: consume token ``tok`` at ``pos``, return logits.

    ``Kc``/``Vc`` are (context, d) key/value caches mutated in place; rows
    0..pos-1 must already hold the prefix.  Equal to row ``pos`` of
    forward_logits over the full prefix.
    """
    d = E.shape[1]
    inv = 1.0 / math.sqrt(d)
    h0 = E[tok] + P[pos]
    q = np.dot(h0, Wq)
    Kc[pos] = np.dot(h0, Wk)
    Vc[pos] = np.dot(h0, Wv)
    row = np.dot(Kc[: pos + 1], q) * inv
    mx = np.max(row)
    e = np.exp(row - mx)
    a = e / np.sum(e)
    c = np.dot(a, Vc[: pos + 1])
    att = np.dot(c, Wo)
    h1 = h0 + att
    z1 = np.dot(h1, W1) + b1
    r = np.tanh(z1)
    f = np.dot(r, W2) + b2
    h2 = h1 + f
    return np.dot(E, h2)
