"""Hot loops for quadratic multinomial scores.

Every kernel exists twice: a numba version (``_nb_*``) with a fixed chunked
reduction so results do not depend on thread scheduling, and a numpy version
(``_np_*``). The public functions dispatch on :data:`mdre._accel.BACKEND`.

Shapes used throughout::

    X   (N, D)     samples
    y   (N,)       integer class labels in [0, C)
    wt  (N,)       per-sample weight on the log-likelihood term
    W1  (C, D, D)  symmetric quadratic terms
    w2  (C, D)     linear terms
    b   (C,)       offsets
    logpi (C,)     log class priors
"""
import numpy as np

from mdre._accel import BACKEND, njit, prange

CHUNK = 2048
SMALL_D = 4


# --------------------------------------------------------------------- numba


@njit(cache=True)
def _nb_quad_one(x, W1, w2, b, out):
    C, D = w2.shape
    for c in range(C):
        s = b[c]
        for i in range(D):
            xi = x[i]
            acc = W1[c, i, i] * xi
            for j in range(i + 1, D):
                acc += 2.0 * W1[c, i, j] * x[j]
            s += xi * (acc + w2[c, i])
        out[c] = s


@njit(cache=True, parallel=True)
def _nb_quad_logits(X, W1, w2, b):
    N = X.shape[0]
    C = w2.shape[0]
    H = np.empty((N, C))
    for n in prange(N):
        _nb_quad_one(X[n], W1, w2, b, H[n])
    return H


@njit(cache=True)
def _nb_softmax_grad(h, logpi, yn, wn, g):
    """Adds log priors to ``h`` in place, fills ``g`` with d(-wn*logP)/dh."""
    C = h.shape[0]
    m = -np.inf
    for c in range(C):
        h[c] += logpi[c]
        if h[c] > m:
            m = h[c]
    z = 0.0
    for c in range(C):
        g[c] = np.exp(h[c] - m)
        z += g[c]
    lse = m + np.log(z)
    for c in range(C):
        g[c] = wn * g[c] / z
    g[yn] -= wn
    return -wn * (h[yn] - lse)


@njit(cache=True, parallel=True)
def _nb_quad_loss_grad_small(X, y, wt, W1, w2, b, logpi, want_grad):
    # scalar loops; wins for low D where BLAS call overhead dominates
    N, D = X.shape
    C = w2.shape[0]
    nchunk = (N + CHUNK - 1) // CHUNK
    part_loss = np.zeros(nchunk)
    pW = np.zeros((nchunk, C, D, D))
    pw = np.zeros((nchunk, C, D))
    pb = np.zeros((nchunk, C))
    for k in prange(nchunk):
        lo = k * CHUNK
        hi = min(N, lo + CHUNK)
        h = np.empty(C)
        g = np.empty(C)
        accW = np.zeros((C, D, D))
        accw = np.zeros((C, D))
        accb = np.zeros(C)
        loss = 0.0
        for n in range(lo, hi):
            x = X[n]
            _nb_quad_one(x, W1, w2, b, h)
            loss += _nb_softmax_grad(h, logpi, y[n], wt[n], g)
            if want_grad:
                for c in range(C):
                    gc = g[c]
                    accb[c] += gc
                    for i in range(D):
                        gx = gc * x[i]
                        accw[c, i] += gx
                        for j in range(i, D):
                            accW[c, i, j] += gx * x[j]
        # only the upper triangle was accumulated
        for c in range(C):
            for i in range(D):
                for j in range(i + 1, D):
                    accW[c, j, i] = accW[c, i, j]
        part_loss[k] = loss
        pW[k] = accW
        pw[k] = accw
        pb[k] = accb
    return _nb_reduce(part_loss, pW, pw, pb)


@njit(cache=True, parallel=True)
def _nb_quad_loss_grad_blocked(X, y, wt, W1, w2, b, logpi, want_grad):
    # per-chunk BLAS products with a fused softmax in between
    N, D = X.shape
    C = w2.shape[0]
    nchunk = (N + CHUNK - 1) // CHUNK
    part_loss = np.zeros(nchunk)
    pW = np.zeros((nchunk, C, D, D))
    pw = np.zeros((nchunk, C, D))
    pb = np.zeros((nchunk, C))
    for k in prange(nchunk):
        lo = k * CHUNK
        hi = min(N, lo + CHUNK)
        B = hi - lo
        Xc = np.ascontiguousarray(X[lo:hi])
        H = Xc @ w2.T
        for c in range(C):
            XW = Xc @ W1[c]
            for n in range(B):
                s = b[c]
                for i in range(D):
                    s += XW[n, i] * Xc[n, i]
                H[n, c] += s
        G = np.empty((B, C))
        loss = 0.0
        for n in range(B):
            loss += _nb_softmax_grad(H[n], logpi, y[lo + n], wt[lo + n], G[n])
        part_loss[k] = loss
        if want_grad:
            Xg = np.empty((B, D))
            for c in range(C):
                for n in range(B):
                    for i in range(D):
                        Xg[n, i] = Xc[n, i] * G[n, c]
                pW[k, c] = Xg.T @ Xc
            pw[k] = G.T @ Xc
            for c in range(C):
                s = 0.0
                for n in range(B):
                    s += G[n, c]
                pb[k, c] = s
    return _nb_reduce(part_loss, pW, pw, pb)


@njit(cache=True)
def _nb_reduce(part_loss, pW, pw, pb):
    nchunk, C, D, _ = pW.shape
    loss = 0.0
    gW1 = np.zeros((C, D, D))
    gw2 = np.zeros((C, D))
    gb = np.zeros(C)
    for k in range(nchunk):
        loss += part_loss[k]
        gW1 += pW[k]
        gw2 += pw[k]
        gb += pb[k]
    for c in range(C):
        for i in range(D):
            for j in range(i + 1, D):
                v = 0.5 * (gW1[c, i, j] + gW1[c, j, i])
                gW1[c, i, j] = v
                gW1[c, j, i] = v
    return loss, gW1, gw2, gb


# --------------------------------------------------------------------- numpy


def _np_quad_logits(X, W1, w2, b):
    XW = np.matmul(X, W1)  # (C, N, D)
    return np.einsum("cnd,nd->nc", XW, X) + X @ w2.T + b


def _np_quad_loss_grad(X, y, wt, W1, w2, b, logpi, want_grad):
    N, D = X.shape
    C = w2.shape[0]
    H = _np_quad_logits(X, W1, w2, b) + logpi
    m = H.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(H - m).sum(axis=1))
    loss = -float(np.sum(wt * (H[np.arange(N), y] - lse)))
    gW1 = np.zeros((C, D, D))
    gw2 = np.zeros((C, D))
    gb = np.zeros(C)
    if want_grad:
        G = np.exp(H - lse[:, None]) * wt[:, None]
        G[np.arange(N), y] -= wt
        for c in range(C):
            Xg = X * G[:, c : c + 1]
            gW1[c] = Xg.T @ X
        gW1 = 0.5 * (gW1 + gW1.transpose(0, 2, 1))
        gw2 = G.T @ X
        gb = G.sum(axis=0)
    return loss, gW1, gw2, gb


# -------------------------------------------------------------------- public


def _prep(X, W1, w2, b):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return (
        X,
        np.ascontiguousarray(W1, dtype=np.float64),
        np.ascontiguousarray(w2, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
    )


def quad_logits(X, W1, w2, b, backend=None):
    """Per-class quadratic scores, shape (N, C)."""
    X, W1, w2, b = _prep(X, W1, w2, b)
    if (backend or BACKEND) == "numba":
        return _nb_quad_logits(X, W1, w2, b)
    return _np_quad_logits(X, W1, w2, b)


def quad_loss_grad(X, y, wt, W1, w2, b, logpi, want_grad=True, backend=None):
    """Weighted softmax cross-entropy and its gradient w.r.t. (W1, w2, b).

    Returns ``(loss, gW1, gw2, gb)`` where ``loss = -sum_n wt[n] *
    log P(y[n] | X[n])``. The W1 gradient is symmetric.
    """
    X, W1, w2, b = _prep(X, W1, w2, b)
    y = np.ascontiguousarray(y, dtype=np.int64)
    wt = np.ascontiguousarray(wt, dtype=np.float64)
    logpi = np.ascontiguousarray(logpi, dtype=np.float64)
    if (backend or BACKEND) == "numba":
        kern = _nb_quad_loss_grad_small if X.shape[1] <= SMALL_D else _nb_quad_loss_grad_blocked
        loss, gW1, gw2, gb = kern(X, y, wt, W1, w2, b, logpi, want_grad)
        return float(loss), gW1, gw2, gb
    return _np_quad_loss_grad(X, y, wt, W1, w2, b, logpi, want_grad)
