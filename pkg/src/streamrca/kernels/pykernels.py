"""Pure-numpy implementations of the hot kernels.

Same call signatures as the compiled module; used when the extension is not
built or when STREAMRCA_PURE_PY is set.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_forward(
    x: np.ndarray,
    h0: np.ndarray,
    c0: np.ndarray,
    wx: np.ndarray,
    wh: np.ndarray,
    b: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, tuple]:
    """Run an LSTM over the rows of x.

    x: (T, n); h0, c0: (d,); wx: (n, 4d); wh: (d, 4d); b: (4d,).
    Gate order along the 4d axis is [input, forget, cell, output].
    Returns (h_last, c_last, cache) where cache feeds lstm_backward.
    """
    t_len, _ = x.shape
    d = h0.shape[0]
    gates = np.empty((t_len, 4 * d))
    c_seq = np.empty((t_len, d))
    h_seq = np.empty((t_len, d))
    h, c = h0, c0
    for t in range(t_len):
        z = x[t] @ wx + h @ wh + b
        i = _sigmoid(z[:d])
        f = _sigmoid(z[d : 2 * d])
        g = np.tanh(z[2 * d : 3 * d])
        o = _sigmoid(z[3 * d :])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[t, :d] = i
        gates[t, d : 2 * d] = f
        gates[t, 2 * d : 3 * d] = g
        gates[t, 3 * d :] = o
        c_seq[t] = c
        h_seq[t] = h
    return h_seq[-1].copy(), c_seq[-1].copy(), (gates, c_seq, h_seq)


def lstm_backward(
    x: np.ndarray,
    h0: np.ndarray,
    c0: np.ndarray,
    wx: np.ndarray,
    wh: np.ndarray,
    b: np.ndarray,
    cache: tuple,
    dh_last: np.ndarray,
    dc_last: np.ndarray,
) -> tuple[np.ndarray, ...]:
    """Backpropagate through time; returns (dx, dh0, dc0, dwx, dwh, db)."""
    gates, c_seq, h_seq = cache
    t_len, n = x.shape
    d = h0.shape[0]
    dx = np.zeros((t_len, n))
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros_like(b)
    dh = dh_last.copy()
    dc = dc_last.copy()
    for t in range(t_len - 1, -1, -1):
        i = gates[t, :d]
        f = gates[t, d : 2 * d]
        g = gates[t, 2 * d : 3 * d]
        o = gates[t, 3 * d :]
        c_prev = c_seq[t - 1] if t > 0 else c0
        h_prev = h_seq[t - 1] if t > 0 else h0
        tc = np.tanh(c_seq[t])
        do = dh * tc
        dct = dh * o * (1.0 - tc * tc) + dc
        di = dct * g
        df = dct * c_prev
        dg = dct * i
        dc = dct * f
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ]
        )
        dwx += np.outer(x[t], dz)
        dwh += np.outer(h_prev, dz)
        db += dz
        dx[t] = wx @ dz
        dh = wh @ dz
    return dx, dh, dc, dwx, dwh, db


def cusum_scan(
    scores: np.ndarray, y0: float, threshold: float
) -> tuple[np.ndarray, int]:
    """One-sided CUSUM over a score sequence.

    y(t) = max(y(t-1) + score(t), 0). Returns the per-step statistic and the
    first index where it strictly exceeded the threshold (-1 if never).
    """
    y = np.empty(len(scores))
    acc = y0
    first = -1
    for t, s in enumerate(scores):
        acc = acc + s
        if acc < 0.0:
            acc = 0.0
        y[t] = acc
        if first < 0 and acc > threshold:
            first = t
    return y, first
