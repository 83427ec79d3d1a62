"""Network building blocks with exact reverse-mode gradients.

Sequences are time-major (T, dim) float64 matrices, batch size one. Every
backward routine returns gradients that match central finite differences;
see the gradient test suite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid


@dataclass
class AffineParams:
    w: np.ndarray  # (in, out)
    b: np.ndarray  # (out,)


def init_affine(rng: np.random.Generator, n_in: int, n_out: int) -> AffineParams:
    limit = 1.0 / np.sqrt(n_in)
    return AffineParams(
        w=rng.uniform(-limit, limit, size=(n_in, n_out)),
        b=rng.uniform(-limit, limit, size=n_out),
    )


def affine_forward(p: AffineParams, x: np.ndarray) -> np.ndarray:
    return x @ p.w + p.b


def affine_backward(p: AffineParams, x: np.ndarray, dy: np.ndarray):
    return dy @ p.w.T, x.T @ dy, dy.sum(axis=0)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(pre: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * (pre > 0)


def dropout_mask(rng: np.random.Generator, shape, p: float) -> np.ndarray:
    """Inverted dropout mask: zeros with probability p, survivors scaled by 1/(1-p)."""
    keep = 1.0 - p
    return (rng.random(shape) >= p) / keep


GATES = 4  # i, f, g, o


@dataclass
class LSTMDirParams:
    """One direction of an LSTM layer, gates fused along columns (i, f, g, o)."""

    wx: np.ndarray  # (in, 4H)
    wh: np.ndarray  # (H, 4H)
    bx: np.ndarray  # (4H,)
    bh: np.ndarray  # (4H,)

    @property
    def hidden_size(self) -> int:
        return self.wh.shape[0]

    def gate_view(self, which: str, matrix: str) -> np.ndarray:
        """Named per-gate slice, e.g. gate_view('i', 'wx') is W_ii."""
        h = self.hidden_size
        k = "ifgo".index(which)
        return getattr(self, matrix)[..., k * h : (k + 1) * h]


def init_lstm_dir(rng: np.random.Generator, n_in: int, hidden: int) -> LSTMDirParams:
    lim_x = 1.0 / np.sqrt(n_in)
    lim_h = 1.0 / np.sqrt(hidden)
    return LSTMDirParams(
        wx=rng.uniform(-lim_x, lim_x, size=(n_in, GATES * hidden)),
        wh=rng.uniform(-lim_h, lim_h, size=(hidden, GATES * hidden)),
        bx=rng.uniform(-lim_h, lim_h, size=GATES * hidden),
        bh=rng.uniform(-lim_h, lim_h, size=GATES * hidden),
    )


def lstm_cell_forward(p: LSTMDirParams, x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray):
    """Single LSTM step: gate equations with sigmoid/tanh and Hadamard products."""
    h = p.hidden_size
    if x_t.shape[-1] != p.wx.shape[0] or h_prev.shape[-1] != h or c_prev.shape[-1] != h:
        raise ValueError("lstm cell input shapes inconsistent with parameters")
    s = x_t @ p.wx + p.bx + h_prev @ p.wh + p.bh
    i = sigmoid(s[..., :h])
    f = sigmoid(s[..., h : 2 * h])
    g = np.tanh(s[..., 2 * h : 3 * h])
    o = sigmoid(s[..., 3 * h :])
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    return h_t, c_t


@dataclass
class LSTMCache:
    x: np.ndarray
    gates: np.ndarray  # (T, 4H): post-nonlinearity i, f, g, o
    cells: np.ndarray  # (T, H)
    tanh_c: np.ndarray  # (T, H)
    hidden: np.ndarray  # (T, H)


def lstm_forward(p: LSTMDirParams, x: np.ndarray) -> tuple[np.ndarray, LSTMCache]:
    """Run one direction over the full sequence; initial h and c are zero."""
    t_len = x.shape[0]
    h = p.hidden_size
    pre_x = x @ p.wx + p.bx + p.bh  # input contribution for every step at once
    gates = np.empty((t_len, GATES * h))
    cells = np.empty((t_len, h))
    tanh_c = np.empty((t_len, h))
    hidden = np.empty((t_len, h))
    h_t = np.zeros(h)
    c_t = np.zeros(h)
    for t in range(t_len):
        s = pre_x[t] + h_t @ p.wh
        i = sigmoid(s[:h])
        f = sigmoid(s[h : 2 * h])
        g = np.tanh(s[2 * h : 3 * h])
        o = sigmoid(s[3 * h :])
        c_t = f * c_t + i * g
        tc = np.tanh(c_t)
        h_t = o * tc
        gates[t, :h] = i
        gates[t, h : 2 * h] = f
        gates[t, 2 * h : 3 * h] = g
        gates[t, 3 * h :] = o
        cells[t] = c_t
        tanh_c[t] = tc
        hidden[t] = h_t
    return hidden, LSTMCache(x=x, gates=gates, cells=cells, tanh_c=tanh_c, hidden=hidden)


@dataclass
class LSTMDirGrads:
    wx: np.ndarray
    wh: np.ndarray
    bx: np.ndarray
    bh: np.ndarray


def lstm_backward(p: LSTMDirParams, cache: LSTMCache, dh_out: np.ndarray):
    """Backpropagation through time for one direction.

    dh_out is the upstream gradient on every step's hidden state.
    Returns (dx, parameter grads).
    """
    t_len, h = cache.hidden.shape
    d_s = np.empty((t_len, GATES * h))
    dh_carry = np.zeros(h)
    dc_carry = np.zeros(h)
    wh_t = p.wh.T
    for t in range(t_len - 1, -1, -1):
        i = cache.gates[t, :h]
        f = cache.gates[t, h : 2 * h]
        g = cache.gates[t, 2 * h : 3 * h]
        o = cache.gates[t, 3 * h :]
        tc = cache.tanh_c[t]
        c_prev = cache.cells[t - 1] if t > 0 else 0.0

        dh = dh_out[t] + dh_carry
        do = dh * tc
        dc = dc_carry + dh * o * (1.0 - tc * tc)
        ds = d_s[t]
        ds[:h] = dc * g * i * (1.0 - i)
        ds[h : 2 * h] = dc * c_prev * f * (1.0 - f)
        ds[2 * h : 3 * h] = dc * i * (1.0 - g * g)
        ds[3 * h :] = do * o * (1.0 - o)
        dh_carry = ds @ wh_t
        dc_carry = dc * f

    h_prev = np.vstack([np.zeros((1, h)), cache.hidden[:-1]])
    db = d_s.sum(axis=0)
    grads = LSTMDirGrads(wx=cache.x.T @ d_s, wh=h_prev.T @ d_s, bx=db, bh=db.copy())
    return d_s @ p.wx.T, grads


@dataclass
class BLSTMParams:
    fw: LSTMDirParams
    bw: LSTMDirParams


def init_blstm(rng: np.random.Generator, n_in: int, hidden: int) -> BLSTMParams:
    return BLSTMParams(fw=init_lstm_dir(rng, n_in, hidden), bw=init_lstm_dir(rng, n_in, hidden))


def blstm_layer_forward(p: BLSTMParams, x: np.ndarray):
    """Forward and reversed passes concatenated per step: (T, in) -> (T, 2H)."""
    h_fw, cache_fw = lstm_forward(p.fw, x)
    h_bw_rev, cache_bw = lstm_forward(p.bw, x[::-1])
    y = np.concatenate([h_fw, h_bw_rev[::-1]], axis=1)
    return y, (cache_fw, cache_bw)


def blstm_layer_backward(p: BLSTMParams, caches, dy: np.ndarray):
    cache_fw, cache_bw = caches
    h = p.fw.hidden_size
    dx_fw, g_fw = lstm_backward(p.fw, cache_fw, dy[:, :h])
    dx_bw_rev, g_bw = lstm_backward(p.bw, cache_bw, dy[:, h:][::-1])
    return dx_fw + dx_bw_rev[::-1], (g_fw, g_bw)


def blstm_forward(layers: list[BLSTMParams], x: np.ndarray) -> np.ndarray:
    """Stacked bidirectional layers, forward only (inference view)."""
    out = x
    for layer in layers:
        out, _ = blstm_layer_forward(layer, out)
    return out


def l1_loss(pred: np.ndarray, target: np.ndarray) -> float:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean(np.abs(pred - target)))


def l1_loss_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Subgradient of mean absolute error; sign(0) taken as 0."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return np.sign(pred - target) / pred.size
