"""Numeric kernels: dense and LSTM layers with hand-written backward passes,
VAE losses, Adam, and a finite-difference gradient checker.

Everything is float64 numpy.  Sequences are (batch, steps, dim); 2-D inputs
are promoted to a singleton batch.  No ML framework anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NonFiniteGradient,
    NonFiniteInput,
    ShapeMismatch,
    StaleCache,
)

# Gate order inside stacked weight matrices: input, forget, output, candidate.
GATE_ORDER = ("i", "f", "o", "g")


def sigmoid(x):
    # clip keeps exp() in range; sigmoid saturates exactly past |37| anyway
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{name} contains non-finite values")


def _uniform_init(rng, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class DenseParams:
    w: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)

    @property
    def in_dim(self) -> int:
        return self.w.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w.shape[0]


def init_dense(in_dim: int, out_dim: int, rng) -> DenseParams:
    w = _uniform_init(rng, in_dim, out_dim, (out_dim, in_dim))
    return DenseParams(w=w, b=np.zeros(out_dim))


def dense_forward(p: DenseParams, x: np.ndarray):
    """y = x @ W.T + b over the last axis; returns (y, cache)."""
    if x.shape[-1] != p.in_dim:
        raise ShapeMismatch(f"dense expects {p.in_dim} inputs, got {x.shape[-1]}")
    y = x @ p.w.T + p.b
    return y, {"x": x, "params": p}


def dense_backward(cache, dy: np.ndarray):
    p: DenseParams = cache["params"]
    x = cache["x"]
    if dy.shape != x.shape[:-1] + (p.out_dim,):
        raise StaleCache("upstream gradient does not match cached activation")
    x2 = x.reshape(-1, p.in_dim)
    dy2 = dy.reshape(-1, p.out_dim)
    grads = {"w": dy2.T @ x2, "b": dy2.sum(axis=0)}
    dx = dy @ p.w
    return grads, dx


@dataclass
class LstmParams:
    """Standard LSTM cell; gates stacked (i, f, o, g) along the last axis."""

    wx: np.ndarray  # (input_dim, 4*hidden)
    wh: np.ndarray  # (hidden, 4*hidden)
    b: np.ndarray   # (4*hidden,)

    @property
    def input_dim(self) -> int:
        return self.wx.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.wh.shape[0]


def init_lstm(input_dim: int, hidden_dim: int, rng) -> LstmParams:
    h = hidden_dim
    wx = np.empty((input_dim, 4 * h))
    wh = np.empty((h, 4 * h))
    for k in range(4):
        # per-gate fan: W block is (h, input_dim), U block is (h, h)
        wx[:, k * h:(k + 1) * h] = _uniform_init(
            rng, input_dim, h, (input_dim, h))
        wh[:, k * h:(k + 1) * h] = _uniform_init(rng, h, h, (h, h))
    b = np.zeros(4 * h)
    b[h:2 * h] = 1.0  # forget-gate bias: common stabilizer
    return LstmParams(wx=wx, wh=wh, b=b)


def lstm_forward(p: LstmParams, x_seq: np.ndarray, h0=None, c0=None):
    """-> (h_seq, c_seq, cache); x_seq is (B, L, D) or (L, D)."""
    squeeze = x_seq.ndim == 2
    if squeeze:
        x_seq = x_seq[None]
    if x_seq.ndim != 3 or x_seq.shape[2] != p.input_dim:
        raise ShapeMismatch(
            f"lstm expects (B, L, {p.input_dim}), got {x_seq.shape}")
    _check_finite("x_seq", x_seq)
    bsz, length, _ = x_seq.shape
    h = p.hidden_dim
    if h0 is None:
        h0 = np.zeros((bsz, h))
    if c0 is None:
        c0 = np.zeros((bsz, h))
    if h0.shape != (bsz, h) or c0.shape != (bsz, h):
        raise ShapeMismatch("h0/c0 shape mismatch")

    # input contribution for all steps in one GEMM
    xp = (x_seq.reshape(bsz * length, -1) @ p.wx).reshape(bsz, length, 4 * h)

    h_seq = np.empty((bsz, length, h))
    c_seq = np.empty((bsz, length, h))
    gi = np.empty((bsz, length, h))
    gf = np.empty((bsz, length, h))
    go = np.empty((bsz, length, h))
    gg = np.empty((bsz, length, h))
    tanh_c = np.empty((bsz, length, h))
    h_prev_seq = np.empty((bsz, length, h))
    c_prev_seq = np.empty((bsz, length, h))

    h_t, c_t = h0, c0
    for t in range(length):
        h_prev_seq[:, t] = h_t
        c_prev_seq[:, t] = c_t
        a = xp[:, t] + h_t @ p.wh + p.b
        i_t = sigmoid(a[:, :h])
        f_t = sigmoid(a[:, h:2 * h])
        o_t = sigmoid(a[:, 2 * h:3 * h])
        g_t = np.tanh(a[:, 3 * h:])
        c_t = f_t * c_t + i_t * g_t
        tc = np.tanh(c_t)
        h_t = o_t * tc
        gi[:, t], gf[:, t], go[:, t], gg[:, t] = i_t, f_t, o_t, g_t
        c_seq[:, t] = c_t
        tanh_c[:, t] = tc
        h_seq[:, t] = h_t

    cache = {
        "params": p, "x": x_seq, "squeeze": squeeze,
        "gi": gi, "gf": gf, "go": go, "gg": gg,
        "tanh_c": tanh_c, "h_prev": h_prev_seq, "c_prev": c_prev_seq,
    }
    if squeeze:
        return h_seq[0], c_seq[0], cache
    return h_seq, c_seq, cache


def lstm_backward(cache, dh_seq: np.ndarray, dc_last=None):
    """Backprop through time.  dh_seq holds the upstream gradient on every
    h_t; dc_last (optional) the gradient on the final cell state.
    -> (grads {wx, wh, b}, dx_seq, dh0, dc0)."""
    p: LstmParams = cache["params"]
    x = cache["x"]
    if cache["squeeze"]:
        dh_seq = dh_seq[None]
        if dc_last is not None:
            dc_last = dc_last[None]
    bsz, length, _ = x.shape
    h = p.hidden_dim
    if dh_seq.shape != (bsz, length, h):
        raise StaleCache(
            f"dh_seq shape {dh_seq.shape} does not match cached ({bsz}, {length}, {h})")

    gi, gf, go, gg = cache["gi"], cache["gf"], cache["go"], cache["gg"]
    tanh_c, h_prev, c_prev = cache["tanh_c"], cache["h_prev"], cache["c_prev"]

    d_a = np.empty((bsz, length, 4 * h))
    dwh = np.zeros_like(p.wh)
    dh_carry = np.zeros((bsz, h))
    dc_carry = np.zeros((bsz, h)) if dc_last is None else dc_last.copy()

    for t in range(length - 1, -1, -1):
        dh = dh_seq[:, t] + dh_carry
        i_t, f_t, o_t, g_t = gi[:, t], gf[:, t], go[:, t], gg[:, t]
        tc = tanh_c[:, t]
        do = dh * tc
        dc = dc_carry + dh * o_t * (1.0 - tc * tc)
        di = dc * g_t
        df = dc * c_prev[:, t]
        dg = dc * i_t
        dc_carry = dc * f_t
        da_t = d_a[:, t]
        da_t[:, :h] = di * i_t * (1.0 - i_t)
        da_t[:, h:2 * h] = df * f_t * (1.0 - f_t)
        da_t[:, 2 * h:3 * h] = do * o_t * (1.0 - o_t)
        da_t[:, 3 * h:] = dg * (1.0 - g_t * g_t)
        dwh += h_prev[:, t].T @ da_t
        dh_carry = da_t @ p.wh.T

    da2 = d_a.reshape(bsz * length, 4 * h)
    grads = {
        "wx": x.reshape(bsz * length, -1).T @ da2,
        "wh": dwh,
        "b": da2.sum(axis=0),
    }
    dx = (da2 @ p.wx.T).reshape(x.shape)
    dh0, dc0 = dh_carry, dc_carry
    if cache["squeeze"]:
        dx, dh0, dc0 = dx[0], dh0[0], dc0[0]
    return grads, dx, dh0, dc0


def mse_loss(x_hat: np.ndarray, x: np.ndarray) -> float:
    """Mean squared elementwise difference over all entries."""
    if x_hat.shape != x.shape:
        raise ShapeMismatch(f"mse shapes differ: {x_hat.shape} vs {x.shape}")
    d = x_hat - x
    return float(np.mean(d * d))


def mse_backward(x_hat: np.ndarray, x: np.ndarray) -> np.ndarray:
    """d mse / d x_hat."""
    if x_hat.shape != x.shape:
        raise ShapeMismatch(f"mse shapes differ: {x_hat.shape} vs {x.shape}")
    return 2.0 * (x_hat - x) / x_hat.size


def kl_loss(mu: np.ndarray, logvar: np.ndarray) -> float:
    """KL(N(mu, diag exp(logvar)) || N(0, I)) summed over every entry.

    Computed as 1/2 sum(mu^2) + 1/2 sum(expm1(lv) - lv), algebraically equal
    to -1/2 sum(1 + lv - mu^2 - e^lv) but nonnegative under rounding too.
    """
    if mu.shape != logvar.shape:
        raise ShapeMismatch(f"kl shapes differ: {mu.shape} vs {logvar.shape}")
    return float(0.5 * (np.sum(mu * mu) + np.sum(np.expm1(logvar) - logvar)))


def kl_backward(mu: np.ndarray, logvar: np.ndarray):
    """-> (d/dmu, d/dlogvar) of kl_loss."""
    if mu.shape != logvar.shape:
        raise ShapeMismatch(f"kl shapes differ: {mu.shape} vs {logvar.shape}")
    return mu.copy(), 0.5 * np.expm1(logvar)


def reparameterize(mu: np.ndarray, logvar: np.ndarray, rng):
    """z = mu + exp(logvar/2) * eps, eps ~ N(0, 1) from rng; -> (z, eps)."""
    if mu.shape != logvar.shape:
        raise ShapeMismatch(f"shapes differ: {mu.shape} vs {logvar.shape}")
    eps = rng.standard_normal(mu.shape)
    return mu + np.exp(0.5 * logvar) * eps, eps


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_init(params: dict) -> AdamState:
    return AdamState(
        t=0,
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
    )


def adam_step(params: dict, grads: dict, state: AdamState,
              lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8):
    """Bias-corrected Adam; functional (new arrays).  -> (params, state)."""
    if set(params) != set(grads):
        raise ShapeMismatch("params and grads carry different keys")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"gradient {name!r} is not finite")
    t = state.t + 1
    new_p, new_m, new_v = {}, {}, {}
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = beta1 * state.m[name] + (1.0 - beta1) * g
        v = beta2 * state.v[name] + (1.0 - beta2) * (g * g)
        step = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        new_p[name] = p - step
        new_m[name] = m
        new_v[name] = v
    return new_p, AdamState(t=t, m=new_m, v=new_v)


@dataclass
class GradCheckEntry:
    name: str
    checked: int
    max_abs_diff: float
    max_rel_err: float


@dataclass
class GradCheckReport:
    entries: list
    tolerance: float
    max_rel_err: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def grad_check(closure, params: dict, h: float = 1e-5,
               tolerance: float = 1e-4, max_coords=None, rng=None) -> GradCheckReport:
    """Central finite differences against the closure's analytic gradients.

    closure(params) -> (loss, grads) and must be deterministic (freeze any
    reparameterization noise).  Relative error uses a 1e-3 denominator floor
    so coordinates with near-zero gradient compare on an absolute scale.
    """
    _, analytic = closure(params)
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(0))
    entries = []
    overall = 0.0
    for name in sorted(params):
        p = params[name]
        flat_idx = np.arange(p.size)
        if max_coords is not None and p.size > max_coords:
            flat_idx = np.sort(rng.choice(p.size, size=max_coords, replace=False))
        a_flat = np.asarray(analytic[name]).reshape(-1)
        max_abs = 0.0
        max_rel = 0.0
        for idx in flat_idx:
            bumped = dict(params)
            plus = p.copy().reshape(-1)
            plus[idx] += h
            bumped[name] = plus.reshape(p.shape)
            loss_plus, _ = closure(bumped)
            minus = p.copy().reshape(-1)
            minus[idx] -= h
            bumped[name] = minus.reshape(p.shape)
            loss_minus, _ = closure(bumped)
            numeric = (loss_plus - loss_minus) / (2.0 * h)
            a = float(a_flat[idx])
            diff = abs(a - numeric)
            rel = diff / max(abs(a), abs(numeric), 1e-3)
            max_abs = max(max_abs, diff)
            max_rel = max(max_rel, rel)
        entries.append(GradCheckEntry(name=name, checked=len(flat_idx),
                                      max_abs_diff=max_abs, max_rel_err=max_rel))
        overall = max(overall, max_rel)
    return GradCheckReport(entries=entries, tolerance=tolerance, max_rel_err=overall)
