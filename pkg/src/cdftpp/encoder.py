"""History encoder: a rectified-tanh recurrence over inter-event intervals.

The hidden state after each step is clamped at zero componentwise, which is
what licenses the monotone-CDF construction downstream (the history branch
of the product fusion stays nonnegative).

The prediction of interval i is conditioned on the state *before* interval i
is consumed, so ``encode_sequence`` returns states h_0 .. h_{N-1} with
h_0 = 0 (nothing observed before the first event, time origin at 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

FEATURE_EPS = 1e-8


@dataclass
class EncoderParams:
    """Recurrence weights; activation is tanh, outer clamp at zero."""

    W_h: np.ndarray  # (H, H)
    W_x: np.ndarray  # (H, 1)
    b_h: np.ndarray  # (H,)

    def __post_init__(self):
        self.W_h = np.asarray(self.W_h, dtype=np.float64)
        self.W_x = np.asarray(self.W_x, dtype=np.float64).reshape(-1, 1)
        self.b_h = np.asarray(self.b_h, dtype=np.float64)
        h = self.b_h.size
        if self.W_h.shape != (h, h) or self.W_x.shape != (h, 1):
            raise ValueError("inconsistent encoder shapes")
        if not (np.all(np.isfinite(self.W_h)) and np.all(np.isfinite(self.W_x))
                and np.all(np.isfinite(self.b_h))):
            raise ValueError("encoder weights must be finite")

    @property
    def width(self) -> int:
        return self.b_h.size


def init_encoder(width: int, rng: np.random.Generator) -> EncoderParams:
    return EncoderParams(
        W_h=rng.normal(0.0, 1.0 / np.sqrt(width), size=(width, width)),
        W_x=rng.normal(0.0, 1.0, size=(width, 1)),
        b_h=np.zeros(width),
    )


def featurize(interval, mode: str = "log"):
    """Interval feature fed to the recurrence; log form by default."""
    interval = np.asarray(interval, dtype=np.float64)
    if np.any(interval <= 0.0):
        raise ValueError("intervals must be strictly positive")
    if mode == "log":
        return np.log(interval + FEATURE_EPS)
    if mode == "raw":
        return interval
    raise ValueError(f"unknown feature mode {mode!r}")


def rnn_step(h_prev: np.ndarray, x: float, params: EncoderParams) -> np.ndarray:
    """h = max(tanh(W_h h_prev + W_x x + b_h), 0)."""
    pre = params.W_h @ h_prev + params.W_x[:, 0] * x + params.b_h
    return np.maximum(np.tanh(pre), 0.0)


def encode_sequence(seq, params: EncoderParams, feature: str = "log") -> np.ndarray:
    """Conditioning states h_0 .. h_{N-1} for a sequence of N events."""
    n = len(seq)
    states = np.zeros((max(n, 1), params.width))
    if n <= 1:
        return states
    xs = featurize(seq.intervals(), feature)
    h = states[0]
    for i in range(1, n):
        h = rnn_step(h, xs[i - 1], params)
        states[i] = h
    return states


def _fused_cell(tape, h, w_h_t, w_x_t, b_h, x_col: np.ndarray):
    """One recurrence step as a single recorded op.

    Mathematically identical to relu(tanh(h @ W_h.T + x @ W_x.T + b)) built
    from primitive ops (the composed path is what the tests check against);
    fusing keeps the per-batch tape short, which dominates training cost.
    """
    hv, wht, wxt, bv = h.value, w_h_t.value, w_x_t.value, b_h.value
    t = np.tanh(hv @ wht + x_col @ wxt + bv)
    out = np.maximum(t, 0.0)
    gate = np.where(t > 0.0, 1.0 - t * t, 0.0)

    def vjp(g):
        gpre = g * gate
        return (
            gpre @ wht.T,
            hv.T @ gpre,
            x_col.T @ gpre,
            gpre.sum(axis=0),
        )

    def fwd(hv2, wht2, wxt2, bv2):
        return np.maximum(np.tanh(hv2 @ wht2 + x_col @ wxt2 + bv2), 0.0)

    return tape._append(out, (h, w_h_t, w_x_t, b_h), vjp, fwd)


def encode_states_graph(tape, w_h, w_x, b_h, features: np.ndarray) -> list:
    """Recorded version of the recurrence over a padded feature batch.

    ``features`` is (B, L); returns L nodes of shape (B, H): the state
    conditioning each of the L interval positions.
    """
    n_seq, length = features.shape
    width = b_h.value.size
    w_h_t = ad.transpose(w_h)
    w_x_t = ad.transpose(w_x)
    h = tape.constant(np.zeros((n_seq, width)))
    states = [h]
    for i in range(length - 1):
        h = _fused_cell(tape, h, w_h_t, w_x_t, b_h, features[:, i:i + 1])
        states.append(h)
    return states
