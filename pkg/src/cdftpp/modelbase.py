"""Shared scaffolding for event models.

Every model owns a flat ``ParamVector`` whose first segments are the shared
history encoder; heads differ per model. All models expose the same
per-event log-density contract through ``log_density_graph``, so the
training loop and evaluation treat them uniformly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from .autodiff import ParamVector

DENSITY_FLOOR = 1e-12
_PARAM_STREAM = 10**9 + 7  # init draws use Philox key [seed, this]


@dataclass
class ModelConfig:
    hidden_width: int = 64        # encoder state size
    mnn_width: int = 64           # width of the monotone head
    hidden_layers: int = 1
    fusion: str = "product"       # "product" | "add"
    feature: str = "log"          # "log" | "raw"
    exp_grid_points: int = 64     # trapezoid resolution of the exp baseline


@dataclass
class SequenceBatch:
    """Padded (B, L) view of a group of sequences.

    Row j, column i holds interval i+1 of sequence j; padded positions carry
    interval 1.0 (feature 0) and mask 0.
    """

    intervals: np.ndarray
    features: np.ndarray
    mask: np.ndarray

    @property
    def n_events(self) -> float:
        return float(self.mask.sum())

    def flat_mask(self) -> np.ndarray:
        return self.mask.T.reshape(-1, 1)


def make_batch(sequences, max_len: int, feature: str = "log") -> SequenceBatch:
    lengths = [min(len(s), max_len) for s in sequences]
    length = max(max(lengths), 1)
    n_seq = len(sequences)
    intervals = np.ones((n_seq, length))
    mask = np.zeros((n_seq, length))
    for j, (s, n) in enumerate(zip(sequences, lengths)):
        intervals[j, :n] = s.intervals()[:n]
        mask[j, :n] = 1.0
    return SequenceBatch(intervals, enc.featurize(intervals, feature), mask)


def param_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed), _PARAM_STREAM]))


def positive_weight(rng, shape, fan_in) -> np.ndarray:
    # folded-normal entries do not cancel, so row sums grow with fan-in
    # rather than its square root; scale 1/fan_in keeps pre-activations O(1)
    return np.abs(rng.normal(0.0, 1.0 / fan_in, size=shape))


def free_bias(rng, shape) -> np.ndarray:
    return rng.normal(0.0, 0.01, size=shape)


class Model:
    """Base contract: named parameters, init, positivity projection, log density."""

    name = ""

    def __init__(self, config: ModelConfig | None = None):
        self.config = config or ModelConfig()

    # -- parameters -----------------------------------------------------
    def param_specs(self) -> list[tuple[str, tuple]]:
        h = self.config.hidden_width
        return [("enc.W_h", (h, h)), ("enc.W_x", (h, 1)), ("enc.b_h", (h,))]

    def positive_segments(self) -> tuple[str, ...]:
        return ()

    def init_params(self, seed: int) -> ParamVector:
        rng = param_rng(seed)
        pv = ParamVector.from_specs(self.param_specs())
        encoder = enc.init_encoder(self.config.hidden_width, rng)
        pv.view("enc.W_h")[...] = encoder.W_h
        pv.view("enc.W_x")[...] = encoder.W_x
        pv.view("enc.b_h")[...] = encoder.b_h
        self._init_head(pv, rng)
        return pv

    def _init_head(self, pv: ParamVector, rng) -> None:
        raise NotImplementedError

    def project_positive(self, params: ParamVector) -> ParamVector:
        """Replace sign-constrained entries with their absolute values."""
        for name in self.positive_segments():
            view = params.view(name)
            np.abs(view, out=view)
        return params

    def encoder_params(self, params: ParamVector) -> enc.EncoderParams:
        return enc.EncoderParams(params.view("enc.W_h"), params.view("enc.W_x"),
                                 params.view("enc.b_h"))

    # -- evaluation ------------------------------------------------------
    def conditioning_graph(self, tape, leaves, batch: SequenceBatch):
        """Flattened (L*B, H) conditioning states and (L*B, 1) intervals."""
        states = enc.encode_states_graph(
            tape, leaves["enc.W_h"], leaves["enc.W_x"], leaves["enc.b_h"],
            batch.features,
        )
        h_all = states[0] if len(states) == 1 else ad.concat_rows(states)
        tau_col = batch.intervals.T.reshape(-1, 1)
        return h_all, tau_col

    def head_log_density(self, tape, leaves, h_all, tau_col: np.ndarray):
        """log p for an (n, 1) interval column against (n, H) states."""
        raise NotImplementedError

    def log_density_graph(self, tape, leaves, batch: SequenceBatch):
        """Per-position log density, shape (L*B, 1), plus scalar diagnostics."""
        h_all, tau_col = self.conditioning_graph(tape, leaves, batch)
        logp, aux = self.head_log_density(tape, leaves, h_all, tau_col)
        return logp, self._diagnostics(aux, batch)

    def _diagnostics(self, aux, batch: SequenceBatch) -> dict:
        return {}

    def log_density_given_state(self, params: ParamVector, taus,
                                h: np.ndarray) -> np.ndarray:
        """log p(tau | h) on a tau grid with a fixed conditioning state."""
        taus = np.asarray(taus, dtype=np.float64).reshape(-1, 1)
        h_rows = np.tile(np.asarray(h, dtype=np.float64), (taus.shape[0], 1))
        tape = ad.Tape()
        leaves = tape.bind(params)
        logp, _ = self.head_log_density(tape, leaves, tape.constant(h_rows), taus)
        return logp.value[:, 0]

    def intensity_given_state(self, params: ParamVector, taus,
                              h: np.ndarray) -> np.ndarray:
        """Conditional intensity at elapsed times tau for a fixed state."""
        raise NotImplementedError


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, model: Model, params: ParamVector) -> None:
    payload = {
        "model": model.name,
        "config": asdict(model.config),
        "segments": [
            {"name": name, "shape": list(params.view(name).shape),
             "values": params.view(name).ravel().tolist()}
            for name in params.names()
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    from .registry import get_model

    with open(path) as fh:
        payload = json.load(fh)
    model = get_model(payload["model"], ModelConfig(**payload["config"]))
    arrays = {
        seg["name"]: np.asarray(seg["values"]).reshape(seg["shape"])
        for seg in payload["segments"]
    }
    params = ParamVector.from_dict(arrays)
    expected = [name for name, _ in model.param_specs()]
    if params.names() != expected:
        raise ValueError(f"checkpoint segments {params.names()} do not match "
                         f"model {model.name!r} ({expected})")
    return model, params
