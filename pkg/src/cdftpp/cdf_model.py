"""Conditional CDF of the next inter-event time as a monotone network.

The head projects the elapsed time tau and the history state h through two
single-layer maps, fuses them with an element-wise product (history acts as
a per-unit scaling of the time axis), stacks tanh layers and finishes with a
sigmoid. All weight matrices on the tau-to-output paths are kept nonnegative
(training projects them back with absolute values), and the history branch
is nonnegative by construction, so the output is nondecreasing in tau and
confined to (0, 1).

The density is the tau-derivative of the CDF, taken by the dual-number pass
of the autodiff engine; survivor and intensity follow from the usual
identities S = 1 - F and lambda = p / S.

Known defect, by design: the sigmoid output gives F(0+) > 0 and sup F < 1.
The lost mass is reported by ``defect_mass`` instead of being renormalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from .autodiff import Dual, ParamVector
from .modelbase import (
    DENSITY_FLOOR,
    Model,
    ModelConfig,
    free_bias,
    positive_weight,
)


class SaturationError(RuntimeError):
    """Survivor mass below the evaluation floor; intensity is unreliable."""


@dataclass
class CdfOutput:
    F: float
    p: float
    S: float
    intensity: float


class CdfModel(Model):
    """Parameter store and graph builder for the monotone-CDF model."""

    name = "cufun"

    def param_specs(self):
        d = self.config.mnn_width
        h = self.config.hidden_width
        specs = super().param_specs() + [
            ("mnn.tau_w", (d, 1)),
            ("mnn.tau_b", (d,)),
            ("mnn.hist_w", (d, h)),
            ("mnn.hist_b", (d,)),
        ]
        for k in range(self.config.hidden_layers):
            specs += [(f"mnn.layer{k}_w", (d, d)), (f"mnn.layer{k}_b", (d,))]
        specs += [("mnn.out_w", (1, d)), ("mnn.out_b", (1,))]
        return specs

    def positive_segments(self):
        segs = ["mnn.tau_w", "mnn.hist_w", "mnn.out_w"]
        segs += [f"mnn.layer{k}_w" for k in range(self.config.hidden_layers)]
        # the history-branch bias is clamped too: it keeps the fused product
        # nondecreasing in tau even when a hidden state is all-zero
        segs.append("mnn.hist_b")
        return tuple(segs)

    def _init_head(self, pv, rng):
        d = self.config.mnn_width
        h = self.config.hidden_width
        pv.view("mnn.tau_w")[...] = positive_weight(rng, (d, 1), 1)
        pv.view("mnn.tau_b")[...] = free_bias(rng, (d,))
        pv.view("mnn.hist_w")[...] = positive_weight(rng, (d, h), h)
        # strictly positive at start so the product fusion cannot go dead
        pv.view("mnn.hist_b")[...] = np.abs(rng.normal(0.0, 0.1, size=d)) + 0.1
        for k in range(self.config.hidden_layers):
            pv.view(f"mnn.layer{k}_w")[...] = positive_weight(rng, (d, d), d)
            pv.view(f"mnn.layer{k}_b")[...] = free_bias(rng, (d,))
        pv.view("mnn.out_w")[...] = positive_weight(rng, (1, d), d)
        pv.view("mnn.out_b")[...] = free_bias(rng, (1,))

    def _assert_signs(self, params: ParamVector):
        for name in self.positive_segments():
            assert np.all(params.view(name) >= 0.0), \
                f"sign constraint violated in {name}"

    def head_dual(self, tape, leaves, tau_dual: Dual, h_all):
        """CDF as a dual pair for a (n,1) tau column against (n,H) states."""
        u = tau_dual @ ad.transpose(leaves["mnn.tau_w"]) + leaves["mnn.tau_b"]
        v = ad.matmul(h_all, ad.transpose(leaves["mnn.hist_w"])) + leaves["mnn.hist_b"]
        if self.config.fusion == "product":
            z = u * v
        elif self.config.fusion == "add":
            z = u + Dual.lift(v)
        else:
            raise ValueError(f"unknown fusion {self.config.fusion!r}")
        for k in range(self.config.hidden_layers):
            z = ad.tanh(z @ ad.transpose(leaves[f"mnn.layer{k}_w"])
                        + leaves[f"mnn.layer{k}_b"])
        out = z @ ad.transpose(leaves["mnn.out_w"]) + leaves["mnn.out_b"]
        cdf_dual = ad.sigmoid(out)
        aux = {"u": u.val, "v": v}
        return cdf_dual, aux

    def head_log_density(self, tape, leaves, h_all, tau_col):
        self._assert_signs_from_leaves(leaves)
        cdf_dual, aux = self.head_dual(tape, leaves, tape.dual_seed(tau_col),
                                       h_all)
        logp = ad.log(ad.maximum(cdf_dual.dot_node(), DENSITY_FLOOR))
        return logp, aux

    def _diagnostics(self, aux, batch):
        flat_mask = batch.flat_mask()
        n = max(batch.n_events, 1.0)
        return {
            "mean_abs_u": float((np.abs(aux["u"].value) * flat_mask).sum()
                                / (n * aux["u"].value.shape[1])),
            "mean_abs_v": float((np.abs(aux["v"].value) * flat_mask).sum()
                                / (n * aux["v"].value.shape[1])),
        }

    def intensity_given_state(self, params, taus, h):
        taus = np.asarray(taus, dtype=np.float64).reshape(-1)
        hs = np.tile(np.asarray(h, dtype=np.float64), (taus.size, 1))
        f, p = _eval_many(taus, hs, params, self)
        s = 1.0 - f
        if np.any(s < 1e-12):
            raise SaturationError("survivor mass below floor on the tau grid")
        return p / s

    def _assert_signs_from_leaves(self, leaves):
        for name in self.positive_segments():
            assert np.all(leaves[name].value >= 0.0), \
                f"sign constraint violated in {name}"


# ---------------------------------------------------------------------------
# point-wise evaluation interface
# ---------------------------------------------------------------------------

def _eval_many(taus, hs, params, model: CdfModel):
    """CDF and density at n (tau, h) pairs through one recorded pass."""
    taus = np.asarray(taus, dtype=np.float64).reshape(-1, 1)
    hs = np.atleast_2d(np.asarray(hs, dtype=np.float64))
    if np.any(taus <= 0.0):
        raise ValueError("tau must be strictly positive")
    if np.any(hs < 0.0):
        raise ValueError("history state must be componentwise nonnegative")
    model._assert_signs(params)
    tape = ad.Tape()
    leaves = tape.bind(params)
    cdf_dual, _ = model.head_dual(tape, leaves, tape.dual_seed(taus),
                                  tape.constant(hs))
    return cdf_dual.val.value[:, 0], cdf_dual.dot_node().value[:, 0]


def cdf(tau, h, params, model: CdfModel) -> float:
    f, _ = _eval_many([tau], h, params, model)
    return float(f[0])


def density(tau, h, params, model: CdfModel) -> float:
    _, p = _eval_many([tau], h, params, model)
    return float(p[0])


def survivor(tau, h, params, model: CdfModel) -> float:
    return 1.0 - cdf(tau, h, params, model)


def intensity(tau, h, params, model: CdfModel) -> float:
    f, p = _eval_many([tau], h, params, model)
    s = 1.0 - float(f[0])
    if s < 1e-12:
        raise SaturationError(f"survivor mass {s:.3e} below floor at tau={tau}")
    return float(p[0]) / s


def evaluate(tau, h, params, model: CdfModel) -> CdfOutput:
    f, p = _eval_many([tau], h, params, model)
    f, p = float(f[0]), float(p[0])
    s = 1.0 - f
    if s < 1e-12:
        raise SaturationError(f"survivor mass {s:.3e} below floor at tau={tau}")
    return CdfOutput(F=f, p=p, S=s, intensity=p / s)


def defect_mass(h, params, model: CdfModel, tau_lo=1e-6, tau_hi=1e6):
    """(mass below tau_lo, mass never reached below tau_hi); both would be 0
    for an ideal CDF."""
    f, _ = _eval_many([tau_lo, tau_hi], np.vstack([h, h]), params, model)
    return float(f[0]), float(1.0 - f[1])


@dataclass
class NllResult:
    total: float
    per_event: float
    n_events: int


def nll(seq, params, model: CdfModel) -> NllResult:
    """Negative log-likelihood of one sequence, density floored before log."""
    n = len(seq)
    if n == 0:
        return NllResult(0.0, 0.0, 0)
    states = enc.encode_sequence(seq, model.encoder_params(params),
                                 model.config.feature)
    _, p = _eval_many(seq.intervals(), states, params, model)
    total = float(-np.log(np.maximum(p, DENSITY_FLOOR)).sum())
    return NllResult(total, total / n, n)
