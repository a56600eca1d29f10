"""Comparison models sharing the encoder and the log-density contract.

* Const: constant intensity given the history; exponential intervals.
* RMTPP-style: intensity exp(a + w tau); closed-form compensator.
* Exp: the same intensity family, but the compensator is a fixed-resolution
  trapezoid quadrature. The approximation is the point: it represents the
  intensity-integration error mode that exact-likelihood models avoid.
* FullyNN-style: a positive-weight feedforward net for the *cumulative
  hazard* with additive fusion and softplus output; the density follows from
  p = (dPhi/dtau) exp(-Phi).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Dual, ParamVector
from .modelbase import (
    DENSITY_FLOOR,
    Model,
    free_bias,
    positive_weight,
)


def _softplus_np(x):
    return np.logaddexp(0.0, x)


class ConstModel(Model):
    name = "const"

    def param_specs(self):
        h = self.config.hidden_width
        return super().param_specs() + [("head.v", (h, 1)), ("head.b", (1,))]

    def _init_head(self, pv, rng):
        h = self.config.hidden_width
        pv.view("head.v")[...] = rng.normal(0.0, 1.0 / np.sqrt(h), size=(h, 1))
        # softplus(b) = 1: start at unit rate
        pv.view("head.b")[...] = np.log(np.e - 1.0)

    def head_log_density(self, tape, leaves, h_all, tau_col):
        lam = ad.softplus(ad.matmul(h_all, leaves["head.v"]) + leaves["head.b"])
        logp = ad.log(lam) - lam * tape.constant(tau_col)
        return logp, {}

    def intensity_given_state(self, params, taus, h):
        a = float(np.asarray(h) @ params.view("head.v")[:, 0]
                  + params.view("head.b")[0])
        return np.full(np.asarray(taus).size, _softplus_np(a))


class RmtppModel(Model):
    """exp(a + w tau) intensity with the exact closed-form compensator."""

    name = "rmtpp"
    W_SERIES_SWITCH = 1e-6

    def param_specs(self):
        h = self.config.hidden_width
        return super().param_specs() + [
            ("head.v", (h, 1)), ("head.w", (1,)), ("head.b", (1,)),
        ]

    def _init_head(self, pv, rng):
        h = self.config.hidden_width
        pv.view("head.v")[...] = rng.normal(0.0, 1.0 / np.sqrt(h), size=(h, 1))
        pv.view("head.w")[...] = 0.0
        pv.view("head.b")[...] = 0.0

    def _expm1_over_w(self, w, tau_node):
        """(exp(w tau) - 1) / w, switching to the series near w = 0."""
        if abs(float(w.value.reshape(()))) < self.W_SERIES_SWITCH:
            wt = tau_node * w
            return tau_node * (1.0 + wt * 0.5 + wt * wt * (1.0 / 6.0))
        return (ad.exp(w * tau_node) - 1.0) / w

    def head_log_density(self, tape, leaves, h_all, tau_col):
        tau = tape.constant(tau_col)
        a = ad.matmul(h_all, leaves["head.v"]) + leaves["head.b"]
        w = leaves["head.w"]
        compensator = ad.exp(a) * self._expm1_over_w(w, tau)
        logp = a + w * tau - compensator
        return logp, {}

    def intensity_given_state(self, params, taus, h):
        a = float(np.asarray(h) @ params.view("head.v")[:, 0]
                  + params.view("head.b")[0])
        w = float(params.view("head.w")[0])
        return np.exp(a + w * np.asarray(taus, dtype=np.float64))


class ExpModel(RmtppModel):
    """Same intensity family; compensator by fixed-grid trapezoid quadrature."""

    name = "exp"

    def head_log_density(self, tape, leaves, h_all, tau_col):
        n_grid = self.config.exp_grid_points
        tau = tape.constant(tau_col)
        a = ad.matmul(h_all, leaves["head.v"]) + leaves["head.b"]
        w = leaves["head.w"]
        # lambda sampled at k tau / n for k = 0..n, then trapezoid weights
        fractions = tape.constant(np.linspace(0.0, 1.0, n_grid + 1).reshape(1, -1))
        grid = ad.matmul(tau, fractions)
        lam_grid = ad.exp(a + w * grid)
        weights = np.full((n_grid + 1, 1), 1.0)
        weights[0, 0] = weights[-1, 0] = 0.5
        compensator = ad.matmul(lam_grid, tape.constant(weights)) * (tau * (1.0 / n_grid))
        logp = a + w * tau - compensator
        return logp, {}


class FullyNNModel(Model):
    """Cumulative-hazard network: additive fusion, softplus output."""

    name = "fullynn"

    def param_specs(self):
        d = self.config.mnn_width
        h = self.config.hidden_width
        specs = super().param_specs() + [
            ("net.tau_w", (d, 1)),
            ("net.tau_b", (d,)),
            ("net.hist_w", (d, h)),
            ("net.hist_b", (d,)),
        ]
        for k in range(self.config.hidden_layers):
            specs += [(f"net.layer{k}_w", (d, d)), (f"net.layer{k}_b", (d,))]
        specs += [("net.out_w", (1, d)), ("net.out_b", (1,))]
        return specs

    def positive_segments(self):
        segs = ["net.tau_w", "net.hist_w", "net.out_w"]
        segs += [f"net.layer{k}_w" for k in range(self.config.hidden_layers)]
        return tuple(segs)

    def _init_head(self, pv, rng):
        d = self.config.mnn_width
        h = self.config.hidden_width
        pv.view("net.tau_w")[...] = positive_weight(rng, (d, 1), 1)
        pv.view("net.tau_b")[...] = free_bias(rng, (d,))
        pv.view("net.hist_w")[...] = positive_weight(rng, (d, h), h)
        pv.view("net.hist_b")[...] = free_bias(rng, (d,))
        for k in range(self.config.hidden_layers):
            pv.view(f"net.layer{k}_w")[...] = positive_weight(rng, (d, d), d)
            pv.view(f"net.layer{k}_b")[...] = free_bias(rng, (d,))
        pv.view("net.out_w")[...] = positive_weight(rng, (1, d), d)
        pv.view("net.out_b")[...] = free_bias(rng, (1,))

    def hazard_dual(self, tape, leaves, tau_dual: Dual, h_all):
        u = tau_dual @ ad.transpose(leaves["net.tau_w"]) + leaves["net.tau_b"]
        v = ad.matmul(h_all, ad.transpose(leaves["net.hist_w"])) + leaves["net.hist_b"]
        z = u + Dual.lift(v)
        for k in range(self.config.hidden_layers):
            z = ad.tanh(z @ ad.transpose(leaves[f"net.layer{k}_w"])
                        + leaves[f"net.layer{k}_b"])
        out = z @ ad.transpose(leaves["net.out_w"]) + leaves["net.out_b"]
        return ad.softplus(out)

    def head_log_density(self, tape, leaves, h_all, tau_col):
        hazard = self.hazard_dual(tape, leaves, tape.dual_seed(tau_col), h_all)
        rate = hazard.dot_node()
        logp = ad.log(ad.maximum(rate, DENSITY_FLOOR)) - hazard.val
        return logp, {}

    def intensity_given_state(self, params, taus, h):
        taus = np.asarray(taus, dtype=np.float64).reshape(-1, 1)
        h_rows = np.tile(np.asarray(h, dtype=np.float64), (taus.shape[0], 1))
        tape = ad.Tape()
        leaves = tape.bind(params)
        hazard = self.hazard_dual(tape, leaves, tape.dual_seed(taus),
                                  tape.constant(h_rows))
        return hazard.dot_node().value[:, 0]
