"""Synthetic event-sequence generators with exact ground-truth likelihoods.

Four generator families: two exponential-kernel Hawkes processes, a
stationary lognormal renewal process, a non-stationary (trend-rescaled)
gamma renewal process, plus a homogeneous Poisson control.

Randomness uses the counter-based Philox generator; sequence ``i`` of a
dataset built with seed ``s`` draws from ``Philox(key=[s, i])``, so datasets
are reproducible element by element.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

TREND_PERIOD = 20000.0
TREND_AMPLITUDE = 0.99


class GenerationError(RuntimeError):
    pass


def _rng(seed, stream=0):
    return np.random.Generator(np.random.Philox(key=[int(seed), int(stream)]))


@dataclass
class EventSequence:
    """Strictly increasing arrival times inside one observation window."""

    arrival_times: np.ndarray
    window_end: float

    def __post_init__(self):
        self.arrival_times = np.asarray(self.arrival_times, dtype=np.float64)
        self.window_end = float(self.window_end)
        self.validate()

    def validate(self):
        t = self.arrival_times
        if t.size:
            if t[0] <= 0.0:
                raise ValueError("arrival times must be strictly positive")
            if np.any(np.diff(t) <= 0.0):
                raise ValueError("arrival times must be strictly increasing")
            if t[-1] > self.window_end:
                raise ValueError("arrival time beyond the observation window")

    def __len__(self):
        return int(self.arrival_times.size)

    def intervals(self) -> np.ndarray:
        """Inter-event times, with the first measured from t0 = 0."""
        return np.diff(self.arrival_times, prepend=0.0)

    def truncated(self, max_events: int) -> "EventSequence":
        """Keep the first ``max_events`` events; the window closes at the last
        kept event so likelihoods of the truncation stay exact."""
        if len(self) <= max_events:
            return self
        kept = self.arrival_times[:max_events]
        return EventSequence(kept, kept[-1])


@dataclass
class HawkesParams:
    """lambda(t|H) = mu + sum_j alpha_j beta_j exp(-beta_j (t - t_i))."""

    mu: float
    alphas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        self.alphas = np.atleast_1d(np.asarray(self.alphas, dtype=np.float64))
        self.betas = np.atleast_1d(np.asarray(self.betas, dtype=np.float64))
        if self.alphas.shape != self.betas.shape:
            raise ValueError("alphas and betas must have equal length")
        if self.mu <= 0 or np.any(self.alphas < 0) or np.any(self.betas <= 0):
            raise ValueError("require mu > 0, alphas >= 0, betas > 0")

    def branching_ratio(self) -> float:
        return float(self.alphas.sum())

    def stationary_rate(self) -> float:
        return self.mu / (1.0 - self.branching_ratio())


HAWKES1 = HawkesParams(mu=0.2, alphas=[0.8], betas=[0.8])
HAWKES2 = HawkesParams(mu=0.2, alphas=[0.4, 0.4], betas=[1.0, 20.0])


def default_trend(t):
    return TREND_AMPLITUDE * np.sin(2.0 * np.pi * t / TREND_PERIOD) + 1.0


def default_trend_integral(t):
    w = 2.0 * np.pi / TREND_PERIOD
    return t + TREND_AMPLITUDE / w * (1.0 - np.cos(w * t))


@dataclass
class RenewalSpec:
    """Interval distribution for renewal generators.

    ``mean``/``sd`` are moments of the interval distribution itself (not of
    any underlying transform); flip ``moments_of`` to "underlying" to treat
    them as the lognormal's normal-space parameters instead.
    """

    kind: str  # "stationary-lognormal" | "nonstationary-gamma"
    mean: float = 1.0
    sd: float = 1.0
    moments_of: str = "interval"
    trend: Optional[Callable] = None
    trend_integral: Optional[Callable] = None

    def lognormal_underlying(self) -> tuple[float, float]:
        if self.moments_of == "underlying":
            return self.mean, self.sd
        sigma2 = math.log(1.0 + (self.sd / self.mean) ** 2)
        mu = math.log(self.mean) - 0.5 * sigma2
        return mu, math.sqrt(sigma2)

    def gamma_shape_scale(self) -> tuple[float, float]:
        shape = (self.mean / self.sd) ** 2
        scale = self.sd ** 2 / self.mean
        return shape, scale


STATIONARY_RENEWAL = RenewalSpec(kind="stationary-lognormal", mean=1.0, sd=6.0)
NONSTATIONARY_RENEWAL = RenewalSpec(kind="nonstationary-gamma", mean=1.0, sd=0.5)


# ---------------------------------------------------------------------------
# Hawkes process
# ---------------------------------------------------------------------------

def sample_hawkes(params: HawkesParams, window_end: float, rng_seed: int,
                  stream: int = 0) -> EventSequence:
    """Ogata thinning with the exact per-kernel recursive state.

    Between events the intensity only decays, so the intensity just after the
    current point dominates every proposal drawn from it.
    """
    if params.branching_ratio() >= 1.0:
        raise GenerationError(
            f"non-stationary Hawkes parameters: sum(alphas) = "
            f"{params.branching_ratio():.3f} >= 1"
        )
    rng = _rng(rng_seed, stream)
    mu, alphas, betas = params.mu, params.alphas, params.betas
    excite = alphas * betas
    g = np.zeros_like(betas)
    t = 0.0
    events = []
    while True:
        lam_bar = mu + g.sum()
        step = rng.exponential() / lam_bar
        t_new = t + step
        if t_new > window_end:
            break
        g_new = g * np.exp(-betas * step)
        lam_new = mu + g_new.sum()
        assert lam_new <= lam_bar * (1.0 + 1e-12), "dominating rate exceeded"
        t, g = t_new, g_new
        if rng.uniform() * lam_bar <= lam_new:
            events.append(t)
            g = g + excite
    return EventSequence(np.asarray(events), window_end)


def hawkes_intensity(t: float, history, params: HawkesParams) -> float:
    """Exact intensity at time t given events strictly before t (naive sum)."""
    history = np.asarray(history, dtype=np.float64)
    past = history[history < t]
    if past.size == 0:
        return float(params.mu)
    dt = t - past[:, None]
    return float(params.mu + (params.alphas * params.betas
                              * np.exp(-params.betas * dt)).sum())


def hawkes_intensities_at_events(times, params: HawkesParams) -> np.ndarray:
    """lambda(t_i | t_1..t_{i-1}) for every event, via O(1)-per-event recursion."""
    times = np.asarray(times, dtype=np.float64)
    excite = params.alphas * params.betas
    g = np.zeros_like(params.betas)
    out = np.empty(times.size)
    prev = 0.0
    for i, t in enumerate(times):
        g = g * np.exp(-params.betas * (t - prev))
        out[i] = params.mu + g.sum()
        g = g + excite
        prev = t
    return out


def hawkes_compensator(t: float, history, params: HawkesParams) -> float:
    """Integrated intensity over [0, t] given events strictly before t."""
    history = np.asarray(history, dtype=np.float64)
    past = history[history < t]
    comp = params.mu * t
    if past.size:
        dt = t - past[:, None]
        comp += (params.alphas * (1.0 - np.exp(-params.betas * dt))).sum()
    return float(comp)


def hawkes_compensators_at_events(times, params: HawkesParams) -> np.ndarray:
    """Compensator value at every event time, O(1) per event.

    Uses sum_{k<i} exp(-beta (t_i - t_k)) tracked recursively per kernel;
    equals the naive ``hawkes_compensator`` evaluated at each event.
    """
    times = np.asarray(times, dtype=np.float64)
    decayed = np.zeros_like(params.betas)
    out = np.empty(times.size)
    prev = 0.0
    for i, t in enumerate(times):
        decayed = decayed * np.exp(-params.betas * (t - prev))
        out[i] = params.mu * t + (params.alphas * (i - decayed)).sum()
        decayed = decayed + 1.0
        prev = t
    return out


def hawkes_exact_loglik(seq: EventSequence, params: HawkesParams) -> float:
    """Sum of log-intensities minus the closed-form compensator over the window."""
    times = seq.arrival_times
    if times.size == 0:
        return -params.mu * seq.window_end
    log_lams = np.log(hawkes_intensities_at_events(times, params))
    # an event exactly at the window edge contributes 0 to the integral
    comp = hawkes_compensator(seq.window_end, times, params)
    return float(log_lams.sum() - comp)


# ---------------------------------------------------------------------------
# renewal processes
# ---------------------------------------------------------------------------

def sample_stationary_renewal(spec: RenewalSpec, n_events: int, rng_seed: int,
                              stream: int = 0) -> EventSequence:
    if spec.kind != "stationary-lognormal":
        raise GenerationError(f"unexpected renewal kind {spec.kind!r}")
    mu, sigma = spec.lognormal_underlying()
    gaps = _rng(rng_seed, stream).lognormal(mean=mu, sigma=sigma, size=n_events)
    times = np.cumsum(gaps)
    return EventSequence(times, times[-1])


def invert_trend_integral(target: float, lo: float, spec: RenewalSpec,
                          tol: float = 1e-10) -> float:
    """Solve trend_integral(t) = target by bisection; bracket grows geometrically.

    Bisection rather than Newton because the trend can flatten to 0.01.
    """
    integral = spec.trend_integral or default_trend_integral
    step = max(target - integral(lo), 1.0)
    hi = lo + step
    while integral(hi) < target:
        step *= 2.0
        hi = lo + step
        if step > 1e12:
            raise GenerationError("trend inversion failed to bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if integral(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sample_nonstationary_renewal(spec: RenewalSpec, n_events: int, rng_seed: int,
                                 stream: int = 0) -> EventSequence:
    """Gamma-gap renewal in warped time, mapped back through the trend integral."""
    if spec.kind != "nonstationary-gamma":
        raise GenerationError(f"unexpected renewal kind {spec.kind!r}")
    shape, scale = spec.gamma_shape_scale()
    gaps = _rng(rng_seed, stream).gamma(shape, scale, size=n_events)
    warped = np.cumsum(gaps)
    times = np.empty(n_events)
    prev = 0.0
    for i, target in enumerate(warped):
        prev = invert_trend_integral(target, prev, spec)
        times[i] = prev
    return EventSequence(times, times[-1])


def sample_poisson(rate: float, n_events: int, rng_seed: int,
                   stream: int = 0) -> EventSequence:
    gaps = _rng(rng_seed, stream).exponential(1.0 / rate, size=n_events)
    times = np.cumsum(gaps)
    return EventSequence(times, times[-1])


def time_rescaling_transform(seq: EventSequence, compensator: Callable) -> np.ndarray:
    """Compensator increments between events; i.i.d. Exp(1) under the true model."""
    values = np.array([compensator(t) for t in seq.arrival_times])
    return np.diff(values, prepend=0.0)


# ---------------------------------------------------------------------------
# datasets and ground-truth likelihoods
# ---------------------------------------------------------------------------

DATASET_NAMES = ("hawkes1", "hawkes2", "s-renewal", "ns-renewal", "poisson")


def _dataset_params(name: str) -> dict:
    if name == "hawkes1":
        return {"mu": HAWKES1.mu, "alphas": HAWKES1.alphas.tolist(),
                "betas": HAWKES1.betas.tolist()}
    if name == "hawkes2":
        return {"mu": HAWKES2.mu, "alphas": HAWKES2.alphas.tolist(),
                "betas": HAWKES2.betas.tolist()}
    if name == "s-renewal":
        return {"distribution": "lognormal", "mean": 1.0, "sd": 6.0,
                "moments_of": "interval"}
    if name == "ns-renewal":
        return {"distribution": "gamma", "mean": 1.0, "sd": 0.5,
                "moments_of": "interval",
                "trend": "0.99*sin(2*pi*t/20000)+1"}
    if name == "poisson":
        return {"rate": 1.0}
    raise ValueError(f"unknown dataset {name!r}")


def build_dataset(name: str, n_sequences: int = 100, max_events: int = 128,
                  seed: int = 0) -> tuple[list[EventSequence], dict]:
    """Generate one synthetic dataset plus its provenance metadata."""
    if name not in DATASET_NAMES:
        raise ValueError(f"unknown dataset {name!r}; choose from {DATASET_NAMES}")
    sequences = []
    for i in range(n_sequences):
        if name in ("hawkes1", "hawkes2"):
            params = HAWKES1 if name == "hawkes1" else HAWKES2
            window = 2.0 * max_events / params.stationary_rate()
            seq = sample_hawkes(params, window, seed, stream=i)
            while len(seq) < max_events:
                window *= 2.0
                seq = sample_hawkes(params, window, seed, stream=i)
        elif name == "s-renewal":
            seq = sample_stationary_renewal(STATIONARY_RENEWAL, max_events,
                                            seed, stream=i)
        elif name == "ns-renewal":
            seq = sample_nonstationary_renewal(NONSTATIONARY_RENEWAL, max_events,
                                               seed, stream=i)
        else:
            seq = sample_poisson(1.0, max_events, seed, stream=i)
        sequences.append(seq.truncated(max_events))
    metadata = {
        "spec_version": "1",
        "generator": name,
        "params": _dataset_params(name),
        "seed": int(seed),
        "n_sequences": int(n_sequences),
        "max_events": int(max_events),
        "rng": "philox(key=[seed, sequence_index])",
    }
    return sequences, metadata


def _lognormal_logpdf(x, mu, sigma):
    return (-np.log(x) - math.log(sigma) - 0.5 * math.log(2.0 * math.pi)
            - (np.log(x) - mu) ** 2 / (2.0 * sigma ** 2))


def _gamma_logpdf(x, shape, scale):
    return ((shape - 1.0) * np.log(x) - x / scale
            - shape * math.log(scale) - math.lgamma(shape))


def true_loglik(name: str, seq: EventSequence) -> float:
    """Exact log-likelihood of a sequence under the generator that made it."""
    if name in ("hawkes1", "hawkes2"):
        params = HAWKES1 if name == "hawkes1" else HAWKES2
        return hawkes_exact_loglik(seq, params)
    gaps = seq.intervals()
    if name == "s-renewal":
        mu, sigma = STATIONARY_RENEWAL.lognormal_underlying()
        return float(_lognormal_logpdf(gaps, mu, sigma).sum())
    if name == "ns-renewal":
        spec = NONSTATIONARY_RENEWAL
        shape, scale = spec.gamma_shape_scale()
        integral = spec.trend_integral or default_trend_integral
        trend = spec.trend or default_trend
        warped = integral(seq.arrival_times)
        warped_gaps = np.diff(warped, prepend=0.0)
        return float((_gamma_logpdf(warped_gaps, shape, scale)
                      + np.log(trend(seq.arrival_times))).sum())
    if name == "poisson":
        return float((np.log(1.0) - gaps).sum())
    raise ValueError(f"no ground-truth likelihood for {name!r}")


def true_per_event_nll(name: str, sequences) -> float:
    """Mean negative log-likelihood per event, pooled over sequences."""
    total = sum(-true_loglik(name, s) for s in sequences)
    events = sum(len(s) for s in sequences)
    return total / events
