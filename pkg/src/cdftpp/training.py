"""Maximum-likelihood training for any model exposing the log-density contract.

The objective is the mean per-event negative log density plus an L2 penalty
on all parameters. After every optimizer step the model's sign constraints
are re-imposed by absolute value. Early stopping watches validation NLL with
a fixed patience and the best-validation checkpoint is restored at the end.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import EvaluationError, ParamVector
from .data_io import make_splits
from .modelbase import Model, ModelConfig, make_batch


@dataclass
class RunConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 3000
    patience: int = 100
    max_seq_len: int = 128
    l2: float = 1e-5
    seed: int = 0
    repeats: int = 10
    hidden_width: int = 64
    mnn_width: int = 64
    hidden_layers: int = 1
    fusion: str = "product"
    feature: str = "log"
    exp_grid_points: int = 64

    def __post_init__(self):
        if min(self.learning_rate, self.batch_size, self.max_epochs,
               self.patience, self.repeats) <= 0:
            raise ValueError("config values must be positive")
        if self.max_seq_len < 2:
            raise ValueError("max_seq_len must be at least 2")

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            hidden_width=self.hidden_width,
            mnn_width=self.mnn_width,
            hidden_layers=self.hidden_layers,
            fusion=self.fusion,
            feature=self.feature,
            exp_grid_points=self.exp_grid_points,
        )


class TrainingAbort(RuntimeError):
    """Non-finite loss; carries a diagnostic dump of the offending batch."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    """One standard Adam update on flat arrays; returns (new_params, state)."""
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, AdamState(m, v, t)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass
class MetricsRecord:
    epochs: list = field(default_factory=list)  # per-epoch dicts
    best_epoch: int = -1
    best_val_nll: float = float("inf")
    test_nll: float = float("nan")
    stopped_early: bool = False

    def append_epoch(self, **kw):
        self.epochs.append(kw)

    def to_summary(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "best_val_nll": self.best_val_nll,
            "test_nll": self.test_nll,
            "epochs_run": len(self.epochs),
            "stopped_early": self.stopped_early,
        }


def write_metrics_csv(record: MetricsRecord, path) -> None:
    """Schema: epoch, split, nll, mean_abs_u, mean_abs_v (one row per split)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "split", "nll", "mean_abs_u", "mean_abs_v"])
        for row in record.epochs:
            u = row.get("mean_abs_u", "")
            v = row.get("mean_abs_v", "")
            writer.writerow([row["epoch"], "train", row["train_nll"], u, v])
            writer.writerow([row["epoch"], "val", row["val_nll"], "", ""])


# ---------------------------------------------------------------------------
# loss evaluation
# ---------------------------------------------------------------------------

def batch_loss_graph(model: Model, params: ParamVector, batch, l2: float):
    """Recorded loss: masked mean NLL plus l2 * ||theta||^2."""
    tape = ad.Tape()
    bindings = tape.bind(params)
    logp, diagnostics = model.log_density_graph(tape, bindings, batch)
    mask = tape.constant(batch.flat_mask())
    loss = ad.asum(logp * mask) * (-1.0 / batch.n_events)
    if l2 > 0.0:
        penalty = None
        for name in params.names():
            leaf = bindings[name]
            term = ad.asum(leaf * leaf)
            penalty = term if penalty is None else penalty + term
        loss = loss + penalty * l2
    return tape, bindings, loss, diagnostics


def evaluate_nll(model: Model, params: ParamVector, sequences,
                 max_seq_len: int = 128, chunk_size: int = 256) -> float:
    """Mean NLL per event, pooled across sequences (forward pass only)."""
    sequences = [s for s in sequences if len(s) > 0]
    if not sequences:
        return float("nan")
    total, events = 0.0, 0.0
    for start in range(0, len(sequences), chunk_size):
        batch = make_batch(sequences[start:start + chunk_size], max_seq_len,
                           model.config.feature)
        tape = ad.Tape()
        logp, _ = model.log_density_graph(tape, tape.bind(params), batch)
        total += float(-(logp.value * batch.flat_mask()).sum())
        events += batch.n_events
    return total / events


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def train(model: Model, train_seqs, val_seqs, config: RunConfig,
          init_seed: int | None = None):
    """Returns (best_params, MetricsRecord); deterministic given seeds."""
    train_seqs = [s for s in train_seqs if len(s) > 0]
    params = model.init_params(config.seed if init_seed is None else init_seed)
    model.project_positive(params)
    state = AdamState.zeros(len(params))
    shuffle_rng = np.random.Generator(
        np.random.Philox(key=[config.seed, 3_000_000]))

    record = MetricsRecord()
    best_params = params.copy()
    since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(train_seqs))
        epoch_loss_sum, epoch_events = 0.0, 0.0
        diag_acc: dict = {}
        for start in range(0, len(order), config.batch_size):
            chosen = [train_seqs[i] for i in order[start:start + config.batch_size]]
            batch = make_batch(chosen, config.max_seq_len, model.config.feature)
            try:
                tape, bindings, loss, diags = batch_loss_graph(
                    model, params, batch, config.l2)
            except EvaluationError as err:
                raise TrainingAbort(
                    f"evaluation failed at epoch {epoch}: {err}",
                    diagnostics=_dump(model, params, epoch, order, start, batch))
            loss_value = float(loss.value)
            if not np.isfinite(loss_value):
                raise TrainingAbort(
                    f"non-finite loss at epoch {epoch}",
                    diagnostics=_dump(model, params, epoch, order, start, batch))
            grads = tape.grad_params(loss, params, bindings)
            params.data[...], state = adam_step(
                params.data, grads.data, state, config.learning_rate)
            model.project_positive(params)
            epoch_loss_sum += loss_value * batch.n_events
            epoch_events += batch.n_events
            for k, v in diags.items():
                diag_acc.setdefault(k, []).append(v)

        val_nll = evaluate_nll(model, params, val_seqs, config.max_seq_len)
        entry = {
            "epoch": epoch,
            "train_nll": epoch_loss_sum / max(epoch_events, 1.0),
            "val_nll": val_nll,
        }
        for k, vals in diag_acc.items():
            entry[k] = float(np.mean(vals))
        record.append_epoch(**entry)

        if val_nll < record.best_val_nll:
            record.best_val_nll = val_nll
            record.best_epoch = epoch
            best_params = params.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                record.stopped_early = True
                break

    return best_params, record


def _dump(model, params, epoch, order, start, batch):
    return {
        "model": model.name,
        "epoch": epoch,
        "batch_sequences": [int(i) for i in order[start:start + 8]],
        "param_norm": float(np.linalg.norm(params.data)),
        "batch_events": batch.n_events,
        "max_interval": float(batch.intervals.max()),
    }


# ---------------------------------------------------------------------------
# repeated runs over splits
# ---------------------------------------------------------------------------

def _run_one_repeat(args):
    (model_name, sequences, config_dict, repeat) = args
    from .registry import get_model

    config = RunConfig(**config_dict)
    model = get_model(model_name, config.model_config())
    manifest = make_splits(len(sequences), config.repeats, config.seed)[repeat]
    train_seqs = [sequences[i] for i in manifest.train]
    val_seqs = [sequences[i] for i in manifest.val]
    test_seqs = [sequences[i] for i in manifest.test]
    best, record = train(model, train_seqs, val_seqs, config,
                         init_seed=config.seed + repeat)
    record.test_nll = evaluate_nll(model, best, test_seqs, config.max_seq_len)
    return repeat, best, record, manifest


def run_repeats(model_name: str, sequences, config: RunConfig, workers: int = 1):
    """Train over every split repeat; returns (results, summary).

    ``results`` is a list of (repeat, best_params, MetricsRecord, manifest)
    in repeat order. The repeat grid is embarrassingly parallel; each worker
    owns its tape and parameters.
    """
    jobs = [(model_name, sequences, asdict(config), r)
            for r in range(config.repeats)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one_repeat, jobs))
    else:
        results = [_run_one_repeat(j) for j in jobs]
    results.sort(key=lambda item: item[0])
    test_nlls = np.array([rec.test_nll for _, _, rec, _ in results])
    summary = {
        "model": model_name,
        "config": asdict(config),
        "test_nll_mean": float(test_nlls.mean()),
        "test_nll_std": float(test_nlls.std(ddof=1)) if len(test_nlls) > 1 else 0.0,
        "test_nll_per_repeat": test_nlls.tolist(),
        "best_epochs": [rec.best_epoch for _, _, rec, _ in results],
    }
    return results, summary
