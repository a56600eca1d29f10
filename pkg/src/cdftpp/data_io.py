"""Dataset files, split manifests, and the plain-text import shim.

The native format is JSONL: a metadata header object on the first line
(``spec_version``, ``generator``, ``params``, ``seed``), then one object per
sequence: ``{"arrival_times": [...], "window_end": <float, optional>}``.
Floats round-trip exactly (shortest-repr JSON). A whitespace-separated
one-sequence-per-line importer covers the common public dumps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .synthetic import EventSequence


class DataFormatError(ValueError):
    pass


def write_dataset(sequences, path, metadata: dict | None = None) -> None:
    header = {"spec_version": "1"}
    header.update(metadata or {})
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for seq in sequences:
            fh.write(json.dumps({
                "arrival_times": seq.arrival_times.tolist(),
                "window_end": seq.window_end,
            }) + "\n")


def read_dataset(path):
    """Returns (sequences, metadata); validates every sequence on the way in."""
    sequences = []
    metadata = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise DataFormatError(f"{path}:{lineno}: malformed JSON ({err})")
            if lineno == 1 and "arrival_times" not in obj:
                metadata = obj
                continue
            times = np.asarray(obj.get("arrival_times", []), dtype=np.float64)
            window = obj.get("window_end", times[-1] if times.size else 0.0)
            try:
                sequences.append(EventSequence(times, window))
            except ValueError as err:
                raise DataFormatError(
                    f"{path}:{lineno}: invalid sequence "
                    f"#{len(sequences)}: {err}")
    return sequences, metadata


def read_csv_sequences(path):
    """One whitespace-separated arrival-time sequence per line."""
    sequences = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            fieldstrs = line.split()
            if not fieldstrs:
                continue
            try:
                times = np.asarray([float(x) for x in fieldstrs])
            except ValueError as err:
                raise DataFormatError(f"{path}:{lineno}: {err}")
            try:
                sequences.append(EventSequence(times, times[-1]))
            except ValueError as err:
                raise DataFormatError(f"{path}:{lineno}: invalid sequence: {err}")
    return sequences


@dataclass
class SplitManifest:
    repeat_index: int
    seed: int
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def check_partition(self, n: int) -> None:
        combined = sorted(self.train + self.val + self.test)
        if combined != list(range(n)):
            raise ValueError(f"manifest {self.repeat_index} is not a partition")


_SPLIT_STREAM = 2_000_000  # Philox key [seed, stream + repeat]


def make_splits(n_sequences: int, repeats: int = 10, seed: int = 0,
                fractions=(0.6, 0.2, 0.2)) -> list[SplitManifest]:
    """Deterministic train/val/test partitions, reshuffled per repeat."""
    if n_sequences < 5:
        raise ValueError("need at least 5 sequences to split")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    n_train = int(fractions[0] * n_sequences)
    n_val = int(fractions[1] * n_sequences)
    manifests = []
    for r in range(repeats):
        rng = np.random.Generator(np.random.Philox(key=[seed, _SPLIT_STREAM + r]))
        order = rng.permutation(n_sequences).tolist()
        m = SplitManifest(
            repeat_index=r,
            seed=seed,
            train=order[:n_train],
            val=order[n_train:n_train + n_val],
            test=order[n_train + n_val:],
        )
        m.check_partition(n_sequences)
        manifests.append(m)
    return manifests
