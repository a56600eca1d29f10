"""Model name registry used by the CLI and checkpoint loader."""

from __future__ import annotations

from .baselines import ConstModel, ExpModel, FullyNNModel, RmtppModel
from .cdf_model import CdfModel
from .modelbase import Model, ModelConfig

MODEL_CLASSES = {
    cls.name: cls
    for cls in (CdfModel, FullyNNModel, RmtppModel, ExpModel, ConstModel)
}

MODEL_NAMES = tuple(MODEL_CLASSES)


def get_model(name: str, config: ModelConfig | None = None) -> Model:
    if name not in MODEL_CLASSES:
        raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}")
    return MODEL_CLASSES[name](config)
