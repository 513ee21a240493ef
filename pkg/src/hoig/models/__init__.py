"""Model zoo: polynomials, GPR posterior means and quadratic logistic GLMs."""

import hashlib
import json
from importlib import resources
from pathlib import Path

from ..errors import DataError
from .base import (
    DerivativeKind,
    FiniteDifferenceModel,
    LinearCombination,
    PredictiveModel,
    fd_gradient,
    fd_hessian,
)
from .glm import GlmModel, fit_glm
from .gpr import GprModel, fit_gpr
from .polynomial import PolynomialModel, linear, monomial, synthetic_polynomial

__all__ = [
    "DerivativeKind",
    "FiniteDifferenceModel",
    "GlmModel",
    "GprModel",
    "LinearCombination",
    "PolynomialModel",
    "PredictiveModel",
    "fd_gradient",
    "fd_hessian",
    "fit_glm",
    "fit_gpr",
    "linear",
    "load_model",
    "model_from_dict",
    "model_hash",
    "monomial",
    "save_model",
    "synthetic_polynomial",
]

_KINDS = {"polynomial": PolynomialModel, "gpr": GprModel, "glm": GlmModel}
BUILTIN_PREFIX = "builtin:"
BUILTINS = {"synthetic": "synthetic_polynomial.json"}


def model_from_dict(d) -> PredictiveModel:
    kind = d.get("kind")
    if kind not in _KINDS:
        raise DataError(f"unknown model kind {kind!r}; expected one of {sorted(_KINDS)}")
    try:
        return _KINDS[kind].from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed {kind} model file: {exc}") from exc


def model_json(model: PredictiveModel) -> str:
    return json.dumps(model.to_dict(), sort_keys=True, allow_nan=False)


def model_hash(model: PredictiveModel) -> str:
    return hashlib.sha256(model_json(model).encode()).hexdigest()


def save_model(model: PredictiveModel, path) -> None:
    Path(path).write_text(model_json(model) + "\n")


def load_model(source) -> PredictiveModel:
    """Load a model JSON file, or a shipped model named ``builtin:<name>``."""
    source = str(source)
    if source.startswith(BUILTIN_PREFIX):
        name = source[len(BUILTIN_PREFIX):]
        if name not in BUILTINS:
            raise DataError(f"unknown builtin model {name!r}; available: {sorted(BUILTINS)}")
        text = resources.files("hoig.data").joinpath(BUILTINS[name]).read_text()
    else:
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise DataError(f"cannot read model file {source}: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"model file {source} is not valid JSON: {exc}") from exc
    return model_from_dict(d)
