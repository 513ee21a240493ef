"""Attribution engine: direct IG quadrature, second-order formulas, operator composition."""

from .checks import LinearityReport, PropertyReport, linearity_check, verify_properties
from .ig import (
    ExplanationRequest,
    closed_form,
    composition_terms,
    compose_order,
    explain,
    first_order,
    path_scales,
    second_order_hessian,
)
from .path import StraightLinePath
from .quadrature import ProductGrid

__all__ = [
    "ExplanationRequest",
    "LinearityReport",
    "ProductGrid",
    "PropertyReport",
    "StraightLinePath",
    "closed_form",
    "compose_order",
    "composition_terms",
    "explain",
    "first_order",
    "linearity_check",
    "path_scales",
    "second_order_hessian",
    "verify_properties",
]
