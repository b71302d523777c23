"""Exact Fedosov star products and super-Poisson brackets on Grassmann bundles.

Exact symbolic engine: rational-function coefficients, the Fedosov algebra,
chart geometry, the recursive Fedosov connection, star products and the
closed-form super-Poisson bracket.
"""

__version__ = "0.1.0"

from .scalar import ComplexExpr, RationalExpr, ScalarField, parse_expr  # noqa: E402
from .galgebra import AlgebraElement, FedosovAlgebra, parse_element, render  # noqa: E402
from .geometry import (GeometryError, GeometrySpec, builtin_geometry, curvature,  # noqa: E402
                       load_geometry, validate)
from .fedosov import (FedosovData, build_r, circ, extract_Mt, fedosov_derivation,  # noqa: E402
                      star, star_coefficients, taylor)
from .bracket import closed_form_M1  # noqa: E402
from .sections import parse_section  # noqa: E402

__all__ = [
    "ComplexExpr", "RationalExpr", "ScalarField", "parse_expr",
    "AlgebraElement", "FedosovAlgebra", "parse_element", "render",
    "GeometryError", "GeometrySpec", "builtin_geometry", "curvature", "load_geometry", "validate",
    "FedosovData", "build_r", "circ", "extract_Mt", "fedosov_derivation", "star",
    "star_coefficients", "taylor", "closed_form_M1", "parse_section",
]
