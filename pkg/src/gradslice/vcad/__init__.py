"""Design language: parsing and evaluation of implicit multi-material designs."""
from .design import (
    DEFAULT_MATERIAL,
    Cylinder,
    Difference,
    FGrade,
    FractionVector,
    Intersection,
    Mesh,
    RectPrism,
    Sphere,
    Translate,
    Union,
    bounding_box,
    design_materials,
    eval_fractions,
    eval_sdf,
    fraction_field,
    gradient_coordinate,
    has_mesh,
    iter_nodes,
    parse_design,
    sdf_field,
    to_source,
)
from .expr import compile_expression, evaluate, parse_expression
from .expr import to_source as expression_source

__all__ = [
    "DEFAULT_MATERIAL", "Cylinder", "Difference", "FGrade", "FractionVector", "Intersection",
    "Mesh", "RectPrism", "Sphere", "Translate", "Union", "bounding_box", "compile_expression",
    "design_materials", "eval_fractions", "eval_sdf", "evaluate", "expression_source",
    "fraction_field", "gradient_coordinate", "has_mesh", "iter_nodes", "parse_design",
    "parse_expression", "sdf_field", "to_source",
]
