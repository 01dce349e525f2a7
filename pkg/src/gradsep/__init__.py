"""Decision procedures for graded modal logics: model checking, bisimulation,
satisfiability, counting-free definability and (Craig) separation."""

from .formula import (
    Formula, Fragment, Signature, ClosureIndex, ParseError, GradeZero,
    parse_formula, to_text, signature_of, shared_signature, closure,
    modal_depth, max_grade, fragment_check,
)
from .semantics import Structure, model_check, realized_type, omega_expand
from .bisim import greatest_bisimulation, are_bisimilar, verify_bisimulation
from .sat import sat_check, bounded_model_search, UnsupportedFragment
from .definability import is_definable, uniform_separator, flatten, Answer
from .mosaic import decide_separation, decide_separation_bounded, SepResult
from .startype import decide_separation_inverse, decide_separation_inverse_bounded
from .encodings import MinskyMachine, encode_phi, encode_psi, intended_prefix, spypoint_transform

__all__ = [
    "Formula", "Fragment", "Signature", "ClosureIndex", "ParseError", "GradeZero",
    "parse_formula", "to_text", "signature_of", "shared_signature", "closure",
    "modal_depth", "max_grade", "fragment_check",
    "Structure", "model_check", "realized_type", "omega_expand",
    "greatest_bisimulation", "are_bisimilar", "verify_bisimulation",
    "sat_check", "bounded_model_search", "UnsupportedFragment",
    "is_definable", "uniform_separator", "flatten", "Answer",
    "decide_separation", "decide_separation_bounded", "SepResult",
    "decide_separation_inverse", "decide_separation_inverse_bounded",
    "MinskyMachine", "encode_phi", "encode_psi", "intended_prefix", "spypoint_transform",
]

__version__ = "0.1.0"
