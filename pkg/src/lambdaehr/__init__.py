"""Semantic parsing toolkit for EHR questions.

Maps natural-language questions about patient records to lambda-calculus
logical forms. Ships four parser families (grammar-constrained transition
decoding, coarse-to-fine sketch decoding, direct sequence decoding, and a
lexicon-driven candidate ranker), a synthetic corpus generator, and a
cross-validation evaluation harness.
"""

__version__ = "0.1.0"

from lambdaehr.errors import (
    ArityMismatch,
    DataError,
    EntityAlignmentError,
    LambdaEhrError,
    LfSyntaxError,
    MismatchedDatasets,
    SpecExhausted,
    TypeMismatch,
    UnboundVariable,
    UnknownPredicate,
)
from lambdaehr.lf import (
    And,
    Apply,
    ConceptRef,
    Lambda,
    Literal,
    LogicalForm,
    Placeholder,
    TimeFrame,
    Var,
    exact_match,
    match_mod_and,
    parse_lf,
    print_lf,
)
from lambdaehr.registry import Predicate, PredicateRegistry

__all__ = [
    "And",
    "Apply",
    "ArityMismatch",
    "ConceptRef",
    "DataError",
    "EntityAlignmentError",
    "Lambda",
    "LambdaEhrError",
    "LfSyntaxError",
    "Literal",
    "LogicalForm",
    "MismatchedDatasets",
    "Placeholder",
    "Predicate",
    "PredicateRegistry",
    "SpecExhausted",
    "TimeFrame",
    "TypeMismatch",
    "UnboundVariable",
    "UnknownPredicate",
    "Var",
    "exact_match",
    "match_mod_and",
    "parse_lf",
    "print_lf",
]
