"""Coarsening logical forms into sketches and filling them back in.

A sketch keeps the predicate skeleton of a form and masks every value
argument (concept references, quoted literals, time frames) with the
placeholder `@`. Bound variables are renamed to the canonical `x`, so
structurally equal forms coarsen to byte-equal sketches. Filling a
sketch consumes detail tokens left to right and checks each against the
registry signature of the predicate position it lands in.

Detail tokens use surface syntax: quoted literals keep their quotes,
concept identifiers and time-frame tokens are bare.
"""

from __future__ import annotations

from lambdaehr.errors import ArityMismatch, TypeMismatch
from lambdaehr.lf import (
    And,
    Apply,
    ConceptRef,
    Lambda,
    Literal,
    LogicalForm,
    PLACEHOLDER,
    Placeholder,
    TimeFrame,
    Var,
    is_variable_name,
)
from lambdaehr.registry import (
    CUI,
    LITERAL,
    PredicateRegistry,
    default_registry,
)

CANONICAL_VAR = "x"


def coarsen(lf: LogicalForm) -> LogicalForm:
    """Mask value arguments with `@` and rename binders to `x`."""
    if isinstance(lf, Lambda):
        return Lambda(CANONICAL_VAR, coarsen(lf.body))
    if isinstance(lf, And):
        return And(coarsen(lf.left), coarsen(lf.right))
    if isinstance(lf, Apply):
        return Apply(lf.pred, tuple(coarsen(a) for a in lf.args))
    if isinstance(lf, Var):
        return Var(CANONICAL_VAR)
    if isinstance(lf, (ConceptRef, Literal, TimeFrame)):
        return PLACEHOLDER
    if isinstance(lf, Placeholder):
        return lf
    raise TypeError(f"not a logical form node: {lf!r}")


def is_sketch(lf: LogicalForm) -> bool:
    """True when no value argument survives uncoarsened."""
    if isinstance(lf, Lambda):
        return lf.var == CANONICAL_VAR and is_sketch(lf.body)
    if isinstance(lf, And):
        return is_sketch(lf.left) and is_sketch(lf.right)
    if isinstance(lf, Apply):
        return all(is_sketch(a) for a in lf.args)
    if isinstance(lf, Var):
        return lf.name == CANONICAL_VAR
    if isinstance(lf, Placeholder):
        return True
    return False


def fine_tokens(lf: LogicalForm) -> list[str]:
    """The value arguments coarsen would mask, left to right."""
    out: list[str] = []

    def walk(node: LogicalForm) -> None:
        if isinstance(node, Lambda):
            walk(node.body)
        elif isinstance(node, And):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, Apply):
            for arg in node.args:
                walk(arg)
        elif isinstance(node, ConceptRef):
            out.append(node.cui)
        elif isinstance(node, Literal):
            out.append(f"'{node.value}'")
        elif isinstance(node, TimeFrame):
            out.append(node.token)

    walk(lf)
    return out


def placeholder_count(lf: LogicalForm) -> int:
    if isinstance(lf, Lambda):
        return placeholder_count(lf.body)
    if isinstance(lf, And):
        return placeholder_count(lf.left) + placeholder_count(lf.right)
    if isinstance(lf, Apply):
        return sum(placeholder_count(a) for a in lf.args)
    return 1 if isinstance(lf, Placeholder) else 0


def _is_quoted(token: str) -> bool:
    return (
        len(token) >= 2
        and token.startswith("'")
        and token.endswith("'")
        and "'" not in token[1:-1]
    )


def _looks_like_cui(token: str) -> bool:
    return (
        bool(token)
        and not _is_quoted(token)
        and not is_variable_name(token)
        and all(c.isalnum() or c in "_@" for c in token)
    )


def fill_sketch(
    sketch: LogicalForm,
    details: list[str],
    registry: PredicateRegistry | None = None,
) -> LogicalForm:
    """Replace each `@` in `sketch` with the next detail token.

    The token must fit the registry signature at its position: a bare
    concept identifier where a cui is expected, a quoted string where a
    literal is expected, a known time-frame token in the optional slot
    past the declared arity. Raises ArityMismatch when the detail count
    differs from the placeholder count and TypeMismatch(position) when a
    token has the wrong kind.
    """
    reg = registry if registry is not None else default_registry()
    expected = placeholder_count(sketch)
    if expected != len(details):
        raise ArityMismatch("fill_sketch", expected, len(details))
    cursor = 0

    def take() -> tuple[str, int]:
        nonlocal cursor
        token = details[cursor]
        position = cursor
        cursor += 1
        return token, position

    def fill_form(node: LogicalForm) -> LogicalForm:
        if isinstance(node, Lambda):
            return Lambda(node.var, fill_form(node.body))
        if isinstance(node, And):
            left = fill_form(node.left)
            return And(left, fill_form(node.right))
        if isinstance(node, Apply):
            pred = reg.get(node.pred)
            args = []
            for i, arg in enumerate(node.args):
                if isinstance(arg, Placeholder):
                    args.append(fill_slot(pred, i))
                else:
                    args.append(fill_form(arg))
            return Apply(node.pred, tuple(args))
        return node

    def fill_slot(pred, position_in_args: int) -> LogicalForm:
        token, position = take()
        if position_in_args >= pred.arity:
            if not pred.allows_time_frame:
                raise TypeMismatch(
                    f"{pred.name!r} does not take a time frame", position
                )
            if not reg.is_time_frame_token(token):
                raise TypeMismatch(
                    f"{token!r} is not a time-frame token", position
                )
            return TimeFrame(token)
        kind = pred.arg_kinds[position_in_args]
        if kind == CUI:
            if not _looks_like_cui(token):
                raise TypeMismatch(
                    f"{token!r} is not a concept identifier", position
                )
            return ConceptRef(token)
        if kind == LITERAL:
            if not _is_quoted(token):
                raise TypeMismatch(
                    f"{token!r} is not a quoted literal", position
                )
            return Literal(token[1:-1])
        raise TypeMismatch(
            f"position {position_in_args} of {pred.name!r} is not a "
            "value slot",
            position,
        )

    return fill_form(sketch)
