"""Lambda-calculus logical forms: AST, parser, printer, comparisons.

The surface grammar, shared by gold annotations and model outputs:

    form   := lambda | apply
    lambda := ("λ" | "lambda") var "." apply ("∧" apply)*
    apply  := name "(" argexpr ("," argexpr)* ")"
    argexpr:= lambda | apply | name | quoted | "@"

Variables are single lowercase ASCII letters; any other bare name is a
concept identifier, except a trailing time-frame token (e.g. `visit`) on
predicates that permit one. `@` is the sketch placeholder and is only
accepted when parsing sketches. Error positions are UTF-8 byte offsets.

Canonical text: one space after each comma, one space on each side of ∧,
single-quoted literals, conjunct order preserved. Conjunction chains
render flat, so associativity never affects the canonical string.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

from lambdaehr.errors import (
    ArityMismatch,
    LfSyntaxError,
    UnboundVariable,
    UnknownPredicate,
)
from lambdaehr.registry import PredicateRegistry, default_registry


@dataclass(frozen=True)
class Lambda:
    var: str
    body: "LogicalForm"


@dataclass(frozen=True)
class And:
    left: "LogicalForm"
    right: "LogicalForm"


@dataclass(frozen=True)
class Apply:
    pred: str
    args: tuple


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class ConceptRef:
    cui: str


@dataclass(frozen=True)
class Literal:
    value: str


@dataclass(frozen=True)
class TimeFrame:
    token: str


@dataclass(frozen=True)
class Placeholder:
    pass


PLACEHOLDER = Placeholder()

LogicalForm = Union[
    Lambda, And, Apply, Var, ConceptRef, Literal, TimeFrame, Placeholder
]

LAMBDA_CHAR = "λ"
AND_CHAR = "∧"

_NAME_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_@")
_NAME_CONT = _NAME_START | set("0123456789")


def is_variable_name(text: str) -> bool:
    """Variables are single lowercase ASCII letters."""
    return len(text) == 1 and "a" <= text <= "z"


# ---------------------------------------------------------------------------
# Lexer


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        nbytes = len(ch.encode("utf-8"))
        if ch.isspace():
            i += 1
            pos += nbytes
            continue
        if ch == "(":
            tokens.append(_Token("LPAREN", ch, pos))
        elif ch == ")":
            tokens.append(_Token("RPAREN", ch, pos))
        elif ch == ",":
            tokens.append(_Token("COMMA", ch, pos))
        elif ch == ".":
            tokens.append(_Token("DOT", ch, pos))
        elif ch == AND_CHAR:
            tokens.append(_Token("AND", ch, pos))
        elif ch == LAMBDA_CHAR:
            tokens.append(_Token("LAMBDA", ch, pos))
        elif ch == "'":
            j = text.find("'", i + 1)
            if j < 0:
                end = pos + len(text[i:].encode("utf-8"))
                raise LfSyntaxError("unterminated literal", end, "'")
            inner = text[i + 1 : j]
            tokens.append(_Token("QUOTED", inner, pos))
            pos += len(text[i : j + 1].encode("utf-8"))
            i = j + 1
            continue
        elif ch == "@" and (i + 1 >= n or text[i + 1] not in _NAME_CONT):
            tokens.append(_Token("AT", ch, pos))
        elif ch in _NAME_START:
            j = i + 1
            while j < n and text[j] in _NAME_CONT:
                j += 1
            word = text[i:j]
            if word == "lambda":
                tokens.append(_Token("LAMBDA", word, pos))
            else:
                tokens.append(_Token("NAME", word, pos))
            pos += len(word.encode("utf-8"))
            i = j
            continue
        else:
            raise LfSyntaxError(
                f"unexpected character {ch!r}", pos, "a logical-form token"
            )
        i += 1
        pos += nbytes
    tokens.append(_Token("END", "", pos))
    return tokens


# ---------------------------------------------------------------------------
# Parser


class _BareName:
    """Unresolved bare-name argument, classified after arity is known."""

    __slots__ = ("text", "pos")

    def __init__(self, text: str, pos: int):
        self.text = text
        self.pos = pos


class _Parser:
    def __init__(
        self,
        tokens: list[_Token],
        registry: PredicateRegistry,
        allow_placeholders: bool,
    ):
        self.tokens = tokens
        self.i = 0
        self.registry = registry
        self.allow_placeholders = allow_placeholders

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, expected: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise LfSyntaxError(
                self._unexpected(tok), tok.pos, expected
            )
        return self.advance()

    @staticmethod
    def _unexpected(tok: _Token) -> str:
        if tok.kind == "END":
            return "unexpected end of input"
        return f"unexpected {tok.text!r}"

    def parse_form(self, scope: tuple[str, ...]) -> LogicalForm:
        tok = self.peek()
        if tok.kind == "LAMBDA":
            return self.parse_lambda(scope)
        if tok.kind == "NAME":
            return self.parse_apply(scope)
        raise LfSyntaxError(
            self._unexpected(tok), tok.pos, "λ or a predicate name"
        )

    def parse_lambda(self, scope: tuple[str, ...]) -> LogicalForm:
        self.expect("LAMBDA", "λ")
        var_tok = self.expect("NAME", "a variable name")
        if not is_variable_name(var_tok.text):
            raise LfSyntaxError(
                f"bad variable {var_tok.text!r}",
                var_tok.pos,
                "a single lowercase letter",
            )
        self.expect("DOT", ".")
        inner = scope + (var_tok.text,)
        body = self.parse_apply(inner)
        while self.peek().kind == "AND":
            self.advance()
            body = And(body, self.parse_apply(inner))
        return Lambda(var_tok.text, body)

    def parse_apply(self, scope: tuple[str, ...]) -> LogicalForm:
        name_tok = self.expect("NAME", "a predicate name")
        if name_tok.text not in self.registry:
            raise UnknownPredicate(name_tok.text)
        pred = self.registry.get(name_tok.text)
        self.expect("LPAREN", "(")
        raw_args = [self.parse_argexpr(scope)]
        while self.peek().kind == "COMMA":
            self.advance()
            raw_args.append(self.parse_argexpr(scope))
        self.expect("RPAREN", ", or )")
        return self._finish_apply(pred, raw_args, scope)

    def parse_argexpr(self, scope: tuple[str, ...]):
        tok = self.peek()
        if tok.kind == "LAMBDA":
            return self.parse_lambda(scope)
        if tok.kind == "QUOTED":
            self.advance()
            return Literal(tok.text)
        if tok.kind == "AT":
            if not self.allow_placeholders:
                raise LfSyntaxError(
                    "placeholder outside a sketch", tok.pos, "an argument"
                )
            self.advance()
            return PLACEHOLDER
        if tok.kind == "NAME":
            if self.tokens[self.i + 1].kind == "LPAREN":
                return self.parse_apply(scope)
            self.advance()
            return _BareName(tok.text, tok.pos)
        raise LfSyntaxError(self._unexpected(tok), tok.pos, "an argument")

    def _finish_apply(self, pred, raw_args, scope) -> Apply:
        n = len(raw_args)
        has_tf_slot = False
        if n == pred.arity + 1 and pred.allows_time_frame:
            last = raw_args[-1]
            if isinstance(last, _BareName) and self.registry.is_time_frame_token(
                last.text
            ):
                has_tf_slot = True
            elif isinstance(last, Placeholder):
                has_tf_slot = True
            else:
                raise ArityMismatch(pred.name, pred.arity, n)
        elif n != pred.arity:
            raise ArityMismatch(pred.name, pred.arity, n)

        args = []
        for idx, raw in enumerate(raw_args):
            if isinstance(raw, _BareName):
                if has_tf_slot and idx == n - 1:
                    args.append(TimeFrame(raw.text))
                elif is_variable_name(raw.text):
                    if raw.text not in scope:
                        raise UnboundVariable(raw.text)
                    args.append(Var(raw.text))
                else:
                    args.append(ConceptRef(raw.text))
            else:
                args.append(raw)
        return Apply(pred.name, tuple(args))


def parse_lf(
    text: str,
    registry: PredicateRegistry | None = None,
    *,
    allow_placeholders: bool = False,
) -> LogicalForm:
    """Parse surface text into a LogicalForm, validating predicate names,
    arities, and variable binding against the registry as it goes.
    """
    if registry is None:
        registry = default_registry()
    if not text.strip():
        raise LfSyntaxError("empty input", 0, "a logical form")
    parser = _Parser(_tokenize(text), registry, allow_placeholders)
    form = parser.parse_form(())
    end = parser.peek()
    if end.kind != "END":
        raise LfSyntaxError(
            parser._unexpected(end), end.pos, "end of input"
        )
    return form


# ---------------------------------------------------------------------------
# Printer and comparisons


def _flatten_and(node: LogicalForm) -> list[LogicalForm]:
    if isinstance(node, And):
        return _flatten_and(node.left) + _flatten_and(node.right)
    return [node]


def _render(node: LogicalForm, sort_conjuncts: bool) -> str:
    if isinstance(node, Lambda):
        parts = [
            _render(c, sort_conjuncts) for c in _flatten_and(node.body)
        ]
        if sort_conjuncts:
            parts.sort()
        return f"{LAMBDA_CHAR}{node.var}." + f" {AND_CHAR} ".join(parts)
    if isinstance(node, And):
        parts = [_render(c, sort_conjuncts) for c in _flatten_and(node)]
        if sort_conjuncts:
            parts.sort()
        return f" {AND_CHAR} ".join(parts)
    if isinstance(node, Apply):
        args = ", ".join(_render(a, sort_conjuncts) for a in node.args)
        return f"{node.pred}({args})"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, ConceptRef):
        return node.cui
    if isinstance(node, Literal):
        return f"'{node.value}'"
    if isinstance(node, TimeFrame):
        return node.token
    if isinstance(node, Placeholder):
        return "@"
    raise TypeError(f"not a LogicalForm node: {node!r}")


def print_lf(lf: LogicalForm) -> str:
    """Canonical single-line rendering. Deterministic; conjunct order kept."""
    return _render(lf, sort_conjuncts=False)


def exact_match(a: LogicalForm, b: LogicalForm) -> bool:
    """True iff the two forms render to byte-equal canonical text."""
    return print_lf(a) == print_lf(b)


def match_mod_and(a: LogicalForm, b: LogicalForm) -> bool:
    """Secondary metric: like exact_match but treats ∧ as commutative.

    For analysis only; reported accuracy uses exact_match.
    """
    return _render(a, sort_conjuncts=True) == _render(b, sort_conjuncts=True)


def lf_surface_tokens(lf: LogicalForm) -> list[str]:
    """Canonical text split into atomic symbols.

    Joining the tokens with single spaces parses back to the same form;
    quoted literals stay single tokens even when they contain spaces.
    """
    out: list[str] = []

    def walk(node: LogicalForm) -> None:
        if isinstance(node, Lambda):
            out.extend((LAMBDA_CHAR, node.var, "."))
            conjuncts = _flatten_and(node.body)
            walk(conjuncts[0])
            for conj in conjuncts[1:]:
                out.append(AND_CHAR)
                walk(conj)
        elif isinstance(node, Apply):
            out.extend((node.pred, "("))
            for i, arg in enumerate(node.args):
                if i:
                    out.append(",")
                walk(arg)
            out.append(")")
        else:
            out.append(_render(node, sort_conjuncts=False))

    walk(lf)
    return out


# ---------------------------------------------------------------------------
# Transformations and inspection


def strip_time_frames(lf: LogicalForm) -> LogicalForm:
    """Remove every trailing TimeFrame argument, recursively. Idempotent."""
    if isinstance(lf, Lambda):
        return Lambda(lf.var, strip_time_frames(lf.body))
    if isinstance(lf, And):
        return And(strip_time_frames(lf.left), strip_time_frames(lf.right))
    if isinstance(lf, Apply):
        args = list(lf.args)
        while args and isinstance(args[-1], TimeFrame):
            args.pop()
        return Apply(lf.pred, tuple(strip_time_frames(a) for a in args))
    return lf


def outermost_label(lf: LogicalForm, grouped: bool = False) -> str:
    """Variant label: the outermost predicate name, or "λx" for a root
    lambda. With grouped=True, is_* predicates collapse to "is_*".
    """
    if isinstance(lf, Lambda):
        return f"{LAMBDA_CHAR}x"
    if isinstance(lf, Apply):
        if grouped and lf.pred.startswith("is_"):
            return "is_*"
        return lf.pred
    raise TypeError(f"no outermost label for {lf!r}")


def iter_nodes(lf: LogicalForm) -> Iterator[LogicalForm]:
    """Depth-first, left-to-right traversal."""
    yield lf
    if isinstance(lf, Lambda):
        yield from iter_nodes(lf.body)
    elif isinstance(lf, And):
        yield from iter_nodes(lf.left)
        yield from iter_nodes(lf.right)
    elif isinstance(lf, Apply):
        for arg in lf.args:
            yield from iter_nodes(arg)


def count_predicates(lf: LogicalForm) -> int:
    """Number of predicate occurrences (Apply nodes); λ is not counted."""
    return sum(1 for node in iter_nodes(lf) if isinstance(node, Apply))


def predicate_names(lf: LogicalForm) -> set[str]:
    return {n.pred for n in iter_nodes(lf) if isinstance(n, Apply)}


def form_depth(lf: LogicalForm) -> int:
    """Operator nesting depth: how many Apply/Lambda levels wrap the core."""
    if isinstance(lf, Lambda):
        return 1 + form_depth(lf.body)
    if isinstance(lf, And):
        return max(form_depth(lf.left), form_depth(lf.right))
    if isinstance(lf, Apply):
        child = max((form_depth(a) for a in lf.args), default=0)
        return 1 + child
    return 0


def validate(
    lf: LogicalForm,
    registry: PredicateRegistry | None = None,
    *,
    allow_placeholders: bool = False,
) -> None:
    """Check the LogicalForm invariants on a constructed tree.

    Raises UnknownPredicate, ArityMismatch, UnboundVariable, or
    LfSyntaxError (for structural violations that the parser could never
    produce, reported at offset 0).
    """
    if registry is None:
        registry = default_registry()

    def bad(msg: str):
        raise LfSyntaxError(msg, 0, "a valid form")

    def walk(node, scope, context):
        if isinstance(node, Lambda):
            if not is_variable_name(node.var):
                bad(f"bad binder {node.var!r}")
            walk(node.body, scope + (node.var,), "body")
        elif isinstance(node, And):
            if context != "body":
                bad("conjunction outside a lambda body")
            walk(node.left, scope, "body")
            walk(node.right, scope, "body")
        elif isinstance(node, Apply):
            pred = registry.get(node.pred)
            args = list(node.args)
            if args and isinstance(args[-1], TimeFrame):
                if not pred.allows_time_frame:
                    raise ArityMismatch(pred.name, pred.arity, len(args))
                args.pop()
            n = len(args)
            if n != pred.arity:
                raise ArityMismatch(pred.name, pred.arity, len(node.args))
            for arg in args:
                if isinstance(arg, TimeFrame):
                    bad("time frame in a non-trailing position")
                walk(arg, scope, "arg")
        elif isinstance(node, Var):
            if node.name not in scope:
                raise UnboundVariable(node.name)
        elif isinstance(node, ConceptRef):
            if not node.cui or any(c not in _NAME_CONT for c in node.cui):
                bad(f"bad concept identifier {node.cui!r}")
        elif isinstance(node, Literal):
            if "'" in node.value:
                bad("quote character inside a literal")
        elif isinstance(node, TimeFrame):
            if not registry.is_time_frame_token(node.token):
                bad(f"unknown time-frame token {node.token!r}")
        elif isinstance(node, Placeholder):
            if not allow_placeholders:
                bad("placeholder outside a sketch")
        else:
            bad(f"not a LogicalForm node: {node!r}")

    if not isinstance(lf, (Lambda, Apply)):
        bad("root must be a lambda or an application")
    walk(lf, (), "root")
