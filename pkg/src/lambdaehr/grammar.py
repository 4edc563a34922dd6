"""ASDL-style grammar and the transition system over it.

An abstract grammar of typed constructors defines well-formed derivation
trees. Three actions drive a frontier stack: ApplyConstr pushes a
constructor, GenToken fills a primitive field, and Reduce closes a
sequence field. Constructors auto-complete once their last field is
filled, so Reduce is only ever needed for sequences.

Typing is context-sensitive where the grammar alone is too loose:

  * inside a Lambda body, only Apply may construct a `form`, and its
    predicate must be one that takes the bound variable first;
  * at the root and under SubForm, Apply predicates must be wrapper
    operators (their first argument is a sub-form);
  * argument constructors and Reduce legality follow the registry
    signature (argument kinds, arity, optional trailing time frame).

With sketch=True the system derives sketches instead: value arguments
come from the nullary PhArg constructor and nothing else.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Union

from lambdaehr.errors import (
    DataError,
    IllegalAction,
    IncompleteDerivation,
    NotDerivable,
)
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
    _flatten_and,
    is_variable_name,
    print_lf,
)
from lambdaehr.registry import (
    CUI,
    FORM,
    LITERAL,
    VAR,
    PredicateRegistry,
)

PRIMITIVE_TYPES = ("var", "pred_name", "cui", "literal", "tf")


# ---------------------------------------------------------------------------
# Grammar definition


@dataclass(frozen=True)
class Field:
    type: str
    name: str
    seq: bool


@dataclass(frozen=True)
class Constructor:
    name: str
    type_name: str
    fields: tuple[Field, ...]


class AsdlGrammar:
    """Composite types, their constructors, and the implied primitives."""

    def __init__(self, types: dict[str, tuple[Constructor, ...]]):
        if not types:
            raise DataError("grammar defines no types")
        self.types = types
        self.root_type = next(iter(types))
        self.constructors: dict[str, Constructor] = {}
        for ctors in types.values():
            for ctor in ctors:
                if ctor.name in self.constructors:
                    raise DataError(
                        f"constructor {ctor.name!r} defined twice"
                    )
                self.constructors[ctor.name] = ctor
        self.primitives = set()
        for ctors in types.values():
            for ctor in ctors:
                for field in ctor.fields:
                    if field.type not in types:
                        self.primitives.add(field.type)

    def constructors_of(self, type_name: str) -> tuple[Constructor, ...]:
        return self.types[type_name]

    def is_composite(self, type_name: str) -> bool:
        return type_name in self.types


_DEF_RE = re.compile(r"^([A-Za-z_]\w*)\s*=", re.M)
_ALT_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*$", re.S)
_FIELD_RE = re.compile(r"^\s*([A-Za-z_]\w*)(\*?)\s+([A-Za-z_]\w*)\s*$")


def parse_asdl(text: str) -> AsdlGrammar:
    clean_lines = []
    for line in text.splitlines():
        hash_at = line.find("#")
        if hash_at >= 0:
            line = line[:hash_at]
        clean_lines.append(line)
    clean = "\n".join(clean_lines)

    matches = list(_DEF_RE.finditer(clean))
    if not matches:
        raise DataError("no type definitions found")
    types: dict[str, tuple[Constructor, ...]] = {}
    for i, match in enumerate(matches):
        type_name = match.group(1)
        begin = match.end()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(clean)
        body = clean[begin:end].strip()
        if type_name in types:
            raise DataError(f"type {type_name!r} defined twice")
        ctors = []
        for alt in body.split("|"):
            m = _ALT_RE.match(alt)
            if not m:
                raise DataError(f"bad constructor syntax: {alt.strip()!r}")
            ctor_name, field_blob = m.group(1), m.group(2)
            fields = []
            if field_blob and field_blob.strip():
                for piece in field_blob.split(","):
                    fm = _FIELD_RE.match(piece)
                    if not fm:
                        raise DataError(f"bad field syntax: {piece.strip()!r}")
                    fields.append(
                        Field(fm.group(1), fm.group(3), fm.group(2) == "*")
                    )
            ctors.append(Constructor(ctor_name, type_name, tuple(fields)))
        types[type_name] = tuple(ctors)
    return AsdlGrammar(types)


def load_grammar(path: str | None = None) -> AsdlGrammar:
    """Parse a grammar file; with no path, the packaged default grammar."""
    if path is None:
        text = (
            resources.files("lambdaehr.data")
            .joinpath("grammar.asdl")
            .read_text(encoding="utf-8")
        )
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return parse_asdl(text)


_default_grammar: AsdlGrammar | None = None


def default_grammar() -> AsdlGrammar:
    global _default_grammar
    if _default_grammar is None:
        _default_grammar = load_grammar()
    return _default_grammar


# ---------------------------------------------------------------------------
# Actions


@dataclass(frozen=True)
class ApplyConstr:
    name: str


@dataclass(frozen=True)
class Reduce:
    pass


@dataclass(frozen=True)
class GenToken:
    token: str


Action = Union[ApplyConstr, Reduce, GenToken]

REDUCE = Reduce()


def action_to_line(action: Action) -> str:
    if isinstance(action, ApplyConstr):
        return f"APPLY {action.name}"
    if isinstance(action, Reduce):
        return "REDUCE"
    if isinstance(action, GenToken):
        return f"GEN {action.token}"
    raise TypeError(f"not an action: {action!r}")


def line_to_action(line: str) -> Action:
    line = line.rstrip("\n")
    if line == "REDUCE":
        return REDUCE
    if line.startswith("APPLY "):
        return ApplyConstr(line[6:])
    if line.startswith("GEN "):
        return GenToken(line[4:])
    raise DataError(f"bad action line: {line!r}")


def serialize_actions(actions: Iterable[Action]) -> str:
    return "\n".join(action_to_line(a) for a in actions)


def parse_actions(text: str) -> list[Action]:
    return [line_to_action(ln) for ln in text.splitlines() if ln.strip()]


# ---------------------------------------------------------------------------
# Derivation trees


@dataclass(frozen=True)
class AstNode:
    """A completed constructor application. Field values are tokens,
    child AstNodes, or tuples of those for sequence fields.
    """

    constructor: str
    fields: dict

    def __getitem__(self, field_name: str):
        return self.fields[field_name]


# ---------------------------------------------------------------------------
# Transition system

_ROOT_CONTEXT = "root"
_BODY_CONTEXT = "body"
_SUBFORM_CONTEXT = "subform"


class _Frame:
    __slots__ = ("ctor", "context", "field_idx", "values")

    def __init__(self, ctor: Constructor, context: str | None):
        self.ctor = ctor
        self.context = context
        self.field_idx = 0
        self.values: dict = {
            f.name: [] if f.seq else None for f in ctor.fields
        }

    def clone(self) -> "_Frame":
        other = _Frame.__new__(_Frame)
        other.ctor = self.ctor
        other.context = self.context
        other.field_idx = self.field_idx
        other.values = {
            k: (v.copy() if isinstance(v, list) else v)
            for k, v in self.values.items()
        }
        return other

    @property
    def current_field(self) -> Field | None:
        if self.field_idx >= len(self.ctor.fields):
            return None
        return self.ctor.fields[self.field_idx]

    def complete(self) -> bool:
        return self.field_idx >= len(self.ctor.fields)

    def to_node(self) -> AstNode:
        fields = {
            k: (tuple(v) if isinstance(v, list) else v)
            for k, v in self.values.items()
        }
        return AstNode(self.ctor.name, fields)


class DerivationState:
    """A partial derivation: a stack of open frames plus the finished
    root, if any. Values are cheap to clone, so decoding may branch.
    """

    __slots__ = ("frames", "root")

    def __init__(self):
        self.frames: list[_Frame] = []
        self.root: AstNode | None = None

    def clone(self) -> "DerivationState":
        other = DerivationState.__new__(DerivationState)
        other.frames = [f.clone() for f in self.frames]
        other.root = self.root
        return other

    @property
    def complete(self) -> bool:
        return self.root is not None and not self.frames

    def scope(self) -> tuple[str, ...]:
        binders = []
        for frame in self.frames:
            if frame.ctor.name == "Lambda":
                binder = frame.values.get("binder")
                if isinstance(binder, str):
                    binders.append(binder)
        return tuple(binders)


class TransitionSystem:
    """Drives derivations for one grammar/registry pair.

    `cui_tokens` and `literal_tokens` are the enumerable vocabularies
    valid_actions offers at concept and literal slots (legality checks on
    applied actions are shape-based, so replaying a sequence never needs
    them). They default to the abstract entity argument tokens.
    """

    def __init__(
        self,
        grammar: AsdlGrammar | None = None,
        registry: PredicateRegistry | None = None,
        *,
        sketch: bool = False,
        var_names: tuple[str, ...] = ("x",),
        cui_tokens: Iterable[str] = ("@concept",),
        literal_tokens: Iterable[str] = ("'@measurement'", "'@temporal_ref'"),
    ):
        from lambdaehr.registry import default_registry

        self.grammar = grammar if grammar is not None else default_grammar()
        self.registry = (
            registry if registry is not None else default_registry()
        )
        self.sketch = sketch
        self.var_names = tuple(var_names)
        self.cui_tokens = tuple(sorted(cui_tokens))
        self.literal_tokens = tuple(sorted(literal_tokens))
        for prim in self.grammar.primitives:
            if prim not in PRIMITIVE_TYPES:
                raise DataError(f"unsupported primitive type {prim!r}")
        for name in ("Lambda", "Apply", "VarArg", "ConceptArg", "LitArg",
                     "TimeArg", "SubForm", "PhArg"):
            if name not in self.grammar.constructors:
                raise DataError(f"grammar is missing constructor {name!r}")

    # -- state basics

    def initial_state(self) -> DerivationState:
        return DerivationState()

    def _form_context(self, state: DerivationState) -> str:
        """Context of the open form slot: root, body, or subform."""
        if not state.frames:
            return _ROOT_CONTEXT
        frame = state.frames[-1]
        field = frame.current_field
        if frame.ctor.name == "Lambda" and field and field.name == "body":
            return _BODY_CONTEXT
        return _SUBFORM_CONTEXT

    # -- token legality (shape-based)

    def _pred_allowed(self, name: str, context: str) -> bool:
        if name not in self.registry:
            return False
        pred = self.registry.get(name)
        if context == _BODY_CONTEXT:
            return pred.arg_kinds[0] == VAR
        return pred.arg_kinds[0] == FORM

    @staticmethod
    def _is_quoted(token: str) -> bool:
        return (
            len(token) >= 2
            and token.startswith("'")
            and token.endswith("'")
            and "'" not in token[1:-1]
        )

    def _token_legal(self, prim: str, token: str, state: DerivationState) -> bool:
        if not token:
            return False
        if prim == "var":
            frame = state.frames[-1]
            if frame.ctor.name == "Lambda":
                return is_variable_name(token)
            return token in state.scope()
        if prim == "pred_name":
            frame = state.frames[-1]
            return self._pred_allowed(token, frame.context)
        if prim == "cui":
            return (
                not self._is_quoted(token)
                and not is_variable_name(token)
                and all(c.isalnum() or c in "_@" for c in token)
            )
        if prim == "literal":
            return self._is_quoted(token)
        if prim == "tf":
            return self.registry.is_time_frame_token(token)
        raise DataError(f"unsupported primitive type {prim!r}")

    # -- argument slots

    def _arg_slot_constructors(self, frame: _Frame) -> tuple[list[str], bool]:
        """Constructor names valid at the next args position of an Apply
        frame, plus whether Reduce may close the sequence now.
        """
        pred = self.registry.get(frame.values["pred"])
        pos = len(frame.values["args"])
        if pos < pred.arity:
            kind = pred.arg_kinds[pos]
            if kind == VAR:
                ctors = ["VarArg"]
            elif kind == CUI:
                ctors = ["PhArg"] if self.sketch else ["ConceptArg"]
            elif kind == LITERAL:
                ctors = ["PhArg"] if self.sketch else ["LitArg"]
            else:
                ctors = ["SubForm"]
            return ctors, False
        if pos == pred.arity:
            if pred.allows_time_frame:
                ctors = ["PhArg"] if self.sketch else ["TimeArg"]
                return ctors, True
            return [], True
        return [], True

    # -- applying actions

    def apply_action(
        self, state: DerivationState, action: Action
    ) -> DerivationState:
        if state.complete:
            raise IllegalAction("derivation is already complete")
        new = state.clone()
        if isinstance(action, ApplyConstr):
            self._apply_constr(new, action.name)
        elif isinstance(action, GenToken):
            self._apply_gen(new, action.token)
        elif isinstance(action, Reduce):
            self._apply_reduce(new)
        else:
            raise IllegalAction(f"not an action: {action!r}")
        return new

    def _apply_constr(self, state: DerivationState, name: str) -> None:
        ctor = self.grammar.constructors.get(name)
        if ctor is None:
            raise IllegalAction(f"unknown constructor {name!r}")
        if not state.frames:
            if ctor.type_name != self.grammar.root_type:
                raise IllegalAction(
                    f"{name} does not construct the root type"
                )
            context = _ROOT_CONTEXT
        else:
            frame = state.frames[-1]
            field = frame.current_field
            if field is None or not self.grammar.is_composite(field.type):
                raise IllegalAction(
                    f"no composite slot open for constructor {name}"
                )
            if ctor.type_name != field.type:
                raise IllegalAction(
                    f"{name} constructs {ctor.type_name!r}, slot wants "
                    f"{field.type!r}"
                )
            context = None
            if field.type == self.grammar.root_type:
                context = self._form_context(state)
                if context == _BODY_CONTEXT and name != "Apply":
                    raise IllegalAction(
                        "lambda bodies admit only predicate applications"
                    )
            if ctor.name in ("ConceptArg", "LitArg", "TimeArg"):
                if self.sketch:
                    raise IllegalAction(
                        f"{name} is not available when deriving sketches"
                    )
            if ctor.name == "PhArg" and not self.sketch:
                raise IllegalAction("PhArg is only available in sketches")
            if frame.ctor.name == "Apply" and field.name == "args":
                allowed, _ = self._arg_slot_constructors(frame)
                if name not in allowed:
                    raise IllegalAction(
                        f"{name} does not fit argument position "
                        f"{len(frame.values['args'])} of "
                        f"{frame.values['pred']}"
                    )
        state.frames.append(_Frame(ctor, context))
        self._cascade(state)

    def _apply_gen(self, state: DerivationState, token: str) -> None:
        if not state.frames:
            raise IllegalAction("no open primitive slot for a token")
        frame = state.frames[-1]
        field = frame.current_field
        if field is None or self.grammar.is_composite(field.type):
            raise IllegalAction("no open primitive slot for a token")
        if not self._token_legal(field.type, token, state):
            raise IllegalAction(
                f"token {token!r} does not fit a {field.type} slot"
            )
        frame.values[field.name] = token
        frame.field_idx += 1
        self._cascade(state)

    def _apply_reduce(self, state: DerivationState) -> None:
        if not state.frames:
            raise IllegalAction("nothing to reduce")
        frame = state.frames[-1]
        field = frame.current_field
        if field is None or not field.seq:
            raise IllegalAction("no open sequence field to reduce")
        count = len(frame.values[field.name])
        if frame.ctor.name == "Apply" and field.name == "args":
            _, may_close = self._arg_slot_constructors(frame)
            if not may_close:
                raise IllegalAction(
                    f"{frame.values['pred']} still needs arguments"
                )
        elif count < 1:
            raise IllegalAction("sequence fields must be non-empty")
        frame.field_idx += 1
        self._cascade(state)

    def _cascade(self, state: DerivationState) -> None:
        while state.frames and state.frames[-1].complete():
            node = state.frames.pop().to_node()
            if not state.frames:
                state.root = node
                return
            frame = state.frames[-1]
            field = frame.current_field
            if field.seq:
                frame.values[field.name].append(node)
            else:
                frame.values[field.name] = node
                frame.field_idx += 1

    # -- enumeration

    def valid_actions(self, state: DerivationState) -> list[Action]:
        """Exactly the actions apply_action would accept, enumerated from
        the configured token vocabularies. Deterministic order.
        """
        if state.complete:
            return []
        if not state.frames:
            return [
                ApplyConstr(c.name)
                for c in self.grammar.constructors_of(self.grammar.root_type)
            ]
        frame = state.frames[-1]
        field = frame.current_field
        actions: list[Action] = []
        if self.grammar.is_composite(field.type):
            if frame.ctor.name == "Apply" and field.name == "args":
                ctors, may_close = self._arg_slot_constructors(frame)
                actions.extend(ApplyConstr(c) for c in ctors)
                if may_close:
                    actions.append(REDUCE)
                return actions
            candidates = [
                c.name for c in self.grammar.constructors_of(field.type)
            ]
            if field.type == self.grammar.root_type:
                if self._form_context(state) == _BODY_CONTEXT:
                    candidates = [c for c in candidates if c == "Apply"]
            else:
                if self.sketch:
                    candidates = [
                        c for c in candidates
                        if c not in ("ConceptArg", "LitArg", "TimeArg")
                    ]
                else:
                    candidates = [c for c in candidates if c != "PhArg"]
            actions.extend(ApplyConstr(c) for c in candidates)
            if field.seq:
                done = len(frame.values[field.name]) >= 1
                if done:
                    actions.append(REDUCE)
            return actions
        # primitive slot
        if field.type == "var":
            if frame.ctor.name == "Lambda":
                tokens = self.var_names
            else:
                tokens = tuple(sorted(set(state.scope())))
        elif field.type == "pred_name":
            tokens = tuple(
                p.name
                for p in sorted(self.registry, key=lambda p: p.name)
                if self._pred_allowed(p.name, frame.context)
            )
        elif field.type == "cui":
            tokens = self.cui_tokens
        elif field.type == "literal":
            tokens = self.literal_tokens
        else:
            tokens = tuple(sorted(self.registry.time_frame_tokens))
        actions.extend(GenToken(t) for t in tokens)
        return actions

    # -- logical form <-> actions

    def lf_to_actions(self, lf: LogicalForm) -> list[Action]:
        """Depth-first, left-to-right derivation of `lf`, verified by
        replay before being returned.
        """
        actions: list[Action] = []

        def emit_form(node):
            if isinstance(node, Lambda):
                actions.append(ApplyConstr("Lambda"))
                actions.append(GenToken(node.var))
                for conj in _flatten_and(node.body):
                    emit_form(conj)
                actions.append(REDUCE)
            elif isinstance(node, Apply):
                actions.append(ApplyConstr("Apply"))
                actions.append(GenToken(node.pred))
                for arg in node.args:
                    emit_arg(arg)
                actions.append(REDUCE)
            else:
                raise NotDerivable(f"no form constructor covers {node!r}")

        def emit_arg(arg):
            if isinstance(arg, Var):
                actions.append(ApplyConstr("VarArg"))
                actions.append(GenToken(arg.name))
            elif isinstance(arg, Placeholder):
                actions.append(ApplyConstr("PhArg"))
            elif isinstance(arg, ConceptRef):
                actions.append(ApplyConstr("ConceptArg"))
                actions.append(GenToken(arg.cui))
            elif isinstance(arg, Literal):
                actions.append(ApplyConstr("LitArg"))
                actions.append(GenToken(f"'{arg.value}'"))
            elif isinstance(arg, TimeFrame):
                actions.append(ApplyConstr("TimeArg"))
                actions.append(GenToken(arg.token))
            elif isinstance(arg, (Lambda, Apply)):
                actions.append(ApplyConstr("SubForm"))
                emit_form(arg)
            else:
                raise NotDerivable(f"no argument constructor covers {arg!r}")

        emit_form(lf)
        try:
            ast = self.actions_to_ast(actions)
        except (IllegalAction, IncompleteDerivation) as exc:
            raise NotDerivable(str(exc)) from None
        if print_lf(self.ast_to_lf(ast)) != print_lf(lf):
            raise NotDerivable(
                "derivation does not reconstruct the input form"
            )
        return actions

    def actions_to_ast(self, actions: Iterable[Action]) -> AstNode:
        state = self.initial_state()
        index = -1
        for index, action in enumerate(actions):
            try:
                state = self.apply_action(state, action)
            except IllegalAction as exc:
                raise IllegalAction(str(exc), index=index) from None
        if not state.complete:
            raise IncompleteDerivation(
                f"derivation still open after {index + 1} action(s)"
            )
        return state.root

    def ast_to_lf(self, ast: AstNode) -> LogicalForm:
        """Total deterministic mapping from a complete derivation tree."""
        return _node_to_lf(ast)


def _node_to_lf(node: AstNode) -> LogicalForm:
    name = node.constructor
    if name == "Lambda":
        conjuncts = [_node_to_lf(child) for child in node["body"]]
        body = conjuncts[0]
        for conj in conjuncts[1:]:
            body = And(body, conj)
        return Lambda(node["binder"], body)
    if name == "Apply":
        return Apply(
            node["pred"], tuple(_node_to_lf(a) for a in node["args"])
        )
    if name == "VarArg":
        return Var(node["name"])
    if name == "ConceptArg":
        return ConceptRef(node["value"])
    if name == "LitArg":
        token = node["value"]
        return Literal(token[1:-1])
    if name == "TimeArg":
        return TimeFrame(node["value"])
    if name == "SubForm":
        return _node_to_lf(node["value"])
    if name == "PhArg":
        return PLACEHOLDER
    raise NotDerivable(f"unknown constructor {name!r}")
