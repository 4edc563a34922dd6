"""Predicate registry: names, arities, and argument signatures.

The registry is the single source of truth for which predicate names are
valid, how many arguments each takes, whether a trailing implicit time
frame is permitted, and what kind of value each argument position accepts.
Sixteen builtin predicates are always present; more load from a config
file (one predicate per line, tab-separated).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from lambdaehr.errors import DataError, UnknownPredicate

# Argument kinds. VAR is a bound variable, CUI a concept identifier,
# LITERAL a quoted string, FORM a nested sub-form (lambda or application).
VAR = "var"
CUI = "cui"
LITERAL = "literal"
FORM = "form"

ARG_KINDS = (VAR, CUI, LITERAL, FORM)

RESULT_CATEGORIES = ("set", "scalar", "boolean", "attribute")

# Environment variable naming an extra registry config file.
REGISTRY_ENV_VAR = "LAMBDAEHR_REGISTRY"

# Implicit-time-frame tokens permitted as a trailing argument.
DEFAULT_TIME_FRAME_TOKENS = ("visit",)


@dataclass(frozen=True)
class Predicate:
    """Signature of one predicate.

    `arity` excludes the optional trailing time frame. `arg_kinds` has one
    entry per argument position.
    """

    name: str
    arity: int
    allows_time_frame: bool
    result_category: str
    arg_kinds: tuple[str, ...]

    def __post_init__(self):
        if not self.name:
            raise DataError("predicate name must be non-empty")
        if self.arity < 1:
            raise DataError(f"predicate {self.name!r}: arity must be >= 1")
        if self.result_category not in RESULT_CATEGORIES:
            raise DataError(
                f"predicate {self.name!r}: bad result category "
                f"{self.result_category!r}"
            )
        if len(self.arg_kinds) != self.arity:
            raise DataError(
                f"predicate {self.name!r}: {len(self.arg_kinds)} argument "
                f"kind(s) for arity {self.arity}"
            )
        for kind in self.arg_kinds:
            if kind not in ARG_KINDS:
                raise DataError(
                    f"predicate {self.name!r}: bad argument kind {kind!r}"
                )

    @property
    def is_body_predicate(self) -> bool:
        """True if this predicate conjoins inside a lambda body."""
        return self.arg_kinds[0] == VAR

    @property
    def is_wrapper(self) -> bool:
        """True if this predicate wraps a sub-form (aggregation style)."""
        return self.arg_kinds == (FORM,)


def _default_arg_kinds(arity: int) -> tuple[str, ...]:
    if arity == 1:
        return (FORM,)
    return (VAR,) + (LITERAL,) * (arity - 1)


def _builtin(name, arity, allows_tf, category, kinds) -> Predicate:
    return Predicate(name, arity, allows_tf, category, kinds)


BUILTIN_PREDICATES = (
    _builtin("has_concept", 2, True, "set", (VAR, CUI)),
    _builtin("time_within", 2, True, "set", (VAR, LITERAL)),
    _builtin("less_than", 2, False, "boolean", (VAR, LITERAL)),
    _builtin("sum", 1, False, "scalar", (FORM,)),
    _builtin("count", 1, False, "scalar", (FORM,)),
    _builtin("latest", 1, False, "scalar", (FORM,)),
    _builtin("earliest", 1, False, "scalar", (FORM,)),
    _builtin("delta", 1, False, "boolean", (FORM,)),
    _builtin("is_negative", 1, False, "boolean", (FORM,)),
    _builtin("is_positive", 1, False, "boolean", (FORM,)),
    _builtin("is_healed", 1, False, "boolean", (FORM,)),
    _builtin("is_decreasing", 1, False, "boolean", (FORM,)),
    _builtin("reason", 1, False, "attribute", (FORM,)),
    _builtin("location", 1, False, "attribute", (FORM,)),
    _builtin("time", 1, False, "attribute", (FORM,)),
    _builtin("dose", 1, False, "attribute", (FORM,)),
)

BUILTIN_NAMES = frozenset(p.name for p in BUILTIN_PREDICATES)


class PredicateRegistry:
    """Immutable predicate table. The builtins are always present."""

    def __init__(
        self,
        extra: tuple[Predicate, ...] | list[Predicate] = (),
        time_frame_tokens: tuple[str, ...] = DEFAULT_TIME_FRAME_TOKENS,
    ):
        table: dict[str, Predicate] = {p.name: p for p in BUILTIN_PREDICATES}
        for pred in extra:
            existing = table.get(pred.name)
            if existing is not None and existing != pred:
                raise DataError(
                    f"predicate {pred.name!r} redefined with a different "
                    f"signature"
                )
            table[pred.name] = pred
        self._table = table
        self._time_frame_tokens = frozenset(time_frame_tokens)

    def __contains__(self, name: str) -> bool:
        return name in self._table

    def __len__(self) -> int:
        return len(self._table)

    def __iter__(self):
        return iter(self._table.values())

    def get(self, name: str) -> Predicate:
        try:
            return self._table[name]
        except KeyError:
            raise UnknownPredicate(name) from None

    def names(self) -> list[str]:
        return sorted(self._table)

    def body_predicates(self) -> list[Predicate]:
        return [p for p in self if p.is_body_predicate]

    def wrapper_predicates(self) -> list[Predicate]:
        return [p for p in self if p.is_wrapper]

    @property
    def time_frame_tokens(self) -> frozenset[str]:
        return self._time_frame_tokens

    def is_time_frame_token(self, token: str) -> bool:
        return token in self._time_frame_tokens

    def to_dict(self) -> dict:
        """JSON-ready description: the non-builtin rows plus the
        time-frame tokens. `from_dict` rebuilds an equal registry."""
        builtin = {p.name: p for p in BUILTIN_PREDICATES}
        extra = [
            [
                p.name,
                p.arity,
                p.allows_time_frame,
                p.result_category,
                list(p.arg_kinds),
            ]
            for p in sorted(self, key=lambda p: p.name)
            if builtin.get(p.name) != p
        ]
        return {
            "extra": extra,
            "time_frame_tokens": sorted(self._time_frame_tokens),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PredicateRegistry":
        extra = [
            Predicate(name, arity, allows_tf, category, tuple(kinds))
            for name, arity, allows_tf, category, kinds in payload["extra"]
        ]
        return cls(
            extra,
            time_frame_tokens=tuple(payload["time_frame_tokens"]),
        )

    @classmethod
    def from_file(
        cls,
        path: str,
        time_frame_tokens: tuple[str, ...] = DEFAULT_TIME_FRAME_TOKENS,
    ) -> "PredicateRegistry":
        """Load `name<TAB>arity<TAB>allows_time_frame<TAB>result_category`
        lines, with an optional fifth column of comma-separated argument
        kinds. Blank lines and `#` comments are skipped. Without the fifth
        column, arity-1 predicates get (form,) and higher arities get
        (var, literal, ...).
        """
        extra = []
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) not in (4, 5):
                    raise DataError(
                        f"{path}:{lineno}: expected 4 or 5 tab-separated "
                        f"fields, got {len(parts)}"
                    )
                name = parts[0]
                try:
                    arity = int(parts[1])
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: arity must be an integer"
                    ) from None
                if parts[2] not in ("0", "1"):
                    raise DataError(
                        f"{path}:{lineno}: allows_time_frame must be 0 or 1"
                    )
                allows_tf = parts[2] == "1"
                category = parts[3]
                if len(parts) == 5:
                    kinds = tuple(k.strip() for k in parts[4].split(","))
                else:
                    kinds = _default_arg_kinds(arity)
                try:
                    extra.append(
                        Predicate(name, arity, allows_tf, category, kinds)
                    )
                except DataError as exc:
                    raise DataError(f"{path}:{lineno}: {exc}") from None
        return cls(extra, time_frame_tokens=time_frame_tokens)

    @classmethod
    def load(cls, path: str | None = None) -> "PredicateRegistry":
        """Build the active registry: builtins plus the config file named
        by `path` or by the LAMBDAEHR_REGISTRY environment variable.
        """
        if path is None:
            path = os.environ.get(REGISTRY_ENV_VAR)
        if path:
            return cls.from_file(path)
        return cls()


_DEFAULT_REGISTRY = PredicateRegistry()


def default_registry() -> PredicateRegistry:
    """The builtin-only registry (ignores the environment variable)."""
    return _DEFAULT_REGISTRY
