"""Numerical kernels behind the neural parsers.

Two interchangeable backends implement the same ten functions: a C
extension with the hot loops written out, and a pure-numpy fallback.
The choice is made once at import time. Set LAMBDAEHR_BACKEND to "c" or
"numpy" to force one; unset (or "auto"), the extension is used when it
compiled and numpy otherwise.

All kernels take and return float64 arrays, never mutate their inputs,
and are deterministic. Results of the two backends agree to rounding
error but not bit-for-bit, so reproducibility guarantees elsewhere in
the package hold per backend.
"""

import os

_NAMES = (
    "lstm_seq_forward",
    "lstm_seq_backward",
    "lstm_cell_forward",
    "lstm_cell_backward",
    "attention_forward",
    "attention_backward",
    "softmax",
    "masked_softmax",
    "softmax_xent",
    "masked_softmax_xent",
)

__all__ = list(_NAMES) + ["BACKEND", "available_backends"]


def _load(name):
    if name == "c":
        from lambdaehr.kernels import _ckernels as impl
    else:
        from lambdaehr.kernels import _numpy as impl
    return impl


def available_backends() -> tuple[str, ...]:
    """Backends importable in this installation, preferred first."""
    out = []
    try:
        _load("c")
        out.append("c")
    except ImportError:
        pass
    out.append("numpy")
    return tuple(out)


_choice = os.environ.get("LAMBDAEHR_BACKEND", "auto").strip().lower() or "auto"
if _choice == "auto":
    try:
        _impl = _load("c")
        BACKEND = "c"
    except ImportError:
        _impl = _load("numpy")
        BACKEND = "numpy"
elif _choice in ("c", "numpy"):
    _impl = _load(_choice)
    BACKEND = _choice
else:
    raise ValueError(
        "LAMBDAEHR_BACKEND must be 'c', 'numpy', or 'auto', "
        f"got {_choice!r}"
    )

for _name in _NAMES:
    globals()[_name] = getattr(_impl, _name)
del _name
