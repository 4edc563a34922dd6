"""Finite-difference verification of the analytic gradients.

Central differences around the current parameters, compared against one
analytic backward pass on the same example. The relative error uses a
floor in the denominator so near-zero gradients do not inflate it.
"""

from __future__ import annotations

import numpy as np


def gradient_check(
    model,
    record: dict,
    *,
    samples: int = 200,
    step: float = 1e-5,
    seed: int = 0,
    corruption: float = 0.0,
) -> float:
    """Maximum relative error over `samples` randomly chosen parameters.

    `corruption` shifts every sampled analytic gradient by a constant;
    nonzero values exist so tests can confirm the check actually detects
    wrong gradients.
    """
    prepared = model.prepare(record)
    base = model.loss(prepared)
    if not np.isfinite(base):
        raise ValueError(f"loss is not finite at the current parameters: {base}")
    _, grads, _ = model.loss_and_grads(prepared, training=False)

    names = list(model.params)
    sizes = [model.params[n].size for n in names]
    offsets = np.cumsum([0] + sizes)
    total = int(offsets[-1])
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=min(samples, total), replace=False)

    worst = 0.0
    for flat in sorted(int(v) for v in chosen):
        slot = int(np.searchsorted(offsets, flat, side="right")) - 1
        name = names[slot]
        pos = flat - int(offsets[slot])
        view = model.params[name].reshape(-1)
        original = view[pos]
        view[pos] = original + step
        high = model.loss(prepared)
        view[pos] = original - step
        low = model.loss(prepared)
        view[pos] = original
        numeric = (high - low) / (2.0 * step)
        analytic = grads[name].reshape(-1)[pos] + corruption
        if analytic == 0.0 and numeric == 0.0:
            continue
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-4)
        worst = max(worst, err)
    return worst
