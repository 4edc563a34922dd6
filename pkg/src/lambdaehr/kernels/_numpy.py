"""Pure-numpy backend for the neural-parser kernels.

Conventions shared with the C backend:

- float64 everywhere; inputs are never mutated.
- LSTM gate blocks are stacked in (input, forget, cell, output) order,
  so weight matrices are (4H, fan_in) and bias vectors (4H,).
- Forward passes return the activations a backward pass needs; callers
  hold on to them instead of the kernels keeping state.
"""

import numpy as np


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _sigmoid(x):
    # Branch on sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _gates(pre, h):
    i = _sigmoid(pre[:h])
    f = _sigmoid(pre[h:2 * h])
    g = np.tanh(pre[2 * h:3 * h])
    o = _sigmoid(pre[3 * h:])
    return i, f, g, o


def lstm_cell_forward(x, h_prev, c_prev, wx, wh, b):
    """One LSTM step. Returns (h, c, gates) with gates the (4H,)
    post-activation vector [i, f, g, o]."""
    x, h_prev, c_prev, wx, wh, b = map(
        _f64, (x, h_prev, c_prev, wx, wh, b)
    )
    hsz = h_prev.shape[0]
    pre = wx @ x + wh @ h_prev + b
    i, f, g, o = _gates(pre, hsz)
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, np.concatenate([i, f, g, o])


def lstm_cell_backward(x, h_prev, c_prev, wx, wh, gates, c, dh, dc):
    """Backward of one step. `gates` and `c` are the forward outputs;
    `dh`/`dc` are the upstream gradients on h and c. Returns
    (dx, dh_prev, dc_prev, dwx, dwh, db)."""
    x, h_prev, c_prev, wx, wh, gates, c, dh, dc = map(
        _f64, (x, h_prev, c_prev, wx, wh, gates, c, dh, dc)
    )
    hsz = h_prev.shape[0]
    i = gates[:hsz]
    f = gates[hsz:2 * hsz]
    g = gates[2 * hsz:3 * hsz]
    o = gates[3 * hsz:]
    tc = np.tanh(c)
    do = dh * tc
    dcell = dc + dh * o * (1.0 - tc * tc)
    di = dcell * g
    df = dcell * c_prev
    dg = dcell * i
    dc_prev = dcell * f
    da = np.concatenate([
        di * i * (1.0 - i),
        df * f * (1.0 - f),
        dg * (1.0 - g * g),
        do * o * (1.0 - o),
    ])
    dx = wx.T @ da
    dh_prev = wh.T @ da
    dwx = np.outer(da, x)
    dwh = np.outer(da, h_prev)
    return dx, dh_prev, dc_prev, dwx, dwh, da


def lstm_seq_forward(x, h0, c0, wx, wh, b):
    """Run the cell over a (T, d) input sequence. Returns (hs, cs,
    gates) stacked along the first axis; T must be >= 1."""
    x, h0, c0, wx, wh, b = map(_f64, (x, h0, c0, wx, wh, b))
    steps = x.shape[0]
    hsz = h0.shape[0]
    hs = np.empty((steps, hsz))
    cs = np.empty((steps, hsz))
    gates = np.empty((steps, 4 * hsz))
    h, c = h0, c0
    for t in range(steps):
        pre = wx @ x[t] + wh @ h + b
        i, f, g, o = _gates(pre, hsz)
        c = f * c + i * g
        h = o * np.tanh(c)
        hs[t] = h
        cs[t] = c
        gates[t, :hsz] = i
        gates[t, hsz:2 * hsz] = f
        gates[t, 2 * hsz:3 * hsz] = g
        gates[t, 3 * hsz:] = o
    return hs, cs, gates


def lstm_seq_backward(x, h0, c0, wx, wh, hs, cs, gates, dhs,
                      dh_last, dc_last):
    """Backward over a whole sequence. `dhs` carries per-step gradients
    on hs; `dh_last`/`dc_last` add gradient on the final state. Returns
    (dx, dh0, dc0, dwx, dwh, db)."""
    x, h0, c0, wx, wh, hs, cs, gates, dhs, dh_last, dc_last = map(
        _f64,
        (x, h0, c0, wx, wh, hs, cs, gates, dhs, dh_last, dc_last),
    )
    steps = x.shape[0]
    dx = np.zeros_like(x)
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(wx.shape[0])
    dh = dh_last.copy()
    dc = dc_last.copy()
    for t in range(steps - 1, -1, -1):
        h_prev = hs[t - 1] if t > 0 else h0
        c_prev = cs[t - 1] if t > 0 else c0
        dxt, dh, dc, dwx_t, dwh_t, da = lstm_cell_backward(
            x[t], h_prev, c_prev, wx, wh, gates[t], cs[t],
            dh + dhs[t], dc,
        )
        dx[t] = dxt
        dwx += dwx_t
        dwh += dwh_t
        db += da
    return dx, dh, dc, dwx, dwh, db


def attention_forward(query, keys, wa):
    """Bilinear attention: weights = softmax(keys @ (wa @ query)),
    context = weights @ keys. Returns (context, weights)."""
    query, keys, wa = map(_f64, (query, keys, wa))
    u = wa @ query
    weights = softmax(keys @ u)
    return weights @ keys, weights


def attention_backward(query, keys, wa, weights, dcontext, dweights):
    """Backward of attention_forward. `dweights` is the gradient
    arriving directly on the weights (zero when the weights feed
    nothing but the context). Returns (dquery, dkeys, dwa)."""
    query, keys, wa, weights, dcontext, dweights = map(
        _f64, (query, keys, wa, weights, dcontext, dweights)
    )
    u = wa @ query
    dalpha = keys @ dcontext + dweights
    ds = weights * (dalpha - float(weights @ dalpha))
    du = keys.T @ ds
    dkeys = np.outer(ds, u) + np.outer(weights, dcontext)
    dwa = np.outer(du, query)
    dquery = wa.T @ du
    return dquery, dkeys, dwa


def softmax(scores):
    scores = _f64(scores)
    e = np.exp(scores - scores.max())
    return e / e.sum()


def masked_softmax(scores, mask):
    """Softmax restricted to mask != 0; masked-out entries are exactly
    zero in the result."""
    scores = _f64(scores)
    keep = np.asarray(mask, dtype=bool)
    if keep.shape != scores.shape:
        raise ValueError("mask shape does not match scores")
    if not keep.any():
        raise ValueError("mask admits no entries")
    out = np.zeros_like(scores)
    sub = scores[keep]
    e = np.exp(sub - sub.max())
    out[keep] = e / e.sum()
    return out


def softmax_xent(logits, target):
    """Cross-entropy of one-hot `target` under softmax(logits),
    computed in log space. Returns (loss, probs); the gradient on the
    logits is probs minus the one-hot target."""
    logits = _f64(logits)
    m = logits.max()
    lse = m + np.log(np.exp(logits - m).sum())
    return lse - logits[int(target)], np.exp(logits - lse)


def masked_softmax_xent(logits, mask, target):
    """Masked variant; the target index must be admitted by the mask."""
    logits = _f64(logits)
    keep = np.asarray(mask, dtype=bool)
    if keep.shape != logits.shape:
        raise ValueError("mask shape does not match logits")
    target = int(target)
    if not keep[target]:
        raise ValueError(f"target index {target} is masked out")
    sub = logits[keep]
    m = sub.max()
    lse = m + np.log(np.exp(sub - m).sum())
    probs = np.zeros_like(logits)
    probs[keep] = np.exp(logits[keep] - lse)
    return lse - logits[target], probs
