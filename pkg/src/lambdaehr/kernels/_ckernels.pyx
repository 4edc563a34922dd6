# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, language_level=3
"""C backend for the neural-parser kernels.

Implements the same ten functions as lambdaehr.kernels._numpy with the
inner loops written out; see that module for the shared conventions.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh

cnp.import_array()


cdef inline double _sig(double v) noexcept nogil:
    cdef double e
    if v >= 0.0:
        return 1.0 / (1.0 + exp(-v))
    e = exp(v)
    return e / (1.0 + e)


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def lstm_cell_forward(x, h_prev, c_prev, wx, wh, b):
    """One LSTM step. Returns (h, c, gates) with gates the (4H,)
    post-activation vector [i, f, g, o]."""
    cdef double[::1] xv = _f64(x)
    cdef double[::1] hpv = _f64(h_prev)
    cdef double[::1] cpv = _f64(c_prev)
    cdef double[:, ::1] wxv = _f64(wx)
    cdef double[:, ::1] whv = _f64(wh)
    cdef double[::1] bv = _f64(b)
    cdef Py_ssize_t D = xv.shape[0]
    cdef Py_ssize_t H = hpv.shape[0]
    h_out = np.empty(H)
    c_out = np.empty(H)
    gates = np.empty(4 * H)
    cdef double[::1] hv = h_out
    cdef double[::1] cv = c_out
    cdef double[::1] gv = gates
    pre_arr = np.empty(4 * H)
    cdef double[::1] pre = pre_arr
    cdef Py_ssize_t r, j, k
    cdef double acc, ig, fg, gg, og, cc
    with nogil:
        for r in range(4 * H):
            acc = bv[r]
            for j in range(D):
                acc += wxv[r, j] * xv[j]
            for j in range(H):
                acc += whv[r, j] * hpv[j]
            pre[r] = acc
        for k in range(H):
            ig = _sig(pre[k])
            fg = _sig(pre[H + k])
            gg = tanh(pre[2 * H + k])
            og = _sig(pre[3 * H + k])
            cc = fg * cpv[k] + ig * gg
            gv[k] = ig
            gv[H + k] = fg
            gv[2 * H + k] = gg
            gv[3 * H + k] = og
            cv[k] = cc
            hv[k] = og * tanh(cc)
    return h_out, c_out, gates


def lstm_cell_backward(x, h_prev, c_prev, wx, wh, gates, c, dh, dc):
    """Backward of one step. Returns (dx, dh_prev, dc_prev, dwx, dwh,
    db)."""
    cdef double[::1] xv = _f64(x)
    cdef double[::1] hpv = _f64(h_prev)
    cdef double[::1] cpv = _f64(c_prev)
    cdef double[:, ::1] wxv = _f64(wx)
    cdef double[:, ::1] whv = _f64(wh)
    cdef double[::1] gv = _f64(gates)
    cdef double[::1] cv = _f64(c)
    cdef double[::1] dhv = _f64(dh)
    cdef double[::1] dcv = _f64(dc)
    cdef Py_ssize_t D = xv.shape[0]
    cdef Py_ssize_t H = hpv.shape[0]
    dx = np.empty(D)
    dhp = np.empty(H)
    dcp = np.empty(H)
    dwx = np.zeros((4 * H, D))
    dwh = np.zeros((4 * H, H))
    da = np.empty(4 * H)
    cdef double[::1] dxv = dx
    cdef double[::1] dhpv = dhp
    cdef double[::1] dcpv = dcp
    cdef double[:, ::1] dwxv = dwx
    cdef double[:, ::1] dwhv = dwh
    cdef double[::1] dav = da
    cdef Py_ssize_t r, j, k
    cdef double acc, ig, fg, gg, og, tc, do_, dcell, di, df, dg
    with nogil:
        for k in range(H):
            ig = gv[k]
            fg = gv[H + k]
            gg = gv[2 * H + k]
            og = gv[3 * H + k]
            tc = tanh(cv[k])
            do_ = dhv[k] * tc
            dcell = dcv[k] + dhv[k] * og * (1.0 - tc * tc)
            di = dcell * gg
            df = dcell * cpv[k]
            dg = dcell * ig
            dcpv[k] = dcell * fg
            dav[k] = di * ig * (1.0 - ig)
            dav[H + k] = df * fg * (1.0 - fg)
            dav[2 * H + k] = dg * (1.0 - gg * gg)
            dav[3 * H + k] = do_ * og * (1.0 - og)
        for j in range(D):
            acc = 0.0
            for r in range(4 * H):
                acc += wxv[r, j] * dav[r]
            dxv[j] = acc
        for k in range(H):
            acc = 0.0
            for r in range(4 * H):
                acc += whv[r, k] * dav[r]
            dhpv[k] = acc
        for r in range(4 * H):
            for j in range(D):
                dwxv[r, j] = dav[r] * xv[j]
            for k in range(H):
                dwhv[r, k] = dav[r] * hpv[k]
    return dx, dhp, dcp, dwx, dwh, da


def lstm_seq_forward(x, h0, c0, wx, wh, b):
    """Run the cell over a (T, d) input sequence. Returns (hs, cs,
    gates) stacked along the first axis; T must be >= 1."""
    cdef double[:, ::1] xv = _f64(x)
    cdef double[::1] h0v = _f64(h0)
    cdef double[::1] c0v = _f64(c0)
    cdef double[:, ::1] wxv = _f64(wx)
    cdef double[:, ::1] whv = _f64(wh)
    cdef double[::1] bv = _f64(b)
    cdef Py_ssize_t T = xv.shape[0]
    cdef Py_ssize_t D = xv.shape[1]
    cdef Py_ssize_t H = h0v.shape[0]
    hs = np.empty((T, H))
    cs = np.empty((T, H))
    gates = np.empty((T, 4 * H))
    cdef double[:, ::1] hsv = hs
    cdef double[:, ::1] csv = cs
    cdef double[:, ::1] gv = gates
    scratch = np.empty(4 * H)
    hbuf = np.array(h0, dtype=np.float64)
    cbuf = np.array(c0, dtype=np.float64)
    cdef double[::1] pre = scratch
    cdef double[::1] hv = hbuf
    cdef double[::1] cv = cbuf
    cdef Py_ssize_t t, r, j, k
    cdef double acc, ig, fg, gg, og, cc
    with nogil:
        for t in range(T):
            for r in range(4 * H):
                acc = bv[r]
                for j in range(D):
                    acc += wxv[r, j] * xv[t, j]
                for j in range(H):
                    acc += whv[r, j] * hv[j]
                pre[r] = acc
            for k in range(H):
                ig = _sig(pre[k])
                fg = _sig(pre[H + k])
                gg = tanh(pre[2 * H + k])
                og = _sig(pre[3 * H + k])
                cc = fg * cv[k] + ig * gg
                gv[t, k] = ig
                gv[t, H + k] = fg
                gv[t, 2 * H + k] = gg
                gv[t, 3 * H + k] = og
                csv[t, k] = cc
                hsv[t, k] = og * tanh(cc)
            for k in range(H):
                hv[k] = hsv[t, k]
                cv[k] = csv[t, k]
    return hs, cs, gates


def lstm_seq_backward(x, h0, c0, wx, wh, hs, cs, gates, dhs,
                      dh_last, dc_last):
    """Backward over a whole sequence. Returns (dx, dh0, dc0, dwx,
    dwh, db)."""
    cdef double[:, ::1] xv = _f64(x)
    cdef double[::1] h0v = _f64(h0)
    cdef double[::1] c0v = _f64(c0)
    cdef double[:, ::1] wxv = _f64(wx)
    cdef double[:, ::1] whv = _f64(wh)
    cdef double[:, ::1] hsv = _f64(hs)
    cdef double[:, ::1] csv = _f64(cs)
    cdef double[:, ::1] gv = _f64(gates)
    cdef double[:, ::1] dhsv = _f64(dhs)
    cdef Py_ssize_t T = xv.shape[0]
    cdef Py_ssize_t D = xv.shape[1]
    cdef Py_ssize_t H = h0v.shape[0]
    dx = np.empty((T, D))
    dwx = np.zeros((4 * H, D))
    dwh = np.zeros((4 * H, H))
    db = np.zeros(4 * H)
    dh = np.array(dh_last, dtype=np.float64)
    dc = np.array(dc_last, dtype=np.float64)
    da = np.empty(4 * H)
    cdef double[:, ::1] dxv = dx
    cdef double[:, ::1] dwxv = dwx
    cdef double[:, ::1] dwhv = dwh
    cdef double[::1] dbv = db
    cdef double[::1] dhv = dh
    cdef double[::1] dcv = dc
    cdef double[::1] dav = da
    cdef Py_ssize_t t, r, j, k
    cdef double acc, ig, fg, gg, og, tc, do_, dcell, di, df, dg, cprev
    with nogil:
        for t in range(T - 1, -1, -1):
            for k in range(H):
                dhv[k] += dhsv[t, k]
            for k in range(H):
                ig = gv[t, k]
                fg = gv[t, H + k]
                gg = gv[t, 2 * H + k]
                og = gv[t, 3 * H + k]
                tc = tanh(csv[t, k])
                do_ = dhv[k] * tc
                dcell = dcv[k] + dhv[k] * og * (1.0 - tc * tc)
                cprev = csv[t - 1, k] if t > 0 else c0v[k]
                di = dcell * gg
                df = dcell * cprev
                dg = dcell * ig
                dcv[k] = dcell * fg
                dav[k] = di * ig * (1.0 - ig)
                dav[H + k] = df * fg * (1.0 - fg)
                dav[2 * H + k] = dg * (1.0 - gg * gg)
                dav[3 * H + k] = do_ * og * (1.0 - og)
            for j in range(D):
                acc = 0.0
                for r in range(4 * H):
                    acc += wxv[r, j] * dav[r]
                dxv[t, j] = acc
            for k in range(H):
                acc = 0.0
                for r in range(4 * H):
                    acc += whv[r, k] * dav[r]
                dhv[k] = acc
            for r in range(4 * H):
                dbv[r] += dav[r]
                for j in range(D):
                    dwxv[r, j] += dav[r] * xv[t, j]
                for k in range(H):
                    dwhv[r, k] += dav[r] * (
                        hsv[t - 1, k] if t > 0 else h0v[k]
                    )
    return dx, dh, dc, dwx, dwh, db


def attention_forward(query, keys, wa):
    """Bilinear attention: weights = softmax(keys @ (wa @ query)),
    context = weights @ keys. Returns (context, weights)."""
    cdef double[::1] qv = _f64(query)
    cdef double[:, ::1] kv = _f64(keys)
    cdef double[:, ::1] wav = _f64(wa)
    cdef Py_ssize_t S = kv.shape[0]
    cdef Py_ssize_t H = kv.shape[1]
    ctx = np.zeros(H)
    weights = np.empty(S)
    u_arr = np.empty(H)
    cdef double[::1] cv = ctx
    cdef double[::1] wv = weights
    cdef double[::1] uv = u_arr
    cdef Py_ssize_t s, j, k
    cdef double acc, m, tot
    with nogil:
        for k in range(H):
            acc = 0.0
            for j in range(H):
                acc += wav[k, j] * qv[j]
            uv[k] = acc
        m = -1e308
        for s in range(S):
            acc = 0.0
            for j in range(H):
                acc += kv[s, j] * uv[j]
            wv[s] = acc
            if acc > m:
                m = acc
        tot = 0.0
        for s in range(S):
            wv[s] = exp(wv[s] - m)
            tot += wv[s]
        for s in range(S):
            wv[s] /= tot
            for j in range(H):
                cv[j] += wv[s] * kv[s, j]
    return ctx, weights


def attention_backward(query, keys, wa, weights, dcontext, dweights):
    """Backward of attention_forward. Returns (dquery, dkeys, dwa)."""
    cdef double[::1] qv = _f64(query)
    cdef double[:, ::1] kv = _f64(keys)
    cdef double[:, ::1] wav = _f64(wa)
    cdef double[::1] wv = _f64(weights)
    cdef double[::1] dcv = _f64(dcontext)
    cdef double[::1] dwv = _f64(dweights)
    cdef Py_ssize_t S = kv.shape[0]
    cdef Py_ssize_t H = kv.shape[1]
    dq = np.empty(H)
    dkeys = np.empty((S, H))
    dwa = np.empty((H, H))
    u_arr = np.empty(H)
    du_arr = np.zeros(H)
    ds_arr = np.empty(S)
    cdef double[::1] dqv = dq
    cdef double[:, ::1] dkv = dkeys
    cdef double[:, ::1] dwav = dwa
    cdef double[::1] uv = u_arr
    cdef double[::1] duv = du_arr
    cdef double[::1] dsv = ds_arr
    cdef Py_ssize_t s, j, k
    cdef double acc, dot
    with nogil:
        for k in range(H):
            acc = 0.0
            for j in range(H):
                acc += wav[k, j] * qv[j]
            uv[k] = acc
        # dalpha_s = keys_s . dcontext + dweights_s, stored in dsv
        dot = 0.0
        for s in range(S):
            acc = dwv[s]
            for j in range(H):
                acc += kv[s, j] * dcv[j]
            dsv[s] = acc
            dot += wv[s] * acc
        for s in range(S):
            dsv[s] = wv[s] * (dsv[s] - dot)
        for s in range(S):
            for j in range(H):
                duv[j] += dsv[s] * kv[s, j]
                dkv[s, j] = dsv[s] * uv[j] + wv[s] * dcv[j]
        for k in range(H):
            for j in range(H):
                dwav[k, j] = duv[k] * qv[j]
            acc = 0.0
            for j in range(H):
                acc += wav[j, k] * duv[j]
            dqv[k] = acc
    return dq, dkeys, dwa


def softmax(scores):
    cdef double[::1] sv = _f64(scores)
    cdef Py_ssize_t n = sv.shape[0]
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    cdef double m, tot
    with nogil:
        m = sv[0]
        for i in range(1, n):
            if sv[i] > m:
                m = sv[i]
        tot = 0.0
        for i in range(n):
            ov[i] = exp(sv[i] - m)
            tot += ov[i]
        for i in range(n):
            ov[i] /= tot
    return out


def masked_softmax(scores, mask):
    """Softmax restricted to mask != 0; masked-out entries are exactly
    zero in the result."""
    cdef double[::1] sv = _f64(scores)
    keep_arr = np.asarray(mask, dtype=bool).astype(np.uint8)
    cdef unsigned char[::1] mk = np.ascontiguousarray(keep_arr)
    cdef Py_ssize_t n = sv.shape[0]
    if mk.shape[0] != n:
        raise ValueError("mask shape does not match scores")
    out = np.zeros(n)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    cdef double m, tot
    cdef int seen = 0
    with nogil:
        m = 0.0
        for i in range(n):
            if mk[i]:
                if not seen or sv[i] > m:
                    m = sv[i]
                seen = 1
    if not seen:
        raise ValueError("mask admits no entries")
    with nogil:
        tot = 0.0
        for i in range(n):
            if mk[i]:
                ov[i] = exp(sv[i] - m)
                tot += ov[i]
        for i in range(n):
            if mk[i]:
                ov[i] /= tot
    return out


def softmax_xent(logits, target):
    """Cross-entropy of one-hot `target` under softmax(logits),
    computed in log space. Returns (loss, probs)."""
    cdef double[::1] lv = _f64(logits)
    cdef Py_ssize_t n = lv.shape[0]
    cdef Py_ssize_t tgt = int(target)
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    cdef double m, tot, lse
    with nogil:
        m = lv[0]
        for i in range(1, n):
            if lv[i] > m:
                m = lv[i]
        tot = 0.0
        for i in range(n):
            tot += exp(lv[i] - m)
        lse = m + log(tot)
        for i in range(n):
            ov[i] = exp(lv[i] - lse)
    return lse - lv[tgt], out


def masked_softmax_xent(logits, mask, target):
    """Masked variant; the target index must be admitted by the mask."""
    cdef double[::1] lv = _f64(logits)
    keep_arr = np.asarray(mask, dtype=bool).astype(np.uint8)
    cdef unsigned char[::1] mk = np.ascontiguousarray(keep_arr)
    cdef Py_ssize_t n = lv.shape[0]
    cdef Py_ssize_t tgt = int(target)
    if mk.shape[0] != n:
        raise ValueError("mask shape does not match logits")
    if not mk[tgt]:
        raise ValueError(f"target index {int(target)} is masked out")
    out = np.zeros(n)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    cdef double m, tot, lse
    cdef int seen = 0
    with nogil:
        m = 0.0
        for i in range(n):
            if mk[i]:
                if not seen or lv[i] > m:
                    m = lv[i]
                seen = 1
        tot = 0.0
        for i in range(n):
            if mk[i]:
                tot += exp(lv[i] - m)
        lse = m + log(tot)
        for i in range(n):
            if mk[i]:
                ov[i] = exp(lv[i] - lse)
    return lse - lv[tgt], out
