"""Greedy and beam decoding from a trained model to a logical form.

Three search drivers share one hypothesis layout: direct mode searches
over logical-form text tokens, sketch mode runs two chained token
searches (sketch, then detail slots), and grammar mode searches over
action lines with a legality mask applied at every step. Scores are
summed token log-probabilities with no length normalisation; ties break
toward the expansion of the higher-ranked parent, which keeps results
deterministic for a fixed model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from lambdaehr.errors import BeamExhausted, LambdaEhrError
from lambdaehr.grammar import line_to_action
from lambdaehr.lf import parse_lf, print_lf, validate
from lambdaehr.neural.vocab import tokens_to_lf_text
from lambdaehr.sketch import fill_sketch, placeholder_count


@dataclass
class DecodeResult:
    """Outcome of decoding one question.

    `text` is the canonical printed logical form, or None when the search
    produced nothing parseable. `error` says why: "unparseable" for output
    the logical-form parser or validator rejected, "exhausted" when the
    search hit its step budget before finishing. `tokens` keeps the raw
    winning sequence either way, for error analysis.
    """

    text: str | None
    score: float
    error: str | None = None
    tokens: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.text is not None


def decode(model, tokens, *, beam_size=None) -> DecodeResult:
    """Decode a tokenised question with the mode the model was trained in.

    `beam_size` overrides the training configuration; 1 is greedy.
    """
    if beam_size is None:
        beam_size = model.config.beam_size
    if beam_size < 1:
        raise ValueError(f"beam size must be >= 1, got {beam_size}")
    mode = model.config.mode
    if mode == "direct":
        return _decode_direct(model, tokens, beam_size)
    if mode == "sketch":
        return _decode_sketch(model, tokens, beam_size)
    return _decode_grammar(model, tokens, beam_size)


# ---------------------------------------------------------------------------
# Shared token-sequence beam search

# A hypothesis is (score, ids, state) where state is the decoder carry
# returned by Model.step_logprobs. Finished hypotheses drop the state.


def _token_beam(
    model,
    prefix,
    memory,
    init_state,
    bos,
    *,
    beam,
    max_steps,
    eos=None,
    length=None,
    copy_src_ids=None,
):
    """Best-first token search.

    Hypotheses finish on `eos` (which is stripped) or on reaching exactly
    `length` tokens; exactly one of the two must be given. Returns
    (score, ids, exhausted_flag).
    """
    if length is not None and length == 0:
        return 0.0, [], False
    live = [(0.0, [], init_state)]
    finished = []
    for _ in range(max_steps):
        expansions = []
        for score, ids, state in live:
            prev = ids[-1] if ids else bos
            logp, new_state = model.step_logprobs(
                prefix, memory, prev, state, copy_src_ids=copy_src_ids
            )
            for idx in np.argsort(logp)[::-1][:beam]:
                lp = logp[idx]
                if not np.isfinite(lp):
                    continue
                expansions.append((score + lp, ids + [int(idx)], new_state))
        if not expansions:
            break
        expansions.sort(key=lambda h: h[0], reverse=True)
        live = []
        for score, ids, state in expansions:
            if eos is not None and ids[-1] == eos:
                finished.append((score, ids[:-1]))
            elif length is not None and len(ids) == length:
                finished.append((score, ids))
            else:
                live.append((score, ids, state))
            if len(live) >= beam:
                break
        if not live:
            break
        # Per-step log-probabilities are <= 0, so a live hypothesis can
        # never overtake a finished one it already trails.
        if finished and max(f[0] for f in finished) >= live[0][0]:
            break
    if finished:
        score, ids = max(finished, key=lambda f: f[0])
        return score, ids, False
    if live:
        score, ids, _ = live[0]
        return score, ids, True
    raise BeamExhausted("no viable token expansion")


# ---------------------------------------------------------------------------
# Mode drivers


def _decode_direct(model, tokens, beam):
    enc = model.encode(tokens)
    vocab = model.vocabs["target"]
    init = _fresh_state(model, enc)
    score, ids, exhausted = _token_beam(
        model,
        "dec",
        enc["hs"],
        init,
        vocab.bos,
        beam=beam,
        max_steps=model.config.max_decode_steps,
        eos=vocab.eos,
        copy_src_ids=model.copy_ids[enc["ids"]],
    )
    out = [vocab.tokens[i] for i in ids]
    if exhausted:
        return DecodeResult(None, score, error="exhausted", tokens=out)
    return _finish_text(model, out, score)


def _decode_sketch(model, tokens, beam):
    enc = model.encode(tokens)
    sk_vocab = model.vocabs["sketch"]
    fn_vocab = model.vocabs["fine"]
    score, ids, exhausted = _token_beam(
        model,
        "sk",
        enc["hs"],
        _fresh_state(model, enc),
        sk_vocab.bos,
        beam=beam,
        max_steps=model.config.max_decode_steps,
        eos=sk_vocab.eos,
    )
    sketch_tokens = [sk_vocab.tokens[i] for i in ids]
    if exhausted:
        return DecodeResult(None, score, error="exhausted", tokens=sketch_tokens)
    try:
        sketch_lf = parse_lf(
            tokens_to_lf_text(sketch_tokens),
            model.registry,
            allow_placeholders=True,
        )
    except LambdaEhrError:
        return DecodeResult(None, score, error="unparseable", tokens=sketch_tokens)
    slots = placeholder_count(sketch_lf)

    fine_memory, fine_state, _ = model.sketch_conditioning(enc, ids)
    fine_score, fine_ids, fine_exhausted = _token_beam(
        model,
        "fn",
        fine_memory,
        fine_state,
        fn_vocab.bos,
        beam=beam,
        max_steps=max(slots, 1),
        length=slots,
    )
    details = [fn_vocab.tokens[i] for i in fine_ids]
    raw = sketch_tokens + details
    total = score + fine_score
    if fine_exhausted:
        return DecodeResult(None, total, error="exhausted", tokens=raw)
    try:
        lf = fill_sketch(sketch_lf, details, model.registry)
        validate(lf, model.registry)
    except LambdaEhrError:
        return DecodeResult(None, total, error="unparseable", tokens=raw)
    return DecodeResult(print_lf(lf), total, tokens=raw)


def _decode_grammar(model, tokens, beam):
    enc = model.encode(tokens)
    vocab = model.vocabs["target"]
    system = model.system
    memory = enc["hs"]
    live = [(0.0, [], _fresh_state(model, enc), system.initial_state())]
    finished = []
    for _ in range(model.config.max_decode_steps):
        expansions = []
        for score, ids, state, deriv in live:
            mask = model.valid_action_mask(deriv)
            if not mask.any():
                continue
            prev = ids[-1] if ids else vocab.bos
            logp, new_state = model.step_logprobs(
                "dec", memory, prev, state, mask=mask
            )
            for idx in np.argsort(logp)[::-1][:beam]:
                lp = logp[idx]
                if not np.isfinite(lp):
                    continue
                action = line_to_action(vocab.tokens[idx])
                expansions.append(
                    (
                        score + lp,
                        ids + [int(idx)],
                        new_state,
                        system.apply_action(deriv, action),
                    )
                )
        if not expansions:
            break
        expansions.sort(key=lambda h: h[0], reverse=True)
        live = []
        for cand in expansions:
            if cand[3].complete:
                finished.append((cand[0], cand[1], cand[3]))
            else:
                live.append(cand)
            if len(live) >= beam:
                break
        if not live:
            break
        if finished and max(f[0] for f in finished) >= live[0][0]:
            break
    if finished:
        score, ids, deriv = max(finished, key=lambda f: f[0])
        lines = [vocab.tokens[i] for i in ids]
        lf = system.ast_to_lf(deriv.root)
        return DecodeResult(print_lf(lf), score, tokens=lines)
    if live:
        score, ids, _, _ = live[0]
        lines = [vocab.tokens[i] for i in ids]
        return DecodeResult(None, score, error="exhausted", tokens=lines)
    raise BeamExhausted("every derivation hypothesis reached a dead end")


def _fresh_state(model, enc):
    h = enc["hs"][-1]
    c = enc["cs"][-1]
    hbar = np.zeros(model.config.hidden_size)
    return h, c, hbar


def _finish_text(model, out_tokens, score):
    text = tokens_to_lf_text(out_tokens)
    try:
        lf = parse_lf(text, model.registry)
        validate(lf, model.registry)
    except LambdaEhrError:
        return DecodeResult(None, score, error="unparseable", tokens=out_tokens)
    return DecodeResult(print_lf(lf), score, tokens=out_tokens)
