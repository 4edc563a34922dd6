"""Attention encoder-decoder over entity-abstracted questions, with the
full backward pass written against the kernel API.

Parameters live in an ordered name -> float64 array dict. One encoder
feeds mode-specific decoders: "direct" decodes logical-form text tokens
with a copy gate over the source, "grammar" decodes transition actions
under a validity mask, and "sketch" decodes a coarse form, re-encodes
it, and decodes the detail tokens against both memories.
"""

import numpy as np

from lambdaehr import kernels
from lambdaehr.errors import EmptyInput
from lambdaehr.grammar import action_to_line, line_to_action
from lambdaehr.neural.config import TrainingConfig
from lambdaehr.neural.vocab import (
    Vocab,
    abstract_system,
    action_targets,
    copy_target,
    direct_targets,
    sketch_fine_targets,
)

INIT_SCALE = 0.08


def _lstm_specs(prefix, fan_in, hidden):
    return [
        (f"{prefix}_wx", (4 * hidden, fan_in)),
        (f"{prefix}_wh", (4 * hidden, hidden)),
        (f"{prefix}_b", (4 * hidden,)),
    ]


def _decoder_specs(prefix, vocab_size, word_dim, hidden):
    return (
        [(f"{prefix}_emb", (vocab_size, word_dim))]
        + _lstm_specs(prefix, word_dim + hidden, hidden)
        + [
            (f"{prefix}_wa", (hidden, hidden)),
            (f"{prefix}_wc", (hidden, 2 * hidden)),
            (f"{prefix}_bc", (hidden,)),
            (f"{prefix}_wo", (vocab_size, hidden)),
            (f"{prefix}_bo", (vocab_size,)),
        ]
    )


def param_specs(config: TrainingConfig, vocabs: dict) -> list:
    hidden, word_dim = config.hidden_size, config.word_dim
    specs = [("src_emb", (len(vocabs["source"]), word_dim))]
    specs += _lstm_specs("enc", word_dim, hidden)
    if config.mode in ("direct", "grammar"):
        specs += _decoder_specs("dec", len(vocabs["target"]), word_dim,
                                hidden)
    if config.mode == "direct":
        specs += [("copy_w", (hidden,)), ("copy_b", (1,))]
    if config.mode == "sketch":
        specs += _decoder_specs("sk", len(vocabs["sketch"]), word_dim,
                                hidden)
        specs += _lstm_specs("ske", word_dim, hidden)
        specs += _decoder_specs("fn", len(vocabs["fine"]), word_dim,
                                hidden)
    return specs


def init_params(config: TrainingConfig, vocabs: dict,
                rng: np.random.Generator) -> dict:
    """Uniform(-0.08, 0.08) weights, zero biases except the LSTM forget
    gates, which start at 1 so memory persists early in training."""
    hidden = config.hidden_size
    params = {}
    for name, shape in param_specs(config, vocabs):
        if name.endswith(("_b", "_bc", "_bo", "copy_b")):
            arr = np.zeros(shape)
            if name.endswith("_b") and not name.endswith(
                    ("_bc", "_bo", "copy_b")):
                arr[hidden:2 * hidden] = 1.0
        else:
            arr = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
        params[name] = arr
    return params


def _sigmoid_scalar(v: float) -> float:
    if v >= 0:
        return 1.0 / (1.0 + np.exp(-v))
    e = np.exp(v)
    return e / (1.0 + e)


class Model:
    """One trained or trainable parser. `vocabs` maps names to Vocab
    instances; see vocab.build_vocabs for the per-mode keys."""

    def __init__(self, config: TrainingConfig, vocabs: dict, registry,
                 params: dict | None = None,
                 rng: np.random.Generator | None = None):
        self.config = config
        self.mode = config.mode
        self.vocabs = vocabs
        self.registry = registry
        self.system = (
            abstract_system(registry) if self.mode == "grammar" else None
        )
        if params is None:
            if rng is None:
                rng = np.random.default_rng(config.seed)
            params = init_params(config, vocabs, rng)
        self.params = params
        if self.mode == "direct":
            target = vocabs["target"]
            self.copy_ids = np.array(
                [target.index[copy_target(t)]
                 for t in vocabs["source"].tokens],
                dtype=np.intp,
            )

    # -- persistence helpers

    def clone_params(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}

    def load_params(self, params: dict) -> None:
        for k in self.params:
            self.params[k][...] = params[k]

    def parameter_count(self) -> int:
        return sum(v.size for v in self.params.values())

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    # -- encoder

    def encode(self, tokens: list[str]) -> dict:
        """Per-token context states plus the summary (final) state."""
        if not tokens:
            raise EmptyInput("cannot encode an empty token sequence")
        p = self.params
        ids = self.vocabs["source"].encode(tokens)
        x = p["src_emb"][ids]
        hidden = self.config.hidden_size
        zero = np.zeros(hidden)
        hs, cs, gates = kernels.lstm_seq_forward(
            x, zero, zero, p["enc_wx"], p["enc_wh"], p["enc_b"]
        )
        return {"ids": ids, "x": x, "hs": hs, "cs": cs, "gates": gates}

    def encode_backward(self, cache: dict, dhs, dh_last, dc_last,
                        grads: dict) -> None:
        p = self.params
        hidden = self.config.hidden_size
        zero = np.zeros(hidden)
        dx, _, _, dwx, dwh, db = kernels.lstm_seq_backward(
            cache["x"], zero, zero, p["enc_wx"], p["enc_wh"],
            cache["hs"], cache["cs"], cache["gates"],
            dhs, dh_last, dc_last,
        )
        grads["enc_wx"] += dwx
        grads["enc_wh"] += dwh
        grads["enc_b"] += db
        np.add.at(grads["src_emb"], cache["ids"], dx)

    # -- generic teacher-forced decoder

    def _drop_mask(self, size: int, training: bool,
                   rng: np.random.Generator | None):
        rate = self.config.dropout
        if not training or rate == 0.0 or rng is None:
            return None
        return (rng.random(size) >= rate) / (1.0 - rate)

    def decoder_forward(self, prefix: str, memory, init_h, init_c,
                        targets: list[int], *, masks=None,
                        copy_src_ids=None, training=False, rng=None
                        ) -> tuple[float, dict]:
        """Teacher-forced negative log-likelihood (sum over steps) of
        `targets` given the attention `memory`. `masks` restricts each
        step's distribution (grammar mode); `copy_src_ids` switches on
        the copy mixture (direct mode), giving each memory row's target
        vocabulary id."""
        p = self.params
        emb = p[f"{prefix}_emb"]
        wx, wh, b = p[f"{prefix}_wx"], p[f"{prefix}_wh"], p[f"{prefix}_b"]
        wa, wc, bc = p[f"{prefix}_wa"], p[f"{prefix}_wc"], p[f"{prefix}_bc"]
        wo, bo = p[f"{prefix}_wo"], p[f"{prefix}_bo"]
        vocab_size = wo.shape[0]
        bos = self.vocabs["source"].bos  # same index in every vocab
        h, c = init_h, init_c
        hbar = np.zeros(self.config.hidden_size)
        prev = bos
        loss = 0.0
        steps = []
        for t, tgt in enumerate(targets):
            inp = np.concatenate([emb[prev], hbar])
            in_mask = self._drop_mask(inp.shape[0], training, rng)
            inp_d = inp if in_mask is None else inp * in_mask
            h_new, c_new, gates = kernels.lstm_cell_forward(
                inp_d, h, c, wx, wh, b
            )
            ctx, alpha = kernels.attention_forward(h_new, memory, wa)
            z_in = np.concatenate([ctx, h_new])
            z_raw = np.tanh(wc @ z_in + bc)
            out_mask = self._drop_mask(z_raw.shape[0], training, rng)
            hbar_new = z_raw if out_mask is None else z_raw * out_mask
            logits = wo @ hbar_new + bo
            step = {
                "prev": prev, "tgt": tgt, "inp_d": inp_d,
                "in_mask": in_mask, "h_prev": h, "c_prev": c,
                "gates": gates, "c": c_new, "h": h_new,
                "alpha": alpha, "ctx": ctx, "z_raw": z_raw,
                "out_mask": out_mask, "hbar": hbar_new,
            }
            if copy_src_ids is not None:
                gen_probs = kernels.softmax(logits)
                gate_pre = float(p["copy_w"] @ hbar_new + p["copy_b"][0])
                gate = _sigmoid_scalar(gate_pre)
                copy_probs = np.zeros(vocab_size)
                np.add.at(copy_probs, copy_src_ids, alpha)
                mix = gate * gen_probs + (1.0 - gate) * copy_probs
                with np.errstate(divide="ignore"):
                    loss_t = -np.log(mix[tgt])
                step.update(gen_probs=gen_probs, gate=gate,
                            copy_probs=copy_probs, probs=mix)
            elif masks is not None:
                loss_t, probs = kernels.masked_softmax_xent(
                    logits, masks[t], tgt
                )
                step["probs"] = probs
            else:
                loss_t, probs = kernels.softmax_xent(logits, tgt)
                step["probs"] = probs
            loss += float(loss_t)
            steps.append(step)
            prev, h, c, hbar = tgt, h_new, c_new, hbar_new
        return loss, {
            "prefix": prefix, "memory": memory, "steps": steps,
            "copy_src_ids": copy_src_ids,
        }

    def decoder_backward(self, cache: dict, grads: dict):
        """Returns (dmemory, dinit_h, dinit_c)."""
        p = self.params
        prefix = cache["prefix"]
        memory = cache["memory"]
        copy_src_ids = cache["copy_src_ids"]
        word_dim = self.config.word_dim
        hidden = self.config.hidden_size
        wx, wh = p[f"{prefix}_wx"], p[f"{prefix}_wh"]
        wa, wc = p[f"{prefix}_wa"], p[f"{prefix}_wc"]
        wo = p[f"{prefix}_wo"]
        dmem = np.zeros_like(memory)
        dh_next = np.zeros(hidden)
        dc_next = np.zeros(hidden)
        dfeed = np.zeros(hidden)
        for step in reversed(cache["steps"]):
            tgt = step["tgt"]
            dalpha = np.zeros(memory.shape[0])
            if copy_src_ids is not None:
                mix, gen_probs = step["probs"], step["gen_probs"]
                copy_probs, gate = step["copy_probs"], step["gate"]
                dmix = np.zeros_like(mix)
                dmix[tgt] = -1.0 / mix[tgt]
                dgate = float(dmix @ (gen_probs - copy_probs))
                dgen = gate * dmix
                dlogits = gen_probs * (dgen - float(gen_probs @ dgen))
                dalpha = (1.0 - gate) * dmix[copy_src_ids]
                dpre = dgate * gate * (1.0 - gate)
                grads["copy_w"] += dpre * step["hbar"]
                grads["copy_b"][0] += dpre
                dhbar = dpre * p["copy_w"]
            else:
                dlogits = step["probs"].copy()
                dlogits[tgt] -= 1.0
                dhbar = np.zeros(hidden)
            grads[f"{prefix}_wo"] += np.outer(dlogits, step["hbar"])
            grads[f"{prefix}_bo"] += dlogits
            dhbar = dhbar + wo.T @ dlogits + dfeed
            if step["out_mask"] is not None:
                dhbar = dhbar * step["out_mask"]
            dz = dhbar * (1.0 - step["z_raw"] ** 2)
            z_in = np.concatenate([step["ctx"], step["h"]])
            grads[f"{prefix}_wc"] += np.outer(dz, z_in)
            grads[f"{prefix}_bc"] += dz
            dz_in = wc.T @ dz
            dctx, dh = dz_in[:hidden], dz_in[hidden:].copy()
            dquery, dkeys, dwa = kernels.attention_backward(
                step["h"], memory, wa, step["alpha"], dctx, dalpha
            )
            grads[f"{prefix}_wa"] += dwa
            dmem += dkeys
            dh += dquery + dh_next
            dinp, dh_next, dc_next, dwx, dwh, db = (
                kernels.lstm_cell_backward(
                    step["inp_d"], step["h_prev"], step["c_prev"],
                    wx, wh, step["gates"], step["c"], dh, dc_next,
                )
            )
            grads[f"{prefix}_wx"] += dwx
            grads[f"{prefix}_wh"] += dwh
            grads[f"{prefix}_b"] += db
            if step["in_mask"] is not None:
                dinp = dinp * step["in_mask"]
            grads[f"{prefix}_emb"][step["prev"]] += dinp[:word_dim]
            dfeed = dinp[word_dim:]
        return dmem, dh_next, dc_next

    # -- single inference step (used by decode.py)

    def decoder_step(self, prefix: str, memory, prev: int, h, c, hbar):
        """One step without teacher forcing. Returns (logits, alpha,
        state) with state = (h, c, hbar)."""
        p = self.params
        inp = np.concatenate([p[f"{prefix}_emb"][prev], hbar])
        h_new, c_new, _ = kernels.lstm_cell_forward(
            inp, h, c, p[f"{prefix}_wx"], p[f"{prefix}_wh"],
            p[f"{prefix}_b"]
        )
        ctx, alpha = kernels.attention_forward(
            h_new, memory, p[f"{prefix}_wa"]
        )
        z_raw = np.tanh(
            p[f"{prefix}_wc"] @ np.concatenate([ctx, h_new])
            + p[f"{prefix}_bc"]
        )
        logits = p[f"{prefix}_wo"] @ z_raw + p[f"{prefix}_bo"]
        return logits, alpha, (h_new, c_new, z_raw)

    def step_logprobs(self, prefix: str, memory, prev: int, state,
                      *, mask=None, copy_src_ids=None):
        """Log-probabilities for one inference step in any mode.
        `state` is (h, c, hbar) or None for the first step; masked-out
        entries come back as -inf. Returns (logp, new_state)."""
        if state is None:
            raise ValueError("state must be fully initialized")
        h, c, hbar = state
        logits, alpha, new_state = self.decoder_step(
            prefix, memory, prev, h, c, hbar
        )
        if copy_src_ids is not None:
            gen_probs = kernels.softmax(logits)
            gate = _sigmoid_scalar(
                float(self.params["copy_w"] @ new_state[2]
                      + self.params["copy_b"][0])
            )
            copy_probs = np.zeros(logits.shape[0])
            np.add.at(copy_probs, copy_src_ids, alpha)
            mix = gate * gen_probs + (1.0 - gate) * copy_probs
            with np.errstate(divide="ignore"):
                return np.log(mix), new_state
        if mask is not None:
            probs = kernels.masked_softmax(logits, mask)
            with np.errstate(divide="ignore"):
                return np.log(probs), new_state
        m = logits.max()
        lse = m + np.log(np.exp(logits - m).sum())
        return logits - lse, new_state

    # -- targets and masks

    def prepare(self, record: dict) -> dict:
        """Targets (and grammar masks) for one preprocessed record."""
        if self.mode == "direct":
            target = self.vocabs["target"]
            tokens = direct_targets(record)
            return {
                "tokens": record["tokens"],
                "targets": target.encode(tokens) + [target.eos],
            }
        if self.mode == "grammar":
            target = self.vocabs["target"]
            lines = action_targets(record, self.system)
            ids = target.encode(lines)
            masks = self.action_masks(lines)
            return {
                "tokens": record["tokens"],
                "targets": ids,
                "masks": masks,
            }
        sketch_v, fine_v = self.vocabs["sketch"], self.vocabs["fine"]
        sketch_toks, fine_toks = sketch_fine_targets(
            record, self.registry
        )
        return {
            "tokens": record["tokens"],
            "sketch_in": sketch_v.encode(sketch_toks),
            "sketch_targets": sketch_v.encode(sketch_toks)
            + [sketch_v.eos],
            "fine_targets": fine_v.encode(fine_toks),
        }

    def action_masks(self, gold_lines: list[str]) -> list[np.ndarray]:
        """Validity mask over the action vocabulary at each gold
        prefix; the gold action is always admitted because the gold
        sequence replays through the transition system."""
        state = self.system.initial_state()
        masks = []
        for line in gold_lines:
            masks.append(self.valid_action_mask(state))
            state = self.system.apply_action(state, line_to_action(line))
        return masks

    def valid_action_mask(self, state) -> np.ndarray:
        """Actions the grammar admits here, restricted to the learned
        vocabulary (actions never seen in training cannot be scored)."""
        index = self.vocabs["target"].index
        mask = np.zeros(len(index), dtype=bool)
        for action in self.system.valid_actions(state):
            idx = index.get(action_to_line(action))
            if idx is not None:
                mask[idx] = True
        return mask

    def sketch_conditioning(self, enc, sketch_ids):
        """Run the sketch encoder over sketch token ids. The fine decoder
        attends over the source and sketch encodings jointly and starts
        from the sketch encoder's final state. Returns (fine_memory,
        fine_state, cache)."""
        p = self.params
        ids = np.asarray(sketch_ids, dtype=np.intp)
        sk_x = p["sk_emb"][ids]
        zero = np.zeros(self.config.hidden_size)
        hs, cs, gates = kernels.lstm_seq_forward(
            sk_x, zero, zero, p["ske_wx"], p["ske_wh"], p["ske_b"]
        )
        fine_memory = np.concatenate([enc["hs"], hs], axis=0)
        cache = {"ids": ids, "x": sk_x, "hs": hs, "cs": cs,
                 "gates": gates}
        return fine_memory, (hs[-1], cs[-1], zero), cache

    # -- per-mode loss

    def loss_and_grads(self, prepared: dict, *, training=False,
                       rng=None) -> tuple[float, dict, dict]:
        """Loss, full gradient dict, and the forward caches for one
        prepared example."""
        grads = self.zero_grads()
        enc = self.encode(prepared["tokens"])
        memory = enc["hs"]
        init_h, init_c = enc["hs"][-1], enc["cs"][-1]
        caches = {"enc": enc}
        if self.mode in ("direct", "grammar"):
            if self.mode == "direct":
                loss, dec = self.decoder_forward(
                    "dec", memory, init_h, init_c, prepared["targets"],
                    copy_src_ids=self.copy_ids[enc["ids"]],
                    training=training, rng=rng,
                )
            else:
                loss, dec = self.decoder_forward(
                    "dec", memory, init_h, init_c, prepared["targets"],
                    masks=prepared["masks"], training=training, rng=rng,
                )
            caches["dec"] = dec
            dmem, dh0, dc0 = self.decoder_backward(dec, grads)
            self.encode_backward(enc, dmem, dh0, dc0, grads)
            return loss, grads, caches
        # sketch mode: coarse decoder, sketch encoder, fine decoder
        p = self.params
        sk_loss, sk_dec = self.decoder_forward(
            "sk", memory, init_h, init_c, prepared["sketch_targets"],
            training=training, rng=rng,
        )
        fine_memory, (fh, fc, _), ske = self.sketch_conditioning(
            enc, prepared["sketch_in"]
        )
        fn_loss, fn_dec = self.decoder_forward(
            "fn", fine_memory, fh, fc,
            prepared["fine_targets"], training=training, rng=rng,
        )
        caches.update(sk=sk_dec, fn=fn_dec, ske=ske)
        # fine decoder backward
        dmem_fine, dh0_fn, dc0_fn = self.decoder_backward(fn_dec, grads)
        src_len = memory.shape[0]
        dmem_src = dmem_fine[:src_len].copy()
        dske = dmem_fine[src_len:].copy()
        dske[-1] += dh0_fn
        zero = np.zeros(self.config.hidden_size)
        dx_ske, _, _, dwx, dwh, db = kernels.lstm_seq_backward(
            ske["x"], zero, zero, p["ske_wx"], p["ske_wh"],
            ske["hs"], ske["cs"], ske["gates"],
            dske, np.zeros_like(dh0_fn), dc0_fn,
        )
        grads["ske_wx"] += dwx
        grads["ske_wh"] += dwh
        grads["ske_b"] += db
        np.add.at(grads["sk_emb"], ske["ids"], dx_ske)
        # sketch decoder backward
        dmem_sk, dh0_sk, dc0_sk = self.decoder_backward(sk_dec, grads)
        dmem_src += dmem_sk
        self.encode_backward(enc, dmem_src, dh0_sk, dc0_sk, grads)
        return sk_loss + fn_loss, grads, caches

    def loss(self, prepared: dict) -> float:
        """Forward-only loss with dropout off (used by gradient
        checking)."""
        value, _, _ = self.loss_and_grads(prepared, training=False)
        return value
