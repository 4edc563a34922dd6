"""Benchmark the C kernel backend against the numpy fallback.

Times the sequence kernels on encoder-shaped inputs and a composite
decoder step (cell + attention + masked softmax) on decoder-shaped
ones, then prints per-call latencies and the speedup. Run as

    python3 benchmarks/bench_kernels.py [--hidden 256] [--repeat 300]
"""

import argparse
import time

import numpy as np

from lambdaehr.kernels import _numpy as numpy_backend

try:
    from lambdaehr.kernels import _ckernels as c_backend
except ImportError:
    c_backend = None


def time_call(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def build_cases(hidden, word_dim, src_len, vocab, seed):
    rng = np.random.default_rng(seed)
    h4 = 4 * hidden
    enc = {
        "x": rng.normal(size=(src_len, word_dim)),
        "h0": np.zeros(hidden),
        "c0": np.zeros(hidden),
        "wx": rng.normal(size=(h4, word_dim)) * 0.1,
        "wh": rng.normal(size=(h4, hidden)) * 0.1,
        "b": np.zeros(h4),
    }
    dec_in = rng.normal(size=word_dim + hidden)
    dec = {
        "wx": rng.normal(size=(h4, word_dim + hidden)) * 0.1,
        "wh": rng.normal(size=(h4, hidden)) * 0.1,
        "b": np.zeros(h4),
        "h": rng.normal(size=hidden),
        "c": rng.normal(size=hidden),
        "wa": rng.normal(size=(hidden, hidden)) * 0.1,
        "logits": rng.normal(size=vocab),
        "mask": rng.random(vocab) < 0.3,
    }
    dec["mask"][0] = True
    return enc, dec_in, dec


def bench_backend(backend, enc, dec_in, dec, repeat):
    hs, cs, gates = backend.lstm_seq_forward(**enc)
    dhs = np.ones_like(hs)
    dtail = np.zeros(hs.shape[1])
    seq_args = (enc["x"], enc["h0"], enc["c0"], enc["wx"], enc["wh"])

    def decoder_step():
        h, c, _ = backend.lstm_cell_forward(
            dec_in, dec["h"], dec["c"], dec["wx"], dec["wh"], dec["b"]
        )
        ctx, w = backend.attention_forward(h, hs, dec["wa"])
        backend.masked_softmax(dec["logits"], dec["mask"])

    return {
        "lstm_seq_forward": time_call(
            lambda: backend.lstm_seq_forward(**enc), repeat
        ),
        "lstm_seq_backward": time_call(
            lambda: backend.lstm_seq_backward(
                *seq_args, hs, cs, gates, dhs, dtail, dtail
            ),
            repeat,
        ),
        "decoder_step": time_call(decoder_step, repeat),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hidden", type=int, default=256)
    ap.add_argument("--word-dim", type=int, default=128)
    ap.add_argument("--src-len", type=int, default=8)
    ap.add_argument("--vocab", type=int, default=120)
    ap.add_argument("--repeat", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    enc, dec_in, dec = build_cases(
        args.hidden, args.word_dim, args.src_len, args.vocab, args.seed
    )
    results = {"numpy": bench_backend(numpy_backend, enc, dec_in, dec,
                                      args.repeat)}
    if c_backend is not None:
        results["c"] = bench_backend(c_backend, enc, dec_in, dec,
                                     args.repeat)

    print(f"hidden={args.hidden} word_dim={args.word_dim} "
          f"src_len={args.src_len} vocab={args.vocab} "
          f"(best of {args.repeat})")
    header = f"{'kernel':<22}{'numpy':>12}"
    if "c" in results:
        header += f"{'c':>12}{'speedup':>10}"
    print(header)
    for name in results["numpy"]:
        row = f"{name:<22}{results['numpy'][name] * 1e6:>10.1f}us"
        if "c" in results:
            c_time = results["c"][name]
            row += (f"{c_time * 1e6:>10.1f}us"
                    f"{results['numpy'][name] / c_time:>9.1f}x")
        print(row)
    if c_backend is None:
        print("C backend not built; numpy timings only.")


if __name__ == "__main__":
    main()
