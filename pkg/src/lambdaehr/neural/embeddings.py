"""Word-vector loading in the plain text format: one token followed by
its d space-separated decimal values per line."""

import os
from dataclasses import dataclass

import numpy as np

from lambdaehr.errors import DimensionMismatch, MalformedLine


@dataclass
class EmbeddingTable:
    """One vector per vocabulary token, file-backed where the file had
    the token and seeded-random elsewhere."""

    tokens: tuple[str, ...]
    matrix: np.ndarray
    coverage: float

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def _token_list(vocab) -> tuple[str, ...]:
    tokens = getattr(vocab, "tokens", vocab)
    return tuple(tokens)


def load_embeddings(path, vocab, dim: int, *, seed: int = 0,
                    allow_missing: bool = False) -> EmbeddingTable:
    """Vectors for `vocab` (a Vocab or a plain token sequence).

    In-vocabulary tokens get their file vectors (later duplicates in
    the file win); the rest are drawn from uniform(-0.1, 0.1) seeded by
    `seed`. With allow_missing, a nonexistent file yields a fully
    random table with coverage 0.
    """
    tokens = _token_list(vocab)
    found: dict[str, np.ndarray] = {}
    if path is not None and os.path.exists(path):
        wanted = set(tokens)
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 2:
                    raise MalformedLine(lineno, "no vector values")
                word = parts[0]
                if len(parts) - 1 != dim:
                    raise DimensionMismatch(lineno, dim, len(parts) - 1)
                try:
                    vec = np.array([float(v) for v in parts[1:]])
                except ValueError as exc:
                    raise MalformedLine(lineno, str(exc)) from None
                if word in wanted:
                    found[word] = vec
    elif not allow_missing:
        raise FileNotFoundError(path)

    rng = np.random.default_rng(seed)
    matrix = np.empty((len(tokens), dim))
    for row, token in enumerate(tokens):
        if token in found:
            matrix[row] = found[token]
        else:
            matrix[row] = rng.uniform(-0.1, 0.1, size=dim)
    coverage = len(found) / len(tokens) if tokens else 0.0
    return EmbeddingTable(tokens, matrix, coverage)
