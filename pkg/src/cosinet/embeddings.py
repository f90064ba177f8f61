"""Frozen pretrained word embeddings loaded from whitespace-separated text.

The table is immutable after load and stays fixed during training. Lookups
are total: unknown tokens map to the all-zero vector, never an error.
"""

from __future__ import annotations

import numpy as np

CONCEPT_PREFIX = "/c/en/"


class EmbeddingTable:
    """token -> row-index map over a frozen |V| x dim float32 matrix."""

    def __init__(self, vocabulary: dict[str, int], matrix: np.ndarray, dimension: int = 300):
        if matrix.ndim != 2 or matrix.shape[1] != dimension:
            raise ValueError(f"embedding matrix must be |V| x {dimension}, got {matrix.shape}")
        if len(vocabulary) != matrix.shape[0]:
            raise ValueError("vocabulary size does not match matrix rows")
        self.dimension = dimension
        self.vocabulary = dict(vocabulary)
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self.matrix.setflags(write=False)
        self.oov_vector = np.zeros(dimension, dtype=np.float32)
        self.oov_vector.setflags(write=False)

    def __len__(self) -> int:
        return len(self.vocabulary)

    def __contains__(self, token: str) -> bool:
        return token in self.vocabulary

    def lookup(self, token: str) -> np.ndarray:
        idx = self.vocabulary.get(token)
        if idx is None:
            return self.oov_vector
        return self.matrix[idx]

    def tokens_in_order(self) -> list[str]:
        """Vocabulary tokens ordered by row index (for serialization)."""
        return sorted(self.vocabulary, key=self.vocabulary.get)

    def checksum(self) -> bytes:
        import hashlib

        return hashlib.sha256(self.matrix.tobytes()).digest()


def load_embeddings(path, vocab_filter=None, dimension: int = 300) -> EmbeddingTable:
    """Parse a text embedding file: one line per token, then `dimension` reals.

    An optional first line "count dim" header is tolerated. Tokens carrying
    the "/c/en/" concept prefix are stored with the prefix stripped.
    Duplicate tokens keep the first occurrence. When ``vocab_filter`` is
    given, only those tokens are kept (checked after prefix stripping).
    Any other line with the wrong number of fields is rejected by line number.
    """
    vocab: dict[str, int] = {}
    rows: list[np.ndarray] = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ValueError(f"cannot read embedding file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                    continue  # header line
                except ValueError:
                    pass
            if len(parts) != dimension + 1:
                raise ValueError(
                    f"{path}:{lineno}: expected token + {dimension} values, got {len(parts)} fields")
            token = parts[0]
            if token.startswith(CONCEPT_PREFIX):
                token = token[len(CONCEPT_PREFIX):]
            if vocab_filter is not None and token not in vocab_filter:
                continue
            if token in vocab:
                continue
            try:
                vec = np.array(parts[1:], dtype=np.float32)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric value ({exc})") from exc
            vocab[token] = len(rows)
            rows.append(vec)
    matrix = np.vstack(rows) if rows else np.zeros((0, dimension), dtype=np.float32)
    return EmbeddingTable(vocab, matrix, dimension)


def embed_sequence(tokens, table: EmbeddingTable):
    """Map a non-empty token list to a (len, dim) matrix plus an OOV mask.

    Row i is the table vector for token i; ``oov_mask[i]`` is 1 where the
    token was unknown (zero-vector row).
    """
    if not tokens:
        raise ValueError("embed_sequence: empty token list (pad before calling)")
    mat = np.empty((len(tokens), table.dimension), dtype=np.float32)
    oov = np.zeros(len(tokens), dtype=np.int8)
    for i, tok in enumerate(tokens):
        idx = table.vocabulary.get(tok)
        if idx is None:
            mat[i] = 0.0
            oov[i] = 1
        else:
            mat[i] = table.matrix[idx]
    return mat, oov
