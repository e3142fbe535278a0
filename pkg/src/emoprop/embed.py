"""Skip-gram negative-sampling embeddings trained on walk corpora.

Trained from scratch: no pre-trained vectors are involved.  For a center
token at position i, every in-vocabulary token within the window on either
side is a positive context; each positive draws k negatives from the
unigram distribution raised to a configurable exponent.  The objective per
pair is

    log sigmoid(u_ctx . v_c) + sum_j log sigmoid(-u_neg_j . v_c)

maximized by SGD whose learning rate decays linearly to zero over the total
planned number of pairs.  Training is sequential and deterministic per
seed.  An optional character-n-gram subword table composes vectors for
tokens outside the vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class EmbeddingError(ValueError):
    """Invalid embedding configuration, vocabulary or lookup."""


@dataclass
class EmbedConfig:
    dim: int = 300
    window: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    negatives: int = 5
    noise_exponent: float = 0.75
    min_count: int = 1
    subword: tuple[int, int] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise EmbeddingError("dim must be >= 1")
        if self.window < 1:
            raise EmbeddingError("window must be >= 1")
        if self.epochs < 1:
            raise EmbeddingError("epochs must be >= 1")
        if self.learning_rate <= 0.0:
            raise EmbeddingError("learning_rate must be positive")
        if self.negatives < 1:
            raise EmbeddingError("negatives must be >= 1")
        if not 0.0 <= self.noise_exponent <= 1.0:
            raise EmbeddingError("noise_exponent must be in [0, 1]")
        if self.min_count < 1:
            raise EmbeddingError("min_count must be >= 1")
        if self.subword is not None:
            minn, maxn = self.subword
            if minn < 1 or maxn < minn:
                raise EmbeddingError("subword range must satisfy 1 <= minn <= maxn")
        if self.seed < 0:
            raise EmbeddingError("seed must be non-negative")


@dataclass
class Vocabulary:
    """Token <-> index mapping, indices by descending count then token."""

    token_to_index: dict[str, int]
    tokens: list[str]
    counts: np.ndarray
    min_count: int

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index


def build_vocab(sequences: list[list[str]], min_count: int = 1) -> Vocabulary:
    counts: dict[str, int] = {}
    for seq in sequences:
        for tok in seq:
            counts[tok] = counts.get(tok, 0) + 1
    kept = sorted(
        ((tok, c) for tok, c in counts.items() if c >= min_count),
        key=lambda item: (-item[1], item[0]),
    )
    if not kept:
        raise EmbeddingError(f"no token reaches min_count={min_count}")
    tokens = [tok for tok, _ in kept]
    return Vocabulary(
        token_to_index={tok: i for i, tok in enumerate(tokens)},
        tokens=tokens,
        counts=np.array([c for _, c in kept], dtype=np.int64),
        min_count=min_count,
    )


def token_ngrams(token: str, minn: int, maxn: int) -> list[str]:
    """Character n-grams of "<token>", full bracketed form excluded."""
    wrapped = f"<{token}>"
    grams = []
    for n in range(minn, maxn + 1):
        if n >= len(wrapped):
            continue
        for i in range(len(wrapped) - n + 1):
            grams.append(wrapped[i : i + n])
    return grams


@dataclass
class EmbeddingTable:
    """Input (published) and context vectors for every vocabulary token.

    With subword enabled, the published vector of a token is the mean of
    its own input row and its n-gram rows, which also serves out-of-
    vocabulary tokens (minus the token row).
    """

    vocab: Vocabulary
    input_vectors: np.ndarray
    output_vectors: np.ndarray
    subword: tuple[int, int] | None = None
    ngram_to_index: dict[str, int] = field(default_factory=dict)
    ngram_vectors: np.ndarray | None = None
    loss_history: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.input_vectors.shape[1]

    def _compose_rows(self, token: str) -> np.ndarray | None:
        rows = []
        idx = self.vocab.token_to_index.get(token)
        if idx is not None:
            rows.append(self.input_vectors[idx])
        if self.subword is not None:
            minn, maxn = self.subword
            for gram in token_ngrams(token, minn, maxn):
                gi = self.ngram_to_index.get(gram)
                if gi is not None:
                    rows.append(self.ngram_vectors[gi])
        if not rows:
            return None
        return np.mean(rows, axis=0)

    def vector_of(self, token: str) -> np.ndarray:
        """Published vector; out-of-vocabulary tokens are composed from
        known n-grams when subword is on, otherwise an error."""
        if self.subword is None:
            idx = self.vocab.token_to_index.get(token)
            if idx is None:
                raise EmbeddingError(f"unknown token {token!r}")
            return self.input_vectors[idx].copy()
        vec = self._compose_rows(token)
        if vec is None:
            raise EmbeddingError(f"unknown token {token!r} and no known n-grams")
        return vec

    def __contains__(self, token: str) -> bool:
        if token in self.vocab:
            return True
        return self.subword is not None and self._compose_rows(token) is not None


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise EmbeddingError("cosine undefined for zero-norm vector")
    return float(np.dot(a, b) / (na * nb))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def sgns_loss_and_grads(
    center: np.ndarray, context: np.ndarray, negatives: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Loss and analytic gradients for one (center, context, negatives) triple.

    Returns (loss, d_center, d_context, d_negatives) for the negative
    sampling loss -log s(u_ctx.v) - sum_j log s(-u_neg_j.v).
    """
    pos_dot = float(np.dot(context, center))
    neg_dots = negatives @ center
    loss = -float(_log_sigmoid(pos_dot)) - float(np.sum(_log_sigmoid(-neg_dots)))
    s_pos = float(_sigmoid(pos_dot))
    s_neg = _sigmoid(neg_dots)
    d_center = (s_pos - 1.0) * context + s_neg @ negatives
    d_context = (s_pos - 1.0) * center
    d_negatives = s_neg[:, None] * center
    return loss, d_center, d_context, d_negatives


def _noise_cdf(counts: np.ndarray, exponent: float) -> np.ndarray:
    weights = counts.astype(np.float64) ** exponent
    cdf = np.cumsum(weights / weights.sum())
    cdf[-1] = 1.0  # guard searchsorted against cumsum round-off
    return cdf


def train_embeddings(sequences: list[list[str]], cfg: EmbedConfig) -> EmbeddingTable:
    """Train token vectors over the corpus; pure function of (corpus, cfg).

    Out-of-vocabulary tokens are removed before windowing, so context
    distance is measured over the surviving tokens of each sequence.
    """
    vocab = build_vocab(sequences, cfg.min_count)
    rng = np.random.default_rng(cfg.seed)
    n_tokens = len(vocab)
    dim = cfg.dim

    input_vectors = (rng.random((n_tokens, dim)) - 0.5) / dim
    output_vectors = np.zeros((n_tokens, dim))

    ngram_to_index: dict[str, int] = {}
    ngram_vectors: np.ndarray | None = None
    token_rows: list[np.ndarray] | None = None
    if cfg.subword is not None:
        minn, maxn = cfg.subword
        per_token_grams = [token_ngrams(tok, minn, maxn) for tok in vocab.tokens]
        for grams in per_token_grams:
            for gram in grams:
                if gram not in ngram_to_index:
                    ngram_to_index[gram] = len(ngram_to_index)
        ngram_vectors = (rng.random((len(ngram_to_index), dim)) - 0.5) / dim
        token_rows = [
            np.array(
                [i] + [n_tokens + ngram_to_index[gram] for gram in per_token_grams[i]],
                dtype=np.int64,
            )
            for i in range(n_tokens)
        ]
        # single input matrix: token rows first, n-gram rows after
        input_vectors = np.vstack([input_vectors, ngram_vectors])

    indexed = []
    for seq in sequences:
        idx = [vocab.token_to_index[t] for t in seq if t in vocab.token_to_index]
        if len(idx) >= 2:
            indexed.append(np.array(idx, dtype=np.int64))

    window = cfg.window
    pairs_per_epoch = 0
    for seq in indexed:
        n = len(seq)
        for i in range(n):
            pairs_per_epoch += min(i, window) + min(n - 1 - i, window)
    total_pairs = pairs_per_epoch * cfg.epochs
    if total_pairs == 0:
        raise EmbeddingError("corpus has no context pairs to train on")

    cdf = _noise_cdf(vocab.counts, cfg.noise_exponent)
    lr0 = cfg.learning_rate
    k = cfg.negatives
    seen = 0
    history = []

    for _epoch in range(cfg.epochs):
        epoch_loss = 0.0
        for seq in indexed:
            n = len(seq)
            for i in range(n):
                ctx = np.concatenate((seq[max(0, i - window) : i], seq[i + 1 : i + 1 + window]))
                n_ctx = len(ctx)
                if n_ctx == 0:
                    continue
                lr = lr0 * (1.0 - seen / total_pairs)
                center_idx = seq[i]
                if token_rows is not None:
                    rows = token_rows[center_idx]
                    v = input_vectors[rows].mean(axis=0)
                else:
                    rows = None
                    v = input_vectors[center_idx]

                neg = np.searchsorted(cdf, rng.random(n_ctx * k))
                u_ctx = output_vectors[ctx]
                u_neg = output_vectors[neg]
                pos_dots = u_ctx @ v
                neg_dots = u_neg @ v
                epoch_loss += -float(np.sum(_log_sigmoid(pos_dots)))
                epoch_loss += -float(np.sum(_log_sigmoid(-neg_dots)))

                g_pos = _sigmoid(pos_dots) - 1.0
                g_neg = _sigmoid(neg_dots)
                d_center = g_pos @ u_ctx + g_neg @ u_neg
                np.add.at(output_vectors, ctx, (-lr * g_pos)[:, None] * v)
                np.add.at(output_vectors, neg, (-lr * g_neg)[:, None] * v)
                if rows is not None:
                    input_vectors[rows] -= (lr / len(rows)) * d_center
                else:
                    input_vectors[center_idx] -= lr * d_center
                seen += n_ctx
        mean_loss = epoch_loss / pairs_per_epoch / (1 + k)
        if not np.isfinite(mean_loss):
            raise EmbeddingError(f"non-finite training loss at epoch {_epoch + 1}: {mean_loss}")
        history.append(mean_loss)

    if cfg.subword is not None:
        ngram_vectors = input_vectors[n_tokens:]
        input_vectors = input_vectors[:n_tokens]
    return EmbeddingTable(
        vocab=vocab,
        input_vectors=input_vectors,
        output_vectors=output_vectors,
        subword=cfg.subword,
        ngram_to_index=ngram_to_index,
        ngram_vectors=ngram_vectors,
        loss_history=history,
    )


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    """Text format: "<vocab_size> <dim>" header, then one token per line
    followed by its published vector at 6 decimal places."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(table.vocab)} {table.dim}\n")
        for token in table.vocab.tokens:
            vec = table.vector_of(token)
            fh.write(token + " " + " ".join(f"{x:.6f}" for x in vec) + "\n")


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Load the text format; the result has no subword table and its
    context vectors are zero (lookup-only use)."""
    with Path(path).open("r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbeddingError(f"bad embedding file header in {path}")
        size, dim = int(header[0]), int(header[1])
        tokens = []
        vectors = np.empty((size, dim))
        for row in range(size):
            parts = fh.readline().split()
            if len(parts) != dim + 1:
                raise EmbeddingError(f"bad embedding line {row + 2} in {path}")
            tokens.append(parts[0])
            vectors[row] = [float(x) for x in parts[1:]]
    vocab = Vocabulary(
        token_to_index={tok: i for i, tok in enumerate(tokens)},
        tokens=tokens,
        counts=np.ones(size, dtype=np.int64),
        min_count=1,
    )
    return EmbeddingTable(vocab=vocab, input_vectors=vectors, output_vectors=np.zeros_like(vectors))
