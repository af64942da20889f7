"""Trainable subword vocabulary and thread encoding.

Training runs greedy byte-pair merges over the corpus word counts; merged
tokens are whole strings, word-final subwords carry a ``</w>`` marker so
that decoding can restore word boundaries.  Application is longest-match
first per word, falling back to [UNK] only for characters never seen in
training.

Threads are flattened to a single id sequence: the texts (title first, then
comments in order) joined by [SEP], with spans recording which text each
region came from.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from threadsum._kernels import pair_counts

PAD, BOS, EOS, SEP, UNK = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("[PAD]", "[BOS]", "[EOS]", "[SEP]", "[UNK]")
_END = "</w>"


class TokenizerError(ValueError):
    """Raised for invalid vocabularies or tokenizer parameters."""


@dataclass(frozen=True)
class Vocab:
    id_to_token: tuple[str, ...]
    lowercase: bool = True
    n_merges: int = 0
    token_to_id: dict = field(default_factory=dict, compare=False, repr=False)
    _word_cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self.token_to_id.clear()
        self.token_to_id.update({t: i for i, t in enumerate(self.id_to_token)})
        if len(self.token_to_id) != len(self.id_to_token):
            raise TokenizerError("vocabulary contains duplicate tokens")
        if self.id_to_token[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise TokenizerError("special tokens must occupy the lowest ids")

    def __len__(self) -> int:
        return len(self.id_to_token)


@dataclass
class TokenSeq:
    ids: list[int]
    spans: list[tuple[int, int, int]]  # (start, end, source_index), SEPs excluded

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def n_texts(self) -> int:
        return self.spans[-1][2] + 1 if self.spans else 0


def _word_symbols(word: str) -> tuple[str, ...]:
    """Split a word into characters, marking the last one as word-final."""
    chars = list(word)
    chars[-1] = chars[-1] + _END
    return tuple(chars)


def _merge_word(symbols: tuple[str, ...], pair: tuple[str, str], merged: str) -> tuple[str, ...]:
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def _corpus_words(corpus, lowercase: bool) -> dict[str, int]:
    counts: dict[str, int] = {}
    for thread in corpus:
        for text in [thread.title] + [c.text for c in thread.comments]:
            if lowercase:
                text = text.lower()
            for word in text.split():
                counts[word] = counts.get(word, 0) + 1
    return counts


def train_vocab(corpus, vocab_size: int, min_freq: int = 1, lowercase: bool = True) -> Vocab:
    """Learn a subword vocabulary by greedy pair merging.

    Merges the most frequent adjacent symbol pair (ties broken by the
    lexicographically smallest pair) until the vocabulary is full or the
    best pair occurs fewer than min_freq times.  Deterministic given the
    corpus order.
    """
    if min_freq < 1:
        raise TokenizerError("min_freq must be >= 1")
    word_counts = _corpus_words(corpus, lowercase)
    if not word_counts:
        raise TokenizerError("cannot train a vocabulary on an empty corpus")

    alphabet: set[str] = set()
    for word in word_counts:
        for ch in word:
            alphabet.add(ch)
            alphabet.add(ch + _END)
    tokens = list(SPECIAL_TOKENS) + sorted(alphabet)
    if vocab_size < len(tokens):
        raise TokenizerError(
            f"vocab_size {vocab_size} too small: need {len(tokens)} for specials plus characters"
        )

    words = [_word_symbols(w) for w in word_counts]
    freqs = list(word_counts.values())
    known = set(tokens)
    n_merges = 0
    while len(tokens) < vocab_size:
        counts = pair_counts(words, freqs)
        if not counts:
            break
        best_count = max(counts.values())
        if best_count < min_freq:
            break
        pair = min(p for p, c in counts.items() if c == best_count)
        merged = pair[0] + pair[1]
        words = [_merge_word(w, pair, merged) if pair[0] in w else w for w in words]
        n_merges += 1
        if merged not in known:
            known.add(merged)
            tokens.append(merged)
    return Vocab(id_to_token=tuple(tokens), lowercase=lowercase, n_merges=n_merges)


def _encode_word(vocab: Vocab, word: str) -> list[int]:
    """Longest-match-first subword split of one word."""
    cached = vocab._word_cache.get(word)
    if cached is not None:
        return list(cached)
    ids = []
    pos = 0
    while pos < len(word):
        match = None
        for end in range(len(word), pos, -1):
            chunk = word[pos:end]
            if end == len(word):
                chunk = chunk + _END
            tid = vocab.token_to_id.get(chunk)
            if tid is not None:
                match = (tid, end)
                break
        if match is None:
            ids.append(UNK)  # character never seen in training
            pos += 1
        else:
            ids.append(match[0])
            pos = match[1]
    vocab._word_cache[word] = tuple(ids)
    return ids


def _truncate(pieces: list[list[int]], max_len: int) -> list[list[int]]:
    """Trim token pieces to fit max_len including separators.

    Comments lose tokens round robin starting from the last comment; the
    title is only cut once every comment is exhausted.
    """

    def total() -> int:
        nonempty = sum(1 for p in pieces if p)
        return sum(len(p) for p in pieces) + max(nonempty - 1, 0)

    comment_idx = list(range(len(pieces) - 1, 0, -1))
    while total() > max_len and any(pieces[i] for i in comment_idx):
        for i in comment_idx:
            if pieces[i]:
                pieces[i].pop()
            if total() <= max_len:
                break
    if total() > max_len:
        pieces[0] = pieces[0][:max_len]
    return pieces


def encode(vocab: Vocab, texts: list[str], max_len: int = 512) -> TokenSeq:
    """Tokenize texts and flatten them into one [SEP]-joined sequence.

    Every text gets a span, empty if truncation consumed it entirely; SEP
    positions belong to no span.  Output never exceeds max_len ids.
    """
    if not texts:
        raise TokenizerError("encode requires at least one text")
    if max_len < 2:
        raise TokenizerError("max_len must be >= 2")
    pieces = []
    for text in texts:
        if vocab.lowercase:
            text = text.lower()
        piece: list[int] = []
        for word in text.split():
            piece.extend(_encode_word(vocab, word))
        pieces.append(piece)
    pieces = _truncate(pieces, max_len)

    ids: list[int] = []
    spans: list[tuple[int, int, int]] = []
    emitted_any = False
    for source, piece in enumerate(pieces):
        if piece and emitted_any:
            ids.append(SEP)
        start = len(ids)
        ids.extend(piece)
        spans.append((start, len(ids), source))
        emitted_any = emitted_any or bool(piece)
    return TokenSeq(ids=ids, spans=spans)


def decode(vocab: Vocab, ids: list[int]) -> str:
    """Inverse of encode for in-vocab text.

    Specials are dropped except [SEP], which renders as " | "; word-final
    subwords close the current word.
    """
    words: list[str] = []
    current = ""
    for tid in ids:
        if not 0 <= tid < len(vocab):
            raise TokenizerError(f"token id {tid} out of range for vocabulary of {len(vocab)}")
        if tid == SEP:
            if current:
                words.append(current)
                current = ""
            words.append("|")
            continue
        if tid in (PAD, BOS, EOS, UNK):
            continue
        token = vocab.id_to_token[tid]
        if token.endswith(_END):
            words.append(current + token[: -len(_END)])
            current = ""
        else:
            current += token
    if current:
        words.append(current)
    return " ".join(words)


def save_vocab(vocab: Vocab, path) -> None:
    """Persist tokens one per line plus a sidecar key-value header."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(vocab.id_to_token) + "\n")
    with open(str(path) + ".meta", "w", encoding="utf-8") as fh:
        fh.write(f"vocab_size={len(vocab)}\n")
        fh.write(f"merges={vocab.n_merges}\n")
        fh.write(f"lowercase={str(vocab.lowercase).lower()}\n")


def load_vocab(path) -> Vocab:
    with open(path, encoding="utf-8") as fh:
        tokens = tuple(line.rstrip("\n") for line in fh if line.rstrip("\n"))
    meta = {}
    with open(str(path) + ".meta", encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                key, value = line.strip().split("=", 1)
                meta[key] = value
    if int(meta.get("vocab_size", len(tokens))) != len(tokens):
        raise TokenizerError("vocab file does not match its sidecar header")
    return Vocab(
        id_to_token=tokens,
        lowercase=meta.get("lowercase", "true") == "true",
        n_merges=int(meta.get("merges", 0)),
    )


def vocab_hash(path) -> str:
    """Content hash binding checkpoints to the exact vocabulary files."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        digest.update(fh.read())
    with open(str(path) + ".meta", "rb") as fh:
        digest.update(fh.read())
    return digest.hexdigest()
