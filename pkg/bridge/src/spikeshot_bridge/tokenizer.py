"""Text tokenization for the contrastive backbone.

With a BPE merges file (the standard 49152-merge vocabulary shipped with the
published checkpoints, usually ``bpe_simple_vocab_16e6.txt.gz``) this is the
byte-level BPE used at pretraining time, so real weights see the token ids
they were trained with. Without one, a deterministic byte-level fallback
keeps offline runs (random-init weights) reproducible; outputs record which
tokenizer produced them.
"""

from __future__ import annotations

import gzip
import html
from functools import lru_cache
from pathlib import Path

import regex as re

CONTEXT_LENGTH = 77
VOCAB_SIZE = 49408
SOT_TOKEN = VOCAB_SIZE - 2
EOT_TOKEN = VOCAB_SIZE - 1


@lru_cache()
def bytes_to_unicode() -> dict[int, str]:
    """Reversible byte -> printable-unicode map used by byte-level BPE."""
    bs = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("\xa1"), ord("\xac") + 1))
        + list(range(ord("\xae"), ord("\xff") + 1))
    )
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, (chr(c) for c in cs)))


def get_pairs(word: tuple[str, ...]) -> set[tuple[str, str]]:
    return set(zip(word[:-1], word[1:]))


def _clean(text: str) -> str:
    text = html.unescape(html.unescape(text))
    return " ".join(text.split()).strip().lower()


class BpeTokenizer:
    """Byte-level BPE over the published merge list."""

    def __init__(self, vocab_path: str | Path):
        merges_raw = gzip.open(vocab_path, "rt", encoding="utf-8").read().split("\n")
        merges = [tuple(m.split()) for m in merges_raw[1 : 49152 - 256 - 2 + 1]]
        self.byte_encoder = bytes_to_unicode()
        vocab = list(self.byte_encoder.values())
        vocab = vocab + [v + "</w>" for v in vocab]
        vocab.extend("".join(merge) for merge in merges)
        vocab.extend(["<|startoftext|>", "<|endoftext|>"])
        self.encoder = {token: i for i, token in enumerate(vocab)}
        self.bpe_ranks = {merge: i for i, merge in enumerate(merges)}
        self.cache: dict[str, str] = {}
        self.pattern = re.compile(
            r"""<\|startoftext\|>|<\|endoftext\|>|'s|'t|'re|'ve|'m|'ll|'d|[\p{L}]+|[\p{N}]|[^\s\p{L}\p{N}]+""",
            re.IGNORECASE,
        )

    name = "bpe"

    def bpe(self, token: str) -> str:
        if token in self.cache:
            return self.cache[token]
        word = tuple(token[:-1]) + (token[-1] + "</w>",)
        pairs = get_pairs(word)
        if not pairs:
            return token + "</w>"
        while True:
            bigram = min(pairs, key=lambda p: self.bpe_ranks.get(p, float("inf")))
            if bigram not in self.bpe_ranks:
                break
            first, second = bigram
            new_word: list[str] = []
            i = 0
            while i < len(word):
                try:
                    j = word.index(first, i)
                except ValueError:
                    new_word.extend(word[i:])
                    break
                new_word.extend(word[i:j])
                i = j
                if word[i] == first and i < len(word) - 1 and word[i + 1] == second:
                    new_word.append(first + second)
                    i += 2
                else:
                    new_word.append(word[i])
                    i += 1
            word = tuple(new_word)
            if len(word) == 1:
                break
            pairs = get_pairs(word)
        result = " ".join(word)
        self.cache[token] = result
        return result

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for token in self.pattern.findall(_clean(text)):
            token = "".join(self.byte_encoder[b] for b in token.encode("utf-8"))
            ids.extend(self.encoder[t] for t in self.bpe(token).split(" "))
        return ids


class ByteFallbackTokenizer:
    """UTF-8 bytes as token ids; deterministic stand-in when no vocab is given."""

    name = "byte-fallback"

    def encode(self, text: str) -> list[int]:
        return list(_clean(text).encode("utf-8"))


def load_tokenizer(vocab_path: str | Path | None):
    if vocab_path is None:
        return ByteFallbackTokenizer()
    path = Path(vocab_path)
    if not path.exists():
        raise FileNotFoundError(
            f"BPE vocab not found: {path}. Download the published "
            "bpe_simple_vocab_16e6.txt.gz or omit --bpe-vocab to use the "
            "byte-level fallback (testing only)."
        )
    return BpeTokenizer(path)


def tokenize(texts: list[str], tokenizer, context_length: int = CONTEXT_LENGTH):
    """Pad/truncate to fixed-length id rows with start/end markers."""
    import torch

    result = torch.zeros(len(texts), context_length, dtype=torch.long)
    for i, text in enumerate(texts):
        ids = [SOT_TOKEN] + tokenizer.encode(text) + [EOT_TOKEN]
        if len(ids) > context_length:
            ids = ids[: context_length - 1] + [EOT_TOKEN]
        result[i, : len(ids)] = torch.tensor(ids)
    return result
