"""Fixed synthetic prompt vocabulary.

Captions are structured 4-token sequences: one token each for shape,
color, motion and background. Token id 0 is reserved, the attribute
words occupy a contiguous block, and a dedicated rare token sits far
from them so the caption generator can never emit it by accident.
"""

from __future__ import annotations

from .errors import InvalidArgumentError

SHAPES = ("circle", "square", "triangle")
COLORS = ("red", "green", "blue", "yellow")
MOTIONS = ("static", "slide_left", "slide_right", "slide_up", "bounce", "grow")
BACKGROUNDS = ("black", "white", "gradient")

RARE_WORD = "rare"
VOCAB_SIZE = 64

_ATTRIBUTE_GROUPS = {
    "shape": SHAPES,
    "color": COLORS,
    "motion": MOTIONS,
    "background": BACKGROUNDS,
}

WORD_TO_ID: dict[str, int] = {}
_next = 1
for _group in (SHAPES, COLORS, MOTIONS, BACKGROUNDS):
    for _w in _group:
        WORD_TO_ID[_w] = _next
        _next += 1

RARE_TOKEN_ID = 32
WORD_TO_ID[RARE_WORD] = RARE_TOKEN_ID

ID_TO_WORD = {i: w for w, i in WORD_TO_ID.items()}

TOKEN_KIND: dict[int, str] = {}
for _kind, _words in _ATTRIBUTE_GROUPS.items():
    for _w in _words:
        TOKEN_KIND[WORD_TO_ID[_w]] = _kind


def encode_word(word: str) -> int:
    try:
        return WORD_TO_ID[word]
    except KeyError:
        raise InvalidArgumentError(f"unknown vocabulary word {word!r}") from None


def encode_words(words) -> tuple[int, ...]:
    return tuple(encode_word(w) for w in words)


def decode_ids(ids) -> tuple[str, ...]:
    out = []
    for i in ids:
        if int(i) not in ID_TO_WORD:
            raise InvalidArgumentError(f"token id {i} has no vocabulary word")
        out.append(ID_TO_WORD[int(i)])
    return tuple(out)


def token_kind(token_id: int) -> str | None:
    """Attribute group of a token ('shape'/'color'/'motion'/'background') or None."""
    return TOKEN_KIND.get(int(token_id))


def attribute_tokens(ids) -> tuple[int, ...]:
    """The subset of ids that name a synthetic attribute, in order."""
    return tuple(int(i) for i in ids if int(i) in TOKEN_KIND)
