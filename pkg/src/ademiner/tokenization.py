"""Whitespace-and-punctuation tokenizer shared by every pipeline stage.

Rules: split on whitespace, then peel leading/trailing punctuation off each
chunk into separate tokens. Interior symbols are kept ("haven't" stays one
token), and @/#/$/%/& are never peeled so mentions and hashtags survive
whole. Offsets are Unicode scalar-value offsets into the original text.
"""

from __future__ import annotations

import re
from typing import NamedTuple

_WORD = re.compile(r"\S+")

# Characters peeled from token edges. Deliberately excludes @ # $ % & so
# social-media handles, hashtags, and units stay intact.
PEELED = set(".,;:!?()[]{}<>\"'`")


class Token(NamedTuple):
    text: str
    start: int
    end: int


def tokenize(text):
    """Deterministic token list with character offsets."""
    tokens = []
    for match in _WORD.finditer(text):
        chunk = match.group()
        base = match.start()
        left, right = 0, len(chunk)
        while left < right and chunk[left] in PEELED:
            tokens.append(Token(chunk[left], base + left, base + left + 1))
            left += 1
        trailing = []
        while right > left and chunk[right - 1] in PEELED:
            trailing.append(Token(chunk[right - 1], base + right - 1, base + right))
            right -= 1
        if right > left:
            tokens.append(Token(chunk[left:right], base + left, base + right))
        tokens.extend(reversed(trailing))
    return tokens
