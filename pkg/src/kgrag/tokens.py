"""Tokenization and token counting shared by the pipeline budget and ROUGE scoring.

Two schemes are supported:

* ``unicode-words-cjk-chars`` (default): every CJK codepoint (kanji, kana,
  halfwidth kana) is its own token; runs of other word characters form one
  lowercased token each; punctuation and whitespace are dropped.
* ``whitespace``: split on whitespace, lowercase.

Both are pure functions of (text, scheme), so counts and scores are
reproducible across machines without a vendor tokenizer.
"""

from __future__ import annotations

import re

SCHEME_WORDS_CJK = "unicode-words-cjk-chars"
SCHEME_WHITESPACE = "whitespace"
SCHEMES = (SCHEME_WORDS_CJK, SCHEME_WHITESPACE)
DEFAULT_SCHEME = SCHEME_WORDS_CJK

# Hiragana, katakana (incl. phonetic extensions and halfwidth forms),
# CJK unified ideographs (base + ext A) and compatibility ideographs.
_CJK_CLASS = (
    "぀-ヿ"
    "ㇰ-ㇿ"
    "㐀-䶿"
    "一-鿿"
    "豈-﫿"
    "ｦ-ﾟ"
)
_TOKEN_RE = re.compile(rf"([{_CJK_CLASS}])|((?:(?![{_CJK_CLASS}])\w)+)")


def tokenize(text: str, scheme: str = DEFAULT_SCHEME) -> list[str]:
    """Split text into tokens under the named scheme."""
    if scheme == SCHEME_WHITESPACE:
        return [t.lower() for t in text.split()]
    if scheme != SCHEME_WORDS_CJK:
        raise ValueError(f"unknown token scheme: {scheme!r}")
    tokens: list[str] = []
    for cjk, word in _TOKEN_RE.findall(text):
        tokens.append(cjk if cjk else word.lower())
    return tokens


def count_tokens(text: str, scheme: str = DEFAULT_SCHEME) -> int:
    """Number of tokens in ``text`` under the named scheme."""
    return len(tokenize(text, scheme))
