"""Cleaning helpers for extracted text."""

import functools
import re
import unicodedata

BULLET_PATTERN = re.compile(r"^[-*•‣]+\s*")


def clean_bullets(text: str) -> str:
    """Remove bullet characters from the beginning of the text."""
    return BULLET_PATTERN.sub("", text).strip()


def clean_extra_whitespace(text: str) -> str:
    """Collapse runs of whitespace in the text into single spaces."""
    return re.sub(r"\s+", " ", text).strip()


def normalize_unicode(text: str, form: str = "NFKC") -> str:
    """Normalize the unicode representation of the text."""
    return unicodedata.normalize(form, text)


@functools.lru_cache(maxsize=None)
def _cached_pattern(prefix: str) -> "re.Pattern[str]":
    """Compile and cache a pattern matching the given prefix."""
    return re.compile(re.escape(prefix) + r"\s*")
