"""Label normalization and string similarity used for node resolution.

The same rule resolves duplicate graph nodes and matches extracted entities
against gold targets, so it lives in one place.
"""

from __future__ import annotations

import re
import string

# Corporate suffixes stripped before comparison. Matched as whole trailing
# words, case-insensitive, possibly repeated ("Acme Holdings Co Ltd").
LEGAL_SUFFIXES = (
    "inc", "incorporated", "ltd", "limited", "llc", "llp", "plc",
    "corp", "corporation", "co", "company", "gmbh", "ag", "sa", "srl",
    "bv", "nv", "oy", "ab", "as", "spa", "pty", "kk",
)

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_SUFFIX_RE = re.compile(
    r"(?:\s+(?:%s))+$" % "|".join(LEGAL_SUFFIXES), re.IGNORECASE
)


def normalize_label(label: str) -> str:
    """Case-fold, strip punctuation and trailing legal suffixes."""
    text = label.translate(_PUNCT_TABLE)
    text = _SUFFIX_RE.sub("", text.strip())
    return " ".join(text.casefold().split())


def levenshtein(a: str, b: str) -> int:
    """Plain edit distance, two-row DP."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def similarity(a: str, b: str) -> float:
    """Normalized Levenshtein similarity in [0, 1] on normalized labels."""
    na, nb = normalize_label(a), normalize_label(b)
    if not na and not nb:
        return 1.0
    longest = max(len(na), len(nb))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(na, nb) / longest
