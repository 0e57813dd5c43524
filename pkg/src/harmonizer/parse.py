"""Name parsing: unicode folding, punctuation mapping, legal-designator
stripping, the corpus common-word list, and the type-1/type-2 split.

A cleaned name keeps both its pre-strip token sequence (``base_tokens``) and
the post-strip ``tokens``; names made of nothing but designators fall back to
``base_tokens`` and carry a ``degenerate`` flag.
"""

from __future__ import annotations

import enum
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import InputError

# Punctuation is mapped to space, not deleted, so "AT&T-style" names keep
# their token boundaries. The ampersand becomes a word first.
DEFAULT_SUBSTITUTIONS: Mapping[str, str] = {"&": " and "}

_LANG_PREFIX_RE = re.compile(r"^[a-z]{2,4}:")
_NON_WORD_RE = re.compile(r"[^\w]|_", re.UNICODE)
_WS_RE = re.compile(r"\s+")


class NameClass(enum.Enum):
    """Scoring class: TYPE2 names consist entirely of common words."""

    TYPE1 = 1
    TYPE2 = 2


@dataclass(frozen=True)
class CleanName:
    record_id: str
    cleaned: str
    tokens: tuple[str, ...]
    base_tokens: tuple[str, ...]
    degenerate: bool = False
    name_class: Optional[NameClass] = None

    def with_class(self, name_class: NameClass) -> "CleanName":
        return CleanName(
            record_id=self.record_id,
            cleaned=self.cleaned,
            tokens=self.tokens,
            base_tokens=self.base_tokens,
            degenerate=self.degenerate,
            name_class=name_class,
        )


def fold_text(raw: str) -> str:
    """NFKD-fold, drop combining marks, lowercase."""
    decomposed = unicodedata.normalize("NFKD", raw)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch)).lower()


def normalize_tokens(raw: str, substitutions: Mapping[str, str] = DEFAULT_SUBSTITUTIONS) -> list[str]:
    """Fold, apply substitutions, map punctuation to space, split."""
    text = fold_text(raw)
    for src, dst in substitutions.items():
        text = text.replace(src, dst)
    text = _NON_WORD_RE.sub(" ", text)
    return text.split()


class LegalDesignatorDictionary:
    """Whole-token designator sequences, matched longest-first at the tail."""

    def __init__(self, sequences: Iterable[Sequence[str]]):
        entries = set()
        for seq in sequences:
            entry = tuple(seq)
            if not entry or not all(entry):
                raise InputError(f"bad designator sequence: {seq!r}")
            entries.add(entry)
        self.entries: frozenset[tuple[str, ...]] = frozenset(entries)
        self.max_len = max((len(e) for e in entries), default=0)

    @classmethod
    def from_file(cls, path: str | Path | None = None) -> "LegalDesignatorDictionary":
        """Parse the dictionary file (one sequence per line, optional lang: prefix)."""
        if path is None:
            text = resources.files("harmonizer.data").joinpath("legal_designators.txt").read_text("utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        sequences = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            line = _LANG_PREFIX_RE.sub("", line)
            tokens = normalize_tokens(line)
            if tokens:
                sequences.append(tokens)
        return cls(sequences)

    def tail_match(self, tokens: Sequence[str]) -> int:
        """Length of the longest designator suffix of ``tokens`` (0 if none)."""
        limit = min(self.max_len, len(tokens))
        for length in range(limit, 0, -1):
            if tuple(tokens[-length:]) in self.entries:
                return length
        return 0

    def __contains__(self, seq: Sequence[str]) -> bool:
        return tuple(seq) in self.entries

    def __len__(self) -> int:
        return len(self.entries)


_default_designators: Optional[LegalDesignatorDictionary] = None


def default_designators() -> LegalDesignatorDictionary:
    global _default_designators
    if _default_designators is None:
        _default_designators = LegalDesignatorDictionary.from_file()
    return _default_designators


def strip_legal_suffixes(
    tokens: Sequence[str],
    designators: LegalDesignatorDictionary,
    interior: bool = False,
) -> list[str]:
    """Remove designator sequences from the token tail, repeatedly.

    With ``interior=True``, whole-sequence matches inside the name are removed
    as well (tail first, then a single left-to-right interior sweep).
    """
    out = list(tokens)
    while out:
        matched = designators.tail_match(out)
        if matched == 0:
            break
        del out[-matched:]
    if interior and out:
        kept: list[str] = []
        i = 0
        while i < len(out):
            limit = min(designators.max_len, len(out) - i)
            matched = 0
            for length in range(limit, 0, -1):
                if tuple(out[i : i + length]) in designators.entries:
                    matched = length
                    break
            if matched:
                i += matched
            else:
                kept.append(out[i])
                i += 1
        out = kept
    return out


def clean_name(
    raw: str,
    correction: Optional[str] = None,
    designators: Optional[LegalDesignatorDictionary] = None,
    *,
    record_id: str = "",
    interior: bool = False,
    substitutions: Mapping[str, str] = DEFAULT_SUBSTITUTIONS,
) -> CleanName:
    """Clean one name. When a spelling correction is given it replaces the
    raw text as the starting point; the raw name stays the record identity.
    """
    if designators is None:
        designators = default_designators()
    source = correction if correction and correction.strip() else raw
    base_tokens = normalize_tokens(source, substitutions)
    if not base_tokens:
        raise InputError(f"name normalizes to nothing: {raw!r}")
    tokens = strip_legal_suffixes(base_tokens, designators, interior=interior)
    degenerate = len(tokens) == 0
    if degenerate:
        # Nothing but designators ("L.L.C."): keep the pre-strip form.
        tokens = list(base_tokens)
    return CleanName(
        record_id=record_id,
        cleaned=" ".join(tokens),
        tokens=tuple(tokens),
        base_tokens=tuple(base_tokens),
        degenerate=degenerate,
    )


class CommonWordList:
    """Top-n corpus tokens by name-presence count, ties lexicographic."""

    def __init__(self, ordered: Sequence[str]):
        self.ordered: tuple[str, ...] = tuple(ordered)
        self._members = frozenset(self.ordered)

    def __contains__(self, token: str) -> bool:
        return token in self._members

    def __len__(self) -> int:
        return len(self.ordered)

    def __iter__(self):
        return iter(self.ordered)


def build_common_word_list(names: Iterable[CleanName], n: int) -> CommonWordList:
    """Count each token once per name it appears in; keep the top n."""
    if n < 0:
        raise InputError(f"common-word count must be >= 0, got {n}")
    counts: Counter[str] = Counter()
    for name in names:
        counts.update(set(name.tokens))
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return CommonWordList([token for token, _ in ranked[:n]])


def classify_name_type(tokens: Sequence[str], common: CommonWordList) -> NameClass:
    """TYPE2 iff every token is a common word."""
    if not tokens:
        raise ValueError("cannot classify an empty token list")
    return NameClass.TYPE2 if all(t in common for t in tokens) else NameClass.TYPE1
