"""Pairwise matching: inverted-index candidate generation, condition vectors,
and the weighted matching score.

Type-1 names score over five conditions (token, first-token, url-text, domain,
cosine); type-2 names, made entirely of common words, score over domain and
cosine only. The two classes are never paired with each other. With unit
weights the score lives in [-1, 5] for type-1 and [-1, 2] for type-2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .augment import DomainInfo
from .embed import NameEmbedding, cosine_similarity
from .errors import InputError
from .parse import CleanName, NameClass

PAIRS_HEADER = ["id_a", "id_b", "token", "first", "urltext", "domain", "cos", "score"]

_EMPTY_INFO = DomainInfo(record_id="", domain=None, url_tokens=frozenset())


@dataclass(frozen=True)
class WeightVector:
    token: float = 1.0
    first_token: float = 1.0
    url_text: float = 1.0
    domain: float = 1.0
    cos: float = 1.0

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if not math.isfinite(value) or value < 0:
                raise InputError(f"weight {name} must be finite and >= 0, got {value}")

    def as_dict(self) -> dict[str, float]:
        return {
            "token": self.token,
            "first_token": self.first_token,
            "url_text": self.url_text,
            "domain": self.domain,
            "cos": self.cos,
        }

    @classmethod
    def unit(cls) -> "WeightVector":
        return cls()


@dataclass(frozen=True)
class ConditionVector:
    """Evaluated conditions for one candidate pair. Token-based fields are
    None for type-2 pairs, where they are undefined rather than zero."""

    kind: NameClass
    token_common: Optional[int]
    first_token_common: Optional[int]
    url_text_common: Optional[int]
    domain_common: int
    cos: float
    cos_degenerate: bool = False

    def __post_init__(self):
        binaries = [self.token_common, self.first_token_common, self.url_text_common]
        if self.kind is NameClass.TYPE1:
            if any(b is None for b in binaries):
                raise ValueError("type-1 conditions need all three token-based fields")
            if self.first_token_common > self.token_common:
                raise ValueError("first_token_common cannot exceed token_common")
        else:
            if any(b is not None for b in binaries):
                raise ValueError("type-2 conditions must leave token-based fields unset")
        for b in binaries + [self.domain_common]:
            if b is not None and b not in (0, 1):
                raise ValueError(f"binary condition out of range: {b}")
        if not -1.0 <= self.cos <= 1.0:
            raise ValueError(f"cos out of range: {self.cos}")


def evaluate_conditions(
    a: CleanName,
    b: CleanName,
    info_a: Optional[DomainInfo],
    info_b: Optional[DomainInfo],
    emb_a: NameEmbedding,
    emb_b: NameEmbedding,
) -> ConditionVector:
    """Evaluate the condition vector for one same-class pair."""
    if a.name_class is None or b.name_class is None:
        raise ValueError("names must be classified before condition evaluation")
    if a.name_class is not b.name_class:
        raise ValueError(
            f"cannot pair {a.record_id!r} ({a.name_class.name}) with "
            f"{b.record_id!r} ({b.name_class.name})"
        )
    info_a = info_a or _EMPTY_INFO
    info_b = info_b or _EMPTY_INFO
    domain_common = int(info_a.domain is not None and info_a.domain == info_b.domain)
    if emb_a.degenerate or emb_b.degenerate:
        cos, cos_degenerate = 0.0, True
    else:
        cos, cos_degenerate = cosine_similarity(emb_a.vector, emb_b.vector), False
    if a.name_class is NameClass.TYPE2:
        return ConditionVector(
            kind=NameClass.TYPE2,
            token_common=None,
            first_token_common=None,
            url_text_common=None,
            domain_common=domain_common,
            cos=cos,
            cos_degenerate=cos_degenerate,
        )
    tokens_a, tokens_b = set(a.tokens), set(b.tokens)
    token_common = int(bool(tokens_a & tokens_b))
    first_token_common = int(token_common == 1 and a.tokens[0] == b.tokens[0])
    # Both names must share a word with their own page text before the
    # cross-name intersection counts for anything.
    own_a = bool(tokens_a & info_a.url_tokens)
    own_b = bool(tokens_b & info_b.url_tokens)
    url_text_common = int(own_a and own_b and bool(info_a.url_tokens & info_b.url_tokens))
    return ConditionVector(
        kind=NameClass.TYPE1,
        token_common=token_common,
        first_token_common=first_token_common,
        url_text_common=url_text_common,
        domain_common=domain_common,
        cos=cos,
        cos_degenerate=cos_degenerate,
    )


def matching_score(conditions: ConditionVector, weights: WeightVector) -> float:
    """Scalar product of the condition vector with the class-appropriate weights."""
    base = weights.domain * conditions.domain_common + weights.cos * conditions.cos
    if conditions.kind is NameClass.TYPE2:
        return base
    return (
        base
        + weights.token * conditions.token_common
        + weights.first_token * conditions.first_token_common
        + weights.url_text * conditions.url_text_common
    )


@dataclass(frozen=True)
class ScoredPair:
    id_a: str
    id_b: str
    conditions: ConditionVector
    score: float

    def __post_init__(self):
        if not self.id_a < self.id_b:
            raise ValueError(f"pair ids must satisfy id_a < id_b: {self.id_a!r}, {self.id_b!r}")


def generate_candidate_pairs(
    names: Sequence[CleanName],
    domain_info: Mapping[str, DomainInfo],
) -> list[tuple[str, str]]:
    """Blocked candidate pairs: same class and at least one shared index key.

    Type-1 names are indexed on every name token, their domain, and their url
    tokens, so any pair able to fire a binary condition shares a key; type-2
    names only ever fire the domain condition and are indexed on domains alone.
    Output is each unordered pair once, sorted.
    """
    buckets: dict[tuple[str, int, str], list[str]] = {}
    for name in names:
        if name.name_class is None:
            raise ValueError(f"name {name.record_id!r} is not classified")
        cls = name.name_class.value
        info = domain_info.get(name.record_id, _EMPTY_INFO)
        keys: set[tuple[str, int, str]] = set()
        if name.name_class is NameClass.TYPE1:
            for token in set(name.tokens):
                keys.add(("t", cls, token))
            for url_token in info.url_tokens:
                keys.add(("u", cls, url_token))
        if info.domain is not None:
            keys.add(("d", cls, info.domain))
        for key in keys:
            buckets.setdefault(key, []).append(name.record_id)
    pairs: set[tuple[str, str]] = set()
    for key in buckets:
        members = sorted(buckets[key])
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                pairs.add((members[i], members[j]))
    return sorted(pairs)


def brute_force_candidates(names: Sequence[CleanName]) -> list[tuple[str, str]]:
    """Every same-class unordered pair; the --brute-force path."""
    by_class: dict[int, list[str]] = {}
    for name in names:
        if name.name_class is None:
            raise ValueError(f"name {name.record_id!r} is not classified")
        by_class.setdefault(name.name_class.value, []).append(name.record_id)
    pairs: list[tuple[str, str]] = []
    for cls in sorted(by_class):
        members = sorted(by_class[cls])
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                pairs.append((members[i], members[j]))
    return sorted(pairs)


def score_pairs(
    names_by_id: Mapping[str, CleanName],
    pairs: Iterable[tuple[str, str]],
    domain_info: Mapping[str, DomainInfo],
    embeddings: Mapping[str, NameEmbedding],
    weights: WeightVector,
) -> list[ScoredPair]:
    """Evaluate and score candidate pairs; output sorted by (id_a, id_b)."""
    scored: list[ScoredPair] = []
    for id_a, id_b in pairs:
        if id_a > id_b:
            id_a, id_b = id_b, id_a
        conditions = evaluate_conditions(
            names_by_id[id_a],
            names_by_id[id_b],
            domain_info.get(id_a),
            domain_info.get(id_b),
            embeddings[id_a],
            embeddings[id_b],
        )
        scored.append(
            ScoredPair(id_a=id_a, id_b=id_b, conditions=conditions, score=matching_score(conditions, weights))
        )
    scored.sort(key=lambda p: (p.id_a, p.id_b))
    return scored


def _fmt(value: float) -> str:
    return format(value, ".12g")


def write_scored_pairs(pairs: Sequence[ScoredPair], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("\t".join(PAIRS_HEADER) + "\n")
        for pair in pairs:
            c = pair.conditions
            if c.kind is NameClass.TYPE1:
                token, first, urltext = str(c.token_common), str(c.first_token_common), str(c.url_text_common)
            else:
                token = first = urltext = ""
            fh.write(
                "\t".join(
                    [pair.id_a, pair.id_b, token, first, urltext, str(c.domain_common), _fmt(c.cos), _fmt(pair.score)]
                )
                + "\n"
            )


def read_scored_pairs(path: str | Path) -> list[ScoredPair]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"pairs file not found: {path}")
    out: list[ScoredPair] = []
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != PAIRS_HEADER:
            raise InputError(f"{path}: bad header {header!r}")
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 8:
                raise InputError(f"{path} line {line_no}: expected 8 fields, got {len(cols)}")
            id_a, id_b, token, first, urltext, domain, cos_s, score_s = cols
            try:
                if token == "":
                    conditions = ConditionVector(
                        kind=NameClass.TYPE2,
                        token_common=None,
                        first_token_common=None,
                        url_text_common=None,
                        domain_common=int(domain),
                        cos=float(cos_s),
                    )
                else:
                    conditions = ConditionVector(
                        kind=NameClass.TYPE1,
                        token_common=int(token),
                        first_token_common=int(first),
                        url_text_common=int(urltext),
                        domain_common=int(domain),
                        cos=float(cos_s),
                    )
                out.append(ScoredPair(id_a=id_a, id_b=id_b, conditions=conditions, score=float(score_s)))
            except (ValueError, InputError) as exc:
                raise InputError(f"{path} line {line_no}: {exc}") from exc
    return out
