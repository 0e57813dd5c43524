"""Input loading: assignee records, gold labels, location keys, name-kind triage.

The assignee table is a TSV with header ``record_id	raw_name	patent_count	locations``
where ``locations`` holds zero or more ``city|state|country`` keys separated by ``;``.
Gold standards are two-column TSVs mapping record_id to entity_id.
"""

from __future__ import annotations

import csv
import enum
import re
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import InputError

ASSIGNEE_HEADER = ["record_id", "raw_name", "patent_count", "locations"]
GOLD_HEADER = ["record_id", "entity_id"]

# Tokens that veto the person-name pattern ("SMITH, JOHN CONSULTING LLC" is
# an organization no matter how comma-shaped it is).
_ORG_KEYWORD_TOKENS = frozenset(
    """
    inc incorporated corp corporation co company companies ltd limited llc llp lp plc
    gmbh mbh ag kg kgaa ohg sa sarl sas srl spa snc bv nv oy oyj ab as aps kk
    holdings holding group industries enterprises partners ventures consulting
    trust bank associates international worldwide technologies systems
    """.split()
)


class NameKind(enum.Enum):
    """Coarse triage of a raw assignee name."""

    ORGANIZATION = "organization"
    INDIVIDUAL = "individual"
    INSTITUTION = "institution"


@dataclass(frozen=True)
class AssigneeRecord:
    record_id: str
    raw_name: str
    patent_count: int = 0
    locations: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.record_id:
            raise InputError("record_id must be non-empty")
        if not self.raw_name or not self.raw_name.strip():
            raise InputError(f"record {self.record_id!r}: raw_name must be non-empty")
        if self.patent_count < 0:
            raise InputError(f"record {self.record_id!r}: patent_count must be >= 0")


@dataclass(frozen=True)
class GoldLabel:
    record_id: str
    entity_id: str


def harmonize_location(city: str, state: str, country: str) -> str:
    """Build the canonical ``city|state|country`` key.

    Components are lowercased, trimmed, and internal whitespace is collapsed,
    so the key is idempotent under re-parsing.
    """
    parts = []
    for component in (city, state, country):
        component = re.sub(r"\s+", " ", (component or "").strip().lower())
        if "|" in component:
            raise InputError(f"location component may not contain '|': {component!r}")
        parts.append(component)
    return "|".join(parts)


def _parse_locations(raw: str, line_no: int) -> frozenset[str]:
    keys = set()
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        components = chunk.split("|")
        if len(components) != 3:
            raise InputError(f"line {line_no}: location key needs city|state|country, got {chunk!r}")
        key = harmonize_location(*components)
        # An all-empty key carries no information; drop it here so it can
        # never pretend two records share a place.
        if key != "||":
            keys.add(key)
    return frozenset(keys)


def load_assignee_table(path: str | Path) -> list[AssigneeRecord]:
    """Load and validate an assignee TSV. Raises InputError naming the bad line."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"input file not found: {path}")
    records: list[AssigneeRecord] = []
    seen: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file, expected header {ASSIGNEE_HEADER}")
        if header != ASSIGNEE_HEADER:
            raise InputError(f"{path}: bad header {header!r}, expected {ASSIGNEE_HEADER}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise InputError(f"{path} line {line_no}: expected 4 fields, got {len(row)}")
            record_id, raw_name, count_s, locations_s = row
            record_id = record_id.strip()
            if not record_id:
                raise InputError(f"{path} line {line_no}: empty record_id")
            if record_id in seen:
                raise InputError(f"{path} line {line_no}: duplicate record_id {record_id!r}")
            seen.add(record_id)
            if not raw_name.strip():
                raise InputError(f"{path} line {line_no}: empty raw_name")
            try:
                count = int(count_s) if count_s.strip() else 0
            except ValueError:
                raise InputError(f"{path} line {line_no}: bad patent_count {count_s!r}")
            if count < 0:
                raise InputError(f"{path} line {line_no}: negative patent_count {count}")
            records.append(
                AssigneeRecord(
                    record_id=record_id,
                    raw_name=raw_name.strip(),
                    patent_count=count,
                    locations=_parse_locations(locations_s, line_no),
                )
            )
    return records


def write_assignee_table(records: Iterable[AssigneeRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("\t".join(ASSIGNEE_HEADER) + "\n")
        for rec in records:
            for piece in (rec.record_id, rec.raw_name):
                if "\t" in piece or "\n" in piece:
                    raise InputError(f"record {rec.record_id!r}: field contains tab/newline")
            locs = ";".join(sorted(rec.locations))
            fh.write(f"{rec.record_id}\t{rec.raw_name}\t{rec.patent_count}\t{locs}\n")


def load_gold_standard(path: str | Path) -> list[GoldLabel]:
    """Load a record_id -> entity_id gold TSV."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"gold file not found: {path}")
    labels: list[GoldLabel] = []
    seen: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file, expected header {GOLD_HEADER}")
        if header != GOLD_HEADER:
            raise InputError(f"{path}: bad header {header!r}, expected {GOLD_HEADER}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise InputError(f"{path} line {line_no}: expected 2 fields, got {len(row)}")
            record_id, entity_id = (row[0].strip(), row[1].strip())
            if not record_id or not entity_id:
                raise InputError(f"{path} line {line_no}: empty field")
            if record_id in seen:
                raise InputError(f"{path} line {line_no}: duplicate record_id {record_id!r}")
            seen.add(record_id)
            labels.append(GoldLabel(record_id=record_id, entity_id=entity_id))
    return labels


def write_gold_standard(labels: Iterable[GoldLabel], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("\t".join(GOLD_HEADER) + "\n")
        for label in labels:
            fh.write(f"{label.record_id}\t{label.entity_id}\n")


# --- name-kind triage -------------------------------------------------------

# "Surname, Forename(s)": 1-2 alphabetic surname tokens, a comma, then 1-3
# forename tokens which may be initials like "A.".
_PERSON_RE = re.compile(
    r"^\s*[^\W\d_][\w'\-]*(?:\s+[^\W\d_][\w'\-]*)?\s*,"
    r"\s*[^\W\d_][\w'\-]*\.?(?:\s+[^\W\d_][\w'\-]*\.?){0,2}\s*$",
    re.UNICODE,
)

_default_institution_keywords: Optional[frozenset[str]] = None


def load_institution_keywords(path: str | Path | None = None) -> frozenset[str]:
    """Load the multilingual institution keyword list (one phrase per line, # comments)."""
    if path is None:
        text = resources.files("harmonizer.data").joinpath("institution_keywords.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    keywords = set()
    for line in text.splitlines():
        line = line.strip().lower()
        if not line or line.startswith("#"):
            continue
        keywords.add(re.sub(r"\s+", " ", line))
    return frozenset(keywords)


def _normalized_tokens(raw_name: str) -> list[str]:
    folded = unicodedata.normalize("NFKD", raw_name)
    folded = "".join(ch for ch in folded if not unicodedata.combining(ch)).lower()
    return re.findall(r"[^\W_]+", folded, re.UNICODE)


def classify_name_kind(raw_name: str, keywords: Sequence[str] | frozenset[str] | None = None) -> NameKind:
    """Triage a raw name into organization / individual / institution.

    Institution keywords win over the person pattern; an organization keyword
    anywhere vetoes the person pattern. Deterministic and total for non-empty
    input.
    """
    if not raw_name or not raw_name.strip():
        raise InputError("cannot classify an empty name")
    global _default_institution_keywords
    if keywords is None:
        if _default_institution_keywords is None:
            _default_institution_keywords = load_institution_keywords()
        keywords = _default_institution_keywords
    tokens = _normalized_tokens(raw_name)
    padded = " " + " ".join(tokens) + " "
    for keyword in keywords:
        if f" {keyword} " in padded:
            return NameKind.INSTITUTION
    if _PERSON_RE.match(raw_name) and not any(t in _ORG_KEYWORD_TOKENS for t in tokens):
        return NameKind.INDIVIDUAL
    return NameKind.ORGANIZATION
