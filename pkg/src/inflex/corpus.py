"""UniMorph TSV ingestion, vocabularies, copy triples and up-sampling."""
from __future__ import annotations

import dataclasses
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, UsageError, VocabularyError

PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"
RESERVED_CHARS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
COPY = "COPY"
PLACEHOLDER = "_"


@dataclass(frozen=True)
class Example:
    """One inflection triple; ``form`` is None for prediction inputs."""

    lemma: str
    tags: tuple[str, ...]
    form: str | None
    language_id: str = ""
    is_hallucinated: bool = False
    is_copy_task: bool = False

    def __post_init__(self):
        if not self.lemma:
            raise UsageError("example lemma is empty")
        if not self.tags or any(not t for t in self.tags):
            raise UsageError(f"example {self.lemma!r} has an empty tag")
        if self.form is not None and not self.form:
            raise UsageError(f"example {self.lemma!r} has an empty form")

    def replace(self, **changes) -> "Example":
        return dataclasses.replace(self, **changes)


def _nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


def parse_line(line: str, language_id: str = "", *, path=None, lineno: int | None = None) -> Example:
    fields = line.split("\t")
    if len(fields) != 3:
        raise ParseError(f"expected 3 tab-separated fields, found {len(fields)}", path, lineno)
    lemma, form, tagstr = (_nfc(f) for f in fields)
    if not lemma:
        raise ParseError("empty lemma", path, lineno)
    tags = tuple(tagstr.split(";")) if tagstr else ()
    if not tags or any(not t for t in tags):
        raise ParseError(f"empty tag in {tagstr!r}", path, lineno)
    return Example(lemma, tags, None if form in ("", PLACEHOLDER) else form, language_id)


def parse_tsv(path, language_id: str = "") -> list[Example]:
    """Read a UniMorph file: ``lemma<TAB>form<TAB>tag;tag;...`` per line."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8 ({exc.reason})", path) from None
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        out.append(parse_line(line, language_id, path=path, lineno=lineno))
    return out


def format_example(e: Example) -> str:
    return f"{e.lemma}\t{e.form if e.form is not None else PLACEHOLDER}\t{';'.join(e.tags)}"


def write_tsv(path, examples: Iterable[Example]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in examples:
            fh.write(format_example(e) + "\n")


@dataclass
class Vocabulary:
    chars: list[str]
    tags: list[str]
    languages: list[str]
    alphabets: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        self.char_to_id = {c: i for i, c in enumerate(self.chars)}
        self.tag_to_id = {t: i for i, t in enumerate(self.tags)}
        self.lang_to_id = {l: i for i, l in enumerate(self.languages)}

    @property
    def n_chars(self) -> int:
        return len(self.chars)

    @property
    def n_tags(self) -> int:
        return len(self.tags)

    @property
    def n_languages(self) -> int:
        return len(self.languages)

    def encode_chars(self, s: str) -> list[int]:
        get = self.char_to_id.get
        return [get(c, UNK_ID) for c in s]

    def decode_chars(self, ids: Sequence[int]) -> str:
        return "".join(self.chars[i] for i in ids if i >= len(RESERVED_CHARS))

    def encode_tags(self, tags: Sequence[str]) -> list[int]:
        try:
            return [self.tag_to_id[t] for t in tags]
        except KeyError as exc:
            raise VocabularyError(f"unknown tag {exc.args[0]!r}") from None

    def language(self, lang: str) -> int:
        try:
            return self.lang_to_id[lang]
        except KeyError:
            raise VocabularyError(f"unknown language {lang!r}") from None

    def alphabet(self, lang: str) -> tuple[str, ...]:
        return self.alphabets.get(lang, ())

    def to_dict(self) -> dict:
        return {
            "chars": self.chars,
            "tags": self.tags,
            "languages": self.languages,
            "alphabets": {k: "".join(v) for k, v in self.alphabets.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(list(d["chars"]), list(d["tags"]), list(d["languages"]),
                   {k: tuple(v) for k, v in d["alphabets"].items()})

    def compatible(self, other: "Vocabulary") -> bool:
        return self.chars == other.chars and self.tags == other.tags and self.languages == other.languages


def build_vocab(datasets: Sequence[Sequence[Example]]) -> Vocabulary:
    """Deterministic ids: reserved chars, chars, then tags, then languages,
    each in first-occurrence order."""
    if not any(len(d) for d in datasets):
        raise UsageError("build_vocab needs at least one example")
    chars = dict.fromkeys(RESERVED_CHARS)
    tags = dict.fromkeys([COPY])
    langs: dict[str, None] = {}
    alphabets: dict[str, dict[str, None]] = {}
    for data in datasets:
        for e in data:
            langs.setdefault(e.language_id)
            alpha = alphabets.setdefault(e.language_id, {})
            for s in (e.lemma, e.form or ""):
                for c in s:
                    chars.setdefault(c)
                    alpha.setdefault(c)
            for t in e.tags:
                tags.setdefault(t)
    return Vocabulary(list(chars), list(tags), list(langs),
                      {k: tuple(v) for k, v in alphabets.items()})


def make_copy_triples(e: Example) -> tuple[Example, Example]:
    """``[X, COPY, X]`` and ``[Y, T, Y]`` for a labelled triple."""
    if e.form is None:
        raise UsageError(f"copy triples need a form ({e.lemma!r} has none)")
    return (
        Example(e.lemma, (COPY,), e.lemma, e.language_id, e.is_hallucinated, True),
        Example(e.form, e.tags, e.form, e.language_id, e.is_hallucinated, True),
    )


def upsample(low: Sequence[Example], target_size: int, rng: np.random.Generator) -> list[Example]:
    """Repeat ``low`` to exactly ``target_size`` items.

    Every item appears ``target_size // len(low)`` times; the remainder is
    a uniform draw without replacement.
    """
    if not low:
        raise UsageError("upsample: empty input")
    if target_size < len(low):
        raise UsageError(f"upsample: target {target_size} below input size {len(low)}")
    reps, extra = divmod(target_size, len(low))
    out = list(low) * reps
    if extra:
        out.extend(low[i] for i in sorted(rng.choice(len(low), size=extra, replace=False)))
    return out
