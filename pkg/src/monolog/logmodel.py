"""Event logs: parsing, argument tokenization and the token vocabulary.

A log file is UTF-8 JSON lines, one event per line::

    {"t": "RegSetValue", "args": ["HKCU\\Software\\...", "1"]}

Arguments stay raw strings inside :class:`EventLine`; a :class:`Vocabulary`
turns them into :data:`Argument` values (sorted tuples of token ids), which
is what the behavior graph keys its argument nodes on.
"""
from __future__ import annotations

import io
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from os import PathLike
from typing import IO, Iterable, Iterator, Sequence, Union

#: Canonical multiset of token ids. Two raw arguments with the same
#: multiset are the same graph node.
Argument = tuple

BENIGN = 0
MALWARE = 1


class LogFormatError(ValueError):
    """Malformed log input. ``lineno`` is 1-based, or None if not line-bound."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


# ---------------------------------------------------------------------------
# tokenizer

#: Default character classes, tried in order. Whitespace is a separator and
#: is dropped unless ``keep_separators`` is set.
DEFAULT_CLASSES = (
    ("word", r"[^\W_]+"),
    ("punct", r"[^\w\s]+|_+"),
)


@dataclass(frozen=True)
class TokenizerConfig:
    classes: tuple = DEFAULT_CLASSES
    keep_separators: bool = False

    def regex(self) -> re.Pattern:
        alts = [f"(?P<{name}>{pat})" for name, pat in self.classes]
        alts.append(r"(?P<sep>\s+)")
        return re.compile("|".join(alts))

    def to_dict(self) -> dict:
        return {"classes": [list(c) for c in self.classes],
                "keep_separators": self.keep_separators}

    @classmethod
    def from_dict(cls, d: dict) -> "TokenizerConfig":
        return cls(tuple(tuple(c) for c in d["classes"]), bool(d["keep_separators"]))


DEFAULT_TOKENIZER = TokenizerConfig()
_REGEX_CACHE: dict = {}


def split_tokens(raw: Union[str, bytes], config: TokenizerConfig = DEFAULT_TOKENIZER) -> list[str]:
    """Split ``raw`` at character-class boundaries, keeping token order.

    >>> split_tokens("C:\\\\Windows\\\\374683.ini")
    ['C', ':\\\\', 'Windows', '\\\\', '374683', '.', 'ini']
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8", errors="replace")
    rx = _REGEX_CACHE.get(config)
    if rx is None:
        rx = _REGEX_CACHE[config] = config.regex()
    out = []
    for m in rx.finditer(raw):
        if m.lastgroup == "sep" and not config.keep_separators:
            continue
        out.append(m.group())
    return out


class Vocabulary:
    """Frequency-ranked token vocabulary. Id ``len(vocab)`` is the shared OOV id."""

    def __init__(self, tokens: Sequence[str] = (), tokenizer: TokenizerConfig = DEFAULT_TOKENIZER):
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.tokenizer = tokenizer
        self._cache: dict = {}

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Vocabulary) and self.tokens == other.tokens
                and self.tokenizer == other.tokenizer)

    @property
    def oov_id(self) -> int:
        return len(self.tokens)

    def tokenize(self, raw: Union[str, bytes]) -> Argument:
        return tokenize_argument(raw, self)

    def encode_line(self, line: "EventLine") -> "EncodedLine":
        cache = self._cache
        args = []
        for raw in line.args:
            a = cache.get(raw)
            if a is None:
                a = cache[raw] = tokenize_argument(raw, self)
            args.append(a)
        return EncodedLine(line.event_type, tuple(args))

    def encode(self, log: "Log") -> list["EncodedLine"]:
        return [self.encode_line(line) for line in log.lines]

    def save(self, path: Union[str, PathLike]) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.tokens, f, ensure_ascii=False)

    @classmethod
    def load(cls, path: Union[str, PathLike]) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            tokens = json.load(f)
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise LogFormatError(f"{path}: vocabulary must be a JSON array of strings")
        return cls(tokens)


def tokenize_argument(raw: Union[str, bytes], vocab: Vocabulary) -> Argument:
    """Map a raw argument string to its canonical token-id multiset.

    Unknown tokens map to ``vocab.oov_id``; an argument with no tokens at
    all becomes a single OOV token so that it is still a graph node.
    """
    pieces = split_tokens(raw, vocab.tokenizer)
    if not pieces:
        return (vocab.oov_id,)
    oov = vocab.oov_id
    index = vocab.index
    return tuple(sorted(index.get(p, oov) for p in pieces))


def build_vocabulary(corpus: Iterable["Log"], max_size: int = 135_907,
                     tokenizer: TokenizerConfig = DEFAULT_TOKENIZER) -> Vocabulary:
    """Keep the ``max_size`` most frequent tokens; ties go to the smaller string."""
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    counts: Counter = Counter()
    for log in corpus:
        for line in log.lines:
            for raw in line.args:
                counts.update(split_tokens(raw, tokenizer))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([t for t, _ in ranked[:max_size]], tokenizer)


# ---------------------------------------------------------------------------
# events and logs


class EventAlphabet:
    """Ordered set of event-type names; position is the event-type id."""

    def __init__(self, names: Sequence[str]):
        self.names = list(names)
        self.index = {n: i for i, n in enumerate(self.names)}
        if len(self.index) != len(self.names):
            raise ValueError("duplicate event-type names")

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        return isinstance(other, EventAlphabet) and self.names == other.names

    def id(self, name: str) -> int:
        try:
            return self.index[name]
        except KeyError:
            raise LogFormatError(f"unknown event type {name!r}") from None

    def save(self, path: Union[str, PathLike]) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.names, f, indent=0)

    @classmethod
    def load(cls, path: Union[str, PathLike]) -> "EventAlphabet":
        with open(path, encoding="utf-8") as f:
            names = json.load(f)
        if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
            raise LogFormatError(f"{path}: event alphabet must be a JSON array of strings")
        return cls(names)


@dataclass(frozen=True)
class EventLine:
    event_type: int
    args: tuple = ()


@dataclass(frozen=True)
class EncodedLine:
    """An event line whose arguments are tokenized :data:`Argument` values."""
    event_type: int
    arguments: tuple = ()


@dataclass(frozen=True)
class Log:
    lines: tuple = ()
    label: int | None = None
    name: str = field(default="", compare=False)

    def __len__(self) -> int:
        return len(self.lines)

    def prefix(self, k: int) -> "Log":
        if not 0 <= k <= len(self.lines):
            raise IndexError(f"prefix length {k} out of range for log of {len(self.lines)} lines")
        return Log(self.lines[:k], self.label, self.name)


def _iter_lines(source) -> Iterator[str]:
    if isinstance(source, (str, PathLike)):
        with open(source, encoding="utf-8") as f:
            yield from f
    else:
        for line in source:
            yield line.decode("utf-8") if isinstance(line, bytes) else line


def parse_log(source: Union[str, PathLike, IO], alphabet: EventAlphabet,
              label: int | None = None) -> Log:
    """Read a JSON-lines log. Blank lines are skipped."""
    lines = []
    for lineno, text in enumerate(_iter_lines(source), start=1):
        if not text.strip():
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise LogFormatError(f"invalid JSON ({e.msg})", lineno) from None
        if not isinstance(obj, dict) or not isinstance(obj.get("t"), str):
            raise LogFormatError('expected an object with a string field "t"', lineno)
        args = obj.get("args", [])
        if not isinstance(args, list) or not all(isinstance(a, str) for a in args):
            raise LogFormatError('"args" must be a list of strings', lineno)
        try:
            etype = alphabet.id(obj["t"])
        except LogFormatError as e:
            raise LogFormatError(str(e), lineno) from None
        lines.append(EventLine(etype, tuple(args)))
    name = str(source) if isinstance(source, (str, PathLike)) else ""
    return Log(tuple(lines), label, name)


def format_log(log: Log, alphabet: EventAlphabet) -> str:
    buf = io.StringIO()
    for line in log.lines:
        buf.write(json.dumps({"t": alphabet.names[line.event_type], "args": list(line.args)},
                             ensure_ascii=False))
        buf.write("\n")
    return buf.getvalue()


def write_log(log: Log, path: Union[str, PathLike], alphabet: EventAlphabet) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_log(log, alphabet))
