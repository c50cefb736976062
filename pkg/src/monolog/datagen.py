"""Synthetic labelled execution logs with planted malicious motifs.

Background activity is a Zipf-skewed mix of event types and argument
templates. Malware logs additionally carry one or more motifs: short runs of
lines modelled on typical payload behaviour (autorun registration, miner
pool configuration, mass file-extension rewrite, encoded PowerShell, shadow
copy deletion). Benign logs may carry installer/updater activity that never
appears in malware, which a non-monotone model can learn to use as
"benign" evidence. Those installer-like logs also carry marker-free
look-alikes of the motifs early on, so before the installer evidence shows
up a prefix of such a log resembles malware.

Every motif line contains a marker substring, so :func:`oracle_score` can
recover the ground truth by string matching.
"""
from __future__ import annotations

import base64
import csv
import json
from dataclasses import asdict, dataclass, field
from os import PathLike
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .logmodel import BENIGN, MALWARE, EventAlphabet, EventLine, Log, parse_log, write_log

EVENT_TYPES = (
    "CreateFile", "ReadFile", "WriteFile", "DeleteFile", "MoveFile", "CopyFile",
    "FindFirstFile", "GetFileAttributes", "SetFileAttributes", "CreateDirectory",
    "RegOpenKey", "RegQueryValue", "RegSetValue", "RegDeleteValue", "RegCreateKey",
    "LoadLibrary", "GetProcAddress", "CreateProcess", "OpenProcess", "TerminateProcess",
    "CreateThread", "CreateMutex", "OpenMutex", "VirtualAlloc", "VirtualProtect",
    "Connect", "DnsQuery", "HttpSendRequest", "InternetOpenUrl",
    "CreateService", "StartService", "OpenService", "Sleep", "GetSystemTime",
    "ShellExecute", "WinExec",
)

MOTIFS = ("autorun", "miner", "ransom", "powershell", "shadowcopy")

#: One distinctive substring per motif; every motif line contains its marker.
MOTIF_MARKERS = {
    "autorun": "\\CurrentVersion\\Run\\",
    "miner": "stratum+tcp",
    "ransom": ".xoxoxo",
    "powershell": "-EncodedCommand",
    "shadowcopy": "delete shadows",
}

_SYLLABLES = ("ka", "lo", "mi", "ne", "ru", "ta", "vo", "xe", "zu", "pi", "qa", "do",
              "fe", "gi", "hu", "ja", "sy", "we", "bo", "cy")


@dataclass
class GenConfig:
    seed: int = 0
    n_train: int = 2000
    n_test: int = 1000
    malware_fraction: float = 0.5
    motif_rate: float = 1.0           # chance a malware log actually receives motifs
    n_words: int = 3000               # background word pool
    word_zipf: float = 1.2
    event_zipf: float = 1.1
    events_per_program: tuple = (6, 16)
    log_length: tuple = (20, 90)
    max_args: int = 3
    motifs_per_log: tuple = (1, 2)
    benign_marker_rate: float = 0.5
    motif_types: tuple = MOTIFS

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown generator config keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class SyntheticLog:
    log: Log
    motif_spans: list = field(default_factory=list)   # half-open [start, end) line ranges

    @property
    def label(self) -> int:
        return self.log.label

    @property
    def motif_lines(self) -> set:
        return {i for s, e in self.motif_spans for i in range(s, e)}

    @property
    def earliest_detectable(self) -> int | None:
        """End (exclusive) of the first motif, or None for logs without motifs."""
        if not self.motif_spans:
            return None
        return min(self.motif_spans)[1]


@dataclass
class Corpus:
    alphabet: EventAlphabet
    train: list
    test: list


def default_alphabet() -> EventAlphabet:
    return EventAlphabet(EVENT_TYPES)


class _Background:
    """Random source for one corpus: shared word pool, per-program draws."""

    def __init__(self, config: GenConfig, alphabet: EventAlphabet, rng: np.random.Generator):
        self.c = config
        self.alphabet = alphabet
        self.rng = rng
        words = set()
        while len(words) < config.n_words:
            k = rng.integers(2, 5)
            words.add("".join(rng.choice(_SYLLABLES, size=k)))
        self.words = sorted(words)
        rng.shuffle(self.words)
        ranks = np.arange(1, len(self.words) + 1)
        p = ranks ** -config.word_zipf
        self.word_cdf = np.cumsum(p / p.sum())
        er = np.arange(1, len(alphabet) + 1)
        ep = er ** -config.event_zipf
        self.event_p = ep / ep.sum()
        self.event_order = rng.permutation(len(alphabet))

    def word(self) -> str:
        i = int(np.searchsorted(self.word_cdf, self.rng.random() * self.word_cdf[-1], side="right"))
        return self.words[min(i, len(self.words) - 1)]

    def program(self):
        lo, hi = self.c.events_per_program
        n = int(self.rng.integers(lo, hi + 1))
        events = self.rng.choice(self.event_order, size=n, replace=False, p=self.event_p)
        w = self.rng.dirichlet(np.ones(n) * 0.7)
        home = self.word()
        return events, np.cumsum(w), home

    def argument(self, etype: str, home: str) -> str:
        r = self.rng
        w = self.word
        if "File" in etype or etype == "CreateDirectory":
            roots = (f"C:\\Program Files\\{home}\\{w()}.dll",
                     f"C:\\Users\\user\\AppData\\Local\\{home}\\{w()}.dat",
                     f"C:\\Windows\\System32\\{w()}.dll",
                     f"C:\\Users\\user\\Documents\\{w()}.txt")
            return roots[r.integers(len(roots))]
        if etype.startswith("Reg"):
            return f"HKLM\\Software\\{home}\\{w()}" if r.random() < 0.7 else \
                f"HKCU\\Software\\Classes\\{w()}"
        if etype in ("Connect", "DnsQuery", "HttpSendRequest", "InternetOpenUrl"):
            return f"http://{w()}.{home}.com/{w()}" if r.random() < 0.5 else f"{w()}.com:443"
        if etype in ("CreateProcess", "ShellExecute", "WinExec", "OpenProcess", "TerminateProcess"):
            return f"C:\\Program Files\\{home}\\{w()}.exe"
        if etype in ("LoadLibrary", "GetProcAddress"):
            return f"{w()}.dll"
        if etype in ("CreateMutex", "OpenMutex"):
            return f"Global\\{home}_{w()}"
        if etype.endswith("Service"):
            return f"{w()}svc"
        return str(int(r.integers(0, 4096)))

    def line(self, events, cdf, home) -> EventLine:
        i = int(np.searchsorted(cdf, self.rng.random() * cdf[-1], side="right"))
        e = int(events[min(i, len(events) - 1)])
        name = self.alphabet.names[e]
        n_args = int(self.rng.integers(0, self.c.max_args + 1))
        return EventLine(e, tuple(self.argument(name, home) for _ in range(n_args)))


def _rand_id(rng, n=8) -> str:
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789"
    return "".join(alphabet[i] for i in rng.integers(0, len(alphabet), size=n))


def motif_lines(kind: str, alphabet: EventAlphabet, rng: np.random.Generator) -> list:
    """Lines of one motif instance; each contains the motif's marker."""
    ev = alphabet.id
    tag = _rand_id(rng)
    if kind == "autorun":
        run = f"HKCU\\Software\\Microsoft\\Windows\\CurrentVersion\\Run\\{tag}"
        exe = f"C:\\Users\\user\\AppData\\Roaming\\{tag}\\{tag}.exe"
        return [EventLine(ev("RegCreateKey"), (run,)),
                EventLine(ev("RegSetValue"), (run, exe)),
                EventLine(ev("RegQueryValue"), (run,))]
    if kind == "miner":
        pool = f"stratum+tcp://{tag}.xmrpool.net:3333"
        svc = f"HKLM\\System\\CurrentControlSet\\Services\\{tag}\\stratum+tcp"
        return [EventLine(ev("CreateService"), (f"{tag}svc", pool)),
                EventLine(ev("RegSetValue"), (svc, pool)),
                EventLine(ev("StartService"), (f"{tag}svc", pool)),
                EventLine(ev("Connect"), (pool,))]
    if kind == "ransom":
        out = []
        for _ in range(int(rng.integers(3, 6))):
            name = f"C:\\Users\\user\\Documents\\{_rand_id(rng, 6)}.docx"
            out.append(EventLine(ev("MoveFile"), (name, name + ".xoxoxo")))
        return out
    if kind == "powershell":
        payload = base64.b64encode(rng.bytes(48)).decode()
        cmd = f"powershell.exe -NoProfile -EncodedCommand {payload}"
        return [EventLine(ev("CreateProcess"), (cmd,)),
                EventLine(ev("ShellExecute"), (cmd,)),
                EventLine(ev("WinExec"), (cmd,))]
    if kind == "shadowcopy":
        cmd = "vssadmin.exe delete shadows /all /quiet"
        return [EventLine(ev("CreateProcess"), (f"C:\\Windows\\System32\\{cmd}",)),
                EventLine(ev("WinExec"), (cmd,)),
                EventLine(ev("ShellExecute"), (f"cmd.exe /c {cmd}",))]
    raise ValueError(f"unknown motif {kind!r}")


def decoy_lines(kind: str, alphabet: EventAlphabet, rng: np.random.Generator) -> list:
    """Look-alike of a motif that carries no marker (legitimate software doing similar things)."""
    ev = alphabet.id
    tag = _rand_id(rng)
    if kind == "autorun":
        run = f"HKCU\\Software\\Microsoft\\Windows\\CurrentVersion\\RunOnce\\{tag}"
        exe = f"C:\\Users\\user\\AppData\\Roaming\\{tag}\\{tag}.exe"
        return [EventLine(ev("RegCreateKey"), (run,)),
                EventLine(ev("RegSetValue"), (run, exe)),
                EventLine(ev("RegQueryValue"), (run,))]
    if kind == "miner":
        pool = f"tcp://{tag}.xmrpool.net:3333"
        return [EventLine(ev("CreateService"), (f"{tag}svc", pool)),
                EventLine(ev("StartService"), (f"{tag}svc", pool)),
                EventLine(ev("Connect"), (pool,))]
    if kind == "ransom":
        out = []
        for _ in range(int(rng.integers(3, 6))):
            name = f"C:\\Users\\user\\Documents\\{_rand_id(rng, 6)}.docx"
            out.append(EventLine(ev("MoveFile"), (name, name + ".bak")))
        return out
    if kind == "powershell":
        cmd = f"powershell.exe -NoProfile -File {tag}.ps1"
        return [EventLine(ev("CreateProcess"), (cmd,)),
                EventLine(ev("ShellExecute"), (cmd,))]
    if kind == "shadowcopy":
        cmd = "vssadmin.exe list shadows /all"
        return [EventLine(ev("CreateProcess"), (f"C:\\Windows\\System32\\{cmd}",)),
                EventLine(ev("WinExec"), (cmd,))]
    raise ValueError(f"unknown motif {kind!r}")


def _benign_marker_lines(alphabet: EventAlphabet, rng: np.random.Generator, home: str) -> list:
    ev = alphabet.id
    key = f"HKLM\\Software\\Microsoft\\Windows\\CurrentVersion\\Uninstall\\{home}"
    return [EventLine(ev("CreateProcess"), (f"C:\\Windows\\System32\\msiexec.exe /i {home}.msi",)),
            EventLine(ev("RegSetValue"), (key, f"C:\\Program Files\\{home}\\uninstall.exe")),
            EventLine(ev("HttpSendRequest"), (f"https://update.{home}.com/check?signed=1",))]


def _one_log(bg: _Background, malicious: bool, name: str) -> SyntheticLog:
    c, rng = bg.c, bg.rng
    events, weights, home = bg.program()
    n = int(rng.integers(c.log_length[0], c.log_length[1] + 1))
    lines = [bg.line(events, weights, home) for _ in range(n)]
    inserts = []   # (position, lines, is_motif)
    if malicious and rng.random() < c.motif_rate:
        k = int(rng.integers(c.motifs_per_log[0], c.motifs_per_log[1] + 1))
        for kind in rng.choice(c.motif_types, size=k):
            inserts.append((int(rng.integers(0, n + 1)), motif_lines(str(kind), bg.alphabet, rng), True))
    if not malicious and rng.random() < c.benign_marker_rate:
        # installer-like log: motif look-alikes early, installer evidence late
        for kind in rng.choice(c.motif_types, size=int(rng.integers(1, 3))):
            inserts.append((int(rng.integers(0, n // 3 + 1)),
                            decoy_lines(str(kind), bg.alphabet, rng), False))
        pos = int(rng.integers(2 * n // 3, n + 1))
        inserts.append((pos, _benign_marker_lines(bg.alphabet, rng, home), False))
    # splice back to front so earlier positions stay valid, then recover spans
    inserts.sort(key=lambda t: t[0])
    out, spans, cursor = [], [], 0
    for pos, block, is_motif in inserts:
        out.extend(lines[cursor:pos])
        cursor = pos
        if is_motif:
            spans.append((len(out), len(out) + len(block)))
        out.extend(block)
    out.extend(lines[cursor:])
    label = MALWARE if malicious else BENIGN
    return SyntheticLog(Log(tuple(out), label, name), spans)


def generate(config: GenConfig, alphabet: EventAlphabet | None = None) -> Corpus:
    """Deterministic for a fixed ``config.seed``."""
    alphabet = alphabet or default_alphabet()
    rng = np.random.default_rng(config.seed)
    bg = _Background(config, alphabet, rng)
    splits = {}
    for split, n in (("train", config.n_train), ("test", config.n_test)):
        n_mal = int(round(config.malware_fraction * n))
        labels = np.array([1] * n_mal + [0] * (n - n_mal))
        rng.shuffle(labels)
        splits[split] = [_one_log(bg, bool(lb), f"{split}_{i:05d}") for i, lb in enumerate(labels)]
    return Corpus(alphabet, splits["train"], splits["test"])


def oracle_score(log: Log) -> int:
    """Number of lines carrying any motif marker."""
    hits = 0
    for line in log.lines:
        if any(m in a for a in line.args for m in MOTIF_MARKERS.values()):
            hits += 1
    return hits


# ---------------------------------------------------------------------------
# on-disk corpus


def write_split(items: Sequence[SyntheticLog], out_dir: Union[str, PathLike],
                alphabet: EventAlphabet) -> None:
    """``out_dir/logs/<name>.jsonl`` plus ``manifest.csv`` and ``event_types.json``."""
    out = Path(out_dir)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    alphabet.save(out / "event_types.json")
    with open(out / "manifest.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["path", "label", "motif_positions"])
        for it in items:
            rel = f"logs/{it.log.name}.jsonl"
            write_log(it.log, out / rel, alphabet)
            label = "malware" if it.label == MALWARE else "benign"
            w.writerow([rel, label, ";".join(f"{s}:{e}" for s, e in it.motif_spans)])


def write_corpus(corpus: Corpus, out_dir: Union[str, PathLike], config: GenConfig | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus.alphabet.save(out / "event_types.json")
    write_split(corpus.train, out / "train", corpus.alphabet)
    write_split(corpus.test, out / "test", corpus.alphabet)
    if config is not None:
        with open(out / "generator.json", "w") as f:
            json.dump(config.to_dict(), f, indent=1)


def read_split(split_dir: Union[str, PathLike], alphabet: EventAlphabet | None = None) -> list:
    """Load a directory written by :func:`write_split`, sorted by log path."""
    d = Path(split_dir)
    if alphabet is None:
        alphabet = EventAlphabet.load(d / "event_types.json")
    items = []
    with open(d / "manifest.csv", newline="") as f:
        for row in csv.DictReader(f):
            label = {"malware": MALWARE, "benign": BENIGN}[row["label"]]
            log = parse_log(d / row["path"], alphabet, label)
            log = Log(log.lines, label, Path(row["path"]).stem)
            spans = []
            if row["motif_positions"]:
                for part in row["motif_positions"].split(";"):
                    s, e = part.split(":")
                    spans.append((int(s), int(e)))
            items.append((row["path"], SyntheticLog(log, spans)))
    items.sort(key=lambda t: t[0])
    return [it for _, it in items]
