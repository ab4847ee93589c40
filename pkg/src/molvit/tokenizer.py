"""Lossless InChI tokenization and the id vocabulary."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from molvit.errors import OutOfVocabularyError, TokenizerError

PAD, SOS, EOS = "<PAD>", "<SOS>", "<EOS>"
PAD_ID, SOS_ID, EOS_ID = 0, 1, 2
SPECIALS = (PAD, SOS, EOS)

HEADER = "InChI=1S"
LAYER_MARKERS = frozenset({"/c", "/h", "/b", "/t", "/m", "/s", "/i"})

# two-letter element symbols; single letters are always accepted
TWO_LETTER_ELEMENTS = frozenset(
    """He Li Be Ne Na Mg Al Si Cl Ar Ca Sc Ti Cr Mn Fe Co Ni Cu Zn Ga Ge As Se Br Kr
    Rb Sr Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd
    Tb Dy Ho Er Tm Yb Lu Hf Ta Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa
    Np Pu Am Cm Bk Cf Es Fm Md No Lr Rf Db Sg Bh Hs Mt Ds Rg Cn Nh Fl Mc Lv Ts Og""".split()
)


def split(s: str) -> list[str]:
    """Partition ``s`` into tokens; ``"".join(split(s)) == s`` always holds.

    At each position the first matching rule wins: the ``InChI=1S`` header,
    a two-character layer marker, an element symbol, a run of digits, or any
    single character.
    """
    if not s.isascii():
        bad = next(i for i, ch in enumerate(s) if not ch.isascii())
        raise TokenizerError(f"non-ASCII character {s[bad]!r} at offset {bad}")
    tokens = []
    i, n = 0, len(s)
    while i < n:
        if s.startswith(HEADER, i):
            j = i + len(HEADER)
        elif s[i : i + 2] in LAYER_MARKERS:
            j = i + 2
        elif "A" <= s[i] <= "Z":
            j = i + 2 if s[i : i + 2] in TWO_LETTER_ELEMENTS else i + 1
        elif s[i].isdigit():
            j = i + 1
            while j < n and s[j].isdigit():
                j += 1
        else:
            j = i + 1
        tokens.append(s[i:j])
        i = j
    return tokens


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.tokens[:3]) != SPECIALS:
            raise TokenizerError(f"vocabulary must start with {SPECIALS}")
        if len(set(self.tokens)) != len(self.tokens):
            raise TokenizerError("vocabulary tokens are not distinct")
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def save(self, path) -> None:
        """One token per line, line number = id."""
        if any("\n" in t or "\r" in t for t in self.tokens):
            raise TokenizerError("tokens containing line breaks cannot be saved")
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(tuple(lines))


def build_vocab(corpus: Iterable[str]) -> Vocab:
    """Specials followed by every distinct split token, sorted."""
    seen: set[str] = set()
    empty = True
    for s in corpus:
        empty = False
        seen.update(split(s))
    if empty:
        raise TokenizerError("cannot build a vocabulary from an empty corpus")
    return Vocab(SPECIALS + tuple(sorted(seen)))


def encode(vocab: Vocab, s: str) -> list[int]:
    ids = [SOS_ID]
    offset = 0
    for tok in split(s):
        idx = vocab.index.get(tok)
        if idx is None or idx < len(SPECIALS):
            raise OutOfVocabularyError(tok, offset)
        ids.append(idx)
        offset += len(tok)
    ids.append(EOS_ID)
    return ids


def decode(vocab: Vocab, ids: Sequence[int]) -> str:
    out = []
    for i in ids:
        i = int(i)
        if not 0 <= i < len(vocab):
            raise TokenizerError(f"id {i} outside vocabulary of size {len(vocab)}")
        if i == EOS_ID:
            break
        if i in (PAD_ID, SOS_ID):
            continue
        out.append(vocab.tokens[i])
    return "".join(out)
