"""Score <-> token codecs and the decoders that turn token logits into scores.

Every strategy produces a :class:`ScoreTokenTable`, an ordered list of
``(token_text, token_index, score_value)`` entries on the normalized
[0, 100] scale. A model emits one logit per entry; :func:`decode_expectation`
turns those logits into a continuous score as the probability-weighted mean
of the entry scores, while :func:`decode_argmax` picks the single most
likely entry.
"""

from __future__ import annotations

import enum
import functools
import hashlib
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources

import numpy as np

from .errors import (
    CorruptTableFile,
    DegenerateRange,
    LengthMismatch,
    NonFiniteLogits,
    OutOfRange,
    UnknownStrategy,
)

LEVEL_LABELS = ("bad", "poor", "fair", "good", "excellent")
LEVEL_MIDPOINTS = (10.0, 30.0, 50.0, 70.0, 90.0)
EXPANDING_SIZES = (25, 50, 100, 250, 500)

SCORE_MIN = 0.0
SCORE_MAX = 100.0


class StrategyKind(str, enum.Enum):
    EXISTING100_ORDERED = "existing100_ordered"
    EXISTING100_NONORDERED = "existing100_nonordered"
    EXISTING50 = "existing50"
    EXISTING25 = "existing25"
    EXPANDING = "expanding"
    LEVEL5 = "level5"
    TEXT_ARGMAX101 = "text_argmax101"


@dataclass(frozen=True)
class CodecStrategy:
    kind: StrategyKind
    n: int | None = None

    def __post_init__(self):
        kind = StrategyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is StrategyKind.EXPANDING:
            if self.n not in EXPANDING_SIZES:
                raise UnknownStrategy(
                    f"expanding strategy needs n in {EXPANDING_SIZES}, got {self.n!r}"
                )
        elif self.n is not None:
            raise UnknownStrategy(f"strategy {kind.value} takes no size parameter")

    @property
    def name(self) -> str:
        if self.kind is StrategyKind.EXPANDING:
            return f"expanding{self.n}"
        return self.kind.value

    @property
    def default_decoder(self) -> str:
        """Decoder the strategy is evaluated with: argmax for text scores."""
        return "argmax" if self.kind is StrategyKind.TEXT_ARGMAX101 else "expectation"

    @classmethod
    def parse(cls, text: str | CodecStrategy) -> CodecStrategy:
        """Parse names like ``existing100_ordered``, ``level5`` or ``expanding100``."""
        if isinstance(text, CodecStrategy):
            return text
        key = str(text).strip().lower().replace("-", "_")
        m = re.fullmatch(r"expanding[_:]?(\d+)", key)
        if m:
            return cls(StrategyKind.EXPANDING, int(m.group(1)))
        try:
            return cls(StrategyKind(key))
        except ValueError:
            raise UnknownStrategy(f"unknown codec strategy {text!r}") from None

    def __str__(self) -> str:
        return self.name


ALL_STRATEGIES = tuple(
    [CodecStrategy.parse(k.value) for k in StrategyKind if k is not StrategyKind.EXPANDING]
    + [CodecStrategy(StrategyKind.EXPANDING, n) for n in EXPANDING_SIZES]
)


@dataclass(frozen=True)
class NormalizedScore:
    value: float
    source_range: tuple[float, float] = (SCORE_MIN, SCORE_MAX)

    def __post_init__(self):
        if not (SCORE_MIN <= self.value <= SCORE_MAX):
            raise OutOfRange(f"normalized score {self.value} outside [0, 100]")

    def __float__(self) -> float:
        return float(self.value)


@dataclass(frozen=True, eq=False)
class ScoreTokenTable:
    strategy: CodecStrategy
    tokens: tuple[str, ...]
    scores: np.ndarray = field(repr=False)
    range_min: float = SCORE_MIN
    range_max: float = SCORE_MAX

    def __post_init__(self):
        scores = np.array(self.scores, dtype=np.float64)
        if scores.ndim != 1 or len(scores) != len(self.tokens):
            raise CorruptTableFile("token and score columns differ in length")
        if len(set(self.tokens)) != len(self.tokens):
            raise CorruptTableFile("duplicate token text in table")
        if np.any(np.diff(scores) <= 0):
            raise CorruptTableFile("score values must be strictly increasing")
        if scores[0] < self.range_min or scores[-1] > self.range_max:
            raise CorruptTableFile("score values fall outside the table range")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def entries(self) -> list[tuple[str, int, float]]:
        return [(t, i, float(s)) for i, (t, s) in enumerate(zip(self.tokens, self.scores))]

    def index_of(self, token_text: str) -> int:
        return self.tokens.index(token_text)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScoreTokenTable):
            return NotImplemented
        return (
            self.strategy == other.strategy
            and self.tokens == other.tokens
            and np.array_equal(self.scores, other.scores)
        )

    def __hash__(self) -> int:
        return hash((self.strategy, self.tokens))


# ---------------------------------------------------------------------------
# canonical table files


def _table_body_checksum(body: str) -> str:
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def parse_table_text(text: str) -> tuple[list[str], list[float], str]:
    """Parse a canonical table file and verify its checksum header.

    Returns ``(tokens, scores, checksum)``.
    """
    header, sep, body = text.partition("\n")
    m = re.fullmatch(r"# checksum=([0-9a-f]{64})", header.strip())
    if not sep or m is None:
        raise CorruptTableFile("missing '# checksum=<hex>' header")
    expected = m.group(1)
    actual = _table_body_checksum(body)
    if actual != expected:
        raise CorruptTableFile(f"checksum mismatch: header {expected[:12]}..., body {actual[:12]}...")
    tokens, scores = [], []
    for lineno, line in enumerate(body.split("\n"), start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise CorruptTableFile(f"line {lineno}: expected 3 tab-separated fields")
        idx, token, score = parts
        if int(idx) != len(tokens):
            raise CorruptTableFile(f"line {lineno}: token_index {idx} out of sequence")
        tokens.append(token)
        scores.append(float(score))
    return tokens, scores, expected


def format_table_text(tokens, scores) -> str:
    """Inverse of :func:`parse_table_text`."""
    body = "".join(f"{i}\t{t}\t{_fmt_score(s)}\n" for i, (t, s) in enumerate(zip(tokens, scores)))
    return f"# checksum={_table_body_checksum(body)}\n{body}"


def _fmt_score(s: float) -> str:
    s = float(s)
    return str(int(s)) if s.is_integer() else repr(s)


def canonical_table_text(strategy: CodecStrategy | str) -> str:
    """Raw bundled file contents for a file-backed strategy."""
    strategy = CodecStrategy.parse(strategy)
    if strategy.kind not in _FILE_BACKED:
        raise UnknownStrategy(f"{strategy.name} has no bundled table file")
    return resources.files("scoretoken.data").joinpath(f"{strategy.name}.tsv").read_text("utf-8")


_FILE_BACKED = (StrategyKind.EXISTING100_ORDERED, StrategyKind.EXISTING100_NONORDERED)


def _letters(first: str, last: str) -> list[str]:
    return [chr(c) for c in range(ord(first), ord(last) + 1)]


@functools.lru_cache(maxsize=None)
def build_table(strategy: CodecStrategy | str) -> ScoreTokenTable:
    """Return the canonical token table for ``strategy``."""
    strategy = CodecStrategy.parse(strategy)
    kind = strategy.kind
    if kind in _FILE_BACKED:
        tokens, scores, _ = parse_table_text(canonical_table_text(strategy))
        return ScoreTokenTable(strategy, tuple(tokens), np.asarray(scores))
    if kind is StrategyKind.EXPANDING:
        n = strategy.n
        tokens = [f"[AES_SCORE_TOKEN_{j}]" for j in range(n + 1)]
        scores = [100.0 * j / n for j in range(n + 1)]
    elif kind is StrategyKind.EXISTING25:
        # a..y, plus z so the grid closes at 100
        tokens = _letters("a", "z")
        scores = [4.0 * j for j in range(26)]
    elif kind is StrategyKind.EXISTING50:
        # a..y, A..Y, plus Z so the grid closes at 100
        tokens = _letters("a", "y") + _letters("A", "Z")
        scores = [2.0 * j for j in range(51)]
    elif kind is StrategyKind.LEVEL5:
        tokens = list(LEVEL_LABELS)
        scores = list(LEVEL_MIDPOINTS)
    elif kind is StrategyKind.TEXT_ARGMAX101:
        tokens = [str(j) for j in range(101)]
        scores = [float(j) for j in range(101)]
    else:  # pragma: no cover - enum is exhaustive
        raise UnknownStrategy(str(strategy))
    return ScoreTokenTable(strategy, tuple(tokens), np.asarray(scores, dtype=np.float64))


# ---------------------------------------------------------------------------
# score normalization and discretization


def _check_range(m: float, M: float) -> None:
    if not (math.isfinite(m) and math.isfinite(M)):
        raise DegenerateRange(f"range ({m}, {M}) is not finite")
    if not M > m:
        raise DegenerateRange(f"range needs M > m, got ({m}, {M})")


def normalize_score(raw: float, m: float, M: float) -> NormalizedScore:
    """Affinely map ``raw`` from [m, M] onto [0, 100]."""
    raw, m, M = float(raw), float(m), float(M)
    _check_range(m, M)
    if not (m <= raw <= M):
        raise OutOfRange(f"raw score {raw} outside [{m}, {M}]")
    value = 100.0 * (raw - m) / (M - m)
    return NormalizedScore(min(max(value, SCORE_MIN), SCORE_MAX), (m, M))


def _exact(x: float) -> Fraction:
    # shortest round-trip decimal, so 6.4 means 32/5 and not its binary neighbour
    return Fraction(str(float(x)))


def level_of_score(s: float, m: float, M: float) -> int:
    """Level index 1..5 of raw score ``s`` on the range [m, M].

    Level i covers ``m + (i-1)/5 (M-m) < s <= m + i/5 (M-m)``; ``s == m`` is
    assigned to level 1. Comparisons are done in exact rational arithmetic
    on the decimal value of each input.
    """
    s, m, M = float(s), float(m), float(M)
    _check_range(m, M)
    if not (math.isfinite(s) and m <= s <= M):
        raise OutOfRange(f"score {s} outside [{m}, {M}]")
    es, em, eM = _exact(s), _exact(m), _exact(M)
    if es == em:
        return 1
    return int(math.ceil(5 * (es - em) / (eM - em)))


def level_label(level: int) -> str:
    return LEVEL_LABELS[level - 1]


def encode_score(s: float | NormalizedScore, table: ScoreTokenTable) -> int:
    """Token index for normalized score ``s``.

    Picks the entry with the nearest score value, ties going to the higher
    index. Level5 instead uses the level interval rule on [0, 100], which
    agrees with nearest-midpoint everywhere except the four level boundaries.
    """
    value = float(s)
    if not (SCORE_MIN <= value <= SCORE_MAX):
        raise OutOfRange(f"normalized score {value} outside [0, 100]")
    if table.strategy.kind is StrategyKind.LEVEL5:
        return level_of_score(value, SCORE_MIN, SCORE_MAX) - 1
    d = np.abs(table.scores - value)
    return int(len(d) - 1 - np.argmin(d[::-1]))


# ---------------------------------------------------------------------------
# decoding


def _as_logits(logits, table: ScoreTokenTable) -> np.ndarray:
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim not in (1, 2) or arr.shape[-1] != table.size:
        raise LengthMismatch(
            f"logits of shape {arr.shape} do not match table of {table.size} tokens"
        )
    if not np.all(np.isfinite(arr)):
        raise NonFiniteLogits("logits contain NaN or infinite values")
    return arr


def softmax(logits, axis: int = -1) -> np.ndarray:
    """Softmax with max-subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def decode_expectation(logits, table: ScoreTokenTable):
    """Expected score under ``softmax(logits)`` over the table's tokens.

    Accepts one vector of shape ``(K,)`` (returns a float) or a batch of
    shape ``(N, K)`` (returns an array of N scores).
    """
    arr = _as_logits(logits, table)
    p = softmax(arr)
    out = np.clip(p @ table.scores, table.scores[0], table.scores[-1])
    return float(out) if arr.ndim == 1 else out


def decode_argmax(logits, table: ScoreTokenTable):
    """Score of the highest logit; ties go to the lowest index."""
    arr = _as_logits(logits, table)
    out = table.scores[np.argmax(arr, axis=-1)]
    return float(out) if arr.ndim == 1 else out


def decode(logits, table: ScoreTokenTable, mode: str = "expectation"):
    if mode == "expectation":
        return decode_expectation(logits, table)
    if mode == "argmax":
        return decode_argmax(logits, table)
    raise ValueError(f"unknown decode mode {mode!r}")


def select_score_logits(vocab_logits, token_ids) -> np.ndarray:
    """Pick the score-token columns out of full-vocabulary logits.

    Decoding the result renormalizes the distribution over the score tokens
    only, which is what the expectation formula's denominator sums over.
    """
    arr = np.asarray(vocab_logits, dtype=np.float64)
    return arr[..., np.asarray(token_ids, dtype=np.int64)]
