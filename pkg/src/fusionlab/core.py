"""Shared value types and log-domain probability arithmetic.

Every probability in this package is carried as a natural-log float
(type alias ``LogProb``). Probability zero is the explicit value
``LOG_ZERO = -inf``: it is the identity of :func:`log_add` and absorbing
under ordinary ``+`` (log-space multiplication). NaN is never used as a
sentinel.

Frame indices are 1-based throughout the data model: an utterance with
``T`` frames covers times ``1..T``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

LogProb = float

LOG_ZERO: LogProb = float("-inf")

#: Reserved symbol id: consumes one acoustic frame, emits no label.
BLANK = 0


def log_add(a: LogProb, b: LogProb) -> LogProb:
    """Stable ``log(exp(a) + exp(b))``; ``LOG_ZERO`` is the identity."""
    if a == LOG_ZERO:
        return b
    if b == LOG_ZERO:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def log_sum(values) -> LogProb:
    """Stable log-sum-exp of an iterable; ``LOG_ZERO`` for an empty sum."""
    finite = [v for v in values if v != LOG_ZERO]
    if not finite:
        return LOG_ZERO
    m = max(finite)
    return m + math.log(math.fsum(math.exp(v - m) for v in finite))


def safe_log(p: float) -> LogProb:
    """``log(p)`` with ``safe_log(0) == LOG_ZERO`` instead of an error."""
    if p < 0.0:
        raise ValueError(f"negative probability {p!r}")
    return LOG_ZERO if p == 0.0 else math.log(p)


def count_alignments(num_frames: int, num_labels: int) -> int:
    """Number of valid blank/label interleavings for ``T`` frames, ``U`` labels.

    A valid alignment interleaves T blanks with U labels and ends on the
    blank that consumes the final frame, so the U labels occupy any of the
    first T+U-1 slots: binomial(T+U-1, U). Exact integer arithmetic.
    """
    if num_frames < 1:
        raise ValueError("num_frames must be >= 1")
    if num_labels < 0:
        raise ValueError("num_labels must be >= 0")
    return math.comb(num_frames + num_labels - 1, num_labels)


@dataclass(frozen=True)
class Vocabulary:
    """Closed label inventory: label ids run 1..num_labels, blank is 0."""

    num_labels: int

    def __post_init__(self):
        if self.num_labels < 1:
            raise ValueError("vocabulary needs at least one non-blank label")

    @property
    def size(self) -> int:
        """Total symbol count including blank."""
        return self.num_labels + 1

    def labels(self) -> range:
        return range(1, self.num_labels + 1)

    def check_label(self, symbol: int) -> None:
        if not 1 <= symbol <= self.num_labels:
            raise ValueError(f"symbol {symbol} is not a label in 1..{self.num_labels}")


def all_label_sequences(num_labels: int, max_len: int) -> list[tuple[int, ...]]:
    """All label sequences of length 0..max_len, shortest first, lexicographic."""
    out: list[tuple[int, ...]] = []
    for length in range(max_len + 1):
        out.extend(itertools.product(range(1, num_labels + 1), repeat=length))
    return out


@dataclass(frozen=True)
class Alignment:
    """An expanded symbol sequence with per-element 1-based frame times.

    Blanks carry the index of the frame they consume (so blank times
    enumerate 1..T in order and the final element is the blank consuming
    frame T). A non-blank copies the time of the element before it; labels
    emitted before any frame has been consumed carry the initial time 1.
    Stripping blanks recovers the plain label sequence.
    """

    symbols: tuple[int, ...]
    times: tuple[int, ...]

    def __post_init__(self):
        if not self.symbols:
            raise ValueError("alignment must contain at least the final blank")
        if len(self.symbols) != len(self.times):
            raise ValueError("symbols and times differ in length")
        if self.symbols[-1] != BLANK:
            raise ValueError("alignment must end with a blank")
        if any(s < 0 for s in self.symbols):
            raise ValueError("negative symbol id")
        if self.times != self.times_for(self.symbols):
            raise ValueError("times inconsistent with the blank/label structure")

    @staticmethod
    def times_for(symbols: tuple[int, ...]) -> tuple[int, ...]:
        times = []
        consumed = 0
        for s in symbols:
            if s == BLANK:
                consumed += 1
                times.append(consumed)
            else:
                times.append(max(consumed, 1))
        return tuple(times)

    @classmethod
    def from_symbols(cls, symbols) -> "Alignment":
        symbols = tuple(symbols)
        return cls(symbols, cls.times_for(symbols))

    @classmethod
    def from_shape(cls, shape, labels) -> "Alignment":
        """Build from a 0/1 interleaving shape (1 = label slot) plus labels."""
        labels = tuple(labels)
        if sum(shape) != len(labels):
            raise ValueError("shape has a different label count than labels")
        it = iter(labels)
        return cls.from_symbols(tuple(next(it) if flag else BLANK for flag in shape))

    @property
    def transcript(self) -> tuple[int, ...]:
        return tuple(s for s in self.symbols if s != BLANK)

    @property
    def num_frames(self) -> int:
        return sum(1 for s in self.symbols if s == BLANK)


DOMAIN_SOURCE = "source"
DOMAIN_TARGET = "target"
DOMAINS = (DOMAIN_SOURCE, DOMAIN_TARGET)


@dataclass(frozen=True)
class Utterance:
    """Discrete acoustic frames paired with a blank-free transcript."""

    frames: tuple[int, ...]
    transcript: tuple[int, ...]
    domain_tag: str

    def __post_init__(self):
        if len(self.frames) < 1:
            raise ValueError("utterance needs at least one frame")
        if any(s <= 0 for s in self.transcript):
            raise ValueError("transcript must contain non-blank labels only")
        if self.domain_tag not in DOMAINS:
            raise ValueError(f"domain_tag must be one of {DOMAINS}")

    @property
    def num_frames(self) -> int:
        return len(self.frames)
