"""Symbol-level language models over blank-free label sequences.

Two model families share one scoring interface:

* :class:`NGramLM` -- add-k smoothed n-gram counts, the trainable stand-in
  for a neural LM. Conditionals cover the V labels plus an explicit
  end-of-sequence event, never the blank.
* :class:`TableLM` -- an explicit sequence -> probability table whose
  conditionals are derived exactly by prefix-mass marginalization; used
  wherever an exact oracle LM is needed.

Sequence probabilities always include the end-of-sequence factor, so each
model is a proper distribution over variable-length sequences.
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict

from .core import BLANK, LOG_ZERO, LogProb, Vocabulary, all_label_sequences, log_sum, safe_log

logger = logging.getLogger(__name__)

#: End-of-sequence event id (as used in model files).
EOS = -2
#: Start-of-sequence padding id for n-gram histories (as used in model files).
BOUNDARY = -1


def _check_query(vocabulary: Vocabulary, nxt: int, history) -> tuple[int, ...]:
    if nxt == BLANK or BLANK in history:
        raise ValueError("LM has no blank in support")
    if nxt != EOS:
        vocabulary.check_label(nxt)
    history = tuple(history)
    for s in history:
        vocabulary.check_label(s)
    return history


class NGramLM:
    """Add-k smoothed n-gram model, P(s|h) = (count(h,s) + k) / (count(h) + k*(V+1)).

    Histories are the last ``order - 1`` ids after left-padding with
    :data:`BOUNDARY`, so every query resolves to one full-length history
    key; there is no backoff. The V+1 in the smoothing denominator covers
    the labels plus EOS. A history with zero total count under k = 0
    scores uniform 1/(V+1) (the k -> 0 limit), which keeps every
    conditional row normalized.
    """

    def __init__(self, order: int, vocabulary: Vocabulary, add_k: float,
                 counts: dict[tuple[int, ...], Counter] | None = None):
        if order < 1:
            raise ValueError("order must be >= 1")
        if add_k < 0:
            raise ValueError("add_k must be >= 0")
        self.order = order
        self.vocabulary = vocabulary
        self.add_k = add_k
        self.counts: dict[tuple[int, ...], Counter] = counts if counts is not None else {}
        self._rows: dict[tuple[int, ...], dict[int, LogProb]] = {}

    def history_key(self, history) -> tuple[int, ...]:
        if self.order == 1:
            return ()
        padded = (BOUNDARY,) * (self.order - 1) + tuple(history)
        return padded[-(self.order - 1):]

    def _row(self, key: tuple[int, ...]) -> dict[int, LogProb]:
        row = self._rows.get(key)
        if row is None:
            events = list(self.vocabulary.labels()) + [EOS]
            counts = self.counts.get(key, Counter())
            total = sum(counts.values())
            denom = total + self.add_k * len(events)
            if denom == 0.0:
                row = {e: -math.log(len(events)) for e in events}
            else:
                row = {e: safe_log((counts.get(e, 0) + self.add_k) / denom) for e in events}
            self._rows[key] = row
        return row

    def logprob(self, nxt: int, history) -> LogProb:
        history = _check_query(self.vocabulary, nxt, history)
        return self._row(self.history_key(history))[nxt]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"ngram {self.order} {self.vocabulary.num_labels} {self.add_k!r}\n")
            for key in sorted(self.counts):
                counter = self.counts[key]
                for sym in sorted(counter):
                    fields = [*key, sym, counter[sym]]
                    fh.write(" ".join(str(f) for f in fields) + "\n")

    @classmethod
    def load(cls, path) -> "NGramLM":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 4 or header[0] != "ngram":
                raise ValueError(f"not an ngram model file: bad header in {path}")
            order, num_labels, add_k = int(header[1]), int(header[2]), float(header[3])
            counts: dict[tuple[int, ...], Counter] = defaultdict(Counter)
            for lineno, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                fields = line.split()
                if len(fields) != order + 1:
                    raise ValueError(f"bad count line {lineno} in {path}")
                *hist, sym, count = (int(f) for f in fields)
                counts[tuple(hist)][sym] += count
        return cls(order, Vocabulary(num_labels), add_k, dict(counts))


def train_ngram(corpus, order: int, add_k: float, vocabulary: Vocabulary) -> NGramLM:
    """Count-based training over transcripts; deterministic given input order."""
    model = NGramLM(order, vocabulary, add_k, counts={})
    counts: dict[tuple[int, ...], Counter] = defaultdict(Counter)
    n = 0
    for transcript in corpus:
        transcript = tuple(transcript)
        for s in transcript:
            vocabulary.check_label(s)
        for i, event in enumerate([*transcript, EOS]):
            counts[model.history_key(transcript[:i])][event] += 1
        n += 1
    if n == 0:
        raise ValueError("empty training corpus")
    model.counts = dict(counts)
    return model


class TableLM:
    """Exact LM given by an explicit sequence -> probability table.

    Conditionals are prefix-mass ratios: P(s|h) = mass(h + s) / mass(h)
    and P(EOS|h) = table[h] / mass(h), where mass(h) sums the table over
    all sequences extending h. Querying a history with zero prefix mass
    is an error (the conditional is undefined there).
    """

    def __init__(self, vocabulary: Vocabulary, entries: dict[tuple[int, ...], float]):
        self.vocabulary = vocabulary
        self.entries = {tuple(w): float(p) for w, p in entries.items()}
        for w, p in self.entries.items():
            for s in w:
                vocabulary.check_label(s)
            if p < 0:
                raise ValueError(f"negative probability for {w}")
        total = math.fsum(self.entries.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"table mass {total!r} is not 1 within 1e-12")
        self._prefix_mass: dict[tuple[int, ...], float] = defaultdict(float)
        for w, p in self.entries.items():
            for i in range(len(w) + 1):
                self._prefix_mass[w[:i]] += p
        self._prefix_mass = dict(self._prefix_mass)

    @property
    def max_len(self) -> int:
        return max((len(w) for w in self.entries), default=0)

    def sequence_prob(self, w) -> float:
        return self.entries.get(tuple(w), 0.0)

    def prefix_mass(self, history) -> float:
        return self._prefix_mass.get(tuple(history), 0.0)

    def logprob(self, nxt: int, history) -> LogProb:
        history = _check_query(self.vocabulary, nxt, history)
        mass = self.prefix_mass(history)
        if mass == 0.0:
            raise ValueError(f"history {history} has zero probability mass")
        if nxt == EOS:
            return safe_log(self.entries.get(history, 0.0) / mass)
        return safe_log(self.prefix_mass(history + (nxt,)) / mass)


def lm_logprob(lm, nxt: int, history) -> LogProb:
    """Normalized conditional log P(next | history); next may be a label or EOS."""
    return lm.logprob(nxt, history)


def sequence_logprob(lm, w) -> LogProb:
    """log P(W): conditional log-probs over all positions plus the EOS term."""
    w = tuple(w)
    total = 0.0
    for i, s in enumerate([*w, EOS]):
        lp = lm.logprob(s, w[:i])
        if lp == LOG_ZERO:
            return LOG_ZERO
        total += lp
    return total


def _first_zero_event(lm, w) -> tuple[int, int]:
    for i, s in enumerate([*tuple(w), EOS]):
        if lm.logprob(s, tuple(w)[:i]) == LOG_ZERO:
            return i, s
    raise AssertionError("sequence score is -inf but every step is finite")


def perplexity(lm, corpus) -> float:
    """exp(-logprob / tokens) with tokens = labels + one EOS per utterance.

    Any zero-probability utterance makes the perplexity infinite; the first
    zero-probability event is reported through the module logger so the
    offending history/symbol can be found.
    """
    corpus = [tuple(w) for w in corpus]
    if not corpus:
        raise ValueError("empty corpus")
    total_lp = 0.0
    total_tokens = 0
    for idx, w in enumerate(corpus):
        lp = sequence_logprob(lm, w)
        if lp == LOG_ZERO:
            pos, sym = _first_zero_event(lm, w)
            logger.warning(
                "zero-probability event: utterance %d, position %d, symbol %d; perplexity is inf",
                idx, pos, sym)
            return math.inf
        total_lp += lp
        total_tokens += len(w) + 1
    return math.exp(-total_lp / total_tokens)


def enumerate_sequence_mass(lm, num_labels: int, max_len: int) -> float:
    """Total exp(sequence_logprob) over every sequence up to max_len."""
    return math.exp(log_sum(
        sequence_logprob(lm, w) for w in all_label_sequences(num_labels, max_len)))
