"""Per-step posterior scorers and the alignment-lattice mathematics.

A scorer produces a normalized distribution over V labels + blank given
(frames, frames-consumed t, label history). The lattice node (t, u)
means t frames consumed and u labels emitted: a blank move
(t, u) -> (t+1, u) consumes a frame, a label move (t, u) -> (t, u+1)
emits the next label and is legal only while t < T. Every complete path
ends with the blank consuming frame T, so scorers are never queried at
t = T; the terminal transition is applied structurally by the lattice
routines and the beam decoder.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Callable, Protocol

from .core import (
    BLANK,
    LOG_ZERO,
    LogProb,
    Vocabulary,
    all_label_sequences,
    log_add,
    log_sum,
    safe_log,
)
from .synthworld import SynthWorld, true_likelihood


class StepScorer(Protocol):
    vocabulary: Vocabulary

    def step_posterior(self, frames, t: int, history) -> dict[int, LogProb]:
        """Normalized log-distribution over blank + labels after t frames."""
        ...


def check_frames_remaining(t: int, num_frames: int) -> None:
    if t >= num_frames:
        raise ValueError("all frames consumed")
    if t < 0:
        raise ValueError(f"negative consumed-frame count {t}")


class UniformScorer:
    """Test double: every symbol gets probability 1/(V+1) at every state."""

    def __init__(self, vocabulary: Vocabulary):
        self.vocabulary = vocabulary

    def step_posterior(self, frames, t, history):
        check_frames_remaining(t, len(frames))
        lp = -math.log(self.vocabulary.size)
        return {s: lp for s in range(self.vocabulary.size)}


class TableScorer:
    """Explicit per-(t, history) distributions; ignores the frame values.

    The table double stands in for a trained model in lattice and decoding
    tests. It is only valid for utterances of exactly ``num_frames`` frames.
    """

    def __init__(self, vocabulary: Vocabulary, num_frames: int,
                 table: dict[tuple[int, tuple[int, ...]], dict[int, float]]):
        self.vocabulary = vocabulary
        self.num_frames = num_frames
        self.table = {}
        self._log_rows = {}
        for (t, history), dist in table.items():
            key = (int(t), tuple(history))
            if set(dist) != set(range(vocabulary.size)):
                raise ValueError(f"state {key} must cover blank and all labels")
            total = math.fsum(dist.values())
            if abs(total - 1.0) > 1e-10:
                raise ValueError(f"state {key} distribution sums to {total!r}")
            self.table[key] = dict(dist)
            self._log_rows[key] = {s: safe_log(p) for s, p in dist.items()}

    def step_posterior(self, frames, t, history):
        if len(frames) != self.num_frames:
            raise ValueError(f"table scorer is defined for {self.num_frames} frames")
        check_frames_remaining(t, len(frames))
        key = (t, tuple(history))
        row = self._log_rows.get(key)
        if row is None:
            raise ValueError(f"no distribution stored for state {key}")
        return dict(row)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"tablescorer {self.vocabulary.num_labels} {self.num_frames}\n")
            for t, history in sorted(self.table, key=lambda k: (k[0], len(k[1]), k[1])):
                dist = self.table[(t, history)]
                probs = [repr(dist[s]) for s in range(self.vocabulary.size)]
                fields = [str(t), *(str(s) for s in history), *probs]
                fh.write(" ".join(fields) + "\n")

    @classmethod
    def load(cls, path) -> "TableScorer":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 3 or header[0] != "tablescorer":
                raise ValueError(f"not a table scorer file: bad header in {path}")
            num_labels, num_frames = int(header[1]), int(header[2])
            width = num_labels + 1
            table = {}
            for lineno, line in enumerate(fh, start=2):
                fields = line.split()
                if not fields:
                    continue
                if len(fields) < width + 1:
                    raise ValueError(f"bad scorer line {lineno} in {path}")
                t = int(fields[0])
                history = tuple(int(s) for s in fields[1:len(fields) - width])
                probs = [float(p) for p in fields[len(fields) - width:]]
                table[(t, history)] = dict(enumerate(probs))
        return cls(Vocabulary(num_labels), num_frames, table)


def random_table_scorer(vocabulary: Vocabulary, num_frames: int, max_history_len: int,
                        rng) -> TableScorer:
    """Random normalized rows for every (t, history) a lattice can visit."""
    table = {}
    for t in range(num_frames):
        for history in all_label_sequences(vocabulary.num_labels, max_history_len):
            raw = rng.random(vocabulary.size) + 0.05
            probs = raw / raw.sum()
            table[(t, tuple(history))] = {s: float(p) for s, p in enumerate(probs)}
    return TableScorer(vocabulary, num_frames, table)


def enumerate_alignments(num_frames: int, num_labels: int) -> list[tuple[int, ...]]:
    """All blank/label interleaving shapes (1 = label slot) ending in blank.

    Exhaustive enumeration only, so frame/label counts are bounded to keep
    the combinatorics small; the closed-form count covers the rest.
    """
    if num_frames > 8 or num_labels > 5:
        raise ValueError("enumeration bound exceeded")
    if num_frames < 1 or num_labels < 0:
        raise ValueError("need num_frames >= 1 and num_labels >= 0")
    slots = num_frames + num_labels - 1
    shapes = []
    for positions in itertools.combinations(range(slots), num_labels):
        shape = [0] * slots
        for i in positions:
            shape[i] = 1
        shapes.append((*shape, 0))
    return shapes


def lattice_score(num_frames: int, num_labels: int,
                  blank_lp: Callable[[int, int], LogProb],
                  label_lp: Callable[[int, int], LogProb],
                  combine: Callable[[LogProb, LogProb], LogProb]) -> LogProb:
    """Accumulate path scores over the (t, u) lattice to the terminal node.

    ``blank_lp(t, u)`` scores the move (t, u) -> (t+1, u) and
    ``label_lp(t, u)`` the move (t, u) -> (t, u+1). ``combine`` is log_add
    for the sum over alignments or max for the best alignment; both share
    the final-blank termination structure.
    """
    T, U = num_frames, num_labels
    alpha = [0.0] + [LOG_ZERO] * U
    for u in range(1, U + 1):
        alpha[u] = alpha[u - 1] + label_lp(0, u - 1) if alpha[u - 1] != LOG_ZERO else LOG_ZERO
    for t in range(1, T + 1):
        nxt = [LOG_ZERO] * (U + 1)
        for u in range(U + 1):
            if alpha[u] != LOG_ZERO:
                nxt[u] = alpha[u] + blank_lp(t - 1, u)
        if t < T:
            for u in range(1, U + 1):
                if nxt[u - 1] != LOG_ZERO:
                    nxt[u] = combine(nxt[u], nxt[u - 1] + label_lp(t, u - 1))
        alpha = nxt
    return alpha[U]


def _cached_posteriors(scorer: StepScorer, frames, w):
    frames = tuple(frames)
    w = tuple(w)
    cache: dict[tuple[int, int], dict[int, LogProb]] = {}

    def post(t: int, u: int) -> dict[int, LogProb]:
        key = (t, u)
        if key not in cache:
            cache[key] = scorer.step_posterior(frames, t, w[:u])
        return cache[key]

    blank_lp = lambda t, u: post(t, u).get(BLANK, LOG_ZERO)
    label_lp = lambda t, u: post(t, u).get(w[u], LOG_ZERO)
    return frames, w, blank_lp, label_lp


def sequence_posterior(scorer: StepScorer, frames, w) -> LogProb:
    """log of the alignment-summed sequence posterior (forward algorithm)."""
    frames, w, blank_lp, label_lp = _cached_posteriors(scorer, frames, w)
    return lattice_score(len(frames), len(w), blank_lp, label_lp, log_add)


def viterbi_sequence_score(scorer: StepScorer, frames, w) -> LogProb:
    """log of the single best alignment's path probability (max in place of sum)."""
    frames, w, blank_lp, label_lp = _cached_posteriors(scorer, frames, w)
    return lattice_score(len(frames), len(w), blank_lp, label_lp, max)


@lru_cache(maxsize=None)
def _log_completions(r: int, k: int) -> LogProb:
    """log of the number of interleavings of r blanks and k labels ending in blank."""
    if r == 0:
        return 0.0 if k == 0 else LOG_ZERO
    return math.log(math.comb(r + k - 1, k))


class OracleTransducer:
    """Exact per-step posteriors for one domain of a synthetic world.

    The domain joint P_d(W, X) is lifted to alignment paths by giving each
    W a uniform distribution over its valid blank/label interleavings.
    The step posterior is then the conditional of that lifted joint given
    the partial path, which depends on the path only through
    (frames-consumed, labels-so-far):

        P(next | X, t, h) proportional to
            sum over completions W of h:
                P_d(W) p(X|W) * c(T - t', k') / c(T, |W|)

    where c(r, k) counts interleavings of r blanks and k labels ending in
    blank, and (t', k') is the state after the hypothesized move. By
    construction the induced alignment posterior marginalizes back to the
    exact domain posterior P_d(W | X).

    Conditioning on a zero-mass prefix is undefined; such states (never
    reachable from in-world data) advance deterministically via blank.

    Per-utterance suffix tables are memoized keyed on the frame tuple;
    concurrent queries are safe because rebuilding a table is idempotent.
    """

    def __init__(self, world: SynthWorld, domain: str):
        self.world = world
        self.domain = domain
        self._prior = world.prior(domain)
        self._suffix_tables: dict[tuple[int, ...], dict] = {}

    @property
    def vocabulary(self) -> Vocabulary:
        return self.world.vocabulary

    def clear_cache(self) -> None:
        self._suffix_tables.clear()

    def _tables(self, frames: tuple[int, ...]) -> dict:
        g = self._suffix_tables.get(frames)
        if g is None:
            l_max = self.world.l_max
            g = {h: [LOG_ZERO] * (l_max - len(h) + 1)
                 for h in self.world.sequences}
            for w in self.world.sequences:
                lp = safe_log(self._prior.sequence_prob(w)) + true_likelihood(
                    self.world, frames, w)
                if lp == LOG_ZERO:
                    continue
                for i in range(len(w) + 1):
                    row = g[w[:i]]
                    row[len(w) - i] = log_add(row[len(w) - i], lp)
            self._suffix_tables[frames] = g
        return g

    def _future_mass(self, g: dict, num_frames: int, t: int, h: tuple[int, ...]) -> LogProb:
        row = g.get(h)
        if row is None:
            return LOG_ZERO
        r = num_frames - t
        u = len(h)
        return log_sum(
            row[k] + _log_completions(r, k) - _log_completions(num_frames, u + k)
            for k in range(len(row)))

    def step_posterior(self, frames, t, history):
        frames = tuple(frames)
        check_frames_remaining(t, len(frames))
        h = tuple(history)
        for s in h:
            self.vocabulary.check_label(s)
        g = self._tables(frames)
        T = len(frames)
        f0 = self._future_mass(g, T, t, h)
        if f0 == LOG_ZERO:
            out = {s: LOG_ZERO for s in range(self.vocabulary.size)}
            out[BLANK] = 0.0
            return out
        out = {BLANK: self._future_mass(g, T, t + 1, h) - f0}
        for s in self.vocabulary.labels():
            out[s] = self._future_mass(g, T, t, h + (s,)) - f0
        return out
