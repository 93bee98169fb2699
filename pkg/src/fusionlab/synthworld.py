"""Exactly-solvable two-domain generative world.

A world couples two label-sequence priors (source and target domains) to
one shared acoustic channel. The channel turns a label sequence W into
discrete observation frames: each label draws a duration in 1..d_max and
emits that many observations from its per-label distribution, with a
uniform noise floor mixed in per frame. The empty transcript is handled
by a dedicated silence segment that consumes all frames, so the
hypothesis space stays closed.

Because everything is tabular and the label space is capped at ``l_max``,
likelihoods, evidence marginals, and posteriors are all computable
exactly; this is what lets decode-time fusion rules be checked against
ground truth instead of against another approximation.

All randomness flows from a single 64-bit seed through named streams
(see :data:`STREAMS` and :func:`rng_stream`), making every sampled
dataset bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .core import (
    DOMAIN_SOURCE,
    DOMAIN_TARGET,
    DOMAINS,
    LOG_ZERO,
    LogProb,
    Utterance,
    Vocabulary,
    all_label_sequences,
    log_sum,
    safe_log,
)
from .lm import NGramLM, TableLM, sequence_logprob

WORLD_SCHEMA_VERSION = 1

#: Named sub-streams of the world seed. Purpose -> spawn index.
STREAMS = {
    "train_psi": 0,
    "train_tau_text": 1,
    "dev": 2,
    "eval": 3,
    "extra": 100,
}


def rng_stream(seed: int, purpose: str) -> np.random.Generator:
    """Deterministic per-purpose RNG stream derived from the world seed."""
    if purpose not in STREAMS:
        raise ValueError(f"unknown rng stream {purpose!r}; known: {sorted(STREAMS)}")
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAMS[purpose],)))


def _check_dist(row, name: str) -> tuple[float, ...]:
    row = tuple(float(p) for p in row)
    if any(p < 0 for p in row):
        raise ValueError(f"{name} has a negative entry")
    if abs(math.fsum(row) - 1.0) > 1e-12:
        raise ValueError(f"{name} does not sum to 1 within 1e-12")
    return row


@dataclass(frozen=True)
class AcousticChannel:
    """Shared emission/duration model: identical for both domains by construction."""

    num_observations: int
    emission: tuple[tuple[float, ...], ...]   # row l-1: observation dist for label l
    duration: tuple[tuple[float, ...], ...]   # row l-1: dist over 1..d_max for label l
    noise_floor: float
    silence_emission: tuple[float, ...]
    silence_duration: tuple[float, ...]

    def __post_init__(self):
        if not 0.0 <= self.noise_floor <= 1.0:
            raise ValueError("noise_floor must be in [0, 1]")
        if len(self.emission) != len(self.duration):
            raise ValueError("emission and duration must cover the same labels")
        for l, row in enumerate(self.emission, start=1):
            if len(row) != self.num_observations:
                raise ValueError(f"emission row for label {l} has wrong width")
            _check_dist(row, f"emission[{l}]")
        d_max = len(self.duration[0])
        for l, row in enumerate(self.duration, start=1):
            if len(row) != d_max:
                raise ValueError("duration rows must share one d_max")
            _check_dist(row, f"duration[{l}]")
        if len(self.silence_emission) != self.num_observations:
            raise ValueError("silence_emission has wrong width")
        _check_dist(self.silence_emission, "silence_emission")
        if len(self.silence_duration) != d_max:
            raise ValueError("silence_duration must share d_max")
        _check_dist(self.silence_duration, "silence_duration")

    @property
    def num_labels(self) -> int:
        return len(self.emission)

    @property
    def d_max(self) -> int:
        return len(self.duration[0])

    def _mix(self, row) -> tuple[float, ...]:
        u = self.noise_floor / self.num_observations
        return tuple((1.0 - self.noise_floor) * p + u for p in row)

    @cached_property
    def frame_probs(self) -> tuple[tuple[float, ...], ...]:
        """Noise-mixed per-frame observation probabilities, labels then silence."""
        rows = [self._mix(row) for row in self.emission]
        rows.append(self._mix(self.silence_emission))
        return tuple(rows)

    def frame_row(self, label: int) -> tuple[float, ...]:
        """label 0 selects the silence row."""
        return self.frame_probs[label - 1] if label >= 1 else self.frame_probs[-1]


@dataclass(frozen=True)
class SynthWorld:
    """Two domain priors over label sequences sharing one acoustic channel."""

    vocabulary: Vocabulary
    source_prior: TableLM
    target_prior: TableLM
    channel: AcousticChannel
    l_max: int
    seed: int

    def __post_init__(self):
        if self.l_max < 1:
            raise ValueError("l_max must be >= 1")
        if self.channel.num_labels != self.vocabulary.num_labels:
            raise ValueError("channel and vocabulary disagree on label count")
        for name, prior in (("source", self.source_prior), ("target", self.target_prior)):
            if prior.vocabulary.num_labels != self.vocabulary.num_labels:
                raise ValueError(f"{name} prior vocabulary mismatch")
            if prior.max_len > self.l_max:
                raise ValueError(f"{name} prior has sequences longer than l_max")

    def prior(self, domain: str) -> TableLM:
        if domain == DOMAIN_SOURCE:
            return self.source_prior
        if domain == DOMAIN_TARGET:
            return self.target_prior
        raise ValueError(f"domain must be one of {DOMAINS}")

    @cached_property
    def sequences(self) -> tuple[tuple[int, ...], ...]:
        """Every label sequence of length <= l_max, in enumeration order."""
        return tuple(all_label_sequences(self.vocabulary.num_labels, self.l_max))

    @property
    def max_frames(self) -> int:
        return self.l_max * self.channel.d_max


def sample_utterance(world: SynthWorld, domain: str, rng: np.random.Generator) -> Utterance:
    """Draw W from the domain prior, then durations and frames from the channel.

    Draw order is fixed (sequence, then per-label duration, then per-frame
    observation) so a stream replays identically from the same seed.
    """
    prior = world.prior(domain)
    seqs = world.sequences
    probs = np.array([prior.sequence_prob(w) for w in seqs])
    w = seqs[int(rng.choice(len(seqs), p=probs / probs.sum()))]
    channel = world.channel
    frames: list[int] = []
    segments = w if w else (0,)  # label 0: the silence segment
    for label in segments:
        dur_row = channel.duration[label - 1] if label >= 1 else channel.silence_duration
        d = 1 + int(rng.choice(channel.d_max, p=np.array(dur_row)))
        row = np.array(channel.frame_row(label))
        frames.extend(int(rng.choice(channel.num_observations, p=row)) for _ in range(d))
    return Utterance(tuple(frames), w, domain)


def true_likelihood(world: SynthWorld, frames, w) -> LogProb:
    """log p(X | W): exact sum over label-to-frame segmentations.

    Dynamic program over (labels placed, frames covered); each label takes
    a duration d in 1..d_max and emits d frames from its noise-mixed
    observation row. Infeasible (T, U) combinations give LOG_ZERO, not an
    error. Domain-independent: the channel is shared.
    """
    frames = tuple(frames)
    w = tuple(w)
    T, U = len(frames), len(w)
    channel = world.channel
    if U == 0:
        if T > channel.d_max:
            return LOG_ZERO
        lp = safe_log(channel.silence_duration[T - 1])
        row = channel.frame_row(0)
        for x in frames:
            lp += safe_log(row[x])
        return lp
    if not U <= T <= U * channel.d_max:
        return LOG_ZERO
    # cum[l][t] = sum of log frame probs of label l over frames 1..t
    cum: dict[int, list[float]] = {}
    for label in set(w):
        row = channel.frame_row(label)
        acc, series = 0.0, [0.0]
        for x in frames:
            acc += safe_log(row[x])
            series.append(acc)
        cum[label] = series
    prev = [0.0] + [LOG_ZERO] * T
    for j, label in enumerate(w, start=1):
        cur = [LOG_ZERO] * (T + 1)
        dur_row = channel.duration[label - 1]
        for t in range(j, T + 1):
            terms = []
            for d in range(1, min(channel.d_max, t) + 1):
                if prev[t - d] == LOG_ZERO:
                    continue
                seg = cum[label][t] - cum[label][t - d]
                terms.append(prev[t - d] + safe_log(dur_row[d - 1]) + seg)
            cur[t] = log_sum(terms)
        prev = cur
    return prev[T]


class Posterior(NamedTuple):
    probs: dict[tuple[int, ...], float]
    log_marginal: LogProb  # log p_domain(X)


def _check_enumeration_bounds(world: SynthWorld) -> None:
    if world.vocabulary.num_labels > 6 or world.l_max > 4:
        raise ValueError("enumeration bound exceeded")


def true_posterior(world: SynthWorld, domain: str, frames) -> Posterior:
    """Exact Bayes posterior over all W with length <= l_max, plus log p(X)."""
    _check_enumeration_bounds(world)
    prior = world.prior(domain)
    joint = {w: safe_log(prior.sequence_prob(w)) + true_likelihood(world, frames, w)
             for w in world.sequences}
    log_px = log_sum(joint.values())
    if log_px == LOG_ZERO:
        raise ValueError(f"observation sequence {tuple(frames)} has zero probability "
                         f"in domain {domain}")
    return Posterior({w: math.exp(lp - log_px) for w, lp in joint.items()}, log_px)


def scaled_likelihood_identity(world: SynthWorld, domain: str, frames, w):
    """Both sides of the posterior/prior likelihood reconstruction.

    lhs = log[p(X) * P(W|X) / P(W)] assembled from three independently
    computed quantities; rhs = the direct channel likelihood log p(X|W).
    They must agree exactly (up to float error). Returns None (with no
    pair to compare) when the prior gives W zero mass.
    """
    w = tuple(w)
    prior_p = world.prior(domain).sequence_prob(w)
    if prior_p == 0.0:
        return None
    post = true_posterior(world, domain, frames)
    lhs = post.log_marginal + safe_log(post.probs[w]) - safe_log(prior_p)
    rhs = true_likelihood(world, frames, w)
    return lhs, rhs


def marginal_ratio(world: SynthWorld, frames) -> LogProb:
    """log[p_source(X) / p_target(X)]: the hypothesis-independent evidence ratio."""
    return (true_posterior(world, DOMAIN_SOURCE, frames).log_marginal
            - true_posterior(world, DOMAIN_TARGET, frames).log_marginal)


def mixture_world(world: SynthWorld, alpha: float) -> SynthWorld:
    """World whose source prior is the per-sequence mixture (1-a)*source + a*target.

    Building a source-domain oracle on the result emulates adapting the
    recognizer on a fraction ``alpha`` of target-domain data; the channel
    and target prior are untouched.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    support = sorted(set(world.source_prior.entries) | set(world.target_prior.entries))
    mixed = {w: (1.0 - alpha) * world.source_prior.sequence_prob(w)
             + alpha * world.target_prior.sequence_prob(w) for w in support}
    return SynthWorld(world.vocabulary, TableLM(world.vocabulary, mixed),
                      world.target_prior, world.channel, world.l_max, world.seed)


# ---------------------------------------------------------------------------
# World files (JSON, schema version 1)
#
# {
#   "schema": 1,
#   "vocab_size": V, "obs_alphabet": A, "l_max": L, "d_max": D,
#   "noise_floor": f, "seed": N,
#   "source_prior" / "target_prior":
#       {"kind": "table", "entries": {"1 2": p, ...}}       (key "" = empty W)
#     | {"kind": "ngram", "order": n, "add_k": k,
#        "counts": [[[history...], symbol, count], ...]}    (materialized to a
#                                                            table over length
#                                                            <= l_max, renormalized)
#   "channel": {"emission": [[..A..] x V], "duration": [[..D..] x V],
#               "silence_emission": [..A..], "silence_duration": [..D..]}
# }
# ---------------------------------------------------------------------------


def _prior_from_spec(spec: dict, vocabulary: Vocabulary, l_max: int) -> TableLM:
    kind = spec.get("kind")
    if kind == "table":
        entries = {}
        for key, p in spec["entries"].items():
            w = tuple(int(s) for s in key.split()) if key else ()
            entries[w] = float(p)
        return TableLM(vocabulary, entries)
    if kind == "ngram":
        from collections import Counter
        counts = {}
        for hist, sym, count in spec["counts"]:
            counts.setdefault(tuple(hist), Counter())[int(sym)] += int(count)
        ngram = NGramLM(int(spec["order"]), vocabulary, float(spec["add_k"]), counts)
        return materialize_prior(ngram, l_max)
    raise ValueError(f"unknown prior kind {kind!r}")


def materialize_prior(lm, l_max: int) -> TableLM:
    """Exact table over sequences of length <= l_max, renormalized to mass 1."""
    vocab = lm.vocabulary
    raw = {w: math.exp(sequence_logprob(lm, w))
           for w in all_label_sequences(vocab.num_labels, l_max)}
    total = math.fsum(raw.values())
    if total <= 0.0:
        raise ValueError("prior has no mass on sequences within l_max")
    return TableLM(vocab, {w: p / total for w, p in raw.items()})


def save_world(world: SynthWorld, path) -> None:
    channel = world.channel
    doc = {
        "schema": WORLD_SCHEMA_VERSION,
        "vocab_size": world.vocabulary.num_labels,
        "obs_alphabet": channel.num_observations,
        "l_max": world.l_max,
        "d_max": channel.d_max,
        "noise_floor": channel.noise_floor,
        "seed": world.seed,
        "source_prior": _table_spec(world.source_prior),
        "target_prior": _table_spec(world.target_prior),
        "channel": {
            "emission": [list(r) for r in channel.emission],
            "duration": [list(r) for r in channel.duration],
            "silence_emission": list(channel.silence_emission),
            "silence_duration": list(channel.silence_duration),
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _table_spec(prior: TableLM) -> dict:
    return {"kind": "table",
            "entries": {" ".join(str(s) for s in w): p
                        for w, p in sorted(prior.entries.items())}}


def load_world(path) -> SynthWorld:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != WORLD_SCHEMA_VERSION:
        raise ValueError(f"unsupported world schema {doc.get('schema')!r}")
    required = ["vocab_size", "obs_alphabet", "l_max", "d_max", "noise_floor",
                "seed", "source_prior", "target_prior", "channel"]
    missing = [k for k in required if k not in doc]
    if missing:
        raise ValueError(f"world file missing fields: {missing}")
    vocabulary = Vocabulary(int(doc["vocab_size"]))
    ch = doc["channel"]
    channel = AcousticChannel(
        num_observations=int(doc["obs_alphabet"]),
        emission=tuple(tuple(r) for r in ch["emission"]),
        duration=tuple(tuple(r) for r in ch["duration"]),
        noise_floor=float(doc["noise_floor"]),
        silence_emission=tuple(ch["silence_emission"]),
        silence_duration=tuple(ch["silence_duration"]),
    )
    if channel.d_max != int(doc["d_max"]):
        raise ValueError("channel duration rows disagree with d_max")
    l_max = int(doc["l_max"])
    return SynthWorld(
        vocabulary=vocabulary,
        source_prior=_prior_from_spec(doc["source_prior"], vocabulary, l_max),
        target_prior=_prior_from_spec(doc["target_prior"], vocabulary, l_max),
        channel=channel,
        l_max=l_max,
        seed=int(doc["seed"]),
    )


def _bigram_table(vocabulary: Vocabulary, l_max: int, start: dict, trans: dict) -> TableLM:
    """Prior from explicit start/transition rows over labels + 'eos', truncated."""
    labels = list(vocabulary.labels())
    raw = {}
    for w in all_label_sequences(vocabulary.num_labels, l_max):
        p = start["eos"] if not w else start[w[0]]
        for prev, nxt in zip(w, w[1:]):
            p *= trans[prev][nxt]
        if w:
            p *= trans[w[-1]]["eos"]
        raw[w] = p
    total = math.fsum(raw.values())
    return TableLM(vocabulary, {w: p / total for w, p in raw.items()})


def default_world(seed: int = 90125) -> SynthWorld:
    """The standard small world used by the experiment and verification suites.

    Four labels over six observations. Labels 1..4 each have one clear
    observation cue; observation 4 is shared by labels {1, 3} and
    observation 5 by labels {2, 4}, so the acoustics alone often pin down
    only the pair and the prior has to break the tie. The source domain
    prefers labels {1, 2}, the target domain prefers {3, 4}, with mirrored
    bigram structure, which is what makes cross-domain decoding degrade
    and LM fusion measurably help.
    """
    vocabulary = Vocabulary(4)
    l_max = 3
    start_psi = {1: 0.36, 2: 0.36, 3: 0.065, 4: 0.065, "eos": 0.15}
    trans_psi = {
        1: {1: 0.20, 2: 0.30, 3: 0.05, 4: 0.05, "eos": 0.40},
        2: {1: 0.30, 2: 0.20, 3: 0.05, 4: 0.05, "eos": 0.40},
        3: {1: 0.15, 2: 0.15, 3: 0.15, 4: 0.15, "eos": 0.40},
        4: {1: 0.15, 2: 0.15, 3: 0.15, 4: 0.15, "eos": 0.40},
    }
    swap = {1: 3, 2: 4, 3: 1, 4: 2}
    start_tau = {swap[l]: p for l, p in start_psi.items() if l != "eos"}
    start_tau["eos"] = start_psi["eos"]
    trans_tau = {}
    for l, row in trans_psi.items():
        new_row = {swap[n]: p for n, p in row.items() if n != "eos"}
        new_row["eos"] = row["eos"]
        trans_tau[swap[l]] = new_row
    channel = AcousticChannel(
        num_observations=6,
        emission=(
            (0.52, 0.04, 0.04, 0.04, 0.32, 0.04),
            (0.04, 0.52, 0.04, 0.04, 0.04, 0.32),
            (0.04, 0.04, 0.52, 0.04, 0.32, 0.04),
            (0.04, 0.04, 0.04, 0.52, 0.04, 0.32),
        ),
        duration=((0.5, 0.5),) * 4,
        noise_floor=0.1,
        silence_emission=(1 / 6,) * 6,
        silence_duration=(0.5, 0.5),
    )
    return SynthWorld(
        vocabulary=vocabulary,
        source_prior=_bigram_table(vocabulary, l_max, start_psi, trans_psi),
        target_prior=_bigram_table(vocabulary, l_max, start_tau, trans_tau),
        channel=channel,
        l_max=l_max,
        seed=seed,
    )
