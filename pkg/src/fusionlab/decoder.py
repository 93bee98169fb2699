"""Frame-synchronous beam search over the transducer lattice.

All live hypotheses share the same consumed-frame count. Within a frame,
each hypothesis may emit up to ``max_expansions_per_frame`` non-blank
labels (each scored through the fusion policy), after which it must take
the blank that advances to the next frame (blank scores are never fused).
Hypotheses with identical label sequences at the same frame are merged --
with max by default (best-alignment decoding) or log-add when the summed
alignment score is wanted -- and the beam is then pruned by score.

A hypothesis is complete once it consumes the final frame's blank.
Ties order by (score, shorter label sequence, lexicographic labels) so
results are fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import BLANK, LOG_ZERO, log_add
from .fusion import FusionConfig, finalization_bonus, fused_step_score
from .transducer import StepScorer


@dataclass(frozen=True)
class Hypothesis:
    labels: tuple[int, ...]
    score: float
    frames_consumed: int


@dataclass(frozen=True)
class BeamConfig:
    beam_size: int = 8
    max_expansions_per_frame: int = 3
    nbest: int = 1

    def __post_init__(self):
        if self.beam_size < 1 or self.max_expansions_per_frame < 1 or self.nbest < 1:
            raise ValueError("beam_size, max_expansions_per_frame, nbest must be >= 1")
        if self.nbest > self.beam_size:
            raise ValueError("nbest cannot exceed beam_size")


def _rank_key(item: tuple[tuple[int, ...], float]):
    labels, score = item
    return (-score, len(labels), labels)


def beam_search(scorer: StepScorer, lm_tau, lm_psi, fusion: FusionConfig,
                beam: BeamConfig, frames, merge: str = "max") -> list[Hypothesis]:
    """Decode one utterance; returns the top ``nbest`` complete hypotheses."""
    if merge not in ("max", "logadd"):
        raise ValueError("merge must be 'max' or 'logadd'")
    merge_fn = max if merge == "max" else log_add
    frames = tuple(frames)
    T = len(frames)
    if T < 1:
        raise ValueError("utterance needs at least one frame")
    labels = tuple(scorer.vocabulary.labels())

    active: dict[tuple[int, ...], float] = {(): 0.0}
    for t in range(T):
        posts: dict[tuple[int, ...], dict[int, float]] = {}

        def post(h: tuple[int, ...]) -> dict[int, float]:
            row = posts.get(h)
            if row is None:
                row = posts[h] = scorer.step_posterior(frames, t, h)
            return row

        # non-blank expansions within this frame
        layer = dict(active)
        pool = dict(active)
        for _ in range(beam.max_expansions_per_frame):
            grown: dict[tuple[int, ...], float] = {}
            for h, sc in layer.items():
                if sc == LOG_ZERO:
                    continue
                row = post(h)
                for s in labels:
                    step = fused_step_score(row.get(s, LOG_ZERO), s, h,
                                            lm_tau, lm_psi, fusion).total
                    if step == LOG_ZERO:
                        continue
                    cand = sc + step
                    h2 = h + (s,)
                    grown[h2] = merge_fn(grown[h2], cand) if h2 in grown else cand
            if not grown:
                break
            for h2, sc in grown.items():
                pool[h2] = merge_fn(pool[h2], sc) if h2 in pool else sc
            layer = grown

        # the blank that advances every surviving hypothesis to frame t+1
        advanced = {h: sc + post(h).get(BLANK, LOG_ZERO)
                    for h, sc in pool.items() if sc != LOG_ZERO}
        if not advanced:
            advanced = {h: LOG_ZERO for h in pool} or {(): LOG_ZERO}
        ranked = sorted(advanced.items(), key=_rank_key)
        active = dict(ranked[:beam.beam_size])

    final = [(h, sc + finalization_bonus(h, lm_tau, lm_psi, fusion))
             for h, sc in active.items()]
    final.sort(key=_rank_key)
    return [Hypothesis(h, sc, T) for h, sc in final[:beam.nbest]]


def exhaustive_best(scorer: StepScorer, lm_tau, lm_psi, fusion: FusionConfig,
                    frames, max_len: int) -> list[Hypothesis]:
    """Brute-force argmax of the fused sequence score over every label sequence.

    Oracle for beam-search exactness checks; only usable on small worlds.
    """
    from .core import all_label_sequences
    from .fusion import sequence_fused_score

    frames = tuple(frames)
    scored = [(w, sequence_fused_score(scorer, lm_tau, lm_psi, fusion, frames, w))
              for w in all_label_sequences(scorer.vocabulary.num_labels, max_len)]
    scored.sort(key=_rank_key)
    return [Hypothesis(w, sc, len(frames)) for w, sc in scored]


def decode_corpus(scorer: StepScorer, lm_tau, lm_psi, fusion: FusionConfig,
                  beam: BeamConfig, utterances) -> list[Hypothesis]:
    """Top-1 decode of each utterance; utterances are independent."""
    return [beam_search(scorer, lm_tau, lm_psi, fusion, beam, utt.frames)[0]
            for utt in utterances]
