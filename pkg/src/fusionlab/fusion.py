"""Decode-time combination of step scores with external LM scores.

Three policies over the per-step transducer score:

* ``none``          -- base score plus the non-blank reward beta.
* ``shallow``       -- add a scaled target-LM conditional (shallow fusion).
* ``density_ratio`` -- add the target-LM conditional and subtract the
  source-LM conditional, each with its own scale; the LM-ratio correction
  that re-targets a source-domain posterior.

Blank extensions are never fused: a blank consumes acoustics only, so its
decoding score is the unmodified base score in every mode.

Per-step fusion uses label conditionals only. The end-of-sequence LM
terms are applied, if at all, once per hypothesis at finalization
(``include_eos_at_finalization``, default off).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .core import BLANK, LOG_ZERO, LogProb, log_add
from .lm import EOS, NGramLM, lm_logprob
from .transducer import StepScorer, _cached_posteriors, lattice_score

logger = logging.getLogger(__name__)

FUSION_MODES = ("none", "shallow", "density_ratio")


@dataclass(frozen=True)
class FusionConfig:
    mode: str = "none"
    lambda_tau: float = 0.0   # target-LM scale; the single scale in shallow mode
    lambda_psi: float = 0.0   # source-LM scale; density_ratio only
    beta: float = 0.0         # non-blank emission reward
    include_eos_at_finalization: bool = False

    def __post_init__(self):
        if self.mode not in FUSION_MODES:
            raise ValueError(f"mode must be one of {FUSION_MODES}")
        if self.lambda_tau < 0 or self.lambda_psi < 0:
            raise ValueError("LM scales must be >= 0")


@dataclass(frozen=True)
class FusedStepScore:
    """Total decoding score with its additive decomposition.

    ``lm_psi_term`` is stored as the signed contribution (already negated),
    so total == base + lm_tau_term + lm_psi_term + beta_term.
    """

    total: float
    base: LogProb
    lm_tau_term: float
    lm_psi_term: float
    beta_term: float


def _scaled(scale: float, lp: LogProb) -> float:
    # 0 * -inf is NaN in float arithmetic; a zero scale always contributes 0
    return 0.0 if scale == 0.0 else scale * lp


def _combine(base: LogProb, tau_term: float, psi_term: float, beta: float) -> float:
    if base == LOG_ZERO or tau_term == LOG_ZERO:
        return LOG_ZERO
    if psi_term == float("inf"):
        logger.warning("source LM assigns zero probability to a supported symbol; "
                       "fused score is +inf")
        return float("inf")
    return base + tau_term + psi_term + beta


def fused_step_score(base: LogProb, symbol: int, history, lm_tau, lm_psi,
                     config: FusionConfig) -> FusedStepScore:
    """Score one hypothesized path extension under the configured policy."""
    if symbol == BLANK:
        return FusedStepScore(base, base, 0.0, 0.0, 0.0)
    if config.mode == "none":
        return FusedStepScore(base + config.beta, base, 0.0, 0.0, config.beta)
    if lm_tau is None:
        raise ValueError("fusion requires a target-domain LM")
    tau_term = _scaled(config.lambda_tau, lm_logprob(lm_tau, symbol, history))
    if config.mode == "shallow":
        total = _combine(base, tau_term, 0.0, config.beta)
        return FusedStepScore(total, base, tau_term, 0.0, config.beta)
    if lm_psi is None:
        raise ValueError("density ratio requires source-domain LM")
    psi_term = -_scaled(config.lambda_psi, lm_logprob(lm_psi, symbol, history))
    total = _combine(base, tau_term, psi_term, config.beta)
    return FusedStepScore(total, base, tau_term, psi_term, config.beta)


def pseudo_posterior(base: LogProb, symbol: int, history, lm_tau, lm_psi) -> LogProb:
    """Unnormalized target-domain step estimate: base * P_tau / P_psi.

    Equal to the density-ratio step score at unit scales and zero reward.
    Not normalized over symbols. A zero source-LM mass under positive
    target mass yields +inf (reported through the module logger); such
    configurations should be rejected up front via
    :func:`validate_fusion_setup`.
    """
    if symbol == BLANK:
        raise ValueError("pseudo-posterior is defined for non-blank symbols only")
    cfg = FusionConfig(mode="density_ratio", lambda_tau=1.0, lambda_psi=1.0, beta=0.0)
    return fused_step_score(base, symbol, history, lm_tau, lm_psi, cfg).total


def validate_fusion_setup(config: FusionConfig, lm_tau, lm_psi) -> None:
    """Reject configurations that cannot be decoded safely.

    Density-ratio mode divides by source-LM conditionals, so the source LM
    must be zero-free on the label vocabulary: for an n-gram that means
    add_k > 0. Exact table LMs are accepted as-is (their zeros, if any,
    surface as +inf diagnostics during scoring).
    """
    if config.mode == "shallow" and lm_tau is None:
        raise ValueError("shallow fusion requires a target-domain LM")
    if config.mode == "density_ratio":
        if lm_psi is None:
            raise ValueError("density ratio requires source-domain LM")
        if isinstance(lm_psi, NGramLM) and lm_psi.add_k <= 0 and config.lambda_psi > 0:
            raise ValueError("density ratio requires a zero-free source LM "
                             "(train it with add_k > 0)")


def finalization_bonus(labels, lm_tau, lm_psi, config: FusionConfig) -> float:
    """Optional end-of-sequence LM correction added once per final hypothesis."""
    if not config.include_eos_at_finalization or config.mode == "none":
        return 0.0
    bonus = _scaled(config.lambda_tau, lm_logprob(lm_tau, EOS, labels))
    if config.mode == "density_ratio":
        psi = -_scaled(config.lambda_psi, lm_logprob(lm_psi, EOS, labels))
        if psi == float("inf"):
            return float("inf") if bonus != LOG_ZERO else LOG_ZERO
        bonus = LOG_ZERO if bonus == LOG_ZERO else bonus + psi
    return bonus


def sequence_fused_score(scorer: StepScorer, lm_tau, lm_psi, config: FusionConfig,
                         frames, w, semiring: str = "max") -> float:
    """Lattice score of W where every label move is fused and blanks are not.

    ``semiring="max"`` gives the best-alignment decoding score (what beam
    search optimizes); ``semiring="sum"`` accumulates all alignments, the
    variant used to compare fused scores against exact sequence posteriors.
    The finalization bonus is added when the config enables it.
    """
    if semiring not in ("max", "sum"):
        raise ValueError("semiring must be 'max' or 'sum'")
    frames, w, blank_lp, base_label_lp = _cached_posteriors(scorer, frames, w)

    def label_lp(t: int, u: int) -> float:
        return fused_step_score(base_label_lp(t, u), w[u], w[:u], lm_tau, lm_psi,
                                config).total

    combine = max if semiring == "max" else log_add
    score = lattice_score(len(frames), len(w), blank_lp, label_lp, combine)
    if score == LOG_ZERO:
        return LOG_ZERO
    return score + finalization_bonus(w, lm_tau, lm_psi, config)
