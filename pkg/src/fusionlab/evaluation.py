"""Word-error-rate scoring and scale-tuning sweeps.

WER uses the standard minimum-edit-distance alignment with unit costs.
The total edit count is unique; the deletion/insertion/substitution split
is not, so the backtrace resolves ties with a fixed priority
(diagonal > up > left), making the reported decomposition deterministic.

Sweeps decode a dev set at every grid point and report the per-cell
corpus WER breakdown plus the argmin cell; cells are evaluated and
written in grid order so the CSV is bit-reproducible.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .decoder import BeamConfig, decode_corpus
from .fusion import FusionConfig


@dataclass(frozen=True)
class WerBreakdown:
    wer: float
    del_rate: float
    ins_rate: float
    sub_rate: float
    num_ref_tokens: int
    deletions: int
    insertions: int
    substitutions: int
    empty_ref: bool = False  # set when rates were divided by the 0-token fallback

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return (self.num_ref_tokens, self.deletions, self.insertions, self.substitutions)


def _breakdown(num_ref: int, dels: int, inss: int, subs: int) -> WerBreakdown:
    denom = num_ref if num_ref > 0 else 1
    return WerBreakdown(
        wer=(dels + inss + subs) / denom,
        del_rate=dels / denom,
        ins_rate=inss / denom,
        sub_rate=subs / denom,
        num_ref_tokens=num_ref,
        deletions=dels,
        insertions=inss,
        substitutions=subs,
        empty_ref=num_ref == 0,
    )


def wer(ref, hyp) -> WerBreakdown:
    """Edit-distance breakdown of one (reference, hypothesis) pair.

    An empty reference against a non-empty hypothesis reports pure
    insertions over a denominator of 1 with ``empty_ref`` set.
    """
    ref, hyp = tuple(ref), tuple(hyp)
    R, H = len(ref), len(hyp)
    dp = [[0] * (H + 1) for _ in range(R + 1)]
    for i in range(1, R + 1):
        dp[i][0] = i
    for j in range(1, H + 1):
        dp[0][j] = j
    for i in range(1, R + 1):
        for j in range(1, H + 1):
            sub_cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            dp[i][j] = min(dp[i - 1][j - 1] + sub_cost, dp[i - 1][j] + 1, dp[i][j - 1] + 1)
    dels = inss = subs = 0
    i, j = R, H
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dp[i][j] == dp[i - 1][j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1):
            if ref[i - 1] != hyp[j - 1]:
                subs += 1
            i, j = i - 1, j - 1
        elif i > 0 and dp[i][j] == dp[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            inss += 1
            j -= 1
    return _breakdown(R, dels, inss, subs)


def corpus_wer(pairs) -> WerBreakdown:
    """Pooled counts over (ref, hyp) pairs: total errors / total ref tokens."""
    total_ref = dels = inss = subs = 0
    n = 0
    for ref, hyp in pairs:
        b = wer(ref, hyp)
        total_ref += b.num_ref_tokens
        dels += b.deletions
        inss += b.insertions
        subs += b.substitutions
        n += 1
    if n == 0 or total_ref == 0:
        raise ValueError("corpus WER needs at least one non-empty reference")
    return _breakdown(total_ref, dels, inss, subs)


@dataclass(frozen=True)
class SweepCell:
    lambda_psi: float
    lambda_tau: float
    beta: float
    breakdown: WerBreakdown


@dataclass(frozen=True)
class SweepResult:
    mode: str
    axes: tuple[tuple[str, tuple[float, ...]], ...]
    cells: tuple[SweepCell, ...]   # grid order: first axis outermost
    argmin_index: int

    @property
    def argmin(self) -> SweepCell:
        return self.cells[self.argmin_index]


def _evaluate_cells(dev_set, scorer, lm_tau, lm_psi, mode, beam, cell_params, axes):
    refs = [utt.transcript for utt in dev_set]
    cells = []
    for lam_psi, lam_tau, beta in cell_params:
        config = FusionConfig(mode=mode, lambda_tau=lam_tau, lambda_psi=lam_psi, beta=beta)
        hyps = decode_corpus(scorer, lm_tau, lm_psi, config, beam, dev_set)
        breakdown = corpus_wer(zip(refs, (h.labels for h in hyps)))
        cells.append(SweepCell(lam_psi, lam_tau, beta, breakdown))
    argmin = min(range(len(cells)),
                 key=lambda i: (cells[i].breakdown.wer,
                                cells[i].lambda_psi, cells[i].lambda_tau, cells[i].beta))
    return SweepResult(mode, axes, tuple(cells), argmin)


def sweep_lambda_beta(dev_set, scorer, lm_tau, lm_psi, mode: str,
                      lambda_grid, beta_grid, beam: BeamConfig) -> SweepResult:
    """Joint LM-scale / length-reward sweep with a single shared lambda.

    In density-ratio mode both LM scales are tied to the same lambda; in
    shallow mode lambda scales the target LM; in mode none it is ignored
    but the grid is still walked (useful as a beta-only baseline sweep).
    Argmin ties break toward the smallest lambda, then the smallest beta.
    """
    lambda_grid, beta_grid = tuple(lambda_grid), tuple(beta_grid)
    if not lambda_grid or not beta_grid:
        raise ValueError("grids must be non-empty")
    params = []
    for lam, beta in itertools.product(lambda_grid, beta_grid):
        lam_psi = lam if mode == "density_ratio" else 0.0
        lam_tau = lam if mode != "none" else 0.0
        params.append((lam_psi, lam_tau, beta))
    axes = (("lambda", lambda_grid), ("beta", beta_grid))
    return _evaluate_cells(dev_set, scorer, lm_tau, lm_psi, mode, beam, params, axes)


def sweep_lambda_pair(dev_set, scorer, lm_tau, lm_psi, beta: float,
                      lambda_psi_grid, lambda_tau_grid, beam: BeamConfig) -> SweepResult:
    """Density-ratio sweep over independent source/target scales at fixed beta."""
    lambda_psi_grid, lambda_tau_grid = tuple(lambda_psi_grid), tuple(lambda_tau_grid)
    if not lambda_psi_grid or not lambda_tau_grid:
        raise ValueError("grids must be non-empty")
    params = [(lp, lt, beta)
              for lp, lt in itertools.product(lambda_psi_grid, lambda_tau_grid)]
    axes = (("lambda_psi", lambda_psi_grid), ("lambda_tau", lambda_tau_grid))
    return _evaluate_cells(dev_set, scorer, lm_tau, lm_psi, "density_ratio", beam,
                           params, axes)


@dataclass(frozen=True)
class SweetSpot:
    num_cells: int
    width_by_axis: dict[str, int]


def sweet_spot_width(result: SweepResult, slack: float) -> SweetSpot:
    """Size of the near-optimal region: cells with WER <= (1+slack) * min WER.

    The width along an axis counts the distinct axis values that appear in
    at least one qualifying cell.
    """
    min_wer = result.argmin.breakdown.wer
    threshold = (1.0 + slack) * min_wer
    axis_names = [name for name, _ in result.axes]
    axis_values = [values for _, values in result.axes]
    qualifying = []
    for idx, cell in enumerate(result.cells):
        if cell.breakdown.wer <= threshold:
            qualifying.append(tuple(_unflatten(idx, axis_values)))
    widths = {name: len({q[d] for q in qualifying})
              for d, name in enumerate(axis_names)}
    return SweetSpot(len(qualifying), widths)


def _unflatten(idx: int, axis_values) -> list[float]:
    coords = []
    for values in reversed(axis_values):
        idx, r = divmod(idx, len(values))
        coords.append(values[r])
    return list(reversed(coords))


SWEEP_CSV_HEADER = "mode,lambda_psi,lambda_tau,beta,wer,del,ins,sub,n_ref_tokens"


def format_sweep_csv(result: SweepResult) -> str:
    lines = [SWEEP_CSV_HEADER]

    def row(cell: SweepCell) -> str:
        b = cell.breakdown
        return (f"{result.mode},{cell.lambda_psi:.6f},{cell.lambda_tau:.6f},"
                f"{cell.beta:.6f},{b.wer:.6f},{b.del_rate:.6f},{b.ins_rate:.6f},"
                f"{b.sub_rate:.6f},{b.num_ref_tokens}")

    lines.extend(row(cell) for cell in result.cells)
    lines.append("# argmin," + row(result.argmin).split(",", 1)[1])
    return "\n".join(lines) + "\n"


def write_sweep_csv(result: SweepResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_sweep_csv(result))


def parse_grid(spec: str) -> tuple[float, ...]:
    """Grid flag syntax: comma list '0,0.3,0.5' or range 'start:stop:step'."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad grid spec {spec!r}; want start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("grid step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        if n < 1:
            raise ValueError(f"empty grid {spec!r}")
        return tuple(round(start + i * step, 10) for i in range(n))
    values = tuple(float(p) for p in spec.split(",") if p.strip() != "")
    if not values:
        raise ValueError(f"empty grid {spec!r}")
    return values
