"""Monte Carlo campaigns, adversarial search and the brute-force output oracle.

Per-trial streams are derived from (master seed, N, trial id), so a campaign
gives the same counts for any worker count. Event flags are always recomputed
here from the accused set and the coalition.
"""

import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import ceil, comb, log, log2
from typing import Any, Iterable, Optional

import numpy as np
from scipy.stats import norm

from . import __version__
from .attack_model import (
    CollusionChannelSpec,
    adversarial_family,
    apply_collusion,
    check_feasible,
    sample_covertext,
)
from .codec import Codebook, SchemeParams, design_rho, draw_timesharing, encode_user, num_users, quantize_design
from .config import ExperimentConfig, OracleConfig, config_document
from .decoders import Accusation, ScoreQuery, m2pmi_decode, threshold_decode, verify_significance
from .errors import InvalidInputError, InvariantViolation, ResourceLimitError
from .keys import KeyMaterial, config_hash, derive_rng
from .limits import MAX_ORACLE_OUTPUTS, check_count, get_budget, get_threads
from .logging import log_event

EVENTS = ("fp", "miss_one", "miss_all")
CONFIDENCE = 0.95
ORACLE_COVERAGE = 0.93
MIN_SIGMA = 1e-6


# ---------------------------------------------------------------------------
# Intervals and exponent fits
# ---------------------------------------------------------------------------


def wilson_interval(events: int, n: int, confidence: float = CONFIDENCE) -> tuple[float, float]:
    """
    Wilson score interval for a binomial proportion.

    Zero-event cells get the rule-of-three upper bound 3/n instead.
    """
    if n <= 0:
        return 0.0, 1.0
    if events == 0:
        return 0.0, min(1.0, 3.0 / n)
    z = float(norm.ppf(0.5 + confidence / 2.0))
    p = events / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, float(center - half)), min(1.0, float(center + half))


@dataclass
class SlopeFit:
    """Finite-N exponent estimate: slope of -log2(rate) against N."""

    attack: str
    event: str
    slope: Optional[float]
    se: Optional[float]
    points: int
    label: str = "finite-N slope"

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "attack": self.attack,
            "event": self.event,
            "slope": self.slope,
            "se": self.se,
            "points": self.points,
            "label": self.label,
        }


def fit_exponent(Ns: list[int], rates: list[float], intervals: list[tuple[float, float]]) -> tuple[Optional[float], Optional[float], int]:
    """
    Weighted least squares of -log2(rate) on N.

    Weights are 1/sigma with sigma the delta-method width of the 95% interval
    on the -log2 scale; cells with a zero rate are skipped.

    Returns:
        (slope, standard error, points used); slope is None with fewer than two points
    """
    xs, ys, sig = [], [], []
    z = float(norm.ppf(0.5 + CONFIDENCE / 2.0))
    for N, r, (lo, hi) in zip(Ns, rates, intervals):
        if r <= 0:
            continue
        xs.append(float(N))
        ys.append(-log2(r))
        sig.append(max((hi - lo) / (2 * z * r * log(2)), MIN_SIGMA))
    if len(xs) < 2:
        return None, None, len(xs)
    coef, cov = np.polyfit(np.asarray(xs), np.asarray(ys), 1, w=1.0 / np.asarray(sig), cov="unscaled")
    return float(coef[0]), float(np.sqrt(max(cov[0, 0], 0.0))), len(xs)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


def event_flags(accused: Iterable[int], coalition: Iterable[int]) -> tuple[bool, bool, bool]:
    """
    (false positive, miss-one, miss-all) from the accused set and the coalition.

    An empty coalition cannot be missed.
    """
    acc = frozenset(accused)
    coal = frozenset(coalition)
    fp = bool(acc - coal)
    miss_one = bool(coal) and not (acc & coal)
    miss_all = bool(coal) and not coal <= acc
    return fp, miss_one, miss_all


@dataclass
class TrialRecord:
    trial_id: int
    N: int
    attack: str
    coalition: tuple
    encoding_failures: int
    accused: tuple
    fp: bool
    miss_one: bool
    miss_all: bool
    significance: Optional[bool] = None
    k_max_reached: bool = False
    wall_time: float = 0.0
    accusation: dict = field(default_factory=dict)
    encodes: list = field(default_factory=list)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "trial_id": self.trial_id,
            "N": self.N,
            "attack": self.attack,
            "coalition": list(self.coalition),
            "encoding_failures": self.encoding_failures,
            "accused": list(self.accused),
            "fp": self.fp,
            "miss_one": self.miss_one,
            "miss_all": self.miss_all,
            "significance": self.significance,
            "k_max_reached": self.k_max_reached,
            "decoder": self.accusation.get("decoder"),
            "top_score": self.accusation.get("top_score"),
            "lambda_index": self.accusation.get("lambda_index"),
            "wall_time": self.wall_time,
        }


@dataclass
class RateRow:
    attack: str
    N: int
    trials: int
    counts: dict
    encoding_failures: int
    k_max_reached: int = 0

    def rate(self, event: str) -> float:
        return self.counts[event] / self.trials if self.trials else 0.0

    def interval(self, event: str) -> tuple[float, float]:
        return wilson_interval(self.counts[event], self.trials)

    def to_json_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "attack": self.attack,
            "N": self.N,
            "trials": self.trials,
            "encoding_failures": self.encoding_failures,
            "k_max_reached": self.k_max_reached,
        }
        for event in EVENTS:
            lo, hi = self.interval(event)
            out[event] = {"count": self.counts[event], "rate": self.rate(event), "lo": lo, "hi": hi}
        return out


@dataclass
class CampaignResult:
    rows: list[RateRow]
    slopes: list[SlopeFit]
    config_hash: str
    seed: Any
    version: str = __version__
    partial: bool = False
    flags: list = field(default_factory=list)
    worst_case: list = field(default_factory=list)
    reference: Optional[dict] = None
    config: dict = field(default_factory=dict)
    records: list = field(default_factory=list, repr=False)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "partial": self.partial,
            "flags": self.flags,
            "rows": [r.to_json_dict() for r in self.rows],
            "slopes": [s.to_json_dict() for s in self.slopes],
            "worst_case": self.worst_case,
            "reference": self.reference,
            "config": self.config,
        }


# ---------------------------------------------------------------------------
# One trial
# ---------------------------------------------------------------------------


def _decode(q: ScoreQuery, cfg: ExperimentConfig) -> Accusation:
    if cfg.decoder.kind == "threshold":
        return threshold_decode(q)
    return m2pmi_decode(q, k_max=cfg.decoder.k_max, pool_size=cfg.decoder.pool_size)


def run_trial(
    cfg: ExperimentConfig,
    params: SchemeParams,
    channel: Optional[CollusionChannelSpec],
    attack: str,
    trial_id: int,
    design=None,
) -> TrialRecord:
    """
    One keyed trial: covertext, coalition, encoding, attack, decoding, events.

    ``channel`` is None for noise trials (empty coalition, y uniform on Y).
    """
    started = time.perf_counter()
    master = cfg.master_key()
    N = params.N
    rng = derive_rng(master, "trial", N, trial_id)
    key = master.derive("key", N, trial_id)
    design = design if design is not None else quantize_design(params)
    s, s_d = sample_covertext(params.source, N, rng)
    w = draw_timesharing(key, design)
    codebook = Codebook(key, design, s_d, w)

    M = num_users(params)
    K = cfg.K
    coalition = tuple(sorted(int(m) + 1 for m in rng.choice(M, size=K, replace=False))) if K else ()

    attack_rng = derive_rng(master, "attack", N, trial_id, attack)
    failures = 0
    encodes = []
    if channel is None:
        y = attack_rng.integers(params.n_y, size=N).astype(np.int64)
    else:
        copies = []
        for m in coalition:
            x, record = encode_user(s, w, m, key, params, rng=derive_rng(key, "encode", m), codebook=codebook)
            copies.append(x)
            encodes.append(record.to_json_dict())
            failures += int(record.encoding_failure)
        y = apply_collusion(copies, channel, attack_rng)

    q = ScoreQuery(y=y, s_d=s_d, w=w, key=key, params=params, codebook=codebook)
    acc = _decode(q, cfg)
    significance = None
    if acc.kind == "m2pmi":
        report = verify_significance(acc, q)
        significance = report.passed
        if not report.passed:
            raise InvariantViolation(
                f"Joint decoder accusation failed its significance check (N={N}, trial {trial_id})"
            )
    fp, miss_one, miss_all = event_flags(acc.accused, coalition)
    if miss_one and not miss_all:
        raise InvariantViolation("Missing every colluder must also miss the full coalition")
    return TrialRecord(
        trial_id=trial_id,
        N=N,
        attack=attack,
        coalition=coalition,
        encoding_failures=failures,
        accused=tuple(sorted(acc.accused)),
        fp=fp,
        miss_one=miss_one,
        miss_all=miss_all,
        significance=significance,
        k_max_reached=acc.k_max_reached,
        wall_time=time.perf_counter() - started,
        accusation=acc.to_json_dict(trial_id=trial_id),
        encodes=encodes,
    )


def _run_chunk(
    cfg: ExperimentConfig,
    N: int,
    channel: Optional[CollusionChannelSpec],
    attack: str,
    trial_ids: list[int],
) -> list[TrialRecord]:
    params = cfg.build_scheme(N)
    design = quantize_design(params)
    return [run_trial(cfg, params, channel, attack, t, design) for t in trial_ids]


# ---------------------------------------------------------------------------
# Budget
# ---------------------------------------------------------------------------


def estimate_cost(cfg: ExperimentConfig, params: SchemeParams, n_channels: int = 1) -> float:
    """
    Estimated score evaluations at one blocklength.

    trials x channels x (M * lambda-count * rows + subset-search bound).
    """
    master = cfg.master_key()
    design = quantize_design(params)
    rng = derive_rng(master, "budget", params.N)
    _, s_d = sample_covertext(params.source, params.N, rng)
    w = draw_timesharing(master, design)
    lam = Codebook(master, design, s_d, w).lambda_count()
    M = num_users(params)
    rows = 2.0 ** (params.N * (design_rho(params) + params.eps))
    cost = M * lam * rows
    if cfg.decoder.kind == "m2pmi":
        k_max = 2 * params.K_nom if cfg.decoder.k_max is None else cfg.decoder.k_max
        pool = min(cfg.decoder.pool_size, M)
        cost += lam * sum(comb(pool, k) * rows**k for k in range(1, min(k_max, pool) + 1))
    return float(cfg.trials * n_channels * cost)


# ---------------------------------------------------------------------------
# Campaigns
# ---------------------------------------------------------------------------


def _provenance(cfg: ExperimentConfig) -> dict[str, Any]:
    """Config document without the fields that must not change results (workers, output path)."""
    document = config_document(cfg)
    document.pop("workers", None)
    document.pop("output", None)
    return document


def _workers(cfg: ExperimentConfig, workers: Optional[int]) -> int:
    if workers is not None:
        return max(1, int(workers))
    if cfg.workers is not None:
        return cfg.workers
    return get_threads()


def _run_cell(
    cfg: ExperimentConfig,
    N: int,
    channel: Optional[CollusionChannelSpec],
    attack: str,
    pool: Optional[ProcessPoolExecutor],
    n_workers: int,
) -> list[TrialRecord]:
    ids = list(range(cfg.trials))
    if pool is None or n_workers <= 1:
        return _run_chunk(cfg, N, channel, attack, ids)
    size = max(1, ceil(len(ids) / (4 * n_workers)))
    chunks = [ids[i : i + size] for i in range(0, len(ids), size)]
    futures = [pool.submit(_run_chunk, cfg, N, channel, attack, chunk) for chunk in chunks]
    records = [r for f in futures for r in f.result()]
    return sorted(records, key=lambda r: r.trial_id)


def _row(attack: str, N: int, records: list[TrialRecord]) -> RateRow:
    counts = {event: sum(int(getattr(r, event)) for r in records) for event in EVENTS}
    row = RateRow(
        attack=attack,
        N=N,
        trials=len(records),
        counts=counts,
        encoding_failures=sum(r.encoding_failures for r in records),
        k_max_reached=sum(int(r.k_max_reached) for r in records),
    )
    if counts["miss_one"] > counts["miss_all"]:
        raise InvariantViolation(f"Detect-one miss count exceeds detect-all miss count at N={N} ({attack})")
    return row


def _channels(cfg: ExperimentConfig, params: SchemeParams) -> list[tuple[str, Optional[CollusionChannelSpec], str]]:
    """(attack label, channel, family label) triples; family label groups the adversarial search."""
    if cfg.K == 0:
        return [("noise", None, "noise")]
    cls = cfg.build_class(params)
    out: list[tuple[str, Optional[CollusionChannelSpec], str]] = []
    for attack in cfg.attacks:
        if attack.name == "adversarial-search":
            if cls.K != cfg.K:
                raise InvalidInputError("Adversarial search needs the coalition size of the collusion class")
            rng = derive_rng(cfg.master_key(), "family", params.N)
            for channel in adversarial_family(cls, rng, n_random=attack.n_random):
                out.append((f"adversarial:{channel.name}", channel, "adversarial-search"))
            continue
        channel = attack.build(cfg.K, cfg.scheme.n_x, cfg.scheme.n_y)
        if cls.K == cfg.K and channel.mode == "memoryless":
            report = check_feasible(channel, cls)
            if not report.feasible:
                log_event("campaign", "warning", error=report.message, attack=attack.label, N=params.N)
        out.append((attack.label, channel, attack.label))
    return out


def _worst_case(rows: list[RateRow], family: dict[str, str]) -> list[dict[str, Any]]:
    """Per N and event, the family member with the largest error rate."""
    out = []
    by_n: dict[int, list[RateRow]] = {}
    for row in rows:
        if family.get(row.attack) == "adversarial-search":
            by_n.setdefault(row.N, []).append(row)
    for N in sorted(by_n):
        for event in EVENTS:
            best = max(by_n[N], key=lambda r: r.counts[event])
            lo, hi = best.interval(event)
            out.append({"N": N, "event": event, "attack": best.attack, "rate": best.rate(event), "lo": lo, "hi": hi})
    return out


def _slopes(rows: list[RateRow], family: dict[str, str], worst: list[dict[str, Any]]) -> list[SlopeFit]:
    fits = []
    labels = sorted({r.attack for r in rows if family.get(r.attack) != "adversarial-search"})
    for attack in labels:
        series = sorted((r for r in rows if r.attack == attack), key=lambda r: r.N)
        for event in EVENTS:
            slope, se, n = fit_exponent(
                [r.N for r in series], [r.rate(event) for r in series], [r.interval(event) for r in series]
            )
            fits.append(SlopeFit(attack=attack, event=event, slope=slope, se=se, points=n))
    if worst:
        for event in EVENTS:
            series = sorted((w for w in worst if w["event"] == event), key=lambda w: w["N"])
            slope, se, n = fit_exponent(
                [w["N"] for w in series], [w["rate"] for w in series], [(w["lo"], w["hi"]) for w in series]
            )
            fits.append(SlopeFit(attack="adversarial-search", event=event, slope=slope, se=se, points=n))
    return fits


def run_campaign(cfg: ExperimentConfig, workers: Optional[int] = None) -> CampaignResult:
    """
    Seeded Monte Carlo campaign over the blocklength grid.

    Raises:
        ResourceLimitError: the first blocklength alone exceeds the budget
        InvariantViolation: event logic or the joint decoder's significance check failed

    A later blocklength that would push the running total over the budget
    stops the campaign; the rows gathered so far are returned flagged partial.
    """
    budget = get_budget()
    n_workers = _workers(cfg, workers)
    document = _provenance(cfg)
    result = CampaignResult(rows=[], slopes=[], config_hash=config_hash(document), seed=cfg.seed, config=document)
    family: dict[str, str] = {}
    spent = 0.0
    log_event("campaign", "started", config_hash=result.config_hash, n_grid=cfg.n_grid, trials=cfg.trials,
              workers=n_workers)

    pool = ProcessPoolExecutor(max_workers=n_workers) if n_workers > 1 else None
    try:
        for i, N in enumerate(cfg.n_grid):
            params = cfg.build_scheme(N)
            M = num_users(params)
            if cfg.K > M:
                raise InvalidInputError(f"Coalition size {cfg.K} exceeds the {M} users at N={N}")
            channels = _channels(cfg, params)
            cost = estimate_cost(cfg, params, len(channels))
            if i == 0 and cost > budget:
                log_event("campaign", "refused", N=N, cost=cost, budget=budget)
                raise ResourceLimitError(
                    f"Campaign at N={N}: estimated {cost:.3g} score evaluations exceeds budget of {budget:.3g}",
                    count=cost,
                    cap=budget,
                )
            if spent + cost > budget:
                result.partial = True
                result.flags.append(f"budget exceeded before N={N}; results are partial")
                log_event("campaign", "warning", error="budget exceeded", N=N, spent=spent, budget=budget)
                break
            spent += cost
            for label, channel, group in channels:
                family[label] = group
                records = _run_cell(cfg, N, channel, label, pool, n_workers)
                result.rows.append(_row(label, N, records))
                if cfg.trial_log:
                    result.records.extend(records)
    finally:
        if pool is not None:
            pool.shutdown()

    result.worst_case = _worst_case(result.rows, family)
    result.slopes = _slopes(result.rows, family, result.worst_case)
    if cfg.collusion_class.reference == "design" and cfg.K > 0 and result.rows:
        result.reference = _reference_report(cfg, cfg.build_scheme(cfg.n_grid[0]))
    log_event("campaign", "ok", config_hash=result.config_hash, rows=len(result.rows), partial=result.partial)
    return result


# ---------------------------------------------------------------------------
# Reference p_X_K
# ---------------------------------------------------------------------------


def estimate_reference(params: SchemeParams, K: int, key: KeyMaterial, draws: int) -> np.ndarray:
    """
    Empirical p_X_K of the encoder: marked copies of users 1..K over fresh covertexts.

    ``draws`` is the number of symbol tuples; ceil(draws / N) encodings are run.
    """
    if K > num_users(params):
        raise InvalidInputError("Need at least K users to estimate the reference")
    design = quantize_design(params)
    N = params.N
    counts = np.zeros((params.n_x,) * K)
    for d in range(ceil(draws / N)):
        child = key.derive("reference", N, d)
        rng = derive_rng(child, "covertext")
        s, s_d = sample_covertext(params.source, N, rng)
        w = draw_timesharing(child, design)
        codebook = Codebook(child, design, s_d, w)
        xs = [encode_user(s, w, m, child, params, rng=derive_rng(child, "encode", m), codebook=codebook)[0]
              for m in range(1, K + 1)]
        np.add.at(counts, tuple(xs), 1.0)
    return counts / counts.sum()


def _reference_report(cfg: ExperimentConfig, params: SchemeParams) -> dict[str, Any]:
    analytic = cfg.build_class(params).reference
    empirical = estimate_reference(params, cfg.K, cfg.master_key(), cfg.reference_draws)
    return {
        "N": params.N,
        "draws": cfg.reference_draws,
        "analytic": analytic.tolist(),
        "empirical": empirical.tolist(),
        "max_abs_diff": float(np.max(np.abs(analytic - empirical))),
    }


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------


@dataclass
class OracleCell:
    cell: int
    N: int
    attack: str
    coalition: tuple
    exact: dict
    mc: dict
    covered: dict
    comparison: Optional[dict] = None

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "cell": self.cell,
            "N": self.N,
            "attack": self.attack,
            "coalition": list(self.coalition),
            "exact": self.exact,
            "mc": self.mc,
            "covered": self.covered,
            "comparison": self.comparison,
        }


@dataclass
class OracleResult:
    cells: list[OracleCell]
    coverage: float
    passed: bool
    config_hash: str
    version: str = __version__

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "config_hash": self.config_hash,
            "coverage": self.coverage,
            "passed": self.passed,
            "cells": [c.to_json_dict() for c in self.cells],
        }


def _memoryless_probability(table: np.ndarray, x_label: np.ndarray, y: np.ndarray, n_y: int) -> float:
    rows = table.reshape(-1, n_y)
    return float(np.prod(rows[x_label, y]))


def brute_force_oracle(cfg: OracleConfig, workers: Optional[int] = None) -> OracleResult:
    """
    Exact event probabilities by enumerating every pirated copy y in Y^N.

    Each cell fixes a key, a covertext and a coalition, encodes once, then
    weights every y by its probability under the memoryless attack and runs
    the decoder on it. Monte Carlo draws of y (``mc_trials`` per cell) are
    checked against the exact values with 95% Wilson intervals.
    """
    if cfg.K < 1:
        raise InvalidInputError("The oracle needs at least one colluder")
    master = cfg.master_key()
    cells: list[OracleCell] = []
    attacks = [a for a in cfg.attacks if a.name != "adversarial-search"]
    if not attacks:
        raise InvalidInputError("The oracle needs at least one explicit attack")
    cell_id = 0
    for N in cfg.n_grid:
        params = cfg.build_scheme(N)
        check_count("oracle outputs |Y|^N", float(params.n_y) ** N, MAX_ORACLE_OUTPUTS)
        M = num_users(params)
        if cfg.K > M:
            raise InvalidInputError(f"Coalition size {cfg.K} exceeds the {M} users at N={N}")
        design = quantize_design(params)
        for attack in attacks:
            channel = attack.build(cfg.K, params.n_x, params.n_y)
            if channel.mode != "memoryless":
                raise InvalidInputError("The oracle enumerates memoryless attacks only")
            for c in range(cfg.cells):
                cells.append(_oracle_cell(cfg, params, design, channel, attack.label, master, N, c, cell_id))
                cell_id += 1

    pairs = [ok for cell in cells for ok in cell.covered.values()]
    coverage = sum(pairs) / len(pairs) if pairs else 1.0
    result = OracleResult(
        cells=cells,
        coverage=coverage,
        passed=coverage >= ORACLE_COVERAGE,
        config_hash=config_hash(_provenance(cfg)),
    )
    log_event("oracle", "ok" if result.passed else "warning", coverage=coverage, cells=len(cells))
    return result


def _oracle_cell(
    cfg: OracleConfig,
    params: SchemeParams,
    design,
    channel: CollusionChannelSpec,
    attack: str,
    master: KeyMaterial,
    N: int,
    c: int,
    cell_id: int,
) -> OracleCell:
    key = master.derive("oracle", N, attack, c)
    rng = derive_rng(key, "cell")
    s, s_d = sample_covertext(params.source, N, rng)
    w = draw_timesharing(key, design)
    codebook = Codebook(key, design, s_d, w)
    M = num_users(params)
    coalition = tuple(sorted(int(m) + 1 for m in rng.choice(M, size=cfg.K, replace=False)))
    copies = [encode_user(s, w, m, key, params, rng=derive_rng(key, "encode", m), codebook=codebook)[0]
              for m in coalition]
    x_label = np.ravel_multi_index(tuple(copies), (params.n_x,) * cfg.K)

    kinds = ["threshold", "m2pmi"] if cfg.compare_decoders else [cfg.decoder.kind]
    outputs = []
    for y_tuple in itertools.product(range(params.n_y), repeat=N):
        y = np.asarray(y_tuple, dtype=np.int64)
        prob = _memoryless_probability(channel.table, x_label, y, params.n_y)
        q = ScoreQuery(y=y, s_d=s_d, w=w, key=key, params=params, codebook=codebook)
        flags = {}
        for kind in kinds:
            if kind == "threshold":
                acc = threshold_decode(q)
            else:
                acc = m2pmi_decode(q, k_max=cfg.decoder.k_max, pool_size=cfg.decoder.pool_size)
                if not verify_significance(acc, q).passed:
                    raise InvariantViolation(f"Joint decoder accusation failed its significance check (oracle cell {cell_id})")
            flags[kind] = event_flags(acc.accused, coalition)
        outputs.append((prob, flags))

    primary = cfg.decoder.kind
    exact = {
        event: float(sum(p for p, f in outputs if f[primary][i])) for i, event in enumerate(EVENTS)
    }

    mc_rng = derive_rng(key, "monte-carlo")
    draws = [
        int(np.ravel_multi_index(tuple(apply_collusion(copies, channel, mc_rng)), (params.n_y,) * N))
        for _ in range(cfg.mc_trials)
    ]
    mc: dict[str, Any] = {}
    covered: dict[str, bool] = {}
    for i, event in enumerate(EVENTS):
        hits = int(sum(outputs[j][1][primary][i] for j in draws))
        lo, hi = wilson_interval(hits, cfg.mc_trials)
        mc[event] = {"count": hits, "rate": hits / cfg.mc_trials, "lo": lo, "hi": hi}
        covered[event] = lo - 1e-12 <= exact[event] <= hi + 1e-12

    comparison = None
    if cfg.compare_decoders:
        thr_only = sum(1 for _, f in outputs if f["threshold"][0] and not f["m2pmi"][0])
        joint_only = sum(1 for _, f in outputs if f["m2pmi"][0] and not f["threshold"][0])
        comparison = {
            "fp_threshold": float(sum(p for p, f in outputs if f["threshold"][0])),
            "fp_joint": float(sum(p for p, f in outputs if f["m2pmi"][0])),
            "outputs_fp_threshold_only": thr_only,
            "outputs_fp_joint_only": joint_only,
            "outputs": len(outputs),
        }
    return OracleCell(
        cell=cell_id, N=N, attack=attack, coalition=coalition, exact=exact, mc=mc, covered=covered,
        comparison=comparison,
    )
