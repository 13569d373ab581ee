"""Finite-N checks of the type-counting estimates behind the error exponents.

All checks run on tiny instances. Class sizes are exact integers, so the
counting identities are verified with zero tolerance; the exponential
estimates are checked against the polynomial slack cells * log2(N+1) / N.
"""

import itertools
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial, log2
from typing import Any

import numpy as np

from .attack_model import interleaving_attack, realize_conditional_type
from .config import LemmaConfig
from .harness import wilson_interval
from .limits import check_count
from .logging import log_event
from .type_lab import (
    TypeTable,
    divergence,
    empirical_info,
    enumerate_conditional_types,
    exact_type_probability,
    joint_and_conditional_type,
    largest_remainder,
    log_type_class_size,
    multi_information_pmf,
    quantize_conditional,
    sample_uniform_in_type_class,
)

BRUTE_FORCE_CAP = 2_000_000
SUM_TOL = 1e-9


@dataclass
class LemmaCheck:
    name: str
    passed: bool
    checked: int
    max_excess: float
    details: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "checked": self.checked,
            "max_excess": self.max_excess,
            "details": self.details,
        }


@dataclass
class LemmaReport:
    checks: list[LemmaCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "checks": [c.to_json_dict() for c in self.checks]}


def exact_class_size(t: TypeTable) -> int:
    """Number of sequences in a (conditional) type class, as an exact integer."""
    total = 1
    for row in t.flat():
        size = factorial(int(row.sum()))
        for c in row:
            size //= factorial(int(c))
        total *= size
    return total


def class_members(t: TypeTable, conditioning: np.ndarray) -> list[np.ndarray]:
    """Every target sequence whose joint type with ``conditioning`` is ``t`` (tiny N only)."""
    flat = t.flat()
    n_target = flat.shape[1]
    n = conditioning.size
    check_count("type class member enumeration", float(n_target) ** n, BRUTE_FORCE_CAP)
    out = []
    for cand in itertools.product(range(n_target), repeat=n):
        seq = np.asarray(cand, dtype=np.int64)
        got = np.bincount(conditioning * n_target + seq, minlength=flat.size)
        if np.array_equal(got, flat.ravel()):
            out.append(seq)
    return out


def _poly_slack(cells: int, N: int) -> float:
    return cells * log2(N + 1) / N


# ---------------------------------------------------------------------------
# Codeword tuples drawn from a common conditional type class
# ---------------------------------------------------------------------------


@dataclass
class _CommonClass:
    N: int
    K: int
    L_u: int
    n_cells: int
    n_z: int
    c: np.ndarray
    z: np.ndarray
    T_u: TypeTable  # axes (c, u)

    @property
    def cells(self) -> int:
        return self.n_cells * self.n_z * self.L_u**self.K

    def joint_types(self) -> list[TypeTable]:
        """Conditional types of u_K given (c, z) whose every colluder marginal is T_u; axes (c, z, u_1..u_K)."""
        cz = joint_and_conditional_type([self.c, self.z], [self.n_cells, self.n_z])
        shape = (self.n_cells, self.n_z) + (self.L_u,) * self.K
        out = []
        for t in enumerate_conditional_types(self.N, self.L_u**self.K, conditioning_type=cz):
            counts = t.counts.reshape(shape)
            ok = True
            for k in range(self.K):
                other = tuple(2 + j for j in range(self.K) if j != k)
                if not np.array_equal(counts.sum(axis=(1,) + other), self.T_u.counts):
                    ok = False
                    break
            if ok:
                out.append(TypeTable(counts, n_cond=2))
        return out

    def info(self, t: TypeTable) -> float:
        """ı̊(u_1; ...; u_K; z | c) of a joint type."""
        groups = [[1]] + [[2 + k] for k in range(self.K)]
        return multi_information_pmf(t.pmf, groups, given_axes=[0])


def _common_class(cfg: LemmaConfig, rng: np.random.Generator) -> _CommonClass:
    N = cfg.N
    c = np.sort(np.arange(N) % cfg.n_cells).astype(np.int64)
    p_u = np.full(cfg.L_u, 1.0 / cfg.L_u) if cfg.p_u is None else np.asarray(cfg.p_u, dtype=float)
    cell_counts = np.bincount(c, minlength=cfg.n_cells)
    T_u = quantize_conditional(cell_counts, np.tile(p_u, (cfg.n_cells, 1)))
    z = rng.integers(cfg.n_z, size=N).astype(np.int64)
    return _CommonClass(N=N, K=cfg.K, L_u=cfg.L_u, n_cells=cfg.n_cells, n_z=cfg.n_z, c=c, z=z, T_u=T_u)


def check_conditional_type_probability(cfg: LemmaConfig, inst: _CommonClass) -> LemmaCheck:
    """
    Pr[T_{u_K|z c}] = |T_{u_K|z c}| / |T_{u|c}|^K against 2^{-N ı̊(u_K; z | c)}.

    Also checks that the probabilities of all joint types sum to 1 and, when
    N is small enough, recounts every class by brute force.
    """
    N, K = inst.N, inst.K
    log_base = log_type_class_size(inst.T_u)
    slack = _poly_slack(inst.cells, N)
    types = inst.joint_types()
    worst = -np.inf
    total = 0.0
    for t in types:
        log_pr = log_type_class_size(t) - K * log_base
        total += 2.0**log_pr
        worst = max(worst, abs(log_pr / N + inst.info(t)) - slack)

    details: dict[str, Any] = {"N": N, "K": K, "types": len(types), "slack": slack, "probability_sum": total}
    passed = worst <= 0 and abs(total - 1.0) <= SUM_TOL

    members = None
    if N <= cfg.brute_force_N:
        members_count = exact_class_size(inst.T_u)
        if float(members_count) ** K <= BRUTE_FORCE_CAP:
            members = class_members(inst.T_u, inst.c)
    if members is not None:
        shape = (inst.n_cells, inst.n_z) + (inst.L_u,) * K
        tally: Counter = Counter()
        for combo in itertools.product(members, repeat=K):
            t = joint_and_conditional_type([inst.c, inst.z, *combo], list(shape), n_cond=2)
            tally[t.key()] += 1
        expected = {t.key(): exact_class_size(t) for t in types}
        mismatches = sum(1 for key in set(tally) | set(expected) if tally.get(key, 0) != expected.get(key, 0))
        details["brute_force"] = {"tuples": len(members) ** K, "mismatches": mismatches}
        passed = passed and mismatches == 0
    else:
        details["brute_force"] = None

    return LemmaCheck(
        name="conditional-type-probability",
        passed=bool(passed),
        checked=len(types),
        max_excess=float(worst),
        details=details,
    )


def check_information_tail(cfg: LemmaConfig, inst: _CommonClass, rng: np.random.Generator) -> LemmaCheck:
    """Pr[ı̊(u_K; z | c) >= nu], exact and Monte Carlo, against 2^{-N nu} (N+1)^cells."""
    N, K = inst.N, inst.K
    log_base = log_type_class_size(inst.T_u)
    scored = [(inst.info(t), log_type_class_size(t) - K * log_base) for t in inst.joint_types()]

    draws = []
    for _ in range(cfg.mc_trials):
        us = [sample_uniform_in_type_class(inst.T_u, inst.c, rng) for _ in range(K)]
        draws.append(empirical_info(us + [inst.z], conditioning=[inst.c], form="multi"))
    draws_arr = np.asarray(draws)

    rows = []
    worst = -np.inf
    passed = True
    for nu in cfg.nu:
        exact = float(sum(2.0**lp for info, lp in scored if info >= nu - 1e-12))
        log_bound = -N * nu + inst.cells * log2(N + 1)
        hits = int(np.count_nonzero(draws_arr >= nu - 1e-12))
        lo, hi = wilson_interval(hits, cfg.mc_trials)
        excess = (log2(exact) - log_bound) / N if exact > 0 else -np.inf
        worst = max(worst, excess)
        ok = excess <= 0 and (lo == 0 or log2(lo) <= log_bound)
        passed = passed and ok
        rows.append(
            {
                "nu": nu,
                "exact": exact,
                "log2_bound": log_bound,
                "mc_rate": hits / cfg.mc_trials,
                "mc_lo": lo,
                "mc_hi": hi,
                "mc_covers_exact": lo - 1e-12 <= exact <= hi + 1e-12,
                "passed": ok,
            }
        )
    return LemmaCheck(
        name="information-tail",
        passed=passed,
        checked=len(cfg.nu),
        max_excess=float(worst),
        details={"N": N, "K": K, "trials": cfg.mc_trials, "rows": rows},
    )


# ---------------------------------------------------------------------------
# Joint type of (s, (xu)_K, y) under uniform draws
# ---------------------------------------------------------------------------


def check_joint_type_identity(cfg: LemmaConfig) -> LemmaCheck:
    """
    Pr[T_{y (xu)_K | s}] = |T_{y|(xu)_K s}| / |T_{y|x_K}| * |T_{(xu)_K|s}| / |T_{xu|s}|^K.

    (x_k, u_k) are drawn uniformly from a common conditional type class given
    s and y uniformly from the conditional type class of an interleaving
    channel given x_K; every outcome is enumerated and counted.
    """
    N, K, L_u = cfg.prt_N, cfg.K, cfg.L_u
    n_s, n_x, n_y = len(cfg.p_S), 2, 2
    n_xu = n_x * L_u
    s = np.repeat(np.arange(n_s), largest_remainder(N, cfg.p_S)).astype(np.int64)
    s_counts = np.bincount(s, minlength=n_s)
    cond = np.zeros((n_s, n_x, L_u))
    for si in range(n_s):
        cond[si, si % n_x, :] += 0.5 / L_u
        cond[si, :, :] += 0.5 / (n_x * L_u)
    T_xu = quantize_conditional(s_counts, cond.reshape(n_s, n_xu))
    members = class_members(T_xu, s)
    channel = interleaving_attack(K, n_x, n_y).table
    check_count("joint type identity enumeration", float(len(members)) ** K * n_y**N, BRUTE_FORCE_CAP)

    shape = (n_s,) + (n_xu,) * K + (n_y,)
    tally: Counter = Counter()
    y_classes: dict[bytes, list[np.ndarray]] = {}
    for combo in itertools.product(members, repeat=K):
        xs = [xu // L_u for xu in combo]
        x_label = np.ravel_multi_index(tuple(xs), (n_x,) * K)
        cache_key = x_label.tobytes()
        ys = y_classes.get(cache_key)
        if ys is None:
            x_type = joint_and_conditional_type(xs, [n_x] * K)
            T_y = realize_conditional_type(channel, x_type, "largest-remainder")
            ys = class_members(TypeTable(T_y.counts.reshape(-1, n_y), n_cond=1), x_label)
            y_classes[cache_key] = ys
        for y in ys:
            t = joint_and_conditional_type([s, *combo, y], list(shape))
            tally[t.key()] += 1

    base = exact_class_size(T_xu)
    prob_sum = Fraction(0)
    mismatches = 0
    worst = -np.inf
    slack_cells = int(np.prod(shape))
    for key, count in tally.items():
        joint = np.asarray(key, dtype=np.int64).reshape(shape)
        xuK = TypeTable(joint.sum(axis=-1), n_cond=1)
        y_given_all = TypeTable(joint, n_cond=K + 1)
        x_marg = joint.reshape((n_s,) + (n_x, L_u) * K + (n_y,))
        x_axes = tuple(2 + 2 * k for k in range(K))
        x_y = x_marg.sum(axis=(0,) + x_axes).reshape((n_x,) * K + (n_y,))
        y_given_x = TypeTable(x_y, n_cond=K)
        # count of (tuple, y) pairs landing in this joint type
        if count != exact_class_size(y_given_all) * exact_class_size(xuK):
            mismatches += 1
        pr = Fraction(count, base**K * exact_class_size(y_given_x))
        prob_sum += pr
        worst = max(worst, abs(log2(pr) / N + _joint_divergence(joint, T_xu, K, n_x, L_u)) - _poly_slack(slack_cells, N))

    return LemmaCheck(
        name="joint-type-identity",
        passed=mismatches == 0 and prob_sum == 1,
        checked=len(tally),
        max_excess=float(worst),
        details={
            "N": N,
            "K": K,
            "types": len(tally),
            "mismatches": mismatches,
            "probability_sum_is_one": prob_sum == 1,
            "poly_bound_holds": bool(worst <= 0),
        },
    )


def _joint_divergence(joint: np.ndarray, T_xu: TypeTable, K: int, n_x: int, L_u: int) -> float:
    """D(p_{y (xu)_K | s} || p_{y|x_K} p_{xu|s}^K | p_s) of a joint type."""
    P = joint / joint.sum()
    n_s = P.shape[0]
    n_y = P.shape[-1]
    p_s = P.reshape(n_s, -1).sum(axis=1)
    q_xu = T_xu.conditional_pmf()
    Q = p_s.reshape((n_s,) + (1,) * (K + 1))
    for k in range(K):
        shape = [n_s] + [1] * K + [1]
        shape[1 + k] = q_xu.shape[1]
        Q = Q * q_xu.reshape(shape)
    x_y = P.reshape((n_s,) + (n_x, L_u) * K + (n_y,)).sum(axis=(0,) + tuple(2 + 2 * k for k in range(K)))
    with np.errstate(invalid="ignore", divide="ignore"):
        y_given_x = np.where(x_y.sum(axis=-1, keepdims=True) > 0, x_y / x_y.sum(axis=-1, keepdims=True), 0.0)
    # broadcast p(y|x_K) over (s, u_1..u_K)
    expand = y_given_x.reshape((1,) + tuple(v for _ in range(K) for v in (n_x, 1)) + (n_y,))
    expand = np.broadcast_to(expand, (n_s,) + (n_x, L_u) * K + (n_y,)).reshape(P.shape)
    return divergence(P, Q * expand)


# ---------------------------------------------------------------------------
# Covertext type given the time-sharing sequence
# ---------------------------------------------------------------------------


def check_covertext_type_probability(cfg: LemmaConfig) -> LemmaCheck:
    """Pr[T_{s|w}] against 2^{-N D(p_{s|w} || p_S | p_w)} for every conditional type, N = 1..psw_max_N."""
    p_S = np.asarray(cfg.p_S, dtype=float)
    n_s = p_S.size
    cells = cfg.L_w * n_s
    worst = -np.inf
    checked = 0
    sums = {}
    for N in range(1, cfg.psw_max_N + 1):
        w_counts = largest_remainder(N, np.ones(cfg.L_w))
        p_w = w_counts / N
        total = 0.0
        for t in enumerate_conditional_types(N, n_s, conditioning_type=TypeTable(w_counts)):
            log_pr = exact_type_probability(t, p_S)
            d = divergence(t.conditional_pmf(), np.broadcast_to(p_S, t.counts.shape), conditioning=p_w)
            worst = max(worst, abs(log_pr / N + d) - _poly_slack(cells, N))
            total += 2.0**log_pr
            checked += 1
        sums[N] = total
    sums_ok = all(abs(v - 1.0) <= SUM_TOL for v in sums.values())
    return LemmaCheck(
        name="covertext-type-probability",
        passed=bool(worst <= 0 and sums_ok),
        checked=checked,
        max_excess=float(worst),
        details={"max_N": cfg.psw_max_N, "L_w": cfg.L_w, "probability_sums": sums},
    )


def lemma_C1_checks(cfg: LemmaConfig) -> LemmaReport:
    """
    Run every finite-N type-counting check on the configured tiny instance.

    Returns:
        LemmaReport; ``passed`` is True only when every check passed
    """
    rng = np.random.default_rng(cfg.seed)
    inst = _common_class(cfg, rng)
    checks = [
        check_conditional_type_probability(cfg, inst),
        check_information_tail(cfg, inst, rng),
        check_joint_type_identity(cfg),
        check_covertext_type_probability(cfg),
    ]
    report = LemmaReport(checks)
    log_event(
        "lemma_checks",
        "ok" if report.passed else "warning",
        passed={c.name: c.passed for c in checks},
        N=cfg.N,
        K=cfg.K,
    )
    return report
