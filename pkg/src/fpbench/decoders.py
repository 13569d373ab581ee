"""Universal accusation rules: per-user threshold decoding and joint M2PMI decoding."""

import itertools
import time
from dataclasses import dataclass, field
from math import comb, log2
from typing import Any, Iterator, Optional

import numpy as np

from .codec import Codebook, LambdaEntry, SchemeParams, num_users, quantize_design
from .errors import InvalidInputError
from .keys import KeyMaterial
from .limits import check_count, get_search_cap
from .logging import log_event
from .type_lab import as_sequence

TIE_TOL = 1e-12
SIGNIFICANCE_TOL = 1e-10
DEFAULT_POOL_SIZE = 12


@dataclass
class ScoreQuery:
    """Decoder inputs: pirated copy, degraded covertext, time-sharing sequence, key."""

    y: np.ndarray
    s_d: np.ndarray
    w: np.ndarray
    key: KeyMaterial
    params: SchemeParams
    codebook: Optional[Codebook] = None

    def __post_init__(self) -> None:
        self.y = as_sequence(self.y)
        self.s_d = as_sequence(self.s_d)
        self.w = as_sequence(self.w)
        n = self.params.N
        if not (self.y.size == self.s_d.size == self.w.size == n):
            raise InvalidInputError("y, s_d and w must have blocklength N")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.params.n_y):
            raise InvalidInputError("Pirated copy symbol out of alphabet")
        if self.codebook is None:
            self.codebook = Codebook(self.key, quantize_design(self.params), self.s_d, self.w)
        self._scorers: dict[int, "_LambdaScorer"] = {}

    @property
    def num_users(self) -> int:
        return num_users(self.params)

    def scorer(self, entry: LambdaEntry) -> "_LambdaScorer":
        sc = self._scorers.get(entry.index)
        if sc is None:
            sc = _LambdaScorer(self, entry)
            self._scorers[entry.index] = sc
        return sc


@dataclass
class UserScore:
    score: float
    lam_index: int
    row: int


@dataclass
class Accusation:
    """Decoder output; ``accused`` holds 1-based user indices."""

    accused: frozenset
    kind: str
    per_user: dict[int, UserScore] = field(default_factory=dict)
    top_score: float = 0.0
    lam_index: Optional[int] = None
    rows: tuple = ()
    coalition: tuple = ()
    k_max: Optional[int] = None
    k_max_reached: bool = False
    pool: tuple = ()
    trace: list = field(default_factory=list)
    elapsed: float = 0.0

    def to_json_dict(self, trial_id: Optional[int] = None) -> dict[str, Any]:
        out: dict[str, Any] = {
            "decoder": self.kind,
            "accused": sorted(self.accused),
            "top_score": self.top_score,
            "lambda_index": self.lam_index,
            "elapsed": self.elapsed,
        }
        if trial_id is not None:
            out["trial_id"] = trial_id
        if self.k_max is not None:
            out["k_max"] = self.k_max
            out["k_max_reached"] = self.k_max_reached
        return out


def _row_entropies(labels: np.ndarray, n_labels: int) -> np.ndarray:
    """Empirical entropy (bits) of each row of a 2-D label array."""
    rows, n = labels.shape
    offsets = (np.arange(rows, dtype=np.int64) * n_labels)[:, None]
    counts = np.bincount((labels + offsets).ravel(), minlength=rows * n_labels).reshape(rows, n_labels)
    c = counts.astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        clogc = np.where(c > 0, c * np.log2(np.maximum(c, 1.0)), 0.0)
    return log2(n) - clogc.sum(axis=1) / n


def _entropy(labels: np.ndarray, n_labels: int) -> float:
    return float(_row_entropies(labels[None, :], n_labels)[0])


class _LambdaScorer:
    """
    Scores under one covertext type lambda.

    Every codeword of the lambda-array has the same conditional type given
    z = (s^d, w), so H(u|z) is a constant h_u and only joint entropies with y
    vary between codewords.
    """

    def __init__(self, q: ScoreQuery, entry: LambdaEntry):
        p = q.params
        self.q = q
        self.entry = entry
        self.L_u = p.L_u
        self.n_z = p.n_sd * p.L_w
        self.z = q.codebook.sdw_label
        self.zy = self.z * p.n_y + q.y
        self.n_zy = self.n_z * p.n_y
        self.h_z = _entropy(self.z, self.n_z)
        self.h_y_given_z = _entropy(self.zy, self.n_zy) - self.h_z
        self.h_u = self._class_entropy()
        self.penalty = entry.rho + p.R + p.delta
        self._rows: dict[int, np.ndarray] = {}

    def _class_entropy(self) -> float:
        """H(u|z) of the conditional type class."""
        flat = self.entry.tables.T_U_SdW.flat().astype(float)
        n = flat.sum()
        n_c = flat.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            h_joint = -np.sum(np.where(flat > 0, flat / n * np.log2(np.maximum(flat, 1.0) / n), 0.0))
            h_cond = -np.sum(np.where(n_c > 0, n_c / n * np.log2(np.maximum(n_c, 1.0) / n), 0.0))
        return float(h_joint - h_cond)

    def rows_matrix(self, m: int) -> np.ndarray:
        """All codewords of column m stacked (rows x N)."""
        mat = self._rows.get(m)
        if mat is None:
            mat = np.stack(
                [self.q.codebook.codeword(l, m, self.entry.index) for l in range(1, self.entry.rows + 1)]
            )
            self._rows[m] = mat
        return mat

    def single_scores(self, m: int) -> np.ndarray:
        """I(u(l,m,lambda); y | z) for every row l."""
        labels = self.zy[None, :] * self.L_u + self.rows_matrix(m)
        h_uzy = _row_entropies(labels, self.n_zy * self.L_u)
        return self.h_u + self.h_y_given_z - (h_uzy - self.h_z)

    def multi_info_rows(self, prefix: np.ndarray, prefix_cells: int, k: int, m_last: int) -> np.ndarray:
        """
        Multi-information of (prefix members, last member's row l) with y, for every l.

        ``prefix`` is the combined (z, y, u_1..u_{k-1}) label with ``prefix_cells`` cells.
        """
        labels = prefix[None, :] * self.L_u + self.rows_matrix(m_last)
        h_all = _row_entropies(labels, prefix_cells * self.L_u) - self.h_z
        return k * self.h_u + self.h_y_given_z - h_all


def threshold_decode(q: ScoreQuery, delta: Optional[float] = None) -> Accusation:
    """
    Per-user threshold rule.

    User m is accused iff max over lambda and rows l of
    I(u(l,m,lambda); y | s^d, w) - rho(lambda) exceeds R + delta.

    Args:
        q: Query
        delta: Override of params.delta

    Returns:
        Accusation with the best (score, lambda, row) of every user
    """
    started = time.perf_counter()
    p = q.params
    delta = p.delta if delta is None else delta
    threshold = p.R + delta
    entries = q.codebook.entries()
    per_user: dict[int, UserScore] = {}
    for m in range(1, q.num_users + 1):
        best: Optional[UserScore] = None
        for entry in entries:
            sc = q.scorer(entry)
            scores = sc.single_scores(m) - entry.rho
            top = float(scores.max())
            if best is None or top > best.score + TIE_TOL:
                l = int(np.flatnonzero(scores >= top - TIE_TOL)[0]) + 1
                best = UserScore(score=top, lam_index=entry.index, row=l)
        if best is not None:
            per_user[m] = best
    accused = frozenset(m for m, us in per_user.items() if us.score > threshold)
    top_user = max(per_user.values(), key=lambda us: us.score, default=None)
    return Accusation(
        accused=accused,
        kind="threshold",
        per_user=per_user,
        top_score=top_user.score - threshold if top_user else 0.0,
        lam_index=top_user.lam_index if top_user else None,
        elapsed=time.perf_counter() - started,
    )


class CandidateSearch:
    """
    Candidate coalitions for the joint decoder.

    Users are ranked by their single-user penalized score
    max_{lambda,l} [I(u;y|s^d,w) - (rho + R + delta)]; the top ``pool_size``
    form the pool and every subset of the pool of size 1..k_max is a candidate,
    in increasing size then lexicographic order.
    """

    def __init__(self, q: ScoreQuery, k_max: int, pool_size: int = DEFAULT_POOL_SIZE):
        if k_max < 0:
            raise InvalidInputError("k_max must be nonnegative")
        self.q = q
        self.k_max = k_max
        self.pool_size = pool_size
        self.single: dict[int, float] = {}
        if k_max == 0:
            self.pool: tuple[int, ...] = ()
            return
        M = q.num_users
        if M <= pool_size:
            self.pool = tuple(range(1, M + 1))
        else:
            for m in range(1, M + 1):
                best = -np.inf
                for entry in q.codebook.entries():
                    sc = q.scorer(entry)
                    best = max(best, float(sc.single_scores(m).max()) - sc.penalty)
                self.single[m] = best
            ranked = sorted(self.single, key=lambda m: (-self.single[m], m))
            self.pool = tuple(sorted(ranked[:pool_size]))

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        for k in range(1, min(self.k_max, len(self.pool)) + 1):
            yield from itertools.combinations(self.pool, k)

    def cost(self) -> int:
        """Row-combination evaluations needed for an exhaustive pass over the candidates."""
        total = 0
        for entry in self.q.codebook.entries():
            for k in range(1, min(self.k_max, len(self.pool)) + 1):
                total += comb(len(self.pool), k) * entry.rows**k
        return total


def search_strategy(q: ScoreQuery, k_max: int, pool_size: int = DEFAULT_POOL_SIZE) -> CandidateSearch:
    """Prescreened candidate coalitions (iterable) for m2pmi_decode."""
    return CandidateSearch(q, k_max, pool_size)


def _best_rows(sc: _LambdaScorer, coalition: tuple[int, ...]) -> tuple[float, tuple[int, ...]]:
    """
    Largest multi-information over all row vectors of a coalition under one lambda.

    Row vectors are scanned in lexicographic order; the first maximizer within
    TIE_TOL is kept.
    """
    q = sc.q
    k = len(coalition)
    best_val = -np.inf
    best_rows: tuple[int, ...] = ()
    prefix_members = coalition[:-1]
    row_ranges = [range(sc.entry.rows)] * len(prefix_members)
    for prefix_rows in itertools.product(*row_ranges):
        label = sc.zy
        cells = sc.n_zy
        for m, l in zip(prefix_members, prefix_rows):
            label = label * sc.L_u + sc.rows_matrix(m)[l]
            cells *= sc.L_u
        vals = sc.multi_info_rows(label, cells, k, coalition[-1])
        top = float(vals.max())
        if top > best_val + TIE_TOL:
            last = int(np.flatnonzero(vals >= top - TIE_TOL)[0])
            best_val = top
            best_rows = tuple(r + 1 for r in prefix_rows) + (last + 1,)
    return best_val, best_rows


def m2pmi_decode(
    q: ScoreQuery,
    k_max: Optional[int] = None,
    pool_size: int = DEFAULT_POOL_SIZE,
    delta: Optional[float] = None,
) -> Accusation:
    """
    Maximum doubly-penalized mutual information rule.

    Maximizes multi_info(u_K; y | s^d, w) - k (rho(lambda) + R + delta) over
    coalitions of size 0..k_max, lambdas and row vectors; k = 0 scores 0.
    Ties go to the lexicographically smallest (k, coalition, lambda, rows).

    Args:
        q: Query
        k_max: Coalition size cap; defaults to 2 K_nom
        pool_size: Prescreening pool size
        delta: Override of params.delta

    Returns:
        Accusation of the maximizing coalition (empty when k = 0 wins)
    """
    started = time.perf_counter()
    p = q.params
    k_max = 2 * p.K_nom if k_max is None else int(k_max)
    delta = p.delta if delta is None else delta
    search = search_strategy(q, k_max, pool_size)
    check_count("joint decoder coalition search", search.cost(), get_search_cap())

    best_score = 0.0
    best: tuple = ((), None, ())
    trace: list[tuple[tuple[int, ...], float]] = []
    entries = q.codebook.entries()
    for coalition in search:
        k = len(coalition)
        coal_best = -np.inf
        for entry in entries:
            sc = q.scorer(entry)
            value, rows = _best_rows(sc, coalition)
            score = value - k * (entry.rho + p.R + delta)
            coal_best = max(coal_best, score)
            if score > best_score + TIE_TOL:
                best_score = score
                best = (coalition, entry.index, rows)
        trace.append((coalition, coal_best))

    coalition, lam_index, rows = best
    reached = len(coalition) == k_max and k_max > 0
    if reached:
        log_event("m2pmi_decode", "warning", reason="maximizer at k_max cap", k_max=k_max)
    return Accusation(
        accused=frozenset(coalition),
        kind="m2pmi",
        top_score=best_score,
        lam_index=lam_index,
        rows=rows,
        coalition=coalition,
        k_max=k_max,
        k_max_reached=reached,
        pool=search.pool,
        trace=trace,
        elapsed=time.perf_counter() - started,
    )


@dataclass
class SignificanceReport:
    passed: bool
    property1: dict = field(default_factory=dict)
    property2_failures: list = field(default_factory=list)
    property2_checked: int = 0
    vacuous: bool = False


def _multi_info_split(sc: _LambdaScorer, part_a: list[np.ndarray], rest: list[np.ndarray]) -> float:
    """multi_info(u_A; y, u_rest | z) = sum_{A} H(u_i|z) + H(y, u_rest | z) - H(u_A, y, u_rest | z)."""
    label = sc.zy
    cells = sc.n_zy
    for u in rest:
        label = label * sc.L_u + u
        cells *= sc.L_u
    h_rest = _entropy(label, cells) - sc.h_z
    for u in part_a:
        label = label * sc.L_u + u
        cells *= sc.L_u
    h_all = _entropy(label, cells) - sc.h_z
    return len(part_a) * sc.h_u + h_rest - h_all


def verify_significance(acc: Accusation, q: ScoreQuery, delta: Optional[float] = None) -> SignificanceReport:
    """
    Check the two significance properties of a joint-decoder accusation.

    Property 1: every nonempty subset A of the accused coalition has
    multi_info(u_A; y, u_{rest} | s^d, w) > |A| (rho + R + delta).
    Property 2: no nonempty set A of pool users disjoint from the coalition
    (with |A| + k <= k_max) clears multi_info(u_A; y, u_K | s^d, w) > |A| (rho + R + delta)
    for any choice of rows.
    An empty accusation passes vacuously.
    """
    if not acc.accused:
        return SignificanceReport(passed=True, vacuous=True)
    p = q.params
    delta = p.delta if delta is None else delta
    entry = q.codebook.entries()[acc.lam_index]
    sc = q.scorer(entry)
    penalty = entry.rho + p.R + delta
    members = list(acc.coalition)
    u_of = {m: q.codebook.codeword(l, m, entry.index) for m, l in zip(members, acc.rows)}
    report = SignificanceReport(passed=True)

    for size in range(1, len(members) + 1):
        for subset in itertools.combinations(members, size):
            rest = [m for m in members if m not in subset]
            value = _multi_info_split(sc, [u_of[m] for m in subset], [u_of[m] for m in rest])
            ok = value - size * penalty > -SIGNIFICANCE_TOL
            report.property1[subset] = (value, size * penalty, ok)
            if not ok:
                report.passed = False

    k_max = acc.k_max if acc.k_max is not None else 2 * p.K_nom
    outsiders = [m for m in (acc.pool or range(1, q.num_users + 1)) if m not in acc.accused]
    base = sc.zy
    cells = sc.n_zy
    for m in members:
        base = base * sc.L_u + u_of[m]
        cells *= sc.L_u
    h_base = _entropy(base, cells) - sc.h_z
    for size in range(1, k_max - len(members) + 1):
        for extra in itertools.combinations(outsiders, size):
            prefix_ranges = [range(entry.rows)] * (size - 1)
            for prefix_rows in itertools.product(*prefix_ranges):
                label = base
                c = cells
                for m, l in zip(extra[:-1], prefix_rows):
                    label = label * sc.L_u + sc.rows_matrix(m)[l]
                    c *= sc.L_u
                labels = label[None, :] * sc.L_u + sc.rows_matrix(extra[-1])
                h_all = _row_entropies(labels, c * sc.L_u) - sc.h_z
                values = size * sc.h_u + h_base - h_all
                report.property2_checked += values.size
                worst = float(values.max())
                if worst - size * penalty > SIGNIFICANCE_TOL:
                    report.passed = False
                    report.property2_failures.append((extra, worst, size * penalty))
    return report
