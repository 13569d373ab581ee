"""Stacked-binning randomized fingerprinting encoder.

Design p.m.f.s are rounded to exact types at blocklength N, the codebook
C(s^d, w, lambda) is regenerated lazily from the key, and each user's marked
copy is produced by the two-step binning encoder.
"""

from dataclasses import dataclass, field
from math import ceil
from typing import Any, Optional

import numpy as np

from .attack_model import SourceSpec, block_distortion
from .errors import InvalidInputError, InvariantViolation
from .keys import KeyMaterial, derive_rng
from .limits import check_count, get_lambda_cap
from .logging import log_event
from .type_lab import (
    TypeTable,
    as_sequence,
    count_conditional_types,
    enumerate_conditional_types,
    joint_and_conditional_type,
    largest_remainder,
    mutual_information_pmf,
    quantize_conditional,
    sample_uniform_in_type_class,
)

DEFAULT_EPSILON = 0.1
DEFAULT_DELTA = 0.05
MAX_USERS = 2**20
MAX_ROWS = 2**24


@dataclass(frozen=True)
class SchemeParams:
    """
    Code parameters and design p.m.f.s.

    ``p_XU_given_SW`` has shape (|S|, L_w, |X|, L_u).
    """

    N: int
    R: float
    source: SourceSpec
    d1: np.ndarray
    D1: float
    n_x: int
    n_y: int
    L_u: int
    L_w: int
    p_W: np.ndarray
    p_XU_given_SW: np.ndarray
    delta: float = DEFAULT_DELTA
    eps: float = DEFAULT_EPSILON
    K_nom: int = 2

    def __post_init__(self) -> None:
        if self.N < 1:
            raise InvalidInputError("Blocklength must be positive")
        if self.R < 0:
            raise InvalidInputError("Rate must be nonnegative")
        if self.delta <= 0 or self.eps <= 0:
            raise InvalidInputError("Delta and epsilon must be positive")
        p_W = np.asarray(self.p_W, dtype=float).ravel()
        design = np.asarray(self.p_XU_given_SW, dtype=float)
        d1 = np.asarray(self.d1, dtype=float)
        expected = (self.source.n_s, self.L_w, self.n_x, self.L_u)
        if p_W.size != self.L_w or np.any(p_W < 0) or abs(p_W.sum() - 1.0) > 1e-9:
            raise InvalidInputError("p_W must be a p.m.f. over L_w symbols")
        if design.shape != expected:
            raise InvalidInputError(f"p_XU|SW must have shape {expected}")
        if np.any(design < 0) or not np.allclose(design.sum(axis=(2, 3)), 1.0, atol=1e-9):
            raise InvalidInputError("p_XU|SW slices must be p.m.f.s")
        if d1.shape != (self.source.n_s, self.n_x):
            raise InvalidInputError("d1 must have shape (|S|, |X|)")
        object.__setattr__(self, "p_W", p_W)
        object.__setattr__(self, "p_XU_given_SW", design)
        object.__setattr__(self, "d1", d1)
        if self.design_distortion() > self.D1 + 1e-9:
            raise InvalidInputError(
                f"Design distortion {self.design_distortion():.6g} exceeds D1={self.D1:.6g}"
            )
        if num_users(self) > MAX_USERS:
            raise InvalidInputError(f"Rate gives more than {MAX_USERS} users at N={self.N}")

    @property
    def n_s(self) -> int:
        return self.source.n_s

    @property
    def n_sd(self) -> int:
        return self.source.n_sd

    def design_distortion(self) -> float:
        """E[d1(S, X)] under p_S p_W p_XU|SW."""
        p_sx = np.einsum("s,w,swxu->sx", self.source.p_S, self.p_W, self.p_XU_given_SW)
        return float(np.sum(p_sx * self.d1))

    def p_U_given_SW(self) -> np.ndarray:
        return self.p_XU_given_SW.sum(axis=2)

    def p_X_given_SW(self) -> np.ndarray:
        return self.p_XU_given_SW.sum(axis=3)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "N": self.N,
            "R": self.R,
            "p_S": self.source.p_S.tolist(),
            "h": self.source.h.tolist(),
            "d1": self.d1.tolist(),
            "D1": self.D1,
            "n_x": self.n_x,
            "n_y": self.n_y,
            "L_u": self.L_u,
            "L_w": self.L_w,
            "p_W": self.p_W.tolist(),
            "p_XU_given_SW": self.p_XU_given_SW.tolist(),
            "delta": self.delta,
            "eps": self.eps,
            "K_nom": self.K_nom,
        }


def num_users(params: SchemeParams) -> int:
    """M = ceil(2^{NR})."""
    return max(1, int(ceil(2.0 ** (params.N * params.R) - 1e-9)))


def design_rho(params: SchemeParams) -> float:
    """I(U;S|S^d,W) of the design (bits)."""
    joint = np.einsum("s,w,swxu->swu", params.source.p_S, params.p_W, params.p_XU_given_SW)
    return conditional_binning_information(joint, params.source.h)


def conditional_binning_information(p_swu: np.ndarray, h: np.ndarray) -> float:
    """I(U;S|S^d,W) for a joint array over (s, w, u) and degradation h."""
    n_sd = int(h.max()) + 1
    lift = np.zeros((n_sd,) + p_swu.shape)
    for s in range(p_swu.shape[0]):
        lift[h[s], s] = p_swu[s]
    # axes: 0 sd, 1 s, 2 w, 3 u
    return mutual_information_pmf(lift, (3,), (1,), (0, 2))


@dataclass
class SWTables:
    """Quantized conditional types for one joint type of (s, w)."""

    sw_counts: np.ndarray
    T_U_SW: TypeTable  # axes (s, w, u)
    T_U_SdW: TypeTable  # axes (sd, w, u)
    T_X_USW: TypeTable  # axes (s, w, u, x)
    binning_info: float
    distortion: float
    respects_D1: bool
    repaired: bool = False
    dropped_cells: list = field(default_factory=list)


class QuantizedDesign:
    """
    Design p.m.f.s rounded to exact types at blocklength N.

    Per-(s, w)-joint-type tables are built on first use and cached.
    """

    def __init__(self, params: SchemeParams):
        self.params = params
        self.T_w = TypeTable(largest_remainder(params.N, params.p_W))
        self._tables: dict[tuple[int, ...], SWTables] = {}

    @property
    def N(self) -> int:
        return self.params.N

    def rho(self, tables: SWTables) -> float:
        """Array depth rho(lambda) = I*(U;S|S^d,W) + eps."""
        return tables.binning_info + self.params.eps

    def rows(self, tables: SWTables) -> int:
        """ceil(2^{N rho(lambda)})."""
        exponent = self.N * self.rho(tables)
        count = int(ceil(2.0**exponent - 1e-9))
        check_count("codebook array rows", count, MAX_ROWS)
        return count

    def tables_for(self, sw_counts: np.ndarray) -> SWTables:
        sw_counts = np.asarray(sw_counts, dtype=np.int64)
        key = tuple(sw_counts.ravel().tolist())
        if key not in self._tables:
            self._tables[key] = self._build(sw_counts)
        return self._tables[key]

    def _build(self, sw_counts: np.ndarray) -> SWTables:
        p = self.params
        h = p.source.h
        p_u = p.p_U_given_SW()  # (s, w, u)
        dropped = [
            (int(s), int(w))
            for s in range(p.n_s)
            for w in range(p.L_w)
            if sw_counts[s, w] == 0 and p.source.p_S[s] * p.p_W[w] > 0
        ]
        T_U_SW = quantize_conditional(sw_counts, p_u)

        sd_counts = np.zeros((p.n_sd, p.L_w, p.L_u), dtype=np.int64)
        for s in range(p.n_s):
            sd_counts[h[s]] += T_U_SW.counts[s]
        T_U_SdW = TypeTable(sd_counts, n_cond=2)

        with np.errstate(invalid="ignore", divide="ignore"):
            p_x_given_usw = np.where(
                p_u[:, :, None, :] > 0, p.p_XU_given_SW / np.maximum(p_u[:, :, None, :], 1e-300), 0.0
            )
        p_x_given_usw = np.transpose(p_x_given_usw, (0, 1, 3, 2))  # (s, w, u, x)
        # rows with zero design mass fall back to a uniform x
        empty = p_x_given_usw.sum(axis=-1) <= 0
        p_x_given_usw[empty] = 1.0 / p.n_x
        T_X_USW = quantize_conditional(T_U_SW.counts, p_x_given_usw)

        counts, repaired = self._repair_distortion(T_X_USW.counts)
        T_X_USW = TypeTable(counts, n_cond=3)
        distortion = self._composition_distortion(counts)
        respects = distortion <= p.D1 + 1e-12

        joint = T_U_SW.counts / max(int(sw_counts.sum()), 1)
        info = conditional_binning_information(joint, h)
        tables = SWTables(
            sw_counts=sw_counts,
            T_U_SW=T_U_SW,
            T_U_SdW=T_U_SdW,
            T_X_USW=T_X_USW,
            binning_info=info,
            distortion=distortion,
            respects_D1=respects,
            repaired=repaired,
            dropped_cells=dropped,
        )
        if dropped or repaired or not respects:
            log_event(
                "quantize_design",
                "fallback" if respects else "warning",
                N=self.N,
                sw_counts=sw_counts,
                dropped_cells=dropped,
                distortion_repair=repaired,
                distortion=distortion,
            )
        return tables

    def _composition_distortion(self, counts: np.ndarray) -> float:
        n = max(int(counts.sum()), 1)
        per_sx = counts.sum(axis=(1, 2))  # (s, x)
        return float(np.sum(per_sx * self.params.d1) / n)

    def _repair_distortion(self, counts: np.ndarray) -> tuple[np.ndarray, bool]:
        """Move single x counts toward cheaper symbols until the composition respects D1."""
        p = self.params
        counts = counts.copy()
        n = max(int(counts.sum()), 1)
        budget = p.D1 * n + 1e-9
        total = float(np.sum(counts.sum(axis=(1, 2)) * p.d1))
        repaired = False
        while total > budget:
            best = None
            for s in range(p.n_s):
                cheapest = int(np.argmin(p.d1[s]))
                gains = p.d1[s] - p.d1[s, cheapest]
                for x in np.argsort(-gains, kind="stable"):
                    if gains[x] <= 0:
                        break
                    cells = np.argwhere(counts[s, :, :, x] > 0)
                    if cells.size:
                        w, u = cells[0]
                        if best is None or gains[x] > best[0]:
                            best = (gains[x], s, int(w), int(u), int(x), cheapest)
                        break
            if best is None:
                break
            gain, s, w, u, x, cheapest = best
            counts[s, w, u, x] -= 1
            counts[s, w, u, cheapest] += 1
            total -= gain
            repaired = True
        return counts, repaired

    def design_types(self) -> dict[str, Any]:
        """Summary of the quantized types at the design's own (s, w) type."""
        p = self.params
        s_counts = largest_remainder(self.N, p.source.p_S)
        sw_counts = quantize_conditional(s_counts, np.tile(p.p_W, (p.n_s, 1))).counts
        tables = self.tables_for(sw_counts)
        return {
            "T_w": self.T_w.counts.tolist(),
            "sw_counts": sw_counts.tolist(),
            "rho": self.rho(tables),
            "rows": self.rows(tables),
            "distortion": tables.distortion,
        }


def quantize_design(params: SchemeParams) -> QuantizedDesign:
    """Round the design p.m.f.s to realizable types at blocklength params.N."""
    return QuantizedDesign(params)


def draw_timesharing(key: KeyMaterial, design: QuantizedDesign) -> np.ndarray:
    """Time-sharing sequence w, uniform over T*_w, determined by the key."""
    rng = derive_rng(key, "timesharing", design.N, design.T_w.key())
    return sample_uniform_in_type_class(design.T_w, rng=rng)


@dataclass(frozen=True)
class CodewordAddress:
    l: int
    m: int
    lam_index: int


@dataclass
class LambdaEntry:
    index: int
    lam: TypeTable  # axes (sd, w, s)
    tables: SWTables
    rho: float
    rows: int


class Codebook:
    """
    Lazy view of C(s^d, w, lambda) for one key and one (s^d, w) pair.

    Lambda ranges over the conditional types of s given (s^d, w) supported on
    h^{-1}(s^d); codewords are generated on demand and cached.
    """

    def __init__(self, key: KeyMaterial, design: QuantizedDesign, s_d, w):
        self.key = key
        self.design = design
        p = design.params
        self.s_d = as_sequence(s_d)
        self.w = as_sequence(w)
        if self.s_d.size != design.N or self.w.size != design.N:
            raise InvalidInputError("s_d and w must have blocklength N")
        self.sdw_type = joint_and_conditional_type([self.s_d, self.w], [p.n_sd, p.L_w])
        self.sdw_label = self.s_d * p.L_w + self.w
        self._context = (self.s_d.tobytes().hex(), self.w.tobytes().hex())
        self._entries: Optional[list[LambdaEntry]] = None
        self._index: dict[tuple[int, ...], int] = {}
        self._codewords: dict[tuple[int, int, int], np.ndarray] = {}

    @property
    def num_users(self) -> int:
        return num_users(self.design.params)

    def support_mask(self) -> np.ndarray:
        p = self.design.params
        mask = np.zeros((p.n_sd, p.L_w, p.n_s), dtype=bool)
        for s in range(p.n_s):
            mask[p.source.h[s], :, s] = True
        return mask

    def lambda_count(self) -> int:
        p = self.design.params
        return count_conditional_types(self.sdw_type.counts, p.n_s, self.support_mask())

    def entries(self) -> list[LambdaEntry]:
        if self._entries is None:
            cap = get_lambda_cap()
            check_count("conditional covertext types", self.lambda_count(), cap)
            self._entries = []
            for lam in enumerate_conditional_types(
                self.design.N, self.design.params.n_s, self.sdw_type, support=self.support_mask(), cap=cap
            ):
                self._add_entry(lam)
        return self._entries

    def _add_entry(self, lam: TypeTable) -> LambdaEntry:
        if self._entries is None:
            self._entries = []
        # joint (s, w) counts: sum over sd of lam[sd, w, s]
        sw_counts = lam.counts.sum(axis=0).T
        tables = self.design.tables_for(sw_counts)
        entry = LambdaEntry(
            index=len(self._entries),
            lam=lam,
            tables=tables,
            rho=self.design.rho(tables),
            rows=self.design.rows(tables),
        )
        self._index[lam.key()] = entry.index
        self._entries.append(entry)
        return entry

    def entry_for(self, lam: TypeTable) -> LambdaEntry:
        entries = self.entries()
        idx = self._index.get(lam.key())
        if idx is None:
            raise InvalidInputError("Covertext type is not realizable for this (s^d, w)")
        return entries[idx]

    def codeword(self, l: int, m: int, lam_index: int) -> np.ndarray:
        """u(l, m, lambda) in T*_{U|S^dW}(s^d, w) for the lambda at lam_index (l and m are 1-based)."""
        cache_key = (l, m, lam_index)
        u = self._codewords.get(cache_key)
        if u is not None:
            return u
        entry = self.entries()[lam_index]
        if not 1 <= l <= entry.rows:
            raise InvalidInputError(f"Row {l} outside 1..{entry.rows}")
        if not 1 <= m <= self.num_users:
            raise InvalidInputError(f"User {m} outside 1..{self.num_users}")
        rng = derive_rng(self.key, "codeword", self._context, entry.lam.key(), l, m)
        u = sample_uniform_in_type_class(entry.tables.T_U_SdW, self.sdw_label, rng)
        u.setflags(write=False)
        self._codewords[cache_key] = u
        return u


def codeword(addr: CodewordAddress, key: KeyMaterial, codebook: Codebook) -> np.ndarray:
    """Regenerate the codeword at an address (the codebook fixes s^d, w and the design)."""
    if codebook.key != key:
        raise InvalidInputError("Codebook was built for a different key")
    return codebook.codeword(addr.l, addr.m, addr.lam_index)


@dataclass
class EncodeRecord:
    m: int
    lam_index: int
    row: Optional[int]
    hits: int
    encoding_failure: bool
    u: np.ndarray
    distortion: float
    fallback: bool = False

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "m": self.m,
            "lambda_index": self.lam_index,
            "l": "FAIL" if self.row is None else self.row,
            "distortion": self.distortion,
        }


def covertext_type(s: np.ndarray, s_d: np.ndarray, w: np.ndarray, params: SchemeParams) -> TypeTable:
    """lambda = conditional type of s given (s^d, w), axes (sd, w, s)."""
    return joint_and_conditional_type([s_d, w, s], [params.n_sd, params.L_w, params.n_s], n_cond=2)


def encode_user(
    s,
    w,
    m: int,
    key: KeyMaterial,
    params: SchemeParams,
    rng: Optional[np.random.Generator] = None,
    codebook: Optional[Codebook] = None,
) -> tuple[np.ndarray, EncodeRecord]:
    """
    Embed the fingerprint of user m into covertext s.

    Step 1 scans every row of the lambda-array of column m, collects the rows
    whose codeword has conditional type T*_{U|SW}(s, w) and picks one
    uniformly; without a hit a fallback u is drawn from that class and the
    failure is recorded. Step 2 draws x uniformly from T*_{X|USW}(u, s, w).

    Args:
        s: Covertext
        w: Time-sharing sequence
        m: User index, 1-based
        key: Secret key
        params: Scheme parameters
        rng: Stream for the step-1 choice and step-2 draw; derived from the key if omitted
        codebook: Shared codebook for (s^d, w); built if omitted

    Returns:
        (x_m, record)
    """
    s = as_sequence(s)
    w = as_sequence(w)
    if s.size != params.N or w.size != params.N:
        raise InvalidInputError("s and w must have blocklength N")
    s_d = params.source.degrade(s)
    if codebook is None:
        codebook = Codebook(key, quantize_design(params), s_d, w)
    design = codebook.design
    if rng is None:
        rng = derive_rng(key, "encode", s.tobytes().hex(), m)

    w_counts = np.bincount(w, minlength=params.L_w)
    fallback = not np.array_equal(w_counts, design.T_w.counts)
    if fallback:
        log_event("encode_user", "fallback", m=m, reason="time-sharing type differs from T*_w")

    lam = covertext_type(s, s_d, w, params)
    entry = codebook.entry_for(lam)
    tables = entry.tables
    target = tables.T_U_SW.counts.ravel()
    sw_label = s * params.L_w + w

    hits = []
    for l in range(1, entry.rows + 1):
        u = codebook.codeword(l, m, entry.index)
        got = np.bincount(sw_label * params.L_u + u, minlength=target.size)
        if np.array_equal(got, target):
            hits.append(l)

    if hits:
        row: Optional[int] = hits[int(rng.integers(len(hits)))]
        u = codebook.codeword(row, m, entry.index)
        failure = False
    else:
        row = None
        u = sample_uniform_in_type_class(tables.T_U_SW, sw_label, rng)
        failure = True
        log_event("encode_user", "encoding_failure", m=m, lam_index=entry.index, rows=entry.rows)

    usw_label = sw_label * params.L_u + u
    x = sample_uniform_in_type_class(tables.T_X_USW, usw_label, rng)
    distortion = block_distortion(s, x, params.d1)
    if tables.respects_D1 and distortion > params.D1 + 1e-9:
        raise InvariantViolation(f"Marked copy distortion {distortion:.6g} exceeds D1={params.D1:.6g}")
    record = EncodeRecord(
        m=m,
        lam_index=entry.index,
        row=row,
        hits=len(hits),
        encoding_failure=failure,
        u=u,
        distortion=distortion,
        fallback=fallback,
    )
    return x, record
