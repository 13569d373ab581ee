"""Covertext source, distortion measures, collusion classes and collusion channels."""

import itertools
from dataclasses import dataclass, replace
from typing import Any, Callable, Optional

import numpy as np
from scipy.optimize import linprog, minimize

from .errors import InvalidInputError, InvariantViolation
from .type_lab import (
    TypeTable,
    as_sequence,
    joint_and_conditional_type,
    largest_remainder,
    sample_uniform_in_type_class,
)

FEAS_TOL = 1e-9
MAX_EXCHANGEABLE_SUPPORT = 16


# ---------------------------------------------------------------------------
# Source and distortion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SourceSpec:
    """i.i.d. covertext source p_S and symbolwise degradation h: S -> S^d."""

    p_S: np.ndarray
    h: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.p_S, dtype=float).ravel()
        h = np.asarray(self.h, dtype=np.int64).ravel()
        if p.size < 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise InvalidInputError("p_S must be a p.m.f.")
        if h.size != p.size:
            raise InvalidInputError("Degradation map must be defined on every covertext symbol")
        if np.any(h < 0):
            raise InvalidInputError("Degradation map must map into nonnegative symbols")
        object.__setattr__(self, "p_S", p)
        object.__setattr__(self, "h", h)

    @classmethod
    def private(cls, p_S) -> "SourceSpec":
        p = np.asarray(p_S, dtype=float)
        return cls(p, np.arange(p.size))

    @classmethod
    def public(cls, p_S) -> "SourceSpec":
        p = np.asarray(p_S, dtype=float)
        return cls(p, np.zeros(p.size, dtype=np.int64))

    @classmethod
    def semiprivate(cls, p_S, h) -> "SourceSpec":
        return cls(np.asarray(p_S, dtype=float), np.asarray(h))

    @property
    def n_s(self) -> int:
        return int(self.p_S.size)

    @property
    def n_sd(self) -> int:
        return int(self.h.max()) + 1

    @property
    def is_private(self) -> bool:
        return self.n_sd == self.n_s and len(set(self.h.tolist())) == self.n_s

    def degrade(self, s: np.ndarray) -> np.ndarray:
        return self.h[np.asarray(s, dtype=np.int64)]


def sample_covertext(spec: SourceSpec, N: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """
    Draw an i.i.d. covertext and its degraded version.

    Returns:
        (s, s_d) with s_d = h(s) symbolwise
    """
    s = rng.choice(spec.n_s, size=N, p=spec.p_S).astype(np.int64)
    return s, spec.degrade(s)


@dataclass(frozen=True)
class DistortionSpec:
    """Embedding distortion d1 on S x X and coalition distortion d2 on S x Y."""

    d1: np.ndarray
    d2: np.ndarray
    D1: float
    D2: float

    def __post_init__(self) -> None:
        d1 = np.asarray(self.d1, dtype=float)
        d2 = np.asarray(self.d2, dtype=float)
        for name, table in (("d1", d1), ("d2", d2)):
            if table.ndim != 2 or np.any(~np.isfinite(table)) or np.any(table < 0):
                raise InvalidInputError(f"{name} must be a finite nonnegative matrix")
        object.__setattr__(self, "d1", d1)
        object.__setattr__(self, "d2", d2)

    @classmethod
    def hamming(cls, n_s: int, n_x: int, n_y: int, D1: float, D2: float) -> "DistortionSpec":
        return cls(hamming_table(n_s, n_x), hamming_table(n_s, n_y), D1, D2)


def hamming_table(n_a: int, n_b: int) -> np.ndarray:
    """d(a, b) = 1[a != b] on {0..n_a-1} x {0..n_b-1}."""
    return (np.arange(n_a)[:, None] != np.arange(n_b)[None, :]).astype(float)


def block_distortion(a, b, table) -> float:
    """Average per-letter distortion (1/N) sum_i d(a_i, b_i)."""
    a = as_sequence(a)
    b = as_sequence(b)
    if a.size != b.size:
        raise InvalidInputError("Sequences must have the same length")
    if a.size == 0:
        return 0.0
    t = np.asarray(table, dtype=float)
    return float(t[a, b].mean())


# ---------------------------------------------------------------------------
# Estimators and collusion classes
# ---------------------------------------------------------------------------


def majority_estimator(K: int, n_x: int) -> np.ndarray:
    """phi(x_K) = most frequent symbol, lowest symbol on ties."""
    phi = np.zeros((n_x,) * K, dtype=np.int64)
    for xs in itertools.product(range(n_x), repeat=K):
        counts = np.bincount(np.asarray(xs, dtype=np.int64), minlength=n_x)
        phi[xs] = int(np.argmax(counts))
    return phi


def min_estimator(K: int, n_x: int) -> np.ndarray:
    """phi(x_K) = smallest observed symbol."""
    phi = np.zeros((n_x,) * K, dtype=np.int64)
    for xs in itertools.product(range(n_x), repeat=K):
        phi[xs] = min(xs)
    return phi


ESTIMATORS: dict[str, Callable[[int, int], np.ndarray]] = {
    "majority": majority_estimator,
    "min": min_estimator,
}


def colluder_permutations(K: int) -> list[tuple[int, ...]]:
    return list(itertools.permutations(range(K)))


def is_permutation_invariant(table: np.ndarray, K: int, tol: float = 0.0) -> bool:
    """True if the first K axes of table can be permuted freely."""
    t = np.asarray(table)
    rest = tuple(range(K, t.ndim))
    for perm in colluder_permutations(K):
        permuted = np.transpose(t, perm + rest)
        if tol == 0.0:
            if not np.array_equal(permuted, t):
                return False
        elif np.max(np.abs(permuted - t)) > tol:
            return False
    return True


@dataclass(frozen=True)
class CollusionClassSpec:
    """
    Feasible collusion class W_K.

    Channels are tables of shape (n_x,)*K + (n_y,). The expected-distortion
    kind constrains sum p_ref(x_K) W(y|x_K) d2(phi(x_K), y) <= D2; the
    explicit-polytope kind adds arbitrary linear rows A vec(W) <= b.
    """

    K: int
    n_x: int
    n_y: int
    phi: np.ndarray
    d2: np.ndarray
    D2: float
    reference: np.ndarray
    kind: str = "expected-distortion"
    fair_only: bool = False
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.K < 1:
            raise InvalidInputError("Coalition size must be at least 1")
        if self.kind not in ("expected-distortion", "explicit-polytope"):
            raise InvalidInputError(f"Unknown collusion class kind: {self.kind}")
        shape = (self.n_x,) * self.K
        phi = np.asarray(self.phi, dtype=np.int64)
        ref = np.asarray(self.reference, dtype=float)
        d2 = np.asarray(self.d2, dtype=float)
        if phi.shape != shape:
            raise InvalidInputError(f"Estimator table must have shape {shape}")
        if ref.shape != shape or np.any(ref < 0) or abs(ref.sum() - 1.0) > 1e-9:
            raise InvalidInputError(f"Reference p_X_K must be a p.m.f. of shape {shape}")
        if d2.ndim != 2 or d2.shape[1] != self.n_y or phi.max() >= d2.shape[0]:
            raise InvalidInputError("d2 must be indexed by estimator output and Y")
        if not is_permutation_invariant(phi, self.K):
            raise InvalidInputError("Estimator must be invariant under colluder permutations")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "reference", ref)
        object.__setattr__(self, "d2", d2)
        if self.kind == "explicit-polytope":
            if self.A is None or self.b is None:
                raise InvalidInputError("Explicit-polytope class needs A and b")
            A = np.atleast_2d(np.asarray(self.A, dtype=float))
            b = np.asarray(self.b, dtype=float).ravel()
            if A.shape != (b.size, self.n_cells):
                raise InvalidInputError(f"A must have shape (rows, {self.n_cells})")
            object.__setattr__(self, "A", A)
            object.__setattr__(self, "b", b)
        report = check_feasible(min_distortion_channel(self), self)
        if not report.feasible:
            raise InvalidInputError(f"Collusion class is empty: {report.message}")

    @property
    def channel_shape(self) -> tuple[int, ...]:
        return (self.n_x,) * self.K + (self.n_y,)

    @property
    def n_cells(self) -> int:
        return int(self.n_x**self.K * self.n_y)

    def distortion_row(self) -> np.ndarray:
        """Coefficients c with E d2 = c . vec(W)."""
        cost = self.d2[self.phi]  # (n_x,)*K + (n_y,)
        return (self.reference[..., None] * cost).ravel()

    def constraint_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """All linear inequality rows A vec(W) <= b of the class."""
        rows = [self.distortion_row()[None, :]]
        rhs = [np.array([self.D2])]
        if self.kind == "explicit-polytope":
            rows.append(self.A)
            rhs.append(self.b)
        return np.vstack(rows), np.concatenate(rhs)

    def fair(self) -> "CollusionClassSpec":
        return replace(self, fair_only=True)

    def to_json_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "K": self.K,
            "n_x": self.n_x,
            "n_y": self.n_y,
            "kind": self.kind,
            "phi": self.phi.tolist(),
            "d2": self.d2.tolist(),
            "D2": self.D2,
            "reference": self.reference.tolist(),
            "fair_only": self.fair_only,
        }
        if self.kind == "explicit-polytope":
            out["A"] = self.A.tolist()
            out["b"] = self.b.tolist()
        return out

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "CollusionClassSpec":
        return cls(
            K=int(data["K"]),
            n_x=int(data["n_x"]),
            n_y=int(data["n_y"]),
            phi=np.asarray(data["phi"]),
            d2=np.asarray(data["d2"]),
            D2=float(data["D2"]),
            reference=np.asarray(data["reference"]),
            kind=data.get("kind", "expected-distortion"),
            fair_only=bool(data.get("fair_only", False)),
            A=None if data.get("A") is None else np.asarray(data["A"]),
            b=None if data.get("b") is None else np.asarray(data["b"]),
        )


def make_class(
    K: int,
    n_x: int,
    n_y: int,
    D2: float,
    reference: Optional[np.ndarray] = None,
    estimator: str = "majority",
    d2: Optional[np.ndarray] = None,
    fair_only: bool = False,
) -> CollusionClassSpec:
    """Expected-distortion class with a named estimator and Hamming d2 by default."""
    if estimator not in ESTIMATORS:
        raise InvalidInputError(f"Unknown estimator: {estimator}")
    phi = ESTIMATORS[estimator](K, n_x)
    if d2 is None:
        d2 = hamming_table(max(n_x, n_y), n_y)
    if reference is None:
        reference = np.full((n_x,) * K, 1.0 / n_x**K)
    return CollusionClassSpec(
        K=K, n_x=n_x, n_y=n_y, phi=phi, d2=d2, D2=D2, reference=reference, fair_only=fair_only
    )


def reference_from_design(p_S: np.ndarray, p_W: np.ndarray, p_X_given_SW: np.ndarray, K: int) -> np.ndarray:
    """
    Marked-copy distribution p_X_K induced by a product-form design.

    p_X_K(x_K) = sum_{s,w} p_S(s) p_W(w) prod_k p_X|SW(x_k|s,w)
    """
    p_S = np.asarray(p_S, dtype=float)
    p_W = np.asarray(p_W, dtype=float)
    px = np.asarray(p_X_given_SW, dtype=float)  # (n_s, n_w, n_x)
    n_x = px.shape[-1]
    out = np.zeros((n_x,) * K)
    for s in range(px.shape[0]):
        for w in range(px.shape[1]):
            weight = p_S[s] * p_W[w]
            if weight == 0:
                continue
            prod = px[s, w]
            for _ in range(K - 1):
                prod = np.multiply.outer(prod, px[s, w])
            out += weight * prod
    return out / out.sum()


# ---------------------------------------------------------------------------
# Feasibility
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    distortion: float
    D2: float
    max_violation: float
    fair: bool
    stochastic: bool
    message: str = ""


def _as_table(channel) -> np.ndarray:
    if isinstance(channel, CollusionChannelSpec):
        if channel.mode != "memoryless":
            raise InvalidInputError("Feasibility is checked on memoryless tables")
        return channel.table
    return np.asarray(channel, dtype=float)


def check_feasible(channel, cls: CollusionClassSpec) -> FeasibilityReport:
    """
    Check a memoryless channel against a collusion class.

    Infeasibility is reported, never raised.
    """
    W = _as_table(channel)
    if W.shape != cls.channel_shape:
        raise InvalidInputError(f"Channel shape {W.shape} does not match class {cls.channel_shape}")
    stochastic = bool(np.all(W >= -FEAS_TOL) and np.allclose(W.sum(axis=-1), 1.0, atol=FEAS_TOL))
    A, b = cls.constraint_matrix()
    lhs = A @ W.ravel()
    violation = float(np.max(lhs - b))
    distortion = float(lhs[0])
    fair = is_permutation_invariant(W, cls.K, tol=FEAS_TOL)
    messages = []
    if not stochastic:
        messages.append("channel rows are not probability vectors")
    if violation > FEAS_TOL:
        messages.append(f"expected distortion {distortion:.6g} exceeds D2={cls.D2:.6g}" if lhs[0] > b[0] + FEAS_TOL else "polytope row violated")
    if cls.fair_only and not fair:
        messages.append("channel is not invariant under colluder permutations")
    feasible = stochastic and violation <= FEAS_TOL and (fair or not cls.fair_only)
    return FeasibilityReport(
        feasible=feasible,
        distortion=distortion,
        D2=cls.D2,
        max_violation=max(violation, 0.0),
        fair=fair,
        stochastic=stochastic,
        message="; ".join(messages),
    )


def symmetrize_fair(channel, K: Optional[int] = None):
    """
    Average a channel table over all K! colluder permutations.

    Accepts a table or a memoryless CollusionChannelSpec and returns the same kind.
    """
    if isinstance(channel, CollusionChannelSpec):
        return replace(channel, table=symmetrize_fair(channel.table, channel.K), name=f"fair({channel.name})")
    W = np.asarray(channel, dtype=float)
    K = W.ndim - 1 if K is None else K
    rest = tuple(range(K, W.ndim))
    acc = np.zeros_like(W)
    perms = colluder_permutations(K)
    for perm in perms:
        acc += np.transpose(W, perm + rest)
    return acc / len(perms)


def min_distortion_channel(cls: CollusionClassSpec) -> np.ndarray:
    """
    Fair channel of smallest achievable constraint values.

    For expected-distortion classes: deterministic y = argmin_y d2(phi(x_K), y)
    (lowest index on ties). For explicit polytopes an LP over fair channels
    minimizing the distortion row subject to all rows.
    """
    cost = cls.d2[cls.phi]
    W = np.zeros(cls.channel_shape)
    best = np.argmin(cost, axis=-1)
    np.put_along_axis(W, best[..., None], 1.0, axis=-1)
    if cls.kind == "expected-distortion":
        return W
    A, b = cls.constraint_matrix()
    n_rows = cls.n_x**cls.K
    A_eq = np.kron(np.eye(n_rows), np.ones((1, cls.n_y)))
    b_eq = np.ones(n_rows)
    sym = fairness_equalities(cls.K, cls.n_x, cls.n_y)
    if sym.size:
        A_eq = np.vstack([A_eq, sym])
        b_eq = np.concatenate([b_eq, np.zeros(sym.shape[0])])
    res = linprog(
        c=cls.distortion_row(), A_ub=A[1:], b_ub=b[1:], A_eq=A_eq, b_eq=b_eq, bounds=(0, 1), method="highs"
    )
    if not res.success:
        return W
    return np.clip(res.x, 0, None).reshape(cls.channel_shape)


def fairness_equalities(K: int, n_x: int, n_y: int) -> np.ndarray:
    shape = (n_x,) * K + (n_y,)
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    rows = []
    rest = (K,)
    seen = set()
    for perm in colluder_permutations(K)[1:]:
        permuted = np.transpose(idx, perm + rest)
        for a, c in zip(idx.ravel(), permuted.ravel()):
            if a != c and (c, a) not in seen:
                seen.add((a, c))
                row = np.zeros(idx.size)
                row[a], row[c] = 1.0, -1.0
                rows.append(row)
    return np.array(rows) if rows else np.zeros((0, idx.size))


def orbits(K: int, n_x: int) -> list[list[tuple[int, ...]]]:
    """Colluder-permutation orbits of X^K, ordered by their sorted representative."""
    groups: dict[tuple[int, ...], list[tuple[int, ...]]] = {}
    for xs in itertools.product(range(n_x), repeat=K):
        groups.setdefault(tuple(sorted(xs)), []).append(xs)
    return [groups[k] for k in sorted(groups)]


def fair_channel_from_orbit_rows(K: int, n_x: int, rows: np.ndarray) -> np.ndarray:
    """Build a fair table from one output distribution per orbit."""
    rows = np.asarray(rows, dtype=float)
    orb = orbits(K, n_x)
    W = np.zeros((n_x,) * K + (rows.shape[1],))
    for i, members in enumerate(orb):
        for xs in members:
            W[xs] = rows[i]
    return W


# ---------------------------------------------------------------------------
# Executable channels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CollusionChannelSpec:
    """
    Executable collusion channel.

    memoryless: y_i ~ table[x_{1,i}, ..., x_{K,i}, :] independently.
    exchangeable: ``assignment`` holds up to 16 (conditional p.m.f., probability)
    pairs; one is drawn, turned into a conditional type of y given the actual
    x_K sequences, and y is drawn uniformly from that conditional type class.
    """

    K: int
    n_x: int
    n_y: int
    mode: str = "memoryless"
    table: Optional[np.ndarray] = None
    assignment: tuple = ()
    rounding: str = "strict"
    name: str = ""

    def __post_init__(self) -> None:
        shape = (self.n_x,) * self.K + (self.n_y,)
        if self.mode == "memoryless":
            if self.table is None:
                raise InvalidInputError("Memoryless channel needs a table")
            W = np.asarray(self.table, dtype=float)
            if W.shape != shape:
                raise InvalidInputError(f"Channel table must have shape {shape}")
            if np.any(W < -FEAS_TOL) or not np.allclose(W.sum(axis=-1), 1.0, atol=1e-9):
                raise InvalidInputError("Channel table rows must be probability vectors")
            object.__setattr__(self, "table", np.clip(W, 0.0, None))
        elif self.mode == "exchangeable":
            if not 1 <= len(self.assignment) <= MAX_EXCHANGEABLE_SUPPORT:
                raise InvalidInputError(
                    f"Exchangeable assignment needs 1..{MAX_EXCHANGEABLE_SUPPORT} entries"
                )
            if self.rounding not in ("strict", "largest-remainder"):
                raise InvalidInputError(f"Unknown rounding mode: {self.rounding}")
            entries = []
            for cond, prob in self.assignment:
                c = np.asarray(cond, dtype=float)
                if c.shape != shape or not np.allclose(c.sum(axis=-1), 1.0, atol=1e-9):
                    raise InvalidInputError("Assignment entries must be conditional p.m.f.s of channel shape")
                entries.append((c, float(prob)))
            probs = np.array([p for _, p in entries])
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
                raise InvalidInputError("Assignment probabilities must sum to 1")
            object.__setattr__(self, "assignment", tuple(entries))
        else:
            raise InvalidInputError(f"Unknown channel mode: {self.mode}")

    def expected_table(self) -> np.ndarray:
        """Memoryless table, or the assignment-weighted average for exchangeable channels."""
        if self.mode == "memoryless":
            return self.table
        return sum(p * c for c, p in self.assignment)

    def to_json_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"K": self.K, "n_x": self.n_x, "n_y": self.n_y, "mode": self.mode, "name": self.name}
        if self.mode == "memoryless":
            out["table"] = self.table.tolist()
        else:
            out["assignment"] = [{"conditional": c.tolist(), "prob": p} for c, p in self.assignment]
            out["rounding"] = self.rounding
        return out

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "CollusionChannelSpec":
        mode = data.get("mode", "memoryless")
        common = dict(K=int(data["K"]), n_x=int(data["n_x"]), n_y=int(data["n_y"]), name=data.get("name", ""))
        if mode == "memoryless":
            return cls(mode=mode, table=np.asarray(data["table"], dtype=float), **common)
        entries = tuple((np.asarray(e["conditional"], dtype=float), float(e["prob"])) for e in data["assignment"])
        return cls(mode=mode, assignment=entries, rounding=data.get("rounding", "strict"), **common)


def exchangeable_from_memoryless(channel: CollusionChannelSpec, rounding: str = "largest-remainder") -> CollusionChannelSpec:
    """Point assignment on the conditional type class of a memoryless table."""
    return CollusionChannelSpec(
        K=channel.K,
        n_x=channel.n_x,
        n_y=channel.n_y,
        mode="exchangeable",
        assignment=((channel.table, 1.0),),
        rounding=rounding,
        name=f"exch({channel.name})",
    )


def realize_conditional_type(cond: np.ndarray, x_type: TypeTable, rounding: str) -> TypeTable:
    """
    Conditional type of y given x_K realizing a conditional p.m.f.

    Args:
        cond: p(y|x_K), shape (n_x,)*K + (n_y,)
        x_type: Joint type of the colluders' copies
        rounding: "strict" requires exact realizability; "largest-remainder" rounds

    Returns:
        TypeTable over (x_1..x_K, y) with K conditioning axes
    """
    cc = x_type.counts
    flat_cond = cond.reshape(cc.size, -1)
    rows = []
    for c, n_c in enumerate(cc.ravel()):
        ideal = n_c * flat_cond[c]
        if rounding == "strict":
            rounded = np.round(ideal)
            if n_c and np.max(np.abs(ideal - rounded)) > 1e-9:
                raise InvalidInputError(
                    f"Assigned conditional type is not realizable for x_K cell {c} with count {int(n_c)}"
                )
            rows.append(rounded.astype(np.int64))
        else:
            rows.append(largest_remainder(int(n_c), flat_cond[c]))
    counts = np.array(rows, dtype=np.int64).reshape(cc.shape + (flat_cond.shape[1],))
    return TypeTable(counts, n_cond=cc.ndim)


def apply_collusion(x_K, spec: CollusionChannelSpec, rng: np.random.Generator) -> np.ndarray:
    """
    Forge the pirated copy from the colluders' marked copies.

    Args:
        x_K: K equal-length sequences
        spec: Collusion channel
        rng: numpy Generator

    Returns:
        Pirated copy y
    """
    xs = [as_sequence(x) for x in x_K]
    if len(xs) != spec.K:
        raise InvalidInputError(f"Channel expects {spec.K} copies, got {len(xs)}")
    n = xs[0].size
    if any(x.size != n for x in xs):
        raise InvalidInputError("Marked copies must have the same length")
    if any(x.size and (x.min() < 0 or x.max() >= spec.n_x) for x in xs):
        raise InvalidInputError("Marked copy symbol out of alphabet")
    label = np.ravel_multi_index(tuple(xs), (spec.n_x,) * spec.K) if n else np.zeros(0, dtype=np.int64)

    if spec.mode == "memoryless":
        rows = spec.table.reshape(-1, spec.n_y)[label]
        cdf = np.cumsum(rows, axis=1)
        u = rng.random(n)
        y = (u[:, None] >= cdf).sum(axis=1)
        return np.minimum(y, spec.n_y - 1).astype(np.int64)

    probs = np.array([p for _, p in spec.assignment])
    pick = int(rng.choice(len(probs), p=probs / probs.sum()))
    x_type = joint_and_conditional_type(xs, [spec.n_x] * spec.K)
    target = realize_conditional_type(spec.assignment[pick][0], x_type, spec.rounding)
    y = sample_uniform_in_type_class(target, label, rng)
    realized = joint_and_conditional_type(xs + [y], [spec.n_x] * spec.K + [spec.n_y])
    if not np.array_equal(realized.counts, target.counts):
        raise InvariantViolation("Exchangeable channel output left the assigned conditional type class")
    return y


# ---------------------------------------------------------------------------
# Named attacks and the adversarial family
# ---------------------------------------------------------------------------


def interleaving_attack(K: int, n_x: int, n_y: int) -> CollusionChannelSpec:
    """Each symbol copied from a uniformly chosen colluder."""
    if n_y < n_x:
        raise InvalidInputError("Interleaving needs |Y| >= |X|")
    W = np.zeros((n_x,) * K + (n_y,))
    for xs in itertools.product(range(n_x), repeat=K):
        for x in xs:
            W[xs + (x,)] += 1.0 / K
    return CollusionChannelSpec(K=K, n_x=n_x, n_y=n_y, table=W, name="interleaving")


def majority_attack(K: int, n_x: int, n_y: int, alpha: float = 0.0) -> CollusionChannelSpec:
    """Majority vote (lowest symbol on ties), replaced by a uniform other symbol with probability alpha."""
    if n_y < n_x:
        raise InvalidInputError("Majority attack needs |Y| >= |X|")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInputError("Flip probability must lie in [0, 1]")
    phi = majority_estimator(K, n_x)
    W = np.zeros((n_x,) * K + (n_y,))
    for xs in itertools.product(range(n_x), repeat=K):
        m = phi[xs]
        W[xs] = alpha / (n_y - 1) if n_y > 1 else 0.0
        W[xs + (m,)] = 1.0 - alpha if n_y > 1 else 1.0
    return CollusionChannelSpec(K=K, n_x=n_x, n_y=n_y, table=W, name=f"majority(alpha={alpha:g})")


def uniform_observed_attack(K: int, n_x: int, n_y: int) -> CollusionChannelSpec:
    """Uniform over the distinct symbols observed among the colluders."""
    if n_y < n_x:
        raise InvalidInputError("Uniform-observed attack needs |Y| >= |X|")
    W = np.zeros((n_x,) * K + (n_y,))
    for xs in itertools.product(range(n_x), repeat=K):
        seen = sorted(set(xs))
        for x in seen:
            W[xs + (x,)] = 1.0 / len(seen)
    return CollusionChannelSpec(K=K, n_x=n_x, n_y=n_y, table=W, name="uniform-observed")


def copy_attack(K: int, n_x: int, n_y: int, colluder: int = 0) -> CollusionChannelSpec:
    """Output the copy of one fixed colluder (not fair for K > 1)."""
    if n_y < n_x:
        raise InvalidInputError("Copy attack needs |Y| >= |X|")
    W = np.zeros((n_x,) * K + (n_y,))
    for xs in itertools.product(range(n_x), repeat=K):
        W[xs + (xs[colluder],)] = 1.0
    return CollusionChannelSpec(K=K, n_x=n_x, n_y=n_y, table=W, name=f"copy({colluder + 1})")


NAMED_ATTACKS: dict[str, Callable[..., CollusionChannelSpec]] = {
    "interleaving": interleaving_attack,
    "majority": majority_attack,
    "uniform-observed": uniform_observed_attack,
    "copy": copy_attack,
}


def named_attack(name: str, cls: CollusionClassSpec, **kwargs: Any) -> tuple[CollusionChannelSpec, FeasibilityReport]:
    """Build a named attack for a class together with its feasibility witness."""
    if name not in NAMED_ATTACKS:
        raise InvalidInputError(f"Unknown attack: {name}")
    channel = NAMED_ATTACKS[name](cls.K, cls.n_x, cls.n_y, **kwargs)
    return channel, check_feasible(channel, cls)


def pull_to_boundary(table: np.ndarray, cls: CollusionClassSpec) -> Optional[np.ndarray]:
    """
    Mix an infeasible table toward the min-distortion channel until it is feasible.

    Returns the feasible mixture with the largest weight on ``table``, or None.
    """
    base = min_distortion_channel(cls)
    A, b = cls.constraint_matrix()
    lhs_t = A @ table.ravel()
    lhs_0 = A @ base.ravel()
    t = 1.0
    for lt, l0, bound in zip(lhs_t, lhs_0, b):
        if lt > bound + FEAS_TOL:
            if lt - l0 <= 0:
                return None
            t = min(t, (bound - l0) / (lt - l0))
    if t < 0:
        return None
    mixed = t * table + (1.0 - t) * base
    return mixed if check_feasible(mixed, cls).feasible else None


def adversarial_family(
    cls: CollusionClassSpec,
    rng: np.random.Generator,
    n_random: int = 64,
    max_corners: int = 256,
) -> list[CollusionChannelSpec]:
    """
    Heuristic search family over the feasible class.

    Fair deterministic corners (pulled to the boundary when infeasible),
    ``n_random`` random feasible channels (fair first, general ones as well when
    the class is not fair-only) and the named attacks.
    """
    family: list[CollusionChannelSpec] = []
    seen: set[bytes] = set()

    def add(table: np.ndarray, name: str) -> None:
        feasible = table if check_feasible(table, cls).feasible else pull_to_boundary(table, cls)
        if feasible is None:
            return
        key = np.round(feasible, 12).tobytes()
        if key in seen:
            return
        seen.add(key)
        family.append(CollusionChannelSpec(K=cls.K, n_x=cls.n_x, n_y=cls.n_y, table=feasible, name=name))

    orb = orbits(cls.K, cls.n_x)
    n_corners = cls.n_y ** len(orb)
    if n_corners <= max_corners:
        corner_iter = itertools.product(range(cls.n_y), repeat=len(orb))
    else:
        corner_iter = (tuple(rng.integers(0, cls.n_y, size=len(orb))) for _ in range(max_corners))
    for choice in corner_iter:
        rows = np.eye(cls.n_y)[list(choice)]
        add(fair_channel_from_orbit_rows(cls.K, cls.n_x, rows), f"corner{''.join(map(str, choice))}")

    for i in range(n_random):
        if cls.fair_only or i % 2 == 0:
            rows = rng.dirichlet(np.ones(cls.n_y), size=len(orb))
            add(fair_channel_from_orbit_rows(cls.K, cls.n_x, rows), f"random-fair{i}")
        else:
            table = rng.dirichlet(np.ones(cls.n_y), size=cls.n_x**cls.K).reshape(cls.channel_shape)
            add(table, f"random{i}")

    for name in ("interleaving", "majority", "uniform-observed"):
        try:
            channel, _ = named_attack(name, cls)
        except InvalidInputError:
            continue
        add(channel.table, channel.name)
    return family


# ---------------------------------------------------------------------------
# Worst-case search over the class
# ---------------------------------------------------------------------------


def class_parametrization(cls: CollusionClassSpec, fair: Optional[bool] = None) -> np.ndarray:
    """
    Linear map E with vec(W) = E @ vec(rows).

    Fair classes are parametrized by one output distribution per colluder
    orbit, general ones by one row per x_K.
    """
    fair = cls.fair_only if fair is None else fair
    n_rows = cls.n_x**cls.K
    if not fair:
        return np.eye(n_rows * cls.n_y)
    orb = orbits(cls.K, cls.n_x)
    E = np.zeros((n_rows * cls.n_y, len(orb) * cls.n_y))
    for i, members in enumerate(orb):
        for xs in members:
            flat = int(np.ravel_multi_index(xs, (cls.n_x,) * cls.K))
            for y in range(cls.n_y):
                E[flat * cls.n_y + y, i * cls.n_y + y] = 1.0
    return E


def _rows_from_table(table: np.ndarray, cls: CollusionClassSpec, fair: bool) -> np.ndarray:
    if not fair:
        return table.ravel()
    sym = symmetrize_fair(table, cls.K)
    return np.concatenate([sym[members[0]] for members in orbits(cls.K, cls.n_x)])


def minimize_over_class(
    fun: Callable[[np.ndarray], float],
    cls: CollusionClassSpec,
    starts: Optional[list[np.ndarray]] = None,
    fair: Optional[bool] = None,
    maxiter: int = 200,
) -> tuple[np.ndarray, float, bool]:
    """
    Local minimization of ``fun(W)`` over the (fair) class polytope.

    Runs SLSQP from every start and keeps the best feasible point; starts are
    themselves feasible, so the result is never worse than the best start.

    Returns:
        (channel table, value, converged) where converged is True when at least
        one local solve reported success
    """
    fair = cls.fair_only if fair is None else fair
    E = class_parametrization(cls, fair)
    n_par = E.shape[1] // cls.n_y
    A, b = cls.constraint_matrix()
    AE = A @ E
    A_eq = np.kron(np.eye(n_par), np.ones((1, cls.n_y)))

    def table(r: np.ndarray) -> np.ndarray:
        rows = np.clip(r, 0.0, None).reshape(n_par, cls.n_y)
        rows = rows / np.maximum(rows.sum(axis=1, keepdims=True), 1e-300)
        return (E @ rows.ravel()).reshape(cls.channel_shape)

    if starts is None:
        starts = [min_distortion_channel(cls)]
    best_W: Optional[np.ndarray] = None
    best_val = float("inf")
    converged = False
    constraints = [
        {"type": "eq", "fun": lambda r: A_eq @ r - 1.0, "jac": lambda r: A_eq},
        {"type": "ineq", "fun": lambda r: b - AE @ r, "jac": lambda r: -AE},
    ]
    for start in starts:
        r0 = _rows_from_table(np.asarray(start, dtype=float), cls, fair)
        candidates = [table(r0)]
        res = minimize(
            lambda r: fun(table(r)),
            r0,
            method="SLSQP",
            bounds=[(0.0, 1.0)] * r0.size,
            constraints=constraints,
            options={"maxiter": maxiter, "ftol": 1e-12},
        )
        converged = converged or bool(res.success)
        candidates.append(table(res.x))
        for W in candidates:
            if not check_feasible(W, cls).feasible:
                continue
            val = float(fun(W))
            if val < best_val:
                best_val, best_W = val, W
    if best_W is None:
        best_W = min_distortion_channel(cls)
        best_val = float(fun(best_W))
    return best_W, best_val, converged


def default_class_starts(cls: CollusionClassSpec) -> list[np.ndarray]:
    """Feasible starting channels: min-distortion, pulled uniform and named attacks."""
    starts = [min_distortion_channel(cls)]
    uniform = pull_to_boundary(np.full(cls.channel_shape, 1.0 / cls.n_y), cls)
    if uniform is not None:
        starts.append(uniform)
    for name in ("interleaving", "majority"):
        channel, report = named_attack(name, cls)
        if report.feasible:
            starts.append(channel.table)
        else:
            pulled = pull_to_boundary(channel.table, cls)
            if pulled is not None:
                starts.append(pulled)
    return starts
