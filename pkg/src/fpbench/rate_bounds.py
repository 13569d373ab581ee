"""
Achievable fingerprinting rates and the capacity upper bound.

Every rate is a max-min: an outer maximization over design p.m.f.s and an
inner minimization over the collusion class. The inner problems are convex in
p_{Y|X_K} and solved on the class polytope; the outer ones are multi-start
SLSQP with the inner minimizer held fixed for the gradient.

    thr        max min_{W fair} I(U;Y|S^d W) - I(U;S|S^d W)
    joint-one  max min_{W fair} (1/K) I(U_K;Y|S^d W) - I(U;S|S^d W)
    joint-all  max min_W min_A (1/|A|) I(U_A; Y U_rest|S^d W) - I(U;S|S^d W)
    upper      max min_W min_A (1/|A|) [I(U_A; Y S^d|U_rest) - I(U_A; S|U_rest)]

The upper bound maximizes over coupled U_K given (X_K, S, W).
"""

import itertools
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional

import numpy as np
from scipy.optimize import minimize

from .attack_model import CollusionClassSpec, SourceSpec, colluder_permutations, default_class_starts, minimize_over_class
from .codec import conditional_binning_information
from .errors import InvalidInputError
from .logging import log_event
from .type_lab import mutual_information_pmf

RATE_KINDS = ("thr", "joint-one", "joint-all", "upper")
MAX_ALPHABET = 3
MAX_UPPER_K = 3
IMIN_TOL = 1e-9
SYMMETRY_TOL = 1e-12
MONOTONE_TOL = 1e-4
INCUMBENT_TOL = 1e-6


@dataclass(frozen=True)
class RateProblem:
    """Source, embedding constraint, collusion class and auxiliary alphabet sizes."""

    source: SourceSpec
    d1: np.ndarray
    D1: float
    cls: CollusionClassSpec
    L_u: int = 2
    L_w: int = 1
    restarts: int = 8
    seed: int = 0
    force_u_equals_x: bool = False

    def __post_init__(self) -> None:
        d1 = np.asarray(self.d1, dtype=float)
        if d1.shape != (self.source.n_s, self.cls.n_x):
            raise InvalidInputError("d1 must have shape (|S|, |X|)")
        if max(self.source.n_s, self.cls.n_x, self.cls.n_y) > MAX_ALPHABET:
            raise InvalidInputError(f"Rate computations support alphabets of size <= {MAX_ALPHABET}")
        if not 1 <= self.L_u <= 3 or not 1 <= self.L_w <= 2:
            raise InvalidInputError("Need 1 <= L_u <= 3 and 1 <= L_w <= 2")
        if self.force_u_equals_x and self.L_u != self.cls.n_x:
            raise InvalidInputError("U = X needs L_u = |X|")
        if self.restarts < 1:
            raise InvalidInputError("Need at least one restart")
        if float(np.min(d1, axis=1) @ self.source.p_S) > self.D1 + 1e-12:
            raise InvalidInputError("No design meets the embedding distortion D1")
        object.__setattr__(self, "d1", d1)

    @property
    def K(self) -> int:
        return self.cls.K

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "p_S": self.source.p_S.tolist(),
            "h": self.source.h.tolist(),
            "d1": self.d1.tolist(),
            "D1": self.D1,
            "class": self.cls.to_json_dict(),
            "L_u": self.L_u,
            "L_w": self.L_w,
            "restarts": self.restarts,
            "seed": self.seed,
            "force_u_equals_x": self.force_u_equals_x,
        }


@dataclass
class RateResult:
    kind: str
    value: float
    p_W: np.ndarray
    design: dict[str, np.ndarray]
    channel: np.ndarray
    subset: tuple = ()
    saddle_gap: float = 0.0
    restarts: int = 0
    converged: bool = True
    incumbents: int = 1
    L_u: int = 1
    L_w: int = 1
    label: str = ""
    flags: list = field(default_factory=list)
    imin: Optional["IminReport"] = None
    theta: Optional[np.ndarray] = field(default=None, repr=False)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "value": self.value,
            "p_W": self.p_W.tolist(),
            "design": {k: v.tolist() for k, v in self.design.items()},
            "channel": self.channel.tolist(),
            "subset": list(self.subset),
            "saddle_gap": self.saddle_gap,
            "restarts": self.restarts,
            "converged": self.converged,
            "incumbents": self.incumbents,
            "L_u": self.L_u,
            "L_w": self.L_w,
            "label": self.label,
            "flags": self.flags,
            "imin": None if self.imin is None else self.imin.to_json_dict(),
        }


# ---------------------------------------------------------------------------
# Subset-minimum identity
# ---------------------------------------------------------------------------


@dataclass
class IminReport:
    lhs: float
    rhs: float
    argmin: tuple
    terms: dict
    passed: bool

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "gap": self.gap,
            "argmin": list(self.argmin),
            "terms": {",".join(map(str, k)): v for k, v in self.terms.items()},
            "passed": self.passed,
        }


def check_Imin_identity(pmf: np.ndarray, K: int, tol: float = IMIN_TOL) -> IminReport:
    """
    Compare min_A (1/|A|) I(U_A; Y U_rest | Z) with (1/K) I(U_K; Y | Z).

    ``pmf`` has axes (z, u_1, ..., u_K, y) where z indexes (s^d, w). The p.m.f.
    must be invariant under permutations of the u axes.
    """
    p = np.asarray(pmf, dtype=float)
    if p.ndim != K + 2:
        raise InvalidInputError(f"Expected axes (z, u_1..u_{K}, y)")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError("Argument must be a p.m.f.")
    for perm in colluder_permutations(K)[1:]:
        axes = (0,) + tuple(1 + i for i in perm) + (K + 1,)
        if np.max(np.abs(np.transpose(p, axes) - p)) > SYMMETRY_TOL:
            raise InvalidInputError("P.m.f. is not invariant under colluder permutations")
    u_axes = tuple(range(1, K + 1))
    y = K + 1
    terms: dict[tuple, float] = {}
    for a in range(1, K + 1):
        for A in itertools.combinations(range(K), a):
            rest = tuple(1 + k for k in range(K) if k not in A)
            A_axes = tuple(1 + k for k in A)
            terms[A] = mutual_information_pmf(p, A_axes, (y,) + rest, (0,)) / a
    rhs = mutual_information_pmf(p, u_axes, (y,), (0,)) / K
    argmin = min(terms, key=lambda k: (terms[k], -len(k)))
    lhs = terms[argmin]
    return IminReport(lhs=lhs, rhs=rhs, argmin=argmin, terms=terms, passed=abs(lhs - rhs) <= tol)


# ---------------------------------------------------------------------------
# Design space
# ---------------------------------------------------------------------------


class _DesignSpace:
    """
    Flattened design parameters.

    Blocks: p_W, then either p_{XU|SW} rows (product designs), p_{X|SW} rows
    with U = X forced, or p_{X|SW} and coupled p_{U_K|X_K S W} rows (upper).
    """

    def __init__(self, problem: RateProblem, kind: str):
        self.problem = problem
        self.kind = kind
        self.K = problem.K
        self.n_s = problem.source.n_s
        self.n_x = problem.cls.n_x
        self.L_u = problem.L_u
        self.L_w = problem.L_w
        self.p_S = problem.source.p_S
        self.blocks: list[tuple[str, tuple[int, ...]]] = [("p_W", (1, self.L_w))]
        if kind == "upper":
            self.blocks.append(("p_X", (self.n_s * self.L_w, self.n_x)))
            self.blocks.append(("p_U", (self.n_s * self.L_w * self.n_x**self.K, self.L_u**self.K)))
        elif problem.force_u_equals_x:
            self.blocks.append(("p_X", (self.n_s * self.L_w, self.n_x)))
        else:
            self.blocks.append(("p_XU", (self.n_s * self.L_w, self.n_x * self.L_u)))
        self.offsets = {}
        offset = 0
        for name, (rows, width) in self.blocks:
            self.offsets[name] = offset
            offset += rows * width
        self.size = offset
        groups = []
        for name, (rows, width) in self.blocks:
            start = self.offsets[name]
            groups += [np.arange(start + r * width, start + (r + 1) * width) for r in range(rows)]
        self.groups = groups
        self.A_eq = np.zeros((len(groups), self.size))
        for i, g in enumerate(groups):
            self.A_eq[i, g] = 1.0

    def block(self, theta: np.ndarray, name: str) -> np.ndarray:
        rows, width = dict(self.blocks)[name]
        start = self.offsets[name]
        arr = np.clip(theta[start : start + rows * width], 0.0, None).reshape(rows, width)
        return arr / np.maximum(arr.sum(axis=1, keepdims=True), 1e-300)

    def p_W(self, theta: np.ndarray) -> np.ndarray:
        return self.block(theta, "p_W")[0]

    def p_X_given_SW(self, theta: np.ndarray) -> np.ndarray:
        if "p_XU" in self.offsets:
            return self.p_XU_given_SW(theta).sum(axis=3)
        return self.block(theta, "p_X").reshape(self.n_s, self.L_w, self.n_x)

    def p_XU_given_SW(self, theta: np.ndarray) -> np.ndarray:
        if "p_XU" in self.offsets:
            return self.block(theta, "p_XU").reshape(self.n_s, self.L_w, self.n_x, self.L_u)
        px = self.p_X_given_SW(theta)
        return px[..., None] * np.eye(self.n_x)[None, None]

    def p_U_given_XSW(self, theta: np.ndarray) -> np.ndarray:
        return self.block(theta, "p_U").reshape(self.n_s, self.L_w, self.n_x**self.K, self.L_u**self.K)

    def distortion(self, theta: np.ndarray) -> float:
        p_sx = np.einsum("s,w,swx->sx", self.p_S, self.p_W(theta), self.p_X_given_SW(theta))
        return float(np.sum(p_sx * self.problem.d1))

    def constraints(self) -> list[dict[str, Any]]:
        return [
            {"type": "eq", "fun": lambda t: self.A_eq @ t - 1.0, "jac": lambda t: self.A_eq},
            {"type": "ineq", "fun": lambda t: self.problem.D1 - self.distortion(t)},
        ]

    def _set(self, theta: np.ndarray, name: str, values: np.ndarray) -> None:
        start = self.offsets[name]
        theta[start : start + values.size] = values.ravel()

    def base(self, p_W: Optional[np.ndarray] = None) -> np.ndarray:
        """Minimum-distortion design: x = argmin d1(s, .), U uniform."""
        theta = np.zeros(self.size)
        self._set(theta, "p_W", np.full(self.L_w, 1.0 / self.L_w) if p_W is None else p_W)
        best_x = np.argmin(self.problem.d1, axis=1)
        px = np.zeros((self.n_s, self.L_w, self.n_x))
        px[np.arange(self.n_s), :, best_x] = 1.0
        if "p_XU" in self.offsets:
            self._set(theta, "p_XU", px[..., None] * np.full(self.L_u, 1.0 / self.L_u))
        else:
            self._set(theta, "p_X", px)
        if "p_U" in self.offsets:
            rows, width = dict(self.blocks)["p_U"]
            self._set(theta, "p_U", np.full((rows, width), 1.0 / width))
        return theta

    def spread(self) -> np.ndarray:
        """U tied to X (u = x mod L_u), X pulled from the base toward uniform as far as D1 allows."""
        theta = np.zeros(self.size)
        self._set(theta, "p_W", np.full(self.L_w, 1.0 / self.L_w))
        px = np.full((self.n_s, self.L_w, self.n_x), 1.0 / self.n_x)
        tie = np.zeros((self.n_x, self.L_u))
        tie[np.arange(self.n_x), np.arange(self.n_x) % self.L_u] = 1.0
        if "p_XU" in self.offsets:
            self._set(theta, "p_XU", px[..., None] * tie[None, None])
        else:
            self._set(theta, "p_X", px)
        if "p_U" in self.offsets:
            rows, width = dict(self.blocks)["p_U"]
            xs = np.unravel_index(np.arange(self.n_x**self.K), (self.n_x,) * self.K)
            us = np.ravel_multi_index(tuple(x % self.L_u for x in xs), (self.L_u,) * self.K)
            coupled = np.zeros((self.n_x**self.K, width))
            coupled[np.arange(self.n_x**self.K), us] = 1.0
            self._set(theta, "p_U", np.tile(coupled, (rows // coupled.shape[0], 1)))
        base = self.base()
        d_s, d_b = self.distortion(theta), self.distortion(base)
        if d_s <= self.problem.D1:
            return theta
        t = max(0.0, (self.problem.D1 - d_b) / (d_s - d_b))
        return t * theta + (1.0 - t) * base

    def random(self, rng: np.random.Generator) -> np.ndarray:
        """Random design pulled toward the base design until D1 holds."""
        theta = np.zeros(self.size)
        for name, (rows, width) in self.blocks:
            self._set(theta, name, rng.dirichlet(np.ones(width), size=rows))
        base = self.base(self.p_W(theta))
        d_r, d_b = self.distortion(theta), self.distortion(base)
        if d_r <= self.problem.D1:
            return theta
        t = (self.problem.D1 - d_b) / (d_r - d_b)
        return t * theta + (1.0 - t) * base

    def embed(self, other: "_DesignSpace", theta: np.ndarray) -> np.ndarray:
        """Map a design of a smaller space into this one (new symbols get no mass)."""
        out = self.base()
        p_W = np.zeros(self.L_w)
        p_W[: other.L_w] = other.p_W(theta)
        self._set(out, "p_W", p_W)
        if "p_XU" in self.offsets and "p_XU" in other.offsets:
            src = other.p_XU_given_SW(theta)
            dst = np.zeros((self.n_s, self.L_w, self.n_x, self.L_u))
            dst[:, : other.L_w, :, : other.L_u] = src
            dst[:, other.L_w :] = dst[:, :1]
            self._set(out, "p_XU", dst)
        elif "p_X" in self.offsets and "p_X" in other.offsets and "p_U" not in self.offsets:
            src = other.p_X_given_SW(theta)
            dst = np.zeros((self.n_s, self.L_w, self.n_x))
            dst[:, : other.L_w] = src
            dst[:, other.L_w :] = dst[:, :1]
            self._set(out, "p_X", dst)
        return out


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


def _lift_sd(arr: np.ndarray, h: np.ndarray) -> np.ndarray:
    onehot = np.zeros((int(h.max()) + 1, h.size))
    onehot[h, np.arange(h.size)] = 1.0
    return np.tensordot(onehot, arr, axes=([1], [0]))


def _product_arrays(space: _DesignSpace, theta: np.ndarray, W: np.ndarray) -> tuple[np.ndarray, float]:
    """Joint p.m.f. over (s^d, w, u_1..u_K, y) and I(U;S|S^d W) of a product design."""
    K = space.K
    design = space.p_XU_given_SW(theta)
    p_W = space.p_W(theta)
    ref = design
    for _ in range(K - 1):
        ref = ref[..., None, None] * design.reshape(design.shape[:2] + (1,) * (ref.ndim - 2) + design.shape[2:])
    weight = space.p_S[:, None] * p_W[None, :]
    joint = weight.reshape(weight.shape + (1,) * (ref.ndim - 2)) * ref
    lifted_W = W.reshape((1, 1) + tuple(v for _ in range(K) for v in (space.n_x, 1)) + (W.shape[-1],))
    full = joint[..., None] * lifted_W
    x_axes = tuple(2 + 2 * k for k in range(K))
    su = full.sum(axis=x_axes)  # (s, w, u_1..u_K, y)
    rho = conditional_binning_information(weight[..., None] * design.sum(axis=2), space.problem.source.h)
    return _lift_sd(su, space.problem.source.h), rho


def _subset_term(arr: np.ndarray, K: int, A: tuple[int, ...]) -> float:
    y = K + 2
    rest = tuple(2 + k for k in range(K) if k not in A)
    return mutual_information_pmf(arr, tuple(2 + k for k in A), (y,) + rest, (0, 1)) / len(A)


def _upper_arrays(space: _DesignSpace, theta: np.ndarray, W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Joint p.m.f.s over (s, u_1..u_K, y) and (s^d, u_1..u_K, y) of a coupled design."""
    K = space.K
    n_s, L_w, n_x, L_u = space.n_s, space.L_w, space.n_x, space.L_u
    px = space.p_X_given_SW(theta)
    prod = px
    for _ in range(K - 1):
        prod = prod[..., None] * px.reshape((n_s, L_w) + (1,) * (prod.ndim - 2) + (n_x,))
    weight = space.p_S[:, None] * space.p_W(theta)[None, :]
    pu = space.p_U_given_XSW(theta).reshape((n_s, L_w) + (n_x,) * K + (L_u,) * K)
    joint = (weight.reshape((n_s, L_w) + (1,) * K) * prod).reshape((n_s, L_w) + (n_x,) * K + (1,) * K) * pu
    full = joint[..., None] * W.reshape((1, 1) + (n_x,) * K + (1,) * K + (W.shape[-1],))
    s_arr = full.sum(axis=(1,) + tuple(range(2, 2 + K)))  # (s, u_1..u_K, y)
    return s_arr, _lift_sd(s_arr, space.problem.source.h)


def _capacity_term(space: _DesignSpace, theta: np.ndarray, W: np.ndarray) -> float:
    """(1/K) I(X_K; Y | S, W) of a product design."""
    K = space.K
    px = space.p_X_given_SW(theta)
    prod = px
    for _ in range(K - 1):
        prod = prod[..., None] * px.reshape(px.shape[:2] + (1,) * (prod.ndim - 2) + px.shape[2:])
    weight = space.p_S[:, None] * space.p_W(theta)[None, :]
    joint = weight.reshape(weight.shape + (1,) * K) * prod
    full = joint[..., None] * W.reshape((1, 1) + W.shape)
    return mutual_information_pmf(full, tuple(range(2, 2 + K)), (2 + K,), (0, 1)) / K


def _upper_term(s_arr: np.ndarray, sd_arr: np.ndarray, K: int, A: tuple[int, ...]) -> float:
    y = K + 1
    A_axes = tuple(1 + k for k in A)
    rest = tuple(1 + k for k in range(K) if k not in A)
    gain = mutual_information_pmf(sd_arr, A_axes, (y, 0), rest)
    cost = mutual_information_pmf(s_arr, A_axes, (0,), rest)
    return (gain - cost) / len(A)


def _subsets(K: int) -> list[tuple[int, ...]]:
    return [A for a in range(1, K + 1) for A in itertools.combinations(range(K), a)]


def _objectives(space: _DesignSpace, kind: str) -> list[tuple[tuple, Callable[[np.ndarray, np.ndarray], float]]]:
    """(subset label, f(theta, W)) pairs whose minimum is the kind's objective."""
    K = space.K
    full = tuple(range(K))
    if kind == "private-capacity":
        def capacity(theta, W):
            return _capacity_term(space, theta, W)
        return [(full, capacity)]
    if kind == "thr":
        def thr(theta, W):
            arr, rho = _product_arrays(space, theta, W)
            return mutual_information_pmf(arr, (2,), (K + 2,), (0, 1)) - rho
        return [((0,), thr)]
    if kind == "joint-one":
        def one(theta, W):
            arr, rho = _product_arrays(space, theta, W)
            return _subset_term(arr, K, full) - rho
        return [(full, one)]
    if kind == "joint-all":
        out = []
        subsets = [full[:a] for a in range(1, K + 1)] if space.problem.cls.fair_only else _subsets(K)
        for A in subsets:
            def term(theta, W, A=A):
                arr, rho = _product_arrays(space, theta, W)
                return _subset_term(arr, K, A) - rho
            out.append((A, term))
        return out
    out = []
    for A in _subsets(K):
        def upper(theta, W, A=A):
            s_arr, sd_arr = _upper_arrays(space, theta, W)
            return _upper_term(s_arr, sd_arr, K, A)
        out.append((A, upper))
    return out


def _inner_class(problem: RateProblem, kind: str) -> CollusionClassSpec:
    return problem.cls.fair() if kind in ("thr", "joint-one", "private-capacity") else problem.cls


# ---------------------------------------------------------------------------
# Max-min
# ---------------------------------------------------------------------------


class _MaxMin:
    def __init__(self, problem: RateProblem, kind: str):
        self.problem = problem
        self.kind = kind
        self.space = _DesignSpace(problem, kind)
        self.objectives = _objectives(self.space, kind)
        self.cls = _inner_class(problem, kind)
        self.class_starts = default_class_starts(self.cls)
        self._cache: dict[bytes, tuple[float, np.ndarray, int]] = {}
        self.last_W: Optional[np.ndarray] = None

    def inner(self, theta: np.ndarray) -> tuple[float, np.ndarray, int]:
        """min over objectives and class; returns (value, channel, objective index)."""
        key = np.round(theta, 14).tobytes()
        if key in self._cache:
            return self._cache[key]
        starts = list(self.class_starts)
        if self.last_W is not None:
            starts.insert(0, self.last_W)
        best = (float("inf"), starts[0], 0)
        for i, (_, f) in enumerate(self.objectives):
            W, val, _ = minimize_over_class(lambda W, f=f: f(theta, W), self.cls, starts)
            if val < best[0]:
                best = (val, W, i)
        self.last_W = best[1]
        self._cache[key] = best
        return best

    def value(self, theta: np.ndarray) -> float:
        return self.inner(theta)[0]

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        """Gradient of the active objective at the fixed inner minimizer."""
        val, W, i = self.inner(theta)
        f = self.objectives[i][1]
        step = 1e-7
        grad = np.zeros_like(theta)
        for j in range(theta.size):
            t = theta.copy()
            t[j] += step
            grad[j] = (f(t, W) - val) / step
        return grad

    def climb(self, theta0: np.ndarray) -> tuple[np.ndarray, float, bool]:
        res = minimize(
            lambda t: -self.value(t),
            theta0,
            jac=lambda t: -self.gradient(t),
            method="SLSQP",
            bounds=[(0.0, 1.0)] * theta0.size,
            constraints=self.space.constraints(),
            options={"maxiter": 100, "ftol": 1e-10},
        )
        candidates = [(self.value(theta0), theta0)]
        if self.space.distortion(res.x) <= self.problem.D1 + 1e-9:
            candidates.append((self.value(res.x), np.clip(res.x, 0.0, 1.0)))
        val, theta = max(candidates, key=lambda c: c[0])
        return theta, val, bool(res.success)

    def best_response_gap(self, theta: np.ndarray) -> float:
        """How much the designer gains against the fixed worst channel."""
        val, W, _ = self.inner(theta)

        def score(t):
            return min(g(t, W) for _, g in self.objectives)

        res = minimize(
            lambda t: -score(t),
            theta,
            method="SLSQP",
            bounds=[(0.0, 1.0)] * theta.size,
            constraints=self.space.constraints(),
            options={"maxiter": 100, "ftol": 1e-10},
        )
        br = max(score(theta), -float(res.fun) if self.space.distortion(res.x) <= self.problem.D1 + 1e-9 else -np.inf)
        return max(0.0, br - val)


def _label(kind: str, problem: RateProblem) -> str:
    if kind == "upper":
        return f"upper bound evaluated at L_u={problem.L_u}, L_w={problem.L_w} (approximation from below)"
    return f"{kind} at L_u={problem.L_u}, L_w={problem.L_w}"


def rate_threshold(kind: str, problem: RateProblem, warm: Optional[list[np.ndarray]] = None) -> RateResult:
    """
    Rate threshold of one kind.

    Multi-start outer SLSQP over designs; every start returns a locally best
    design, the best value wins and the number of starts within 1e-6 of it is
    reported. Over a fair class joint-all minimizes over one subset per size
    and the subset-minimum identity is checked at the solution.
    """
    if kind not in RATE_KINDS:
        raise InvalidInputError(f"Unknown rate kind: {kind}")
    if kind == "upper" and problem.K > MAX_UPPER_K:
        raise InvalidInputError(f"The upper bound is evaluated for K <= {MAX_UPPER_K}")
    return _solve_rate(kind, problem, warm)


def _solve_rate(kind: str, problem: RateProblem, warm: Optional[list[np.ndarray]]) -> RateResult:
    solver = _MaxMin(problem, kind)
    space = solver.space
    rng = np.random.default_rng(problem.seed)
    starts = list(warm or []) + [space.spread(), space.base()][: problem.restarts]
    while len(starts) < problem.restarts + len(warm or []):
        starts.append(space.random(rng))
    results = []
    converged = False
    for theta0 in starts:
        theta, val, ok = solver.climb(theta0)
        converged = converged or ok
        results.append((val, theta))
    best_val, best_theta = max(results, key=lambda r: r[0])
    incumbents = sum(1 for v, _ in results if v >= best_val - INCUMBENT_TOL)
    value, W, idx = solver.inner(best_theta)
    flags = []
    if not converged:
        flags.append("outer solves did not report convergence")
        log_event("rate_threshold", "warning", error="no restart converged", kind=kind)
    design: dict[str, np.ndarray] = {"p_X_given_SW": space.p_X_given_SW(best_theta)}
    if kind == "upper":
        design["p_U_given_XSW"] = space.p_U_given_XSW(best_theta)
    else:
        design["p_XU_given_SW"] = space.p_XU_given_SW(best_theta)
    result = RateResult(
        kind=kind,
        value=max(float(value), 0.0),
        p_W=space.p_W(best_theta),
        design=design,
        channel=W,
        subset=solver.objectives[idx][0],
        saddle_gap=solver.best_response_gap(best_theta),
        restarts=len(starts),
        converged=converged,
        incumbents=incumbents,
        L_u=problem.L_u,
        L_w=problem.L_w,
        label=_label(kind, problem),
        flags=flags,
        theta=best_theta,
    )
    if kind == "joint-all" and problem.cls.fair_only:
        arr, _ = _product_arrays(space, best_theta, W)
        z = arr.reshape((-1,) + arr.shape[2:])
        result.imin = check_Imin_identity(z / z.sum(), problem.K)
        if not result.imin.passed:
            result.flags.append("subset-minimum identity not met at the solution")
    log_event("rate_threshold", "ok", kind=kind, value=result.value, L_u=problem.L_u, L_w=problem.L_w)
    return result


def private_capacity(problem: RateProblem) -> RateResult:
    """
    max over p_W, p_{X|SW} of min_{W fair} (1/K) I(X_K; Y | S, W).

    Evaluated with U = X on a private source, where the binning information
    vanishes; used to cross-check the joint-one rate.
    """
    if not problem.source.is_private:
        raise InvalidInputError("The capacity formula applies to private sources")
    forced = replace(problem, L_u=problem.cls.n_x, force_u_equals_x=True)
    return _solve_rate("private-capacity", forced, None)


@dataclass
class RateTable:
    kind: str
    levels: list
    values: list
    results: list
    monotone: bool

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "levels": self.levels,
            "values": self.values,
            "monotone": self.monotone,
            "results": [r.to_json_dict() for r in self.results],
        }


def rate_table(kind: str, problem: RateProblem, levels: tuple = (1, 2, 3)) -> RateTable:
    """
    Rates at growing auxiliary alphabets, L_u = L and L_w = min(L, 2).

    Each level is warm-started with the previous level's design embedded, so
    the values are nondecreasing up to solver tolerance; the check is reported.
    """
    results: list[RateResult] = []
    prev_space: Optional[_DesignSpace] = None
    prev_theta: Optional[np.ndarray] = None
    for L in levels:
        L_u = problem.cls.n_x if problem.force_u_equals_x else int(L)
        p = replace(problem, L_u=L_u, L_w=min(int(L), 2))
        space = _DesignSpace(p, kind)
        warm = [space.embed(prev_space, prev_theta)] if prev_space is not None and kind != "upper" else None
        res = rate_threshold(kind, p, warm=warm)
        results.append(res)
        prev_space, prev_theta = space, res.theta
    values = [r.value for r in results]
    monotone = all(b >= a - MONOTONE_TOL for a, b in zip(values, values[1:]))
    if not monotone:
        log_event("rate_table", "warning", error="values not monotone in L", kind=kind, values=values)
    return RateTable(kind=kind, levels=list(levels), values=values, results=results, monotone=monotone)


def design_from_rate(result: RateResult) -> tuple[np.ndarray, np.ndarray]:
    """(p_W, p_XU|SW) of a product-design rate result, ready for SchemeParams."""
    if "p_XU_given_SW" not in result.design:
        raise InvalidInputError("Coupled upper-bound designs have no product form")
    design = np.clip(result.design["p_XU_given_SW"], 0.0, None)
    design = design / design.sum(axis=(2, 3), keepdims=True)
    p_W = np.clip(result.p_W, 0.0, None)
    return p_W / p_W.sum(), design
