"""
Pseudo sphere-packing error exponents.

An exponent problem minimizes the conditional divergence of a joint p.m.f.
q((xu)_K, y | s, w) from the reference built out of its own induced channel
p~_{Y|X_K}. The feasible set asks for per-user marginals equal to the design
p_{XU|SW}, for p~_{Y|X_K} in the collusion class and for one information
inequality:

    threshold (colluder m):  I(U_m; Y | S^d W) - I(U; S | S^d W) <= R
    joint (subset A):        (1/|A|) multi-info(U_A; Y U_rest | S^d W) <= I(U; S | S^d W) + R

The divergence term of the covertext tilt p~_{S|W} is carried as a constant.
Values are in bits; an empty feasible set gives +inf.
"""

import itertools
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np
from scipy.optimize import minimize

from .attack_model import (
    CollusionClassSpec,
    adversarial_family,
    default_class_starts,
    fairness_equalities,
    min_distortion_channel,
    minimize_over_class,
)
from .codec import conditional_binning_information
from .errors import InvalidInputError, InvariantViolation
from .limits import MAX_PROBLEM_CELLS, check_count, get_enum_cap
from .logging import log_event
from .simplex import PROB_FLOOR, count_simplex_points, local_box_mesh, project_simplex, simplex_points
from .type_lab import LN2, divergence

VARIANTS = ("threshold", "joint")
DEFAULT_RESTARTS = 32
FEAS_TOL = 1e-8
GRAD_TOL = 1e-8
ORACLE_MAX_FREE = 6
ORACLE_POINTS = 200_000
ORACLE_BATCH = 8192
ORACLE_TOL = 1e-3
ORACLE_ROUNDS = 64
ORACLE_ROUND_POINTS = 10_000
ORACLE_FINE_MESH = 1e-7
COLLAPSE_TOL = 1e-6
PENALTY_SCHEDULE = (10.0, 100.0, 1000.0)
PG_ITERATIONS = 60


def _pmf(values, name: str) -> np.ndarray:
    p = np.asarray(values, dtype=float)
    if np.any(p < 0) or not np.allclose(p.sum(axis=-1), 1.0, atol=1e-9):
        raise InvalidInputError(f"{name} must be a p.m.f.")
    return p


@dataclass(frozen=True)
class ExponentProblem:
    """
    One exponent minimization.

    ``p_XU_given_SW`` has shape (|S|, L_w, |X|, L_u); ``p_S_given_W`` (the
    covertext tilt) has shape (L_w, |S|) and defaults to p_S in every row.
    ``colluder`` (threshold) and ``subset`` (joint) are 0-based.
    """

    variant: str
    p_S: np.ndarray
    h: np.ndarray
    p_W: np.ndarray
    p_XU_given_SW: np.ndarray
    cls: CollusionClassSpec
    R: float
    p_S_given_W: Optional[np.ndarray] = None
    colluder: int = 0
    subset: tuple = ()
    restarts: int = DEFAULT_RESTARTS
    seed: int = 0

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise InvalidInputError(f"Unknown exponent variant: {self.variant}")
        p_S = _pmf(self.p_S, "p_S").ravel()
        p_W = _pmf(self.p_W, "p_W").ravel()
        h = np.asarray(self.h, dtype=np.int64).ravel()
        design = np.asarray(self.p_XU_given_SW, dtype=float)
        if h.size != p_S.size or h.min() < 0:
            raise InvalidInputError("h must map every covertext symbol to a degraded symbol")
        if design.ndim != 4 or design.shape[:2] != (p_S.size, p_W.size):
            raise InvalidInputError("p_XU|SW must have shape (|S|, L_w, |X|, L_u)")
        if np.any(design < 0) or not np.allclose(design.sum(axis=(2, 3)), 1.0, atol=1e-9):
            raise InvalidInputError("p_XU|SW slices must be p.m.f.s")
        if design.shape[2] != self.cls.n_x:
            raise InvalidInputError("Design and collusion class disagree on |X|")
        tilt = np.tile(p_S, (p_W.size, 1)) if self.p_S_given_W is None else _pmf(self.p_S_given_W, "p~_S|W")
        if tilt.shape != (p_W.size, p_S.size):
            raise InvalidInputError("p~_S|W must have shape (L_w, |S|)")
        K = self.cls.K
        if not 0 <= self.colluder < K:
            raise InvalidInputError(f"Colluder index must lie in 0..{K - 1}")
        subset = tuple(sorted(set(int(a) for a in self.subset))) or tuple(range(K))
        if subset[0] < 0 or subset[-1] >= K:
            raise InvalidInputError(f"Subset must lie in 0..{K - 1}")
        if self.restarts < 1:
            raise InvalidInputError("Need at least one restart")
        cells = p_S.size * p_W.size * (design.shape[2] * design.shape[3]) ** K * self.cls.n_y
        check_count("exponent problem cells", cells, MAX_PROBLEM_CELLS)
        object.__setattr__(self, "p_S", p_S)
        object.__setattr__(self, "p_W", p_W)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "p_XU_given_SW", design)
        object.__setattr__(self, "p_S_given_W", tilt)
        object.__setattr__(self, "subset", subset)

    @property
    def K(self) -> int:
        return self.cls.K

    @property
    def L_u(self) -> int:
        return int(self.p_XU_given_SW.shape[3])

    def with_rate(self, R: float) -> "ExponentProblem":
        return replace(self, R=float(R))

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "variant": self.variant,
            "p_S": self.p_S.tolist(),
            "h": self.h.tolist(),
            "p_W": self.p_W.tolist(),
            "p_XU_given_SW": self.p_XU_given_SW.tolist(),
            "class": self.cls.to_json_dict(),
            "R": self.R,
            "p_S_given_W": self.p_S_given_W.tolist(),
            "colluder": self.colluder,
            "subset": list(self.subset),
            "restarts": self.restarts,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "ExponentProblem":
        return cls(
            variant=data["variant"],
            p_S=np.asarray(data["p_S"]),
            h=np.asarray(data.get("h", list(range(len(data["p_S"]))))),
            p_W=np.asarray(data["p_W"]),
            p_XU_given_SW=np.asarray(data["p_XU_given_SW"]),
            cls=CollusionClassSpec.from_json_dict(data["class"]),
            R=float(data["R"]),
            p_S_given_W=None if data.get("p_S_given_W") is None else np.asarray(data["p_S_given_W"]),
            colluder=int(data.get("colluder", 0)),
            subset=tuple(data.get("subset", ())),
            restarts=int(data.get("restarts", DEFAULT_RESTARTS)),
            seed=int(data.get("seed", 0)),
        )


@dataclass
class OracleValue:
    """Dense-grid minimum over the free conditional rows (K = 1 problems)."""

    value: float
    minimizer: Optional[np.ndarray]
    mesh: float
    refined_mesh: float
    lipschitz: float
    tolerance: float
    points: int
    feasible_points: int

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "value": _json_float(self.value),
            "mesh": self.mesh,
            "refined_mesh": self.refined_mesh,
            "lipschitz": self.lipschitz,
            "tolerance": self.tolerance,
            "points": self.points,
            "feasible_points": self.feasible_points,
        }


@dataclass
class ExponentValue:
    value: float
    status: str
    minimizer: Optional[np.ndarray] = None
    channel: Optional[np.ndarray] = None
    divergence_term: float = 0.0
    info_value: float = float("nan")
    bound: float = float("nan")
    max_violation: float = 0.0
    restarts: int = 0
    converged: bool = False
    oracle: Optional[OracleValue] = None
    x: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def oracle_gap(self) -> Optional[float]:
        if self.oracle is None or not np.isfinite(self.oracle.value) or not np.isfinite(self.value):
            return None
        return float(self.oracle.value - self.value)

    @property
    def oracle_agrees(self) -> Optional[bool]:
        if self.oracle is None:
            return None
        if not np.isfinite(self.oracle.value) or not np.isfinite(self.value):
            return bool(np.isinf(self.oracle.value) == np.isinf(self.value))
        return abs(self.oracle.value - self.value) <= self.oracle.tolerance

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "value": _json_float(self.value),
            "status": self.status,
            "divergence_term": self.divergence_term,
            "info_value": _json_float(self.info_value),
            "bound": _json_float(self.bound),
            "max_violation": self.max_violation,
            "restarts": self.restarts,
            "converged": self.converged,
            "channel": None if self.channel is None else self.channel.tolist(),
            "minimizer": None if self.minimizer is None else self.minimizer.tolist(),
            "oracle": None if self.oracle is None else self.oracle.to_json_dict(),
            "oracle_gap": self.oracle_gap,
            "oracle_agrees": self.oracle_agrees,
        }


def _json_float(v: float) -> Any:
    if np.isnan(v):
        return None
    return "inf" if np.isinf(v) else float(v)


# ---------------------------------------------------------------------------
# Problem model: objective, constraints and their gradients
# ---------------------------------------------------------------------------


class _Model:
    """
    Flattened exponent problem.

    The joint array has axes (s, w, x_1, u_1, ..., x_K, u_K, y). Variables are
    the entries of q((xu)_K, y | s, w) on cells with positive tilt weight and
    positive product-design mass; everything else is pinned at zero.
    """

    def __init__(self, prob: ExponentProblem):
        self.prob = prob
        cls = prob.cls
        K = cls.K
        self.K = K
        self.n_s = prob.p_S.size
        self.L_w = prob.p_W.size
        self.n_x = cls.n_x
        self.L_u = prob.L_u
        self.n_y = cls.n_y
        self.shape = (self.n_s, self.L_w) + (self.n_x, self.L_u) * K + (self.n_y,)
        self.x_axes = tuple(2 + 2 * k for k in range(K))
        self.u_axes = tuple(3 + 2 * k for k in range(K))
        self.y_axis = 2 + 2 * K
        self.h = prob.h
        self.n_sd = int(self.h.max()) + 1
        self.onehot = np.zeros((self.n_sd, self.n_s))
        self.onehot[self.h, np.arange(self.n_s)] = 1.0

        self.pi = prob.p_W[None, :] * prob.p_S_given_W.T  # (s, w)
        design = prob.p_XU_given_SW
        ref = design
        for _ in range(K - 1):
            ref = ref[..., None, None] * design.reshape(design.shape[:2] + (1,) * (ref.ndim - 2) + design.shape[2:])
        self.ref = ref  # (s, w, x_1, u_1, ..., x_K, u_K)
        mask = (self.pi > 0).reshape(self.pi.shape + (1,) * (ref.ndim - 2)) & (ref > 0)
        self.var_mask = np.broadcast_to(mask[..., None], self.shape).copy()
        self.coords = np.argwhere(self.var_mask)
        self.n_vars = self.coords.shape[0]
        self.pi_var = self.pi[self.coords[:, 0], self.coords[:, 1]]
        self.ref_var = ref[tuple(self.coords[:, :-1].T)]
        cells = self.coords[:, 0] * self.L_w + self.coords[:, 1]
        self.groups = [np.flatnonzero(cells == c) for c in np.unique(cells)]

        self.fallback = min_distortion_channel(cls)
        self.A_ub, self.b_ub = cls.constraint_matrix()
        self.F_fair = fairness_equalities(K, self.n_x, self.n_y) if cls.fair_only else np.zeros((0, cls.n_cells))
        self.A_eq, self.b_eq = self._marginal_constraints()

        p_swu = self.pi[..., None] * design.sum(axis=2)
        self.rho_term = conditional_binning_information(p_swu, self.h)
        self.divergence_term = float(
            sum(prob.p_W[w] * divergence(prob.p_S_given_W[w], prob.p_S) for w in range(self.L_w) if prob.p_W[w] > 0)
        )
        self.bound = prob.R + self.rho_term

    # -- layout helpers -----------------------------------------------------

    def _marginal_constraints(self) -> tuple[np.ndarray, np.ndarray]:
        design = self.prob.p_XU_given_SW
        rows, rhs = [], []
        for group in self.groups:
            s, w = self.coords[group[0], 0], self.coords[group[0], 1]
            for k in range(self.K):
                xs = self.coords[group, self.x_axes[k]]
                us = self.coords[group, self.u_axes[k]]
                values = sorted(set(zip(xs.tolist(), us.tolist())))
                if k > 0:
                    values = values[:-1]
                for x, u in values:
                    row = np.zeros(self.n_vars)
                    row[group[(xs == x) & (us == u)]] = 1.0
                    rows.append(row)
                    rhs.append(design[s, w, x, u])
        return np.array(rows), np.array(rhs)

    def joint(self, x: np.ndarray) -> np.ndarray:
        P = np.zeros(self.shape)
        P[self.var_mask] = self.pi_var * np.clip(x, 0.0, None)
        return P

    def _lift_x(self, arr: np.ndarray) -> np.ndarray:
        lifted = (1, 1) + tuple(v for _ in range(self.K) for v in (self.n_x, 1)) + (self.n_y,)
        return arr.reshape(lifted)

    def _to_vars(self, grad_P: np.ndarray) -> np.ndarray:
        return np.broadcast_to(grad_P, self.shape)[self.var_mask] * self.pi_var

    def induced(self, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(p~_{Y|X_K}, p~_{X_K}); rows without mass take the min-distortion row."""
        Px = P.sum(axis=(0, 1) + self.u_axes)
        row = Px.sum(axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            Wt = np.where(row[..., None] > 0, Px / np.maximum(row[..., None], 1e-300), self.fallback)
        return Wt, row

    def _wt_chain(self, G: np.ndarray, Wt: np.ndarray, row: np.ndarray) -> np.ndarray:
        """Variable gradient of a function of p~_{Y|X_K} with gradient G."""
        inner = (G * Wt).sum(axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            dPx = np.where(row[..., None] > 0, (G - inner) / np.maximum(row[..., None], 1e-300), 0.0)
        return self._to_vars(self._lift_x(dPx))

    def from_product(self, channel: np.ndarray) -> np.ndarray:
        """Variables of q = p^K_{XU|SW} * channel(y | x_K)."""
        Q = self.ref[..., None] * self._lift_x(channel)
        return Q[self.var_mask]

    def from_kernel(self, kernel: np.ndarray) -> np.ndarray:
        """Variables of q = p^K_{XU|SW} * kernel(y | s, w, (xu)_K)."""
        return (self.ref[..., None] * kernel)[self.var_mask]

    # -- objective -----------------------------------------------------------

    def objective(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        P = self.joint(x)
        Wt, _ = self.induced(P)
        logP = np.log2(np.maximum(P, PROB_FLOOR))
        logW = np.log2(np.maximum(self._lift_x(Wt), PROB_FLOOR))
        if self.prob.variant == "threshold":
            pi = self.pi.reshape(self.pi.shape + (1,) * (P.ndim - 2))
            log_ref = np.log2(np.maximum(self.ref[..., None], PROB_FLOOR))
            log_pi = np.log2(np.maximum(pi, PROB_FLOOR))
            terms = logP - log_pi - log_ref - logW
            grad = terms + 1.0 / LN2
        else:
            Pc = P.sum(axis=-1, keepdims=True)
            terms = logP - np.log2(np.maximum(Pc, PROB_FLOOR)) - logW
            grad = terms
        value = float(np.sum(np.where(P > 0, P * terms, 0.0)))
        return value, self._to_vars(grad)

    # -- information constraint ---------------------------------------------

    def _entropy(self, P: np.ndarray, keep: tuple[int, ...]) -> tuple[float, np.ndarray]:
        """H of the marginal on ``keep`` (which contains s, read as s^d) and its P-gradient."""
        drop = tuple(i for i in range(P.ndim) if i not in keep)
        M = P.sum(axis=drop, keepdims=True) if drop else P
        Msd = np.tensordot(self.onehot, M, axes=([1], [0]))
        pos = Msd[Msd > 0]
        H = float(-np.sum(pos * np.log2(pos)))
        grad = -(np.log2(np.maximum(Msd[self.h], PROB_FLOOR)) + 1.0 / LN2)
        return H, grad

    def information(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Left-hand information term of the constraint and its gradient."""
        P = self.joint(x)
        G = (0, 1)
        y = self.y_axis
        if self.prob.variant == "threshold":
            u = self.u_axes[self.prob.colluder]
            parts = [((u,) + G, 1.0), ((y,) + G, 1.0), ((u, y) + G, -1.0), (G, -1.0)]
            scale = 1.0
        else:
            A = self.prob.subset
            rest = tuple(self.u_axes[k] for k in range(self.K) if k not in A)
            parts = [((self.u_axes[k],) + G, 1.0) for k in A]
            parts += [((y,) + rest + G, 1.0), (self.u_axes + (y,) + G, -1.0), (G, -float(len(A)))]
            scale = 1.0 / len(A)
        value = 0.0
        grad = np.zeros(P.shape)
        for keep, coef in parts:
            H, g = self._entropy(P, keep)
            value += coef * H
            grad = grad + coef * g
        return scale * max(value, 0.0), scale * self._to_vars(grad)

    def info_constraint(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        val, grad = self.information(x)
        return self.bound - val, -grad

    # -- class membership ----------------------------------------------------

    def class_constraints(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        P = self.joint(x)
        Wt, row = self.induced(P)
        values = self.b_ub - self.A_ub @ Wt.ravel()
        jac = np.array([self._wt_chain(-a.reshape(Wt.shape), Wt, row) for a in self.A_ub])
        return values, jac

    def fair_constraints(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        P = self.joint(x)
        Wt, row = self.induced(P)
        values = self.F_fair @ Wt.ravel()
        jac = np.array([self._wt_chain(f.reshape(Wt.shape), Wt, row) for f in self.F_fair])
        return values, jac.reshape(len(self.F_fair), self.n_vars)

    def violation(self, x: np.ndarray) -> float:
        worst = float(max(0.0, -np.min(x))) if x.size else 0.0
        if self.A_eq.size:
            worst = max(worst, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        worst = max(worst, float(max(0.0, -np.min(self.class_constraints(x)[0]))))
        worst = max(worst, max(0.0, -self.info_constraint(x)[0]))
        if self.F_fair.size:
            worst = max(worst, float(np.max(np.abs(self.fair_constraints(x)[0]))))
        return worst

    def project(self, x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        for g in self.groups:
            out[g] = project_simplex(x[g])
        return out

    # -- penalized descent and polish ----------------------------------------

    def penalized(self, x: np.ndarray, mu: float) -> tuple[float, np.ndarray]:
        f, grad = self.objective(x)
        total = f
        if self.A_eq.size:
            r = self.A_eq @ x - self.b_eq
            total += mu * float(r @ r)
            grad = grad + 2.0 * mu * (self.A_eq.T @ r)
        g, gj = self.class_constraints(x)
        short = np.minimum(g, 0.0)
        total += mu * float(short @ short)
        grad = grad + 2.0 * mu * (short @ gj)
        c, cj = self.info_constraint(x)
        if c < 0:
            total += mu * c * c
            grad = grad + 2.0 * mu * c * cj
        if self.F_fair.size:
            fv, fj = self.fair_constraints(x)
            total += mu * float(fv @ fv)
            grad = grad + 2.0 * mu * (fv @ fj)
        return total, grad

    def descend(self, x: np.ndarray) -> np.ndarray:
        """Projected gradient with penalty continuation."""
        x = self.project(x)
        for mu in PENALTY_SCHEDULE:
            step = 0.5
            F, grad = self.penalized(x, mu)
            for _ in range(PG_ITERATIONS):
                if np.linalg.norm(grad) < GRAD_TOL:
                    break
                accepted = False
                for _ in range(30):
                    candidate = self.project(x - step * grad)
                    F_new, grad_new = self.penalized(candidate, mu)
                    if F_new < F:
                        accepted = True
                        break
                    step *= 0.5
                if not accepted:
                    break
                moved = float(np.max(np.abs(candidate - x)))
                x, F, grad = candidate, F_new, grad_new
                step = min(step * 1.5, 1.0)
                if moved < 1e-12:
                    break
        return x

    def polish(self, x0: np.ndarray) -> tuple[np.ndarray, bool]:
        constraints = [
            {"type": "ineq", "fun": lambda x: self.class_constraints(x)[0], "jac": lambda x: self.class_constraints(x)[1]},
            {"type": "ineq", "fun": lambda x: self.info_constraint(x)[0], "jac": lambda x: self.info_constraint(x)[1]},
        ]
        if self.A_eq.size:
            constraints.append({"type": "eq", "fun": lambda x: self.A_eq @ x - self.b_eq, "jac": lambda x: self.A_eq})
        if self.F_fair.size:
            constraints.append({"type": "eq", "fun": lambda x: self.fair_constraints(x)[0], "jac": lambda x: self.fair_constraints(x)[1]})
        res = minimize(
            lambda x: self.objective(x),
            x0,
            jac=True,
            method="SLSQP",
            bounds=[(0.0, 1.0)] * self.n_vars,
            constraints=constraints,
            options={"maxiter": 300, "ftol": 1e-12},
        )
        return np.clip(res.x, 0.0, 1.0), bool(res.success)

    # -- zero-divergence test --------------------------------------------------

    def product_information(self, channel: np.ndarray) -> float:
        return self.information(self.from_product(channel))[0]


# ---------------------------------------------------------------------------
# Grid oracle (K = 1)
# ---------------------------------------------------------------------------


def _oracle_rows(model: _Model) -> np.ndarray:
    """Coordinates (s, w, x, u) of the free conditional rows of a K = 1 model."""
    return np.argwhere(model.var_mask[..., 0])


def free_variable_count(prob: ExponentProblem) -> Optional[int]:
    """Free variables of a K = 1 problem (None for K > 1)."""
    if prob.K != 1:
        return None
    model = _Model(prob)
    return int(len(_oracle_rows(model)) * (model.n_y - 1))


def _batched_entropy(arr: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    drop = tuple(i for i in range(1, arr.ndim) if i not in axes)
    M = arr.sum(axis=drop) if drop else arr
    flat = M.reshape(M.shape[0], -1)
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.where(flat > 0, flat * np.log2(np.where(flat > 0, flat, 1.0)), 0.0)
    return -terms.sum(axis=1)


def _oracle_evaluate(model: _Model, rows: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Exponent values (inf when infeasible) of a batch V of shape (B, rows, n_y)."""
    B = V.shape[0]
    P = np.zeros((B,) + model.shape)
    s, w, x, u = rows.T
    weight = model.pi[s, w] * model.ref[s, w, x, u]
    P[:, s, w, x, u, :] = weight[None, :, None] * V
    Px = P.sum(axis=(1, 2, 4))  # (B, x, y)
    row = Px.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        Wt = np.where(row > 0, Px / np.maximum(row, 1e-300), model.fallback[None])
    logW = np.log2(np.maximum(Wt, PROB_FLOOR))[:, x, :]  # (B, rows, y)
    logV = np.log2(np.maximum(V, PROB_FLOOR))
    mass = weight[None, :, None] * V
    obj = np.sum(np.where(mass > 0, mass * (logV - logW), 0.0), axis=(1, 2))

    M = np.einsum("ds,bswxuy->bdwuy", model.onehot, P)
    info = (
        _batched_entropy(M, (1, 2, 3))
        + _batched_entropy(M, (1, 2, 4))
        - _batched_entropy(M, (1, 2, 3, 4))
        - _batched_entropy(M, (1, 2))
    )
    info = np.maximum(info, 0.0)
    ok = info <= model.bound + 1e-12
    lhs = Wt.reshape(B, -1) @ model.A_ub.T
    ok &= np.all(lhs <= model.b_ub[None, :] + 1e-12, axis=1)
    return np.where(ok, model.divergence_term + np.maximum(obj, 0.0), np.inf)


def _grid_minimum(model: _Model, rows: np.ndarray, grid: np.ndarray) -> tuple[float, Optional[np.ndarray], int, int]:
    g = grid.shape[0]
    n_rows = rows.shape[0]
    total = g**n_rows
    best, best_V, feasible = float("inf"), None, 0
    for start in range(0, total, ORACLE_BATCH):
        idx = np.arange(start, min(start + ORACLE_BATCH, total))
        digits = (idx[:, None] // (g ** np.arange(n_rows))[None, :]) % g
        V = grid[digits]
        vals = _oracle_evaluate(model, rows, V)
        finite = np.isfinite(vals)
        feasible += int(finite.sum())
        if finite.any():
            i = int(np.argmin(vals))
            if vals[i] < best:
                best, best_V = float(vals[i]), V[i]
    return best, best_V, total, feasible


def grid_oracle(prob: ExponentProblem, max_points: int = ORACLE_POINTS) -> OracleValue:
    """
    Dense grid minimum for a K = 1 problem with at most six free variables.

    The coarse simplex mesh is followed by a pattern search: box meshes around
    the incumbent, halved whenever a round brings no improvement, down to a
    mesh of ORACLE_FINE_MESH. The oracle never sees the continuous solver's
    iterates, and the two must agree within ORACLE_TOL bits.
    """
    if prob.K != 1:
        raise InvalidInputError("The grid oracle handles K = 1 problems")
    model = _Model(prob)
    rows = _oracle_rows(model)
    n_free = rows.shape[0] * (model.n_y - 1)
    if n_free > ORACLE_MAX_FREE:
        raise InvalidInputError(f"Grid oracle needs at most {ORACLE_MAX_FREE} free variables, got {n_free}")
    if n_free == 0:
        V = np.ones((1, rows.shape[0], model.n_y))
        val = float(_oracle_evaluate(model, rows, V)[0])
        return OracleValue(val, V[0], 0.0, 0.0, 0.0, 1e-3, 1, int(np.isfinite(val)))
    m = 1
    while m < 64 and count_simplex_points(model.n_y, m + 1) ** rows.shape[0] <= max_points:
        m += 1
    grid = simplex_points(model.n_y, m)
    best, best_V, points, feasible = _grid_minimum(model, rows, grid)
    step = 1.0 / m
    refined = step
    lip = 0.0
    if best_V is not None:
        per_axis = int(max(3, min(21, np.floor(ORACLE_ROUND_POINTS ** (1.0 / n_free)))))
        per_axis -= 1 - per_axis % 2
        half = step
        for _ in range(ORACLE_ROUNDS):
            local = local_box_mesh(best_V, half, per_axis)
            vals = np.concatenate(
                [_oracle_evaluate(model, rows, local[i : i + ORACLE_BATCH]) for i in range(0, len(local), ORACLE_BATCH)]
            )
            points += len(local)
            finite = np.isfinite(vals)
            feasible += int(finite.sum())
            refined = 2.0 * half / (per_axis - 1)
            dist = np.max(np.abs(local - best_V[None]), axis=(1, 2))
            near = finite & (dist > 1e-12)
            if near.any():
                lip = float(np.max(np.abs(vals[near] - best) / dist[near]))
            i = int(np.argmin(vals))
            if vals[i] < best - 1e-15:
                best, best_V = float(vals[i]), local[i]
            else:
                half *= 0.5
            if refined <= ORACLE_FINE_MESH:
                break
    return OracleValue(
        value=best,
        minimizer=best_V,
        mesh=step,
        refined_mesh=refined,
        lipschitz=lip,
        tolerance=ORACLE_TOL,
        points=points,
        feasible_points=feasible,
    )


@dataclass
class TypeDomainValue:
    value: float
    minimizer: Optional[np.ndarray]
    denominator: int
    points: int
    feasible_points: int


def type_domain_exponent(prob: ExponentProblem, n: int) -> TypeDomainValue:
    """
    Exponent restricted to conditional rows with denominator ``n`` (K = 1).

    This is the finite-blocklength minimization over conditional types; every
    row of q(y | s, w, x, u) is a type with denominator n.
    """
    if prob.K != 1:
        raise InvalidInputError("Type-domain exponents are evaluated for K = 1")
    if n < 1:
        raise InvalidInputError("Denominator must be positive")
    model = _Model(prob)
    rows = _oracle_rows(model)
    total = count_simplex_points(model.n_y, n) ** rows.shape[0]
    check_count("type-domain grid points", total, get_enum_cap())
    best, best_V, points, feasible = _grid_minimum(model, rows, simplex_points(model.n_y, n))
    return TypeDomainValue(best, best_V, n, points, feasible)


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------


def _starts(model: _Model, prob: ExponentProblem, warm: list[np.ndarray]) -> list[np.ndarray]:
    rng = np.random.default_rng(prob.seed)
    starts = list(warm)
    for table in default_class_starts(prob.cls):
        starts.append(model.from_product(table))
    for channel in adversarial_family(prob.cls, rng, n_random=4, max_corners=8):
        if len(starts) >= prob.restarts:
            break
        starts.append(model.from_product(channel.table))
    while len(starts) < prob.restarts:
        kernel = rng.dirichlet(np.ones(model.n_y), size=model.shape[:-1])
        starts.append(model.from_kernel(kernel))
    return starts[: max(prob.restarts, len(warm))]


def _certify(orc: OracleValue, value: float, prob: ExponentProblem) -> None:
    if np.isfinite(orc.value) and np.isfinite(value):
        agrees = abs(orc.value - value) <= orc.tolerance
    else:
        agrees = bool(np.isinf(orc.value) == np.isinf(value))
    if not agrees:
        log_event(
            "solve_exponent", "error", error="grid oracle disagrees",
            variant=prob.variant, R=prob.R, optimizer=value, oracle=orc.value,
        )
        raise InvariantViolation(
            f"Grid oracle value {orc.value:.6g} and optimizer value {value:.6g} differ by more than {orc.tolerance:g} bits at R={prob.R:.6g}"
        )


def solve_exponent(
    prob: ExponentProblem,
    warm_starts: Optional[list[np.ndarray]] = None,
    oracle: bool = True,
) -> ExponentValue:
    """
    Minimize one exponent problem.

    Order of work: the zero-divergence test (product coupling with a class
    channel satisfying the information constraint gives the constant term),
    the grid oracle for small K = 1 problems, then multi-start projected
    gradient with penalty continuation polished by SLSQP under the exact
    constraints. The smallest feasible value wins. When the grid oracle ran,
    that value must lie within ORACLE_TOL bits of the oracle's or
    InvariantViolation is raised.
    """
    model = _Model(prob)
    zero_W, zero_info, _ = minimize_over_class(
        model.product_information, prob.cls, default_class_starts(prob.cls)
    )
    if zero_info <= model.bound + 1e-12:
        x = model.from_product(zero_W)
        return ExponentValue(
            value=model.divergence_term,
            status="zero-divergence",
            minimizer=model.joint(x),
            channel=model.induced(model.joint(x))[0],
            divergence_term=model.divergence_term,
            info_value=zero_info,
            bound=model.bound,
            restarts=0,
            converged=True,
            x=x,
        )

    orc: Optional[OracleValue] = None
    warm = [np.asarray(w, dtype=float) for w in (warm_starts or []) if np.size(w) == model.n_vars]
    if oracle and prob.K == 1 and free_variable_count(prob) <= ORACLE_MAX_FREE:
        orc = grid_oracle(prob)

    best_x: Optional[np.ndarray] = None
    best_val = float("inf")
    best_violation = 0.0
    converged = False
    starts = _starts(model, prob, warm)
    for i, x0 in enumerate(starts):
        candidates = [x0] if i < len(warm) else []
        descended = model.descend(x0)
        polished, ok = model.polish(descended)
        converged = converged or ok
        candidates += [polished, descended]
        for x in candidates:
            viol = model.violation(x)
            if viol > FEAS_TOL:
                continue
            val = model.divergence_term + max(model.objective(x)[0], 0.0)
            if val < best_val:
                best_x, best_val, best_violation = x, val, viol

    if orc is not None:
        _certify(orc, best_val, prob)

    if best_x is None:
        status = "empty (certified on grid)" if orc is not None and orc.feasible_points == 0 else "empty (uncertified)"
        log_event("solve_exponent", "empty", variant=prob.variant, R=prob.R, status=status)
        return ExponentValue(
            value=float("inf"),
            status=status,
            divergence_term=model.divergence_term,
            bound=model.bound,
            restarts=len(starts),
            converged=converged,
            oracle=orc,
        )
    if not converged:
        log_event("solve_exponent", "warning", error="no local solve converged", variant=prob.variant, R=prob.R)
    P = model.joint(best_x)
    return ExponentValue(
        value=best_val,
        status="optimized",
        minimizer=P,
        channel=model.induced(P)[0],
        divergence_term=model.divergence_term,
        info_value=model.information(best_x)[0],
        bound=model.bound,
        max_violation=best_violation,
        restarts=len(starts),
        converged=converged,
        oracle=orc,
        x=best_x,
    )


def exponent_curve(prob: ExponentProblem, rates: list[float], oracle: bool = False) -> list[ExponentValue]:
    """
    Exponent over an increasing rate grid.

    Each solve is warm-started at the previous minimizer, which stays feasible
    when R grows; the curve is checked to be nonincreasing.
    """
    grid = sorted(float(r) for r in rates)
    out: list[ExponentValue] = []
    warm: list[np.ndarray] = []
    for R in grid:
        res = solve_exponent(prob.with_rate(R), warm_starts=warm, oracle=oracle)
        if out and res.value > out[-1].value + 1e-12:
            raise InvariantViolation(f"Exponent increased from {out[-1].value:.6g} to {res.value:.6g} at R={R:.6g}")
        out.append(res)
        warm = [res.x] if res.x is not None else warm
    return out


# ---------------------------------------------------------------------------
# Composite exponents
# ---------------------------------------------------------------------------


@dataclass
class ExponentSuite:
    variant: str
    E_FP: float
    E_one: float
    E_all: float
    tilt_one: Optional[np.ndarray]
    tilt_all: Optional[np.ndarray]
    points: list = field(default_factory=list)
    fair_collapse_gap: Optional[float] = None
    flags: list = field(default_factory=list)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "variant": self.variant,
            "E_FP": self.E_FP,
            "E_one": _json_float(self.E_one),
            "E_all": _json_float(self.E_all),
            "tilt_one": None if self.tilt_one is None else self.tilt_one.tolist(),
            "tilt_all": None if self.tilt_all is None else self.tilt_all.tolist(),
            "points": self.points,
            "fair_collapse_gap": self.fair_collapse_gap,
            "flags": self.flags,
        }


def _members(variant: str, K: int, fair: bool) -> list[tuple[int, ...]]:
    if variant == "threshold":
        return [(m,) for m in ([0] if fair else range(K))]
    if fair:
        return [tuple(range(a)) for a in range(1, K + 1)]
    return [c for a in range(1, K + 1) for c in itertools.combinations(range(K), a)]


def exponent_suite(base: ExponentProblem, delta: float, mesh: int = 16, refine: bool = True) -> ExponentSuite:
    """
    False-positive, detect-one and detect-all exponents of a fixed design.

    ``base`` carries the design, class and rate R; every member problem is
    solved at rate R + delta. Threshold: E_one takes the max over colluders and
    E_all the min. Joint: E_one is the all-colluder subset and E_all the min
    over subsets. Both are then minimized over the covertext tilt p~_{S|W} on a
    simplex mesh refined once around each incumbent.
    """
    if delta <= 0:
        raise InvalidInputError("Delta must be positive")
    fair = base.cls.fair_only
    K = base.K
    members = _members(base.variant, K, fair)
    full = tuple(range(K))
    L_w, n_s = base.p_S_given_W.shape
    rated = base.with_rate(base.R + delta)

    per_w = simplex_points(n_s, mesh)
    check_count("tilt mesh points", len(per_w) ** L_w, get_enum_cap())
    mesh_points = [np.array(c) for c in itertools.product(per_w, repeat=L_w)]

    def tilt_divergence(tilt: np.ndarray) -> float:
        return float(sum(base.p_W[w] * divergence(tilt[w], base.p_S) for w in range(L_w) if base.p_W[w] > 0))

    state = {"one": float("inf"), "all": float("inf"), "tilt_one": None, "tilt_all": None, "gap": None}
    points: list[dict[str, Any]] = []
    flags: list[str] = []

    def visit(tilt: np.ndarray) -> None:
        d = tilt_divergence(tilt)
        if not np.isfinite(d) or (d >= state["one"] and d >= state["all"]):
            return
        values: dict[tuple[int, ...], float] = {}
        for member in members:
            if base.variant == "threshold":
                prob = replace(rated, p_S_given_W=tilt, colluder=member[0])
            else:
                prob = replace(rated, p_S_given_W=tilt, subset=member)
            values[member] = solve_exponent(prob).value
        if base.variant == "threshold":
            e_one, e_all = max(values.values()), min(values.values())
        else:
            e_one, e_all = values[full], min(values.values())
            if fair:
                gap = e_one - e_all
                state["gap"] = gap if state["gap"] is None else max(state["gap"], gap)
                if gap > COLLAPSE_TOL and "fair collapse violated" not in flags:
                    flags.append("fair collapse violated")
        points.append(
            {"tilt": tilt.tolist(), "divergence": d, "E_one": _json_float(e_one), "E_all": _json_float(e_all)}
        )
        if e_one < state["one"]:
            state["one"], state["tilt_one"] = e_one, tilt
        if e_all < state["all"]:
            state["all"], state["tilt_all"] = e_all, tilt

    for tilt in sorted(mesh_points, key=tilt_divergence):
        visit(tilt)
    if refine:
        for key in ("tilt_one", "tilt_all"):
            center = state[key]
            if center is None:
                continue
            for tilt in local_box_mesh(center, 1.0 / mesh, 5):
                visit(tilt)

    if state["all"] > state["one"] + 1e-12:
        raise InvariantViolation("Detect-all exponent exceeds detect-one exponent")
    log_event("exponent_suite", "ok", variant=base.variant, E_one=state["one"], E_all=state["all"], delta=delta)
    return ExponentSuite(
        variant=base.variant,
        E_FP=float(delta),
        E_one=state["one"],
        E_all=state["all"],
        tilt_one=state["tilt_one"],
        tilt_all=state["tilt_all"],
        points=points,
        fair_collapse_gap=state["gap"],
        flags=flags,
    )


def watermark_exponent(base: ExponentProblem, delta: float, mesh: int = 16) -> ExponentSuite:
    """Blind watermarking: the joint variant with a single colluder and L_w = 1."""
    if base.K != 1 or base.p_W.size != 1:
        raise InvalidInputError("Watermarking exponents need K = 1 and L_w = 1")
    return exponent_suite(replace(base, variant="joint", subset=(0,)), delta, mesh=mesh)
