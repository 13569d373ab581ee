"""Versioned JSON configuration documents.

Every document carries ``"schema": 1``. Models only hold and validate data;
the ``build_*`` helpers turn them into the domain objects used by the harness,
the optimizers and the lemma checks.
"""

import json
from pathlib import Path
from typing import Any, Literal, Optional, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .attack_model import (
    ESTIMATORS,
    NAMED_ATTACKS,
    CollusionChannelSpec,
    CollusionClassSpec,
    SourceSpec,
    hamming_table,
    make_class,
    reference_from_design,
)
from .codec import DEFAULT_DELTA, DEFAULT_EPSILON, SchemeParams
from .errors import InvalidConfigError, InvalidInputError
from .keys import KeyMaterial, coerce_key
from .limits import MAX_LEMMA_N, MAX_ORACLE_OUTPUTS, validate_blocklength

SCHEMA_VERSION = 1
ATTACK_NAMES = tuple(NAMED_ATTACKS) + ("table", "adversarial-search")

M = TypeVar("M", bound="_Document")


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)


class _Document(_Model):
    schema_version: Literal[1] = Field(SCHEMA_VERSION, alias="schema")


class SourceModel(_Model):
    """Covertext source; ``h`` is only read for the semiprivate kind."""

    kind: Literal["private", "public", "semiprivate"] = "public"
    p_S: list[float] = Field(..., min_length=1)
    h: Optional[list[int]] = None

    @model_validator(mode="after")
    def check_h(self) -> "SourceModel":
        if self.kind == "semiprivate" and (self.h is None or len(self.h) != len(self.p_S)):
            raise ValueError("semiprivate sources need h with one entry per covertext symbol")
        return self

    def build(self) -> SourceSpec:
        if self.kind == "private":
            return SourceSpec.private(self.p_S)
        if self.kind == "public":
            return SourceSpec.public(self.p_S)
        return SourceSpec.semiprivate(self.p_S, self.h)


class DesignModel(_Model):
    """
    Design p.m.f.s.

    ``explicit`` reads p_XU|SW verbatim (shape |S| x L_w x |X| x L_u).
    ``mix`` builds p(x,u|s,w) = p_U(u) [(1-a) 1[x = s mod |X|] + a 1[x = u mod |X|]],
    the same for every w.
    """

    preset: Literal["explicit", "mix"] = "mix"
    p_W: list[float] = Field(default_factory=lambda: [1.0])
    p_XU_given_SW: Optional[list] = None
    a: float = Field(0.5, ge=0.0, le=1.0)
    p_U: Optional[list[float]] = None

    @model_validator(mode="after")
    def check_preset(self) -> "DesignModel":
        if self.preset == "explicit" and self.p_XU_given_SW is None:
            raise ValueError("explicit designs need p_XU_given_SW")
        return self

    def build(self, n_s: int, n_x: int, L_u: int) -> tuple[np.ndarray, np.ndarray]:
        p_W = np.asarray(self.p_W, dtype=float)
        if self.preset == "explicit":
            return p_W, np.asarray(self.p_XU_given_SW, dtype=float)
        p_U = np.full(L_u, 1.0 / L_u) if self.p_U is None else np.asarray(self.p_U, dtype=float)
        if p_U.size != L_u:
            raise InvalidInputError("p_U must have L_u entries")
        design = np.zeros((n_s, p_W.size, n_x, L_u))
        for s in range(n_s):
            for u in range(L_u):
                design[s, :, s % n_x, u] += (1.0 - self.a) * p_U[u]
                design[s, :, u % n_x, u] += self.a * p_U[u]
        return p_W, design


class SchemeModel(_Model):
    R: float = Field(..., ge=0.0)
    n_x: int = Field(2, ge=1)
    n_y: int = Field(2, ge=1)
    L_u: int = Field(2, ge=1)
    d1: Optional[list[list[float]]] = None
    D1: float = Field(..., ge=0.0)
    delta: float = Field(DEFAULT_DELTA, gt=0.0)
    eps: float = Field(DEFAULT_EPSILON, gt=0.0)
    K_nom: int = Field(2, ge=1)
    design: DesignModel = Field(default_factory=DesignModel)

    def build(self, source: SourceSpec, N: int) -> SchemeParams:
        p_W, design = self.design.build(source.n_s, self.n_x, self.L_u)
        d1 = hamming_table(source.n_s, self.n_x) if self.d1 is None else np.asarray(self.d1, dtype=float)
        return SchemeParams(
            N=int(N),
            R=self.R,
            source=source,
            d1=d1,
            D1=self.D1,
            n_x=self.n_x,
            n_y=self.n_y,
            L_u=self.L_u,
            L_w=int(p_W.size),
            p_W=p_W,
            p_XU_given_SW=design,
            delta=self.delta,
            eps=self.eps,
            K_nom=self.K_nom,
        )


class ClassModel(_Model):
    """
    Collusion class W_K.

    ``reference`` is "uniform", "design" (p_X_K induced by the scheme design)
    or an explicit nested list of shape (|X|,)*K.
    """

    K: int = Field(..., ge=1, le=4)
    D2: float = Field(..., ge=0.0)
    estimator: str = "majority"
    d2: Optional[list[list[float]]] = None
    reference: Union[Literal["uniform", "design"], list] = "uniform"
    fair_only: bool = False
    kind: Literal["expected-distortion", "explicit-polytope"] = "expected-distortion"
    A: Optional[list[list[float]]] = None
    b: Optional[list[float]] = None

    @field_validator("estimator")
    @classmethod
    def known_estimator(cls, v: str) -> str:
        if v not in ESTIMATORS:
            raise ValueError(f"unknown estimator {v!r}; choose from {sorted(ESTIMATORS)}")
        return v

    def build(self, n_x: int, n_y: int, design_reference: Optional[np.ndarray] = None) -> CollusionClassSpec:
        if self.reference == "design":
            if design_reference is None:
                raise InvalidInputError("reference 'design' needs a scheme design")
            reference = design_reference
        elif self.reference == "uniform":
            reference = None
        else:
            reference = np.asarray(self.reference, dtype=float)
        d2 = None if self.d2 is None else np.asarray(self.d2, dtype=float)
        base = make_class(self.K, n_x, n_y, self.D2, reference=reference, estimator=self.estimator, d2=d2,
                          fair_only=self.fair_only)
        if self.kind == "explicit-polytope":
            return CollusionClassSpec(
                K=base.K, n_x=n_x, n_y=n_y, phi=base.phi, d2=base.d2, D2=base.D2, reference=base.reference,
                kind=self.kind, fair_only=self.fair_only, A=np.asarray(self.A), b=np.asarray(self.b),
            )
        return base


class AttackModel(_Model):
    """A named attack, an explicit table, or the adversarial search family."""

    name: str
    table: Optional[list] = None
    mode: Literal["memoryless", "exchangeable"] = "memoryless"
    rounding: Literal["strict", "largest-remainder"] = "largest-remainder"
    alpha: float = Field(0.0, ge=0.0, le=1.0)
    colluder: int = Field(0, ge=0)
    n_random: int = Field(64, ge=0)

    @field_validator("name")
    @classmethod
    def known_attack(cls, v: str) -> str:
        if v not in ATTACK_NAMES:
            raise ValueError(f"unknown attack {v!r}; choose from {list(ATTACK_NAMES)}")
        return v

    @model_validator(mode="after")
    def check_table(self) -> "AttackModel":
        if self.name == "table" and self.table is None:
            raise ValueError("attack 'table' needs a table")
        return self

    @property
    def label(self) -> str:
        return self.name if self.mode == "memoryless" else f"{self.name}:exchangeable"

    def build(self, K: int, n_x: int, n_y: int) -> CollusionChannelSpec:
        """Executable channel for K colluders (the adversarial family is built by the harness)."""
        if self.name == "adversarial-search":
            raise InvalidInputError("The adversarial family is not a single channel")
        if self.name == "table":
            channel = CollusionChannelSpec(K=K, n_x=n_x, n_y=n_y, table=np.asarray(self.table, dtype=float),
                                           name="table")
        else:
            kwargs: dict[str, Any] = {}
            if self.name == "majority":
                kwargs["alpha"] = self.alpha
            if self.name == "copy":
                kwargs["colluder"] = self.colluder
            channel = NAMED_ATTACKS[self.name](K, n_x, n_y, **kwargs)
        if self.mode == "exchangeable":
            return CollusionChannelSpec(
                K=K, n_x=n_x, n_y=n_y, mode="exchangeable", assignment=((channel.table, 1.0),),
                rounding=self.rounding, name=f"exch({channel.name})",
            )
        return channel


class DecoderModel(_Model):
    kind: Literal["threshold", "m2pmi"] = "threshold"
    k_max: Optional[int] = Field(None, ge=0)
    pool_size: int = Field(12, ge=1)


class ExperimentConfig(_Document):
    """Monte Carlo campaign over a blocklength grid."""

    source: SourceModel
    scheme: SchemeModel
    collusion_class: ClassModel = Field(..., alias="class")
    attacks: list[AttackModel] = Field(..., min_length=1)
    decoder: DecoderModel = Field(default_factory=DecoderModel)
    n_grid: list[int] = Field(..., min_length=1)
    trials: int = Field(..., ge=1)
    coalition_size: Optional[int] = Field(None, ge=0)
    seed: Union[int, str] = 0
    output: str = "results"
    workers: Optional[int] = Field(None, ge=1)
    reference_draws: int = Field(10_000, ge=1)
    trial_log: bool = False

    @field_validator("n_grid")
    @classmethod
    def increasing_grid(cls, v: list[int]) -> list[int]:
        for n in v:
            ok, error = validate_blocklength(n)
            if not ok:
                raise ValueError(error)
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("n_grid must be strictly increasing")
        return v

    @field_validator("seed")
    @classmethod
    def valid_seed(cls, v: Union[int, str]) -> Union[int, str]:
        if isinstance(v, str):
            try:
                KeyMaterial.from_hex(v)
            except InvalidInputError as e:
                raise ValueError(str(e)) from e
        return v

    @property
    def K(self) -> int:
        """Actual coalition size (0 runs noise trials with no colluders)."""
        return self.collusion_class.K if self.coalition_size is None else self.coalition_size

    def master_key(self) -> KeyMaterial:
        return coerce_key(self.seed)

    def build_source(self) -> SourceSpec:
        return self.source.build()

    def build_scheme(self, N: int) -> SchemeParams:
        return self.scheme.build(self.build_source(), N)

    def build_class(self, params: Optional[SchemeParams] = None) -> CollusionClassSpec:
        design_ref = None
        if params is not None and self.collusion_class.reference == "design":
            design_ref = reference_from_design(
                params.source.p_S, params.p_W, params.p_X_given_SW(), self.collusion_class.K
            )
        return self.collusion_class.build(self.scheme.n_x, self.scheme.n_y, design_ref)


class OracleConfig(ExperimentConfig):
    """Exhaustive-output validation of the Monte Carlo estimates."""

    cells: int = Field(30, ge=1)
    mc_trials: int = Field(10_000, ge=1)
    compare_decoders: bool = True

    @model_validator(mode="after")
    def small_outputs(self) -> "OracleConfig":
        for n in self.n_grid:
            if self.scheme.n_y**n > MAX_ORACLE_OUTPUTS:
                raise ValueError(f"|Y|^N = {self.scheme.n_y}^{n} exceeds {MAX_ORACLE_OUTPUTS}")
        return self


class ExponentTask(_Model):
    operation: Literal["solve", "curve", "suite", "watermark"] = "solve"
    problem: dict[str, Any]
    rates: Optional[list[float]] = None
    delta: float = Field(0.1, gt=0.0)
    mesh: int = Field(16, ge=1)
    oracle: bool = True

    @model_validator(mode="after")
    def rates_for_curve(self) -> "ExponentTask":
        if self.operation == "curve" and not self.rates:
            raise ValueError("curve tasks need rates")
        return self


class ExponentBatch(_Document):
    tasks: list[ExponentTask] = Field(..., min_length=1)
    output: str = "exponents"


class RateConfig(_Document):
    source: SourceModel
    n_x: int = Field(2, ge=1)
    n_y: int = Field(2, ge=1)
    d1: Optional[list[list[float]]] = None
    D1: float = Field(..., ge=0.0)
    collusion_class: ClassModel = Field(..., alias="class")
    kinds: list[Literal["thr", "joint-one", "joint-all", "upper"]] = Field(
        default_factory=lambda: ["thr", "joint-one", "joint-all", "upper"], min_length=1
    )
    L_u: int = Field(2, ge=1, le=3)
    L_w: int = Field(1, ge=1, le=2)
    restarts: int = Field(8, ge=1)
    seed: int = 0
    force_u_equals_x: bool = False
    levels: Optional[list[int]] = None
    private_capacity: bool = False
    output: str = "rates"

    def build_problem(self):
        from .rate_bounds import RateProblem

        source = self.source.build()
        d1 = hamming_table(source.n_s, self.n_x) if self.d1 is None else np.asarray(self.d1, dtype=float)
        if self.collusion_class.reference == "design":
            raise InvalidInputError("Rate problems need a fixed class reference ('uniform' or explicit)")
        return RateProblem(
            source=source,
            d1=d1,
            D1=self.D1,
            cls=self.collusion_class.build(self.n_x, self.n_y),
            L_u=self.L_u,
            L_w=self.L_w,
            restarts=self.restarts,
            seed=self.seed,
            force_u_equals_x=self.force_u_equals_x,
        )


class LemmaConfig(_Document):
    """Tiny instances for the finite-N type-counting checks."""

    N: int = Field(6, ge=1, le=MAX_LEMMA_N)
    K: int = Field(2, ge=1, le=3)
    L_u: int = Field(2, ge=1, le=3)
    n_z: int = Field(2, ge=1, le=3)
    n_cells: int = Field(1, ge=1, le=2)
    p_u: Optional[list[float]] = None
    nu: list[float] = Field(default_factory=lambda: [0.1, 0.25, 0.5])
    mc_trials: int = Field(2000, ge=1)
    brute_force_N: int = Field(6, ge=1, le=6)
    prt_N: int = Field(4, ge=1, le=6)
    psw_max_N: int = Field(8, ge=1, le=MAX_LEMMA_N)
    p_S: list[float] = Field(default_factory=lambda: [0.7, 0.3])
    L_w: int = Field(2, ge=1, le=3)
    seed: int = 0

    @field_validator("p_S")
    @classmethod
    def full_support(cls, v: list[float]) -> list[float]:
        if any(p <= 0 for p in v) or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError("p_S must be a full-support p.m.f.")
        return v


def load_config(path: Union[str, Path], model: Type[M]) -> M:
    """
    Read and validate a JSON configuration document.

    Raises:
        InvalidConfigError: unreadable file, bad JSON or failed validation
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise InvalidConfigError(f"Cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InvalidConfigError(f"Invalid JSON in {path}: {e}") from e
    return parse_config(data, model)


def parse_config(data: Any, model: Type[M]) -> M:
    if not isinstance(data, dict):
        raise InvalidConfigError("Config must be a JSON object")
    if data.get("schema") != SCHEMA_VERSION:
        raise InvalidConfigError(f"Config must declare \"schema\": {SCHEMA_VERSION}")
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise InvalidConfigError(f"Invalid {model.__name__}: {e}") from e


def config_document(cfg: BaseModel) -> dict[str, Any]:
    """JSON-ready dict of a validated config, with aliases (``schema``, ``class``)."""
    return cfg.model_dump(mode="json", by_alias=True)
