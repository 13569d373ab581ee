"""Method-of-types machinery.

Types, conditional types, type-class sizes, uniform sampling and enumeration of
type classes, and empirical/p.m.f. information measures. All information
quantities are in bits.
"""

from dataclasses import dataclass, field
from math import comb, log2
from typing import Iterator, Optional, Sequence as SequenceT, Union

import numpy as np
from scipy.special import gammaln

from .errors import InvalidInputError, InvariantViolation
from .limits import check_count, get_enum_cap, validate_alphabet_size

LN2 = np.log(2.0)
PMF_TOL = 1e-12

ArrayLike = Union[np.ndarray, SequenceT[int]]


@dataclass(frozen=True)
class Alphabet:
    """Finite alphabet {0, ..., size-1}."""

    size: int
    name: str = ""

    def __post_init__(self) -> None:
        valid, error = validate_alphabet_size(self.size)
        if not valid:
            raise InvalidInputError(error or "invalid alphabet")


def as_sequence(symbols: ArrayLike, alphabet: Optional[Alphabet] = None) -> np.ndarray:
    """
    Convert symbols into a validated integer sequence.

    Args:
        symbols: Iterable of alphabet indices
        alphabet: Optional alphabet to check against

    Returns:
        1-D int64 array
    """
    seq = np.asarray(symbols, dtype=np.int64).ravel()
    if alphabet is not None and seq.size:
        if seq.min() < 0 or seq.max() >= alphabet.size:
            raise InvalidInputError(f"Symbol out of alphabet of size {alphabet.size}")
    return seq


@dataclass(frozen=True)
class TypeTable:
    """
    Exact count table of a joint or conditional type.

    The first ``n_cond`` axes are conditioning axes, the rest are target axes.
    A conditional type p_{y|x} is stored through the joint counts of (x, y);
    the conditioning counts are the marginal over target axes.
    """

    counts: np.ndarray
    n_cond: int = 0

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim < 1:
            raise InvalidInputError("TypeTable needs at least one axis")
        if np.any(counts < 0):
            raise InvalidInputError("Type counts must be nonnegative")
        if not 0 <= self.n_cond < counts.ndim:
            raise InvalidInputError("n_cond must leave at least one target axis")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def cond_shape(self) -> tuple[int, ...]:
        return self.counts.shape[: self.n_cond]

    @property
    def target_shape(self) -> tuple[int, ...]:
        return self.counts.shape[self.n_cond :]

    @property
    def cond_counts(self) -> np.ndarray:
        """Counts of the conditioning cells (shape cond_shape, scalar-shaped () if unconditional)."""
        axes = tuple(range(self.n_cond, self.counts.ndim))
        return self.counts.sum(axis=axes)

    @property
    def pmf(self) -> np.ndarray:
        """Joint empirical p.m.f. counts/N."""
        return self.counts / max(self.total, 1)

    def conditional_pmf(self) -> np.ndarray:
        """p(target | cond); slices with zero conditioning count are all-zero."""
        cc = self.cond_counts.reshape(self.cond_shape + (1,) * len(self.target_shape))
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(cc > 0, self.counts / np.maximum(cc, 1), 0.0)
        return out

    def flat(self) -> np.ndarray:
        """Counts as a (conditioning cells, target cells) matrix."""
        n_c = int(np.prod(self.cond_shape, dtype=np.int64)) if self.n_cond else 1
        return self.counts.reshape(n_c, -1)

    def key(self) -> tuple[int, ...]:
        """Hashable identity of the table."""
        return tuple(int(c) for c in self.counts.ravel())


def empirical_type(seq: ArrayLike, alphabet: Alphabet) -> TypeTable:
    """
    Type of a sequence.

    Args:
        seq: Nonempty sequence over alphabet
        alphabet: Symbol alphabet

    Returns:
        TypeTable with counts[a] = #{i : seq_i = a}
    """
    s = as_sequence(seq, alphabet)
    if s.size == 0:
        raise InvalidInputError("Sequence must be nonempty")
    return TypeTable(np.bincount(s, minlength=alphabet.size))


def joint_and_conditional_type(
    seqs: SequenceT[ArrayLike],
    alphabets: Optional[SequenceT[Union[Alphabet, int]]] = None,
    n_cond: int = 0,
) -> TypeTable:
    """
    Joint type of several equal-length sequences.

    Args:
        seqs: Sequences, one per axis
        alphabets: Alphabet (or size) per sequence; inferred as max symbol + 1 if omitted
        n_cond: How many leading sequences act as conditioning

    Returns:
        TypeTable of joint counts with n_cond conditioning axes
    """
    if len(seqs) == 0:
        raise InvalidInputError("Need at least one sequence")
    arrays = [as_sequence(s) for s in seqs]
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise InvalidInputError("All sequences must have the same length")
    if alphabets is None:
        sizes = [int(a.max()) + 1 if a.size else 1 for a in arrays]
    else:
        if len(alphabets) != len(arrays):
            raise InvalidInputError("One alphabet per sequence required")
        sizes = [a.size if isinstance(a, Alphabet) else int(a) for a in alphabets]
    for a, k in zip(arrays, sizes):
        if a.size and (a.min() < 0 or a.max() >= k):
            raise InvalidInputError(f"Symbol out of alphabet of size {k}")
    shape = tuple(sizes)
    if n == 0:
        return TypeTable(np.zeros(shape, dtype=np.int64), n_cond=n_cond)
    flat = np.ravel_multi_index(tuple(arrays), shape)
    counts = np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)
    return TypeTable(counts, n_cond=n_cond)


def log_type_class_size(t: TypeTable) -> float:
    """
    log2 of the number of sequences in a (conditional) type class.

    For a conditional table this is the product over conditioning cells of the
    multinomial coefficients, computed with log-gamma.
    """
    flat = t.flat().astype(float)
    n_c = flat.sum(axis=1)
    nats = np.sum(gammaln(n_c + 1.0)) - np.sum(gammaln(flat + 1.0))
    return float(max(nats, 0.0) / LN2)


def _flatten_conditioning(conditioning, n_cond_cells_shape: tuple[int, ...]) -> np.ndarray:
    if isinstance(conditioning, np.ndarray) and conditioning.ndim == 1:
        return conditioning.astype(np.int64)
    if isinstance(conditioning, (list, tuple)) and conditioning and np.ndim(conditioning[0]) == 1:
        arrays = [as_sequence(c) for c in conditioning]
        if len(arrays) != len(n_cond_cells_shape):
            raise InvalidInputError("Conditioning sequences do not match conditioning axes")
        return np.ravel_multi_index(tuple(arrays), n_cond_cells_shape)
    return as_sequence(conditioning)


def sample_uniform_in_type_class(
    t: TypeTable,
    conditioning=None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Draw a sequence uniformly from a (conditional) type class.

    Composition-respecting shuffle: the counted symbols of each conditioning
    cell are placed on that cell's positions in uniformly random order.

    Args:
        t: Type table; target symbols are returned as flat target-cell indices
        conditioning: Conditioning sequence (flat cell indices) or one sequence
            per conditioning axis; required when t.n_cond > 0
        rng: numpy Generator

    Returns:
        Sequence whose joint type with the conditioning sequence equals t
    """
    rng = rng if rng is not None else np.random.default_rng()
    flat = t.flat()
    n_target = flat.shape[1]
    symbols = np.arange(n_target, dtype=np.int64)

    if t.n_cond == 0:
        out = rng.permutation(np.repeat(symbols, flat[0]))
        return out

    if conditioning is None:
        raise InvalidInputError("Conditional type class needs a conditioning sequence")
    cond = _flatten_conditioning(conditioning, t.cond_shape)
    n_cells = flat.shape[0]
    if cond.size and (cond.min() < 0 or cond.max() >= n_cells):
        raise InvalidInputError("Conditioning symbol out of range")
    cond_counts = np.bincount(cond, minlength=n_cells)
    if not np.array_equal(cond_counts, flat.sum(axis=1)):
        raise InvalidInputError("Conditioning sequence type does not match the conditional type")

    fill = np.repeat(np.tile(symbols, n_cells), flat.ravel())
    # positions grouped by cell, uniformly permuted inside each group
    order = np.lexsort((rng.permutation(cond.size), cond))
    out = np.empty(cond.size, dtype=np.int64)
    out[order] = fill

    check = np.bincount(cond * n_target + out, minlength=n_cells * n_target)
    if not np.array_equal(check, flat.ravel()):
        raise InvariantViolation("Sampled sequence left its type class")
    return out


def _compositions(n: int, allowed: np.ndarray) -> list[tuple[int, ...]]:
    """All ways to write n as an ordered sum over the allowed slots (lexicographic, first slot largest)."""
    k = allowed.size
    slots = [i for i in range(k) if allowed[i]]
    if not slots:
        return [tuple([0] * k)] if n == 0 else []
    result: list[tuple[int, ...]] = []

    def rec(idx: int, remaining: int, acc: list[int]) -> None:
        if idx == len(slots) - 1:
            acc.append(remaining)
            row = [0] * k
            for s, c in zip(slots, acc):
                row[s] = c
            result.append(tuple(row))
            acc.pop()
            return
        for c in range(remaining, -1, -1):
            acc.append(c)
            rec(idx + 1, remaining - c, acc)
            acc.pop()

    rec(0, n, [])
    return result


def count_conditional_types(cond_counts: np.ndarray, n_target: int, support: Optional[np.ndarray] = None) -> int:
    """Number of conditional types realizable given the conditioning counts."""
    cc = np.asarray(cond_counts, dtype=np.int64).ravel()
    total = 1
    for c, n_c in enumerate(cc):
        k = n_target if support is None else int(np.count_nonzero(support.reshape(cc.size, -1)[c]))
        if n_c == 0:
            continue
        if k == 0:
            return 0
        total *= comb(int(n_c) + k - 1, k - 1)
    return total


def enumerate_conditional_types(
    N: int,
    target: Union[Alphabet, int],
    conditioning_type: Optional[TypeTable] = None,
    support: Optional[np.ndarray] = None,
    cap: Optional[int] = None,
) -> Iterator[TypeTable]:
    """
    Every conditional type realizable at blocklength N, each exactly once.

    Args:
        N: Blocklength
        target: Target alphabet (or its size)
        conditioning_type: Unconditional TypeTable of the conditioning sequence;
            None enumerates plain types of length N
        support: Optional boolean mask (conditioning cells x target) of allowed
            target symbols per cell
        cap: Enumeration cap; defaults to FPBENCH_ENUM_CAP

    Yields:
        TypeTable with the conditioning axes of conditioning_type plus one target axis
    """
    n_target = target.size if isinstance(target, Alphabet) else int(target)
    if conditioning_type is None:
        cond_shape: tuple[int, ...] = ()
        cond_counts = np.array([N], dtype=np.int64)
    else:
        if conditioning_type.n_cond != 0:
            raise InvalidInputError("conditioning_type must be an unconditional type")
        cond_shape = conditioning_type.counts.shape
        cond_counts = conditioning_type.counts.ravel()
        if int(cond_counts.sum()) != N:
            raise InvalidInputError("Conditioning type does not have blocklength N")
    mask = (
        np.ones((cond_counts.size, n_target), dtype=bool)
        if support is None
        else np.asarray(support, dtype=bool).reshape(cond_counts.size, n_target)
    )

    cap = cap if cap is not None else get_enum_cap()
    count = count_conditional_types(cond_counts, n_target, mask)
    if count > cap:
        bound = float(N + 1) ** (n_target * cond_counts.size)
        check_count(f"conditional type enumeration (bound (N+1)^cells = {bound:.3g})", count, cap)

    per_cell = [
        _compositions(int(n_c), mask[c]) if n_c > 0 else [tuple([0] * n_target)]
        for c, n_c in enumerate(cond_counts)
    ]
    if any(len(p) == 0 for p in per_cell):
        return

    shape = cond_shape + (n_target,)
    n_cond = len(cond_shape)
    idx = [0] * len(per_cell)
    while True:
        counts = np.array([per_cell[c][idx[c]] for c in range(len(per_cell))], dtype=np.int64)
        yield TypeTable(counts.reshape(shape), n_cond=n_cond)
        # odometer, last cell fastest
        pos = len(per_cell) - 1
        while pos >= 0:
            idx[pos] += 1
            if idx[pos] < len(per_cell[pos]):
                break
            idx[pos] = 0
            pos -= 1
        if pos < 0:
            return


# ---------------------------------------------------------------------------
# Empirical information measures
# ---------------------------------------------------------------------------


def combine_labels(seqs: SequenceT[ArrayLike]) -> np.ndarray:
    """Map a tuple of sequences to one label sequence (distinct tuples, distinct labels)."""
    if len(seqs) == 0:
        raise InvalidInputError("Need at least one sequence")
    arrays = [as_sequence(s) for s in seqs]
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise InvalidInputError("All sequences must have the same length")
    label = np.zeros(n, dtype=np.int64)
    for a in arrays:
        radix = int(a.max()) + 1 if a.size else 1
        label = label * radix + a
        if label.size and label.max() > 2**40:
            label = np.unique(label, return_inverse=True)[1].astype(np.int64)
    return label


def label_entropy(labels: np.ndarray) -> float:
    """Empirical entropy (bits) of a label sequence."""
    n = labels.size
    if n == 0:
        return 0.0
    counts = np.bincount(labels) if labels.max() < 4 * n + 64 else np.unique(labels, return_counts=True)[1]
    counts = counts[counts > 0].astype(float)
    return float(log2(n) - np.dot(counts, np.log2(counts)) / n)


def _entropy_of(seqs: SequenceT[ArrayLike]) -> float:
    return label_entropy(combine_labels(seqs))


def empirical_info(
    seqs: SequenceT[Union[ArrayLike, SequenceT[ArrayLike]]],
    conditioning: Optional[SequenceT[ArrayLike]] = None,
    form: str = "multi",
) -> float:
    """
    Empirical information measure of sequences.

    Each entry of ``seqs`` is one variable: a sequence, or a list of sequences
    taken jointly.

    Args:
        seqs: Variables
        conditioning: Sequences to condition on (z)
        form: "entropy" (joint H(seqs|z)), "mi" (I(x_1; x_2|z), two variables),
            or "multi" (multi-information sum_i H(x_i|z) - H(x_1..x_k|z))

    Returns:
        Value in bits, clamped at 0 for the information forms
    """
    variables = [list(v) if _is_group(v) else [v] for v in seqs]
    cond = list(conditioning) if conditioning is not None else []
    h_z = _entropy_of(cond) if cond else 0.0

    def h_given(parts: list) -> float:
        return _entropy_of(parts + cond) - h_z

    if form == "entropy":
        return h_given([s for v in variables for s in v])
    if form == "mi" and len(variables) != 2:
        raise InvalidInputError("Pairwise mutual information needs exactly two variables")
    if form not in ("mi", "multi"):
        raise InvalidInputError(f"Unknown information form: {form}")
    total = sum(h_given(v) for v in variables) - h_given([s for v in variables for s in v])
    return max(total, 0.0)


# ---------------------------------------------------------------------------
# P.m.f. values and p.m.f.-level measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pmf:
    """(Conditional) p.m.f.; the first ``n_cond`` axes are conditioning axes."""

    probabilities: np.ndarray
    n_cond: int = 0
    tol: float = field(default=PMF_TOL, compare=False)

    def __post_init__(self) -> None:
        p = np.asarray(self.probabilities, dtype=float)
        if np.any(~np.isfinite(p)) or np.any(p < -self.tol):
            raise InvalidInputError("P.m.f. entries must be finite and nonnegative")
        axes = tuple(range(self.n_cond, p.ndim))
        sums = p.sum(axis=axes)
        if np.any(np.abs(sums - 1.0) > max(self.tol, 1e-12 * p.size)):
            raise InvalidInputError("P.m.f. slices must sum to 1")
        object.__setattr__(self, "probabilities", np.clip(p, 0.0, None))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.probabilities.shape


def as_pmf(p, n_cond: int = 0) -> Pmf:
    return p if isinstance(p, Pmf) else Pmf(np.asarray(p, dtype=float), n_cond=n_cond)


def _xlogx_sum(p: np.ndarray) -> float:
    q = p[p > 0]
    return float(-np.dot(q, np.log2(q)))


def entropy_pmf(p: np.ndarray, axes: SequenceT[int]) -> float:
    """Entropy (bits) of the marginal of a joint array onto ``axes``."""
    p = np.asarray(p, dtype=float)
    axes = tuple(sorted(set(axes)))
    if not axes:
        return 0.0
    other = tuple(i for i in range(p.ndim) if i not in axes)
    marg = p.sum(axis=other) if other else p
    return _xlogx_sum(marg)


def mutual_information_pmf(
    p: np.ndarray,
    a_axes: SequenceT[int],
    b_axes: SequenceT[int],
    given_axes: SequenceT[int] = (),
) -> float:
    """I(A; B | G) of a joint array, axes grouped as given."""
    a, b, g = tuple(a_axes), tuple(b_axes), tuple(given_axes)
    val = entropy_pmf(p, a + g) + entropy_pmf(p, b + g) - entropy_pmf(p, a + b + g) - entropy_pmf(p, g)
    return max(val, 0.0)


def multi_information_pmf(
    p: np.ndarray,
    groups: SequenceT[SequenceT[int]],
    given_axes: SequenceT[int] = (),
) -> float:
    """sum_i H(group_i | G) - H(all groups | G)."""
    g = tuple(given_axes)
    h_g = entropy_pmf(p, g)
    joint = tuple(ax for grp in groups for ax in grp)
    val = sum(entropy_pmf(p, tuple(grp) + g) - h_g for grp in groups) - (entropy_pmf(p, joint + g) - h_g)
    return max(val, 0.0)


def info_from_table(
    t: TypeTable,
    groups: SequenceT[SequenceT[int]],
    given_axes: SequenceT[int] = (),
) -> float:
    """Multi-information over the axes of a type table (two groups give ordinary MI)."""
    return multi_information_pmf(t.pmf, groups, given_axes)


def divergence(p, q, conditioning=None) -> float:
    """
    Kullback-Leibler divergence in bits.

    With ``conditioning`` (p.m.f. of the leading axes of p and q), returns the
    conditional divergence D(p_{Y|X} || q_{Y|X} | p_X). Returns +inf when q
    vanishes somewhere p has mass.
    """
    pa = np.asarray(p.probabilities if isinstance(p, Pmf) else p, dtype=float)
    qa = np.asarray(q.probabilities if isinstance(q, Pmf) else q, dtype=float)
    if pa.shape != qa.shape:
        raise InvalidInputError("Divergence arguments must have the same shape")
    if conditioning is not None:
        w = np.asarray(conditioning.probabilities if isinstance(conditioning, Pmf) else conditioning, dtype=float)
        w = w.reshape(w.shape + (1,) * (pa.ndim - w.ndim))
        pa = pa * w
        qa = qa * w
    mask = pa > 0
    if np.any(qa[mask] <= 0):
        return float("inf")
    val = float(np.sum(pa[mask] * np.log2(pa[mask] / qa[mask])))
    return max(val, 0.0)


def exact_type_probability(t: TypeTable, source, conditioning: Optional[ArrayLike] = None) -> float:
    """
    Exact log2 probability that an i.i.d. draw lands in a (conditional) type class.

    Args:
        t: Type table; for a conditional table the conditioning counts are those
            of the conditioning sequence
        source: P.m.f. over the target alphabet, or a conditional p.m.f. with the
            same leading axes as t
        conditioning: Optional conditioning sequence, checked against t

    Returns:
        log2 Pr[T], -inf when the source misses the type's support
    """
    src = np.asarray(source.probabilities if isinstance(source, Pmf) else source, dtype=float)
    if src.shape != t.counts.shape:
        src = np.broadcast_to(src, t.counts.shape)
    if conditioning is not None and t.n_cond:
        cond = _flatten_conditioning(conditioning, t.cond_shape)
        if not np.array_equal(np.bincount(cond, minlength=t.flat().shape[0]), t.flat().sum(axis=1)):
            raise InvalidInputError("Conditioning sequence does not match the type's conditioning counts")
    mask = t.counts > 0
    if np.any(src[mask] <= 0):
        return float("-inf")
    return log_type_class_size(t) + float(np.sum(t.counts[mask] * np.log2(src[mask])))


def largest_remainder(total: int, probs: ArrayLike) -> np.ndarray:
    """
    Apportion ``total`` counts proportionally to ``probs``.

    Floors first, then hands the remainder to the largest fractional parts;
    ties go to the lowest index.
    """
    p = np.asarray(probs, dtype=float).ravel()
    s = p.sum()
    if total == 0 or s <= 0:
        return np.zeros(p.size, dtype=np.int64)
    ideal = total * p / s
    base = np.floor(ideal + 1e-12).astype(np.int64)
    rem = int(total - base.sum())
    if rem > 0:
        frac = ideal - base
        order = np.lexsort((np.arange(p.size), -np.round(frac, 12)))
        base[order[:rem]] += 1
    return base


def quantize_conditional(cond_counts: ArrayLike, cond_pmf: np.ndarray) -> TypeTable:
    """
    Round a conditional p.m.f. to a realizable conditional type.

    Args:
        cond_counts: Counts of each conditioning cell (any shape)
        cond_pmf: Target p(target|cond), shape cond_counts.shape + (n_target,)

    Returns:
        TypeTable with joint counts; every cell row sums to its conditioning count
    """
    cc = np.asarray(cond_counts, dtype=np.int64)
    pm = np.asarray(cond_pmf, dtype=float)
    flat_pm = pm.reshape(cc.size, -1)
    rows = [largest_remainder(int(n_c), flat_pm[c]) for c, n_c in enumerate(cc.ravel())]
    counts = np.array(rows, dtype=np.int64).reshape(cc.shape + (flat_pm.shape[1],))
    return TypeTable(counts, n_cond=cc.ndim)


def _is_group(v) -> bool:
    return isinstance(v, (list, tuple)) and len(v) > 0 and np.ndim(v[0]) == 1
