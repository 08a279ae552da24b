"""Finite-chain linear algebra.

Everything downstream (both simulation engines and the verification
harness) is built from the objects in this module: validated rate
matrices with their invariant measures, Dirichlet-form matrices,
harmonic extensions of indicators, trace chains on subsets, the linear
projection onto a sub-simplex, and the explicit super-harmonicity
radius.  All values are immutable after construction and safe to share
across simulation workers.

Sites are indexed 0..L-1 throughout the library; the CLI layer converts
to the 1-based labels used in configs and reports.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    BadExponentsError,
    BadSubsetError,
    ChainValidationError,
    NonPositiveMeasureError,
    NotInvariantError,
    ReducibleChainError,
    SingularSystemError,
    SubsetTooSmallError,
)

# Algebraic identities on well-conditioned dense systems of this size
# hold to roughly machine precision; 1e-10 leaves two orders of slack.
IDENTITY_TOL = 1e-10


def _as_rate_matrix(rates: Sequence | np.ndarray) -> np.ndarray:
    r = np.asarray(rates, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ChainValidationError(f"rate matrix must be square, got shape {r.shape}")
    if r.shape[0] < 2:
        raise ChainValidationError("need at least two sites")
    if not np.all(np.isfinite(r)):
        raise ChainValidationError("rates must be finite")
    if np.any(r < 0):
        raise ChainValidationError("rates must be nonnegative")
    if np.any(np.diag(r) != 0):
        raise ChainValidationError("rate matrix must have zero diagonal")
    return r


def is_irreducible(rates: np.ndarray) -> bool:
    """True when the support of ``rates`` is strongly connected."""
    support = csr_matrix(np.asarray(rates) > 0)
    n, _ = connected_components(support, directed=True, connection="strong")
    return n == 1


def invariant_measure(rates: Sequence | np.ndarray) -> np.ndarray:
    """Unique positive solution of m^T G = 0, normalized to sum 1.

    G is the generator matrix built from ``rates``.  Normalization to a
    probability vector is a convention of this artifact; identities that
    are homogeneous in m do not depend on it.

    Raises :class:`ReducibleChainError` for reducible rate matrices.
    """
    r = _as_rate_matrix(rates)
    if not is_irreducible(r):
        raise ReducibleChainError("rate matrix is reducible")
    gen = r - np.diag(r.sum(axis=1))
    # m^T G = 0 with the normalization row appended in place of one
    # (redundant) balance equation.
    a = gen.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(r.shape[0])
    b[-1] = 1.0
    try:
        m = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise SingularSystemError(str(exc)) from exc
    if np.any(m <= 0):  # pragma: no cover - cannot happen for irreducible r
        raise SingularSystemError("computed measure is not strictly positive")
    return m


@dataclass(frozen=True)
class ChainSpec:
    """A validated irreducible chain together with an invariant measure.

    ``rates`` has zero diagonal; ``m`` is strictly positive and
    satisfies m^T G = 0 (it is kept exactly as supplied, so it need not
    be a probability vector).
    """

    rates: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        self.rates.setflags(write=False)
        self.m.setflags(write=False)

    @property
    def size(self) -> int:
        return self.rates.shape[0]

    @property
    def holding(self) -> np.ndarray:
        """Holding rates lambda(j) = sum_k r(j, k)."""
        return self.rates.sum(axis=1)

    @property
    def generator(self) -> np.ndarray:
        """Generator matrix G with G[j, k] = r(j, k), G[j, j] = -lambda(j)."""
        return self.rates - np.diag(self.holding)

    @property
    def embedded_weights(self) -> np.ndarray:
        """M_j = m_j * lambda(j), invariant for the embedded jump chain."""
        return self.m * self.holding

    def apply_generator(self, f: np.ndarray) -> np.ndarray:
        """(L f)(j) = sum_k r(j,k) (f(k) - f(j))."""
        return self.generator @ np.asarray(f, dtype=float)

    def fingerprint(self) -> str:
        """Stable hash of (rates, m), used to detect mismatched comparisons."""
        import hashlib

        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.rates).tobytes())
        h.update(np.ascontiguousarray(self.m).tobytes())
        return h.hexdigest()[:16]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ChainSpec)
            and np.array_equal(self.rates, other.rates)
            and np.array_equal(self.m, other.m)
        )

    def __hash__(self) -> int:
        return hash((self.rates.tobytes(), self.m.tobytes()))


def validate_chain(
    rates: Sequence | np.ndarray,
    m: Sequence | np.ndarray | None = None,
    tol: float = IDENTITY_TOL,
) -> ChainSpec:
    """Validate a rate matrix and pair it with an invariant measure.

    When ``m`` is omitted it is computed (and normalized to sum 1).  A
    supplied ``m`` is accepted unnormalized but must be strictly
    positive and invariant: ||m^T G||_inf <= tol * ||m||_1 * max lambda.

    Raises
    ------
    ReducibleChainError, NotInvariantError, NonPositiveMeasureError
    """
    r = _as_rate_matrix(rates)
    if not is_irreducible(r):
        raise ReducibleChainError("rate matrix is reducible")
    if m is None:
        mv = invariant_measure(r)
    else:
        mv = np.asarray(m, dtype=float).copy()
        if mv.shape != (r.shape[0],):
            raise ChainValidationError(
                f"measure has shape {mv.shape}, expected ({r.shape[0]},)"
            )
        if np.any(mv <= 0):
            raise NonPositiveMeasureError("invariant measure must be strictly positive")
        gen = r - np.diag(r.sum(axis=1))
        residual = np.abs(mv @ gen).max()
        scale = mv.sum() * max(r.sum(axis=1).max(), 1.0)
        if residual > tol * scale:
            raise NotInvariantError(
                f"measure is not invariant: ||m^T G||_inf = {residual:.3e}"
            )
    return ChainSpec(rates=r, m=mv)


def dirichlet_matrix(chain: ChainSpec) -> np.ndarray:
    """Symmetrized Dirichlet-form matrix a_s of (rates, m).

    a[i, j] = <e_i, -L e_j>_m = -m_i G[i, j]; a_s = (a + a^T) / 2.
    Row and column sums vanish, and a_s is positive semidefinite with a
    one-dimensional kernel spanned by the constants.
    """
    a = -chain.m[:, None] * chain.generator
    return 0.5 * (a + a.T)


def _normalize_subset(size: int, subset: Iterable[int]) -> tuple[int, ...]:
    b = tuple(sorted(set(int(j) for j in subset)))
    if not b:
        raise BadSubsetError("subset is empty")
    if b[0] < 0 or b[-1] >= size:
        raise BadSubsetError(f"subset {b} out of range for {size} sites")
    return b


def subset_complement(size: int, subset: Sequence[int]) -> tuple[int, ...]:
    return tuple(j for j in range(size) if j not in set(subset))


@dataclass(frozen=True)
class HarmonicBasis:
    """Harmonic extensions u_k, k in B, of the indicators of B's sites.

    ``matrix`` has shape (L, |B|); column ``i`` is u_{B[i]}, the unique
    function equal to the indicator of B[i] on B and annihilated by the
    generator off B.  Its entries are the hitting probabilities
    P_j[chain hits B at B[i]], so each row sums to 1.
    """

    B: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix.setflags(write=False)

    def column(self, k: int) -> np.ndarray:
        """u_k as a length-L vector, for k a member of B."""
        return self.matrix[:, self.B.index(k)]


def harmonic_extensions(chain: ChainSpec, B: Iterable[int]) -> HarmonicBasis:
    """Solve the boundary-value problems defining u_k for every k in B.

    For B = S the basis is the identity.  Otherwise, with A = B^c, each
    column solves (diag(lambda_A) - R_AA) u_A = R_AB e_k, which is
    nonsingular for irreducible chains.
    """
    b = _normalize_subset(chain.size, B)
    a = subset_complement(chain.size, b)
    u = np.zeros((chain.size, len(b)))
    u[list(b), :] = np.eye(len(b))
    if a:
        r = chain.rates
        sys = np.diag(chain.holding[list(a)]) - r[np.ix_(a, a)]
        rhs = r[np.ix_(a, b)]
        try:
            ua = np.linalg.solve(sys, rhs)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
            raise SingularSystemError(str(exc)) from exc
        u[list(a), :] = ua
    return HarmonicBasis(B=b, matrix=u)


@dataclass(frozen=True)
class TraceChainSpec:
    """The chain watched only while on B, with its diffusion data.

    ``rates`` are the trace rates r^B; ``m_B`` is the restriction of
    the parent measure, which is again invariant; ``drift_vectors`` has
    row j equal to v^B_j = sum_k r^B(j,k) (e_k - e_j); ``dirichlet`` is
    the symmetrized Dirichlet matrix of (r^B, m_B).
    """

    parent: ChainSpec
    B: tuple[int, ...]
    rates: np.ndarray
    m_B: np.ndarray
    drift_vectors: np.ndarray
    dirichlet: np.ndarray

    def __post_init__(self):
        for arr in (self.rates, self.m_B, self.drift_vectors, self.dirichlet):
            arr.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.B)

    @property
    def holding(self) -> np.ndarray:
        return self.rates.sum(axis=1)

    @property
    def generator(self) -> np.ndarray:
        return self.rates - np.diag(self.holding)


def _dirichlet_of(rates: np.ndarray, m: np.ndarray) -> np.ndarray:
    gen = rates - np.diag(rates.sum(axis=1))
    a = -m[:, None] * gen
    return 0.5 * (a + a.T)


def trace_rates(chain: ChainSpec, B: Iterable[int]) -> TraceChainSpec:
    """Trace chain on B via the harmonic extensions.

    r^B(j, k) = sum_l r(j, l) u_k(l) for j != k in B.  The trace only
    adds mass (r^B >= r on B) and preserves the holding rates, and m
    restricted to B is invariant for r^B.
    """
    b = _normalize_subset(chain.size, B)
    if len(b) < 2:
        raise SubsetTooSmallError(f"trace needs at least two sites, got {b}")
    basis = harmonic_extensions(chain, b)
    rb = chain.rates[list(b), :] @ basis.matrix
    np.fill_diagonal(rb, 0.0)
    gen_b = rb - np.diag(rb.sum(axis=1))
    m_b = chain.m[list(b)].copy()
    return TraceChainSpec(
        parent=chain,
        B=b,
        rates=rb,
        m_B=m_b,
        drift_vectors=gen_b.copy(),
        dirichlet=_dirichlet_of(rb, m_b),
    )


@dataclass(frozen=True)
class UpsilonMap:
    """Linear projection of the full simplex onto the B-simplex.

    ``matrix`` has shape (|B|, L) with entry (k, j) = u_k(j); applying
    it to a point of the simplex gives a point of the B-simplex, and it
    restricts to the identity on points supported in B.
    """

    B: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix.setflags(write=False)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(x, dtype=float)


def upsilon_map(chain: ChainSpec, B: Iterable[int]) -> UpsilonMap:
    b = _normalize_subset(chain.size, B)
    if len(b) < 2:
        raise SubsetTooSmallError(f"projection needs at least two sites, got {b}")
    basis = harmonic_extensions(chain, b)
    return UpsilonMap(B=b, matrix=basis.matrix.T.copy())


def superharmonic_radius(chain: ChainSpec, B: Iterable[int], b: float, p: float) -> float:
    """Radius constant a_0 of the super-harmonicity region.

    With A = B^c,

        1 / a_0 = max over k in A of
                  b * sum_{j in B} m_j r(j, k)
                  -----------------------------
                  (b - p) * m_k lambda(k)

    The constant is well defined and positive for any exponents
    1 < p < b.  The additional constraint b < p + 1, required for the
    sign guarantee on the product of A coordinates raised to p+1, is
    enforced by the sign check in :mod:`condensim.experiments`, not
    here, so that the monotonicity of a_0 in b can be probed.
    """
    if not (1.0 < p < b):
        raise BadExponentsError(f"need 1 < p < b, got p={p}, b={b}")
    bset = _normalize_subset(chain.size, B)
    aset = subset_complement(chain.size, bset)
    if not aset:
        raise BadSubsetError("B must be a proper subset (complement nonempty)")
    num = b * (chain.m[list(bset)] @ chain.rates[np.ix_(bset, aset)])
    den = (b - p) * chain.embedded_weights[list(aset)]
    inv_a0 = float(np.max(num / den))
    if inv_a0 <= 0:  # pragma: no cover - excluded by irreducibility
        raise SingularSystemError("no rate from B into the complement")
    return 1.0 / inv_a0


def hitting_diagonal_min(chain: ChainSpec, B: Iterable[int]) -> float:
    """d(B) = min over j in B of <(-S) e_j, e_j>_m = min m_j lambda(j).

    Controls the expected-hitting-time bound; note it scales with m, so
    it must be quoted together with the normalization of m.
    """
    b = _normalize_subset(chain.size, B)
    return float(chain.embedded_weights[list(b)].min())
