"""Brute-force checks of the joint-recovery uniqueness condition.

For P sparse vectors sharing a support but observed through P different
sensing matrices, a unique minimum-support solution is guaranteed when
2S < spark(Phi_1) - 1 + rank(Ytilde), where Ytilde collects the measurements
mapped back through per-matrix bridge transforms.  Everything here is
exhaustive and only meant for instances small enough to enumerate: spark by
subset search, the l0 problem by support enumeration, plus the closed-form
training-overhead formulas the condition motivates.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

# Rank decisions in this module: singular values below RANK_REL_TOL times the
# largest are zero.
RANK_REL_TOL = 1e-8

SPARK_MAX_COLUMNS = 24
L0_MAX_COLUMNS = 16
L0_MAX_SPARSITY = 3


@dataclass(frozen=True)
class GmmvInstance:
    """P jointly sparse vectors observed through P distinct matrices."""

    operators: np.ndarray     # (P, m, n)
    signals: np.ndarray       # (P, n), common support
    measurements: np.ndarray  # (P, m)
    support: np.ndarray       # sorted true support

    @property
    def sparsity(self) -> int:
        return int(self.support.size)

    @property
    def n_vectors(self) -> int:
        return int(self.operators.shape[0])


@dataclass(frozen=True)
class UniquenessCertificate:
    spark_phi1: int
    rank_ytilde: int
    condition_holds: bool
    bridge: np.ndarray        # (P, m, m); index 0 bridges Phi_1 to itself

    def margin(self, sparsity: int) -> int:
        """Slack of 2S < spark - 1 + rank; positive iff the condition holds."""
        return self.spark_phi1 - 1 + self.rank_ytilde - 2 * sparsity


def draw_gmmv_instance(
    m: int,
    n: int,
    sparsity: int,
    n_vectors: int,
    seed: int,
    shared_operator: bool = False,
    identical_signals: bool = False,
) -> GmmvInstance:
    """Random Gaussian instance with a common support drawn uniformly."""
    if sparsity > n:
        raise ValueError("sparsity cannot exceed the column count")
    rng = np.random.default_rng(seed)

    def cgauss(shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    if shared_operator:
        op = cgauss((m, n))
        operators = np.broadcast_to(op, (n_vectors, m, n)).copy()
    else:
        operators = cgauss((n_vectors, m, n))
    support = np.sort(rng.choice(n, size=sparsity, replace=False)) if sparsity else np.array([], dtype=int)
    signals = np.zeros((n_vectors, n), dtype=np.complex128)
    if sparsity:
        if identical_signals:
            coefs = cgauss(sparsity)
            signals[:, support] = coefs
        else:
            signals[:, support] = cgauss((n_vectors, sparsity))
    measurements = np.einsum("pmn,pn->pm", operators, signals)
    return GmmvInstance(
        operators=operators,
        signals=signals,
        measurements=measurements,
        support=support.astype(int),
    )


def _numerical_rank(matrix: np.ndarray) -> int:
    if matrix.size == 0:
        return 0
    s = np.linalg.svd(matrix, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_REL_TOL * s[0]))


def spark(matrix) -> int:
    """Smallest number of linearly dependent columns, by exhaustive search.

    Returns min(rows, cols) + 1 when every subset that fits in the row space
    is independent (e.g. n + 1 for an identity, rows + 1 for a generic fat
    matrix).  Refuses matrices with more than SPARK_MAX_COLUMNS columns.
    """
    a = np.asarray(matrix)
    if a.ndim != 2 or a.size == 0:
        raise ValueError("spark needs a non-empty 2-D matrix")
    m, n = a.shape
    if n > SPARK_MAX_COLUMNS:
        raise ValueError(
            f"{n} columns exceeds the exhaustive-search limit ({SPARK_MAX_COLUMNS})"
        )
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms <= RANK_REL_TOL * norms.max()):
        return 1  # a (numerically) zero column is dependent on its own
    for k in range(2, min(m, n) + 1):
        idx = np.array(list(combinations(range(n), k)))
        subsets = a[:, idx].transpose(1, 0, 2)  # (n_subsets, m, k)
        s = np.linalg.svd(subsets, compute_uv=False)
        if np.any(s[:, -1] <= RANK_REL_TOL * s[:, 0]):
            return k
    return min(m, n) + 1


def bridge_matrices(operators, support) -> np.ndarray:
    """Minimum-Frobenius bridges Psi_p with (Phi_p)_support = Psi_p (Phi_1)_support.

    Solved by Psi_p = (Phi_p)_S pinv((Phi_1)_S).  Raises when the support
    columns of Phi_1 are rank-deficient, in which case no exact bridge of
    this form exists and the uniqueness check is not evaluable.
    """
    ops = np.asarray(operators)
    idx = np.asarray(support, dtype=int)
    base = ops[0][:, idx]
    if _numerical_rank(base) < idx.size:
        raise ValueError(
            "support columns of the first operator are rank-deficient; "
            "bridge matrices are not evaluable"
        )
    base_pinv = np.linalg.pinv(base, rcond=RANK_REL_TOL)
    return np.array([ops[p][:, idx] @ base_pinv for p in range(ops.shape[0])])


def uniqueness_check(instance: GmmvInstance) -> UniquenessCertificate:
    """Evaluate 2S < spark(Phi_1) - 1 + rank(Ytilde) on one instance.

    Ytilde's first column is y_1 raw; later columns are pinv(Psi_p) y_p,
    which maps each measurement back into Phi_1 coordinates.
    """
    bridge = bridge_matrices(instance.operators, instance.support)
    columns = [instance.measurements[0]]
    for p in range(1, instance.n_vectors):
        columns.append(np.linalg.pinv(bridge[p], rcond=RANK_REL_TOL) @ instance.measurements[p])
    ytilde = np.stack(columns, axis=1)
    spark_phi1 = spark(instance.operators[0])
    rank_ytilde = _numerical_rank(ytilde)
    holds = 2 * instance.sparsity < spark_phi1 - 1 + rank_ytilde
    return UniquenessCertificate(
        spark_phi1=spark_phi1,
        rank_ytilde=rank_ytilde,
        condition_holds=holds,
        bridge=bridge,
    )


def exhaustive_l0_solve(instance: GmmvInstance, rel_tol: float = RANK_REL_TOL):
    """All common supports of size <= S consistent with every measurement.

    A support is consistent when each y_p lies in the span of the selected
    columns of its own operator (projection residual <= rel_tol relative).
    Returns a list of sorted index tuples; a superset of a consistent support
    is consistent too, so uniqueness is judged on the minimal size (see
    unique_minimal_support).
    """
    n = instance.operators.shape[2]
    s_max = instance.sparsity
    if n > L0_MAX_COLUMNS:
        raise ValueError(f"{n} columns exceeds the exhaustive limit ({L0_MAX_COLUMNS})")
    if s_max > L0_MAX_SPARSITY:
        raise ValueError(
            f"sparsity {s_max} exceeds the exhaustive limit ({L0_MAX_SPARSITY})"
        )
    y = instance.measurements
    norms = np.linalg.norm(y, axis=1)
    consistent = []
    for k in range(s_max + 1):
        for combo in combinations(range(n), k):
            idx = np.array(combo, dtype=int)
            ok = True
            for p in range(instance.n_vectors):
                if norms[p] == 0.0:
                    continue
                if k == 0:
                    ok = False
                    break
                block = instance.operators[p][:, idx]
                coef = np.linalg.lstsq(block, y[p], rcond=RANK_REL_TOL)[0]
                if np.linalg.norm(y[p] - block @ coef) > rel_tol * norms[p]:
                    ok = False
                    break
            if ok:
                consistent.append(tuple(combo))
    return consistent


def unique_minimal_support(candidates):
    """The unique smallest support among candidates, or None if not unique."""
    if not candidates:
        return None
    smallest = min(len(c) for c in candidates)
    minimal = [c for c in candidates if len(c) == smallest]
    return minimal[0] if len(minimal) == 1 else None


def min_time_slots(sparsity: int, n_chains: int) -> int:
    """Fewest training slots for identifiability: ceil((S_a + 1) / chains)."""
    if sparsity < 0:
        raise ValueError("sparsity must be non-negative")
    if n_chains < 1:
        raise ValueError("n_chains must be positive")
    return -(-(sparsity + 1) // n_chains)


def orthogonal_pilot_overhead(
    n_pilot: int, n_bs: int, n_ant_user: int, n_ant_bs: int, n_chain_user: int
) -> int:
    """Slot count an orthogonal (non-compressive) design would need.

    ceil(N_g * M * N_US * N_BS / N_chain_US); the size of this number against
    min_time_slots is the whole point of the compressive design.
    """
    values = (n_pilot, n_bs, n_ant_user, n_ant_bs, n_chain_user)
    if any(v < 1 for v in values):
        raise ValueError("all inputs must be positive integers")
    total = n_pilot * n_bs * n_ant_user * n_ant_bs
    return -(-total // n_chain_user)


@dataclass(frozen=True)
class CertificateRecord:
    """One battery row: instance shape, certificate and oracle agreement."""

    index: int
    m: int
    n: int
    sparsity: int
    n_vectors: int
    spark_phi1: int
    rank_ytilde: int
    certificate_holds: bool
    l0_unique: bool
    l0_matches_truth: bool

    @property
    def consistent(self) -> bool:
        """Certificate holds implies the oracle found exactly the truth."""
        return self.l0_unique and self.l0_matches_truth


def run_certificate_battery(n_instances: int, seed: int, max_attempts_factor: int = 50):
    """Random instances whose certificate holds, cross-checked against l0.

    Draws random shapes (m in 4..8, n in 8..16, S in 1..3, P in 1..4), keeps
    instances where the uniqueness condition holds, and verifies on each that
    exhaustive search returns exactly one minimal support equal to the truth.
    Returns a list of CertificateRecord.
    """
    if n_instances < 1:
        raise ValueError("n_instances must be positive")
    rng = np.random.default_rng(seed)
    records = []
    attempts = 0
    limit = max_attempts_factor * n_instances
    while len(records) < n_instances and attempts < limit:
        attempts += 1
        m = int(rng.integers(4, 9))
        n = int(rng.integers(8, 17))
        s = int(rng.integers(1, 4))
        n_vec = int(rng.integers(1, 5))
        inst = draw_gmmv_instance(m, n, s, n_vec, seed=int(rng.integers(2**32)))
        cert = uniqueness_check(inst)
        if not cert.condition_holds:
            continue
        solutions = exhaustive_l0_solve(inst)
        best = unique_minimal_support(solutions)
        records.append(
            CertificateRecord(
                index=len(records),
                m=m,
                n=n,
                sparsity=s,
                n_vectors=n_vec,
                spark_phi1=cert.spark_phi1,
                rank_ytilde=cert.rank_ytilde,
                certificate_holds=True,
                l0_unique=best is not None,
                l0_matches_truth=best == tuple(inst.support.tolist()),
            )
        )
    if len(records) < n_instances:
        raise RuntimeError(
            f"only {len(records)} certified instances found in {attempts} attempts"
        )
    return records
