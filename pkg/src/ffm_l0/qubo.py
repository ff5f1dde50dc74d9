"""Group-wise L0 selection objective as a QUBO.

Variables ``q[s, g]`` say whether group ``g`` keeps expanded feature ``s``;
variable ``(s, g)`` sits at flat index ``g * S + s``. The objective is::

    sum_i (y_i - w0 - sum_{s,g} alpha_s X_is p_ig q_sg)^2 + A sum_g (sum_s q_sg - M_f)^2

Each sample belongs to exactly one group, so the coupling matrix is block
diagonal with one ``S x S`` block per group.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

DEFAULT_PENALTY = 10.0


class QuboError(ValueError):
    pass


@dataclass(frozen=True)
class QuboProblem:
    """``energy(q) = constant + linear @ q + sum_{i<j} quadratic[i, j] q_i q_j``.

    ``quadratic`` is a strictly upper-triangular sparse matrix. When the
    problem came from :func:`build_qubo`, ``block_constants`` records how the
    constant splits across groups.
    """

    linear: np.ndarray
    quadratic: sparse.csr_array
    constant: float = 0.0
    block_constants: tuple[float, ...] | None = field(default=None)

    def __post_init__(self):
        n = len(self.linear)
        if self.quadratic.shape != (n, n):
            raise QuboError(f"quadratic shape {self.quadratic.shape} does not match {n} variables")
        coo = self.quadratic.tocoo()
        if np.any(coo.row >= coo.col):
            raise QuboError("quadratic must be strictly upper triangular")

    @property
    def n_vars(self) -> int:
        return len(self.linear)

    @classmethod
    def from_dense(cls, linear, quadratic, constant: float = 0.0) -> "QuboProblem":
        """Build from a square matrix; entries below the diagonal are folded upward
        and the diagonal is added to the linear part."""
        quadratic = np.asarray(quadratic, dtype=np.float64)
        upper = np.triu(quadratic, 1) + np.tril(quadratic, -1).T
        lin = np.asarray(linear, dtype=np.float64) + np.diag(quadratic)
        return cls(lin, sparse.csr_array(upper), float(constant))

    def coupling_matrix(self) -> np.ndarray:
        """Dense symmetric matrix with zero diagonal, as the solvers consume it."""
        upper = self.quadratic.toarray()
        return upper + upper.T

    def energy(self, q) -> float:
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.n_vars,):
            raise QuboError(f"assignment has length {q.size}, problem has {self.n_vars} variables")
        return float(self.constant + self.linear @ q + q @ (self.quadratic @ q))

    def energies(self, qs) -> np.ndarray:
        """Energies of many assignments, one per row of ``qs``."""
        qs = np.asarray(qs, dtype=np.float64)
        return self.constant + qs @ self.linear + np.einsum("ai,ai->a", qs, (self.quadratic @ qs.T).T)


@dataclass(frozen=True)
class QuboBuildInputs:
    y: np.ndarray  # (n,) standardized training targets
    w0: float
    alpha: np.ndarray  # (S,)
    X: np.ndarray  # (n, S) expanded design
    p: np.ndarray  # (n, G) group membership
    mf: int
    penalty: float = DEFAULT_PENALTY

    def __post_init__(self):
        n, s = np.shape(self.X)
        if len(self.y) != n or np.shape(self.p)[0] != n:
            raise QuboError("y, X and p must have the same number of rows")
        if len(self.alpha) != s:
            raise QuboError(f"alpha has {len(self.alpha)} entries, X has {s} columns")
        if not 0 <= self.mf <= s:
            raise QuboError(f"M_f={self.mf} outside 0..{s}")
        if not self.penalty > 0:
            raise QuboError("penalty strength must be positive")

    @property
    def n_groups(self) -> int:
        return np.shape(self.p)[1]

    @property
    def n_expanded(self) -> int:
        return len(self.alpha)


def flat_index(s: int, g: int, n_expanded: int) -> int:
    return g * n_expanded + s


def build_qubo(inputs: QuboBuildInputs) -> QuboProblem:
    """Expand both squares of the objective into QUBO coefficients (q**2 = q)."""
    S, G = inputs.n_expanded, inputs.n_groups
    A, mf = float(inputs.penalty), inputs.mf
    resid = np.asarray(inputs.y, dtype=np.float64) - inputs.w0
    alpha = np.asarray(inputs.alpha, dtype=np.float64)
    X = np.asarray(inputs.X, dtype=np.float64)
    p = np.asarray(inputs.p)

    linear = np.empty(G * S)
    blocks = []
    block_constants = []
    rows, cols = np.triu_indices(S, k=1)
    for g in range(G):
        members = p[:, g] == 1
        B = X[members] * alpha  # per-sample contribution of each feature
        r = resid[members]
        gram = B.T @ B
        linear[g * S:(g + 1) * S] = np.diag(gram) - 2.0 * (r @ B) + A * (1.0 - 2.0 * mf)
        vals = 2.0 * gram[rows, cols] + 2.0 * A
        blocks.append(sparse.csr_array((vals, (rows, cols)), shape=(S, S)))
        block_constants.append(float(r @ r) + A * mf * mf)
    unassigned = ~p.any(axis=1)
    if np.any(unassigned):
        raise QuboError(f"{int(unassigned.sum())} samples belong to no group")
    quadratic = sparse.block_diag(blocks, format="csr")
    return QuboProblem(linear, sparse.csr_array(quadratic), float(sum(block_constants)),
                       tuple(block_constants))


def split_blocks(problem: QuboProblem, n_groups: int, n_expanded: int) -> list[QuboProblem]:
    """Cut a block-diagonal problem into independent per-group problems.

    Per-block constants come from ``problem.block_constants`` when present;
    otherwise the whole constant goes to the first block.
    """
    if n_groups * n_expanded != problem.n_vars:
        raise QuboError(f"{n_groups} x {n_expanded} does not match {problem.n_vars} variables")
    if n_groups == 1:
        return [problem]
    coo = problem.quadratic.tocoo()
    crossing = (coo.row // n_expanded != coo.col // n_expanded) & (coo.data != 0)
    if np.any(crossing):
        i, j = int(coo.row[crossing][0]), int(coo.col[crossing][0])
        raise QuboError(f"coupling between blocks at ({i}, {j}); problem is not block diagonal")
    if problem.block_constants is not None and len(problem.block_constants) == n_groups:
        consts = list(problem.block_constants)
    else:
        consts = [problem.constant] + [0.0] * (n_groups - 1)
    out = []
    for g in range(n_groups):
        sl = slice(g * n_expanded, (g + 1) * n_expanded)
        out.append(QuboProblem(problem.linear[sl].copy(),
                               sparse.csr_array(problem.quadratic[sl, sl]), consts[g]))
    return out


def write_qubo(path, problem: QuboProblem, header: dict | None = None) -> None:
    """Text export: ``i i coeff`` for linear terms, ``i j coeff`` (i < j) for couplings."""
    lines = [f"# n_vars {problem.n_vars}", f"# constant {problem.constant!r}"]
    if problem.block_constants is not None:
        lines.append("# block_constants " + " ".join(repr(c) for c in problem.block_constants))
    for key, value in (header or {}).items():
        lines.append(f"# {key} {value}")
    lines.extend(f"{i} {i} {c!r}" for i, c in enumerate(problem.linear.tolist()) if c != 0.0)
    coo = problem.quadratic.tocoo()
    order = np.lexsort((coo.col, coo.row))
    for i, j, c in zip(coo.row[order].tolist(), coo.col[order].tolist(), coo.data[order].tolist()):
        if c != 0.0:
            lines.append(f"{i} {j} {c!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_qubo(path) -> QuboProblem:
    constant = 0.0
    block_constants = None
    n_vars = None
    linear = {}
    rows, cols, vals = [], [], []
    with Path(path).open() as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "constant":
                    constant = float(parts[1])
                elif parts and parts[0] == "n_vars":
                    n_vars = int(parts[1])
                elif parts and parts[0] == "block_constants":
                    block_constants = tuple(float(c) for c in parts[1:])
                continue
            try:
                i, j, c = line.split()
                i, j, c = int(i), int(j), float(c)
            except ValueError:
                raise QuboError(f"line {line_no}: expected 'i j coeff', got {line!r}") from None
            if i == j:
                linear[i] = linear.get(i, 0.0) + c
            else:
                rows.append(min(i, j))
                cols.append(max(i, j))
                vals.append(c)
    highest = max([*linear, *rows, *cols], default=-1) + 1
    n = n_vars if n_vars is not None else highest
    if highest > n:
        raise QuboError(f"index {highest - 1} exceeds declared n_vars {n}")
    lin = np.zeros(n)
    for i, c in linear.items():
        lin[i] = c
    quad = sparse.csr_array((vals, (rows, cols)), shape=(n, n))
    quad.sum_duplicates()
    return QuboProblem(lin, quad, constant, block_constants)
