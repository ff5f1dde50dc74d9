"""QUBO minimizers: tabu search, simulated annealing and exhaustive enumeration.

All three work on the dense symmetric coupling matrix ``W`` (zero diagonal)
and linear vector ``h``; flipping variable ``i`` changes the energy by
``(1 - 2 q_i) * (h_i + W[i] @ q)``, and the solvers keep that local field
up to date incrementally.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numba
import numpy as np

from .qubo import QuboProblem, split_blocks

BRUTE_FORCE_MAX_VARS = 25


@dataclass(frozen=True)
class TabuConfig:
    tenure: int | None = None  # default max(10, n_vars // 20)
    max_iterations: int | None = None  # default 50 * n_vars, per restart
    restarts: int = 5
    seed: int = 0

    def resolved(self, n_vars: int) -> "TabuConfig":
        tenure = self.tenure if self.tenure is not None else max(10, n_vars // 20)
        iters = self.max_iterations if self.max_iterations is not None else 50 * n_vars
        if tenure < 1 or iters < 1 or self.restarts < 1:
            raise ValueError("tenure, max_iterations and restarts must all be >= 1")
        return TabuConfig(tenure, iters, self.restarts, self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolveResult:
    best_q: np.ndarray
    best_energy: float
    iterations_used: int
    restarts_used: int

    def to_dict(self) -> dict:
        return {
            "best_q": self.best_q.astype(int).tolist(),
            "best_energy": self.best_energy,
            "iterations_used": self.iterations_used,
            "restarts_used": self.restarts_used,
        }


@dataclass(frozen=True)
class CardinalityCheck:
    counts: list[int]
    target: int

    @property
    def passed(self) -> bool:
        return all(c == self.target for c in self.counts)

    @property
    def failing_groups(self) -> list[int]:
        return [g for g, c in enumerate(self.counts) if c != self.target]

    def __str__(self):
        if self.passed:
            return f"all {len(self.counts)} groups select {self.target}"
        bad = ", ".join(f"group {g}: {self.counts[g]}" for g in self.failing_groups)
        return f"cardinality {self.target} violated ({bad})"


def _dense(problem: QuboProblem):
    return problem.coupling_matrix(), np.ascontiguousarray(problem.linear, dtype=np.float64)


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, dtype=np.uint32)[0])


@numba.njit(cache=True)
def _tabu_run(W, h, q, tenure, max_iter):
    n = len(h)
    q = q.copy()
    local = h + W @ q.astype(np.float64)
    e = 0.0
    for i in range(n):
        if q[i]:
            e += h[i] + 0.5 * (local[i] - h[i])
    best_e = e
    best_q = q.copy()
    tabu_until = np.zeros(n, dtype=np.int64)
    it = 0
    for it in range(max_iter):
        move = -1
        move_delta = np.inf
        oldest = -1
        for i in range(n):
            d = local[i] if q[i] == 0 else -local[i]
            if tabu_until[i] > it and not e + d < best_e:
                if oldest < 0 or tabu_until[i] < tabu_until[oldest]:
                    oldest = i
                continue
            if d < move_delta:
                move_delta = d
                move = i
        if move < 0:
            # every variable tabu and none aspirates: release the longest-held one
            move = oldest
            move_delta = local[move] if q[move] == 0 else -local[move]
        sign = 1.0 if q[move] == 0 else -1.0
        q[move] = 1 - q[move]
        e += move_delta
        row = W[move]
        for j in range(n):
            local[j] += sign * row[j]
        tabu_until[move] = it + 1 + tenure
        if e < best_e:
            best_e = e
            best_q[:] = q
    return best_q, best_e, q, e, it + 1


def tabu_search(problem: QuboProblem, config: TabuConfig = TabuConfig()) -> SolveResult:
    """Single-flip tabu search with aspiration and seeded random restarts.

    Each step flips the best admissible variable (lowest index on ties), even
    uphill. A flipped variable stays tabu for ``tenure`` steps unless flipping
    it would beat the best energy seen in the run.
    """
    n = problem.n_vars
    if n < 1:
        raise ValueError("empty problem")
    cfg = config.resolved(n)
    tenure = min(cfg.tenure, max(n - 1, 1))
    W, h = _dense(problem)
    best = None
    iterations = 0
    for r in range(cfg.restarts):
        rng = np.random.default_rng(derive_seed(cfg.seed, r))
        q0 = rng.integers(0, 2, size=n).astype(np.int8)
        q, _, _, _, used = _tabu_run(W, h, q0, tenure, cfg.max_iterations)
        iterations += used
        energy = problem.energy(q)
        if best is None or energy < best[1]:
            best = (q.astype(np.int8), energy)
    return SolveResult(best[0], best[1], iterations, cfg.restarts)


@numba.njit(cache=True)
def _anneal(W, h, q, betas, seed):
    np.random.seed(seed)
    n = len(h)
    local = h + W @ q.astype(np.float64)
    e = 0.0
    for i in range(n):
        if q[i]:
            e += h[i] + 0.5 * (local[i] - h[i])
    best_e = e
    best_q = q.copy()
    for sweep in range(len(betas)):
        beta = betas[sweep]
        for i in range(n):
            d = local[i] if q[i] == 0 else -local[i]
            if d <= 0.0 or np.random.random() < math.exp(-beta * d):
                sign = 1.0 if q[i] == 0 else -1.0
                q[i] = 1 - q[i]
                e += d
                for j in range(n):
                    local[j] += sign * W[i, j]
                if e < best_e:
                    best_e = e
                    best_q[:] = q
    return best_q, best_e


def default_beta_range(problem: QuboProblem) -> tuple[float, float]:
    """Hot end accepts the largest possible uphill flip with probability 1/2,
    cold end accepts the smallest nonzero coefficient with probability 1/100."""
    W, h = _dense(problem)
    max_delta = float(np.max(np.abs(h) + np.abs(W).sum(axis=1)))
    coeffs = np.abs(np.concatenate([h, problem.quadratic.data]))
    coeffs = coeffs[coeffs > 0]
    if max_delta == 0 or coeffs.size == 0:
        return 1.0, 1.0
    return math.log(2) / max_delta, math.log(100) / float(coeffs.min())


def simulated_annealing(problem: QuboProblem, sweeps: int = 1000,
                        beta_range: tuple[float, float] | None = None,
                        seed: int = 0) -> SolveResult:
    """Metropolis single-flip sweeps over a geometric inverse-temperature ladder."""
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    beta0, beta1 = beta_range if beta_range is not None else default_beta_range(problem)
    if not 0 < beta0 <= beta1:
        raise ValueError(f"need 0 < beta0 <= beta1, got ({beta0}, {beta1})")
    W, h = _dense(problem)
    rng = np.random.default_rng(seed)
    q0 = rng.integers(0, 2, size=problem.n_vars).astype(np.int8)
    betas = np.geomspace(beta0, beta1, sweeps)
    q, _ = _anneal(W, h, q0, betas, derive_seed(seed, 1))
    return SolveResult(q.astype(np.int8), problem.energy(q), sweeps, 1)


@numba.njit(cache=True)
def _enumerate(W, h):
    """Visit all assignments in lexicographic order (variable 0 most significant)."""
    n = len(h)
    q = np.zeros(n, dtype=np.int8)
    local = h.copy()
    e = 0.0
    best_e = 0.0
    best_code = 0
    for code in range(1, 1 << n):
        # binary increment: trailing ones of code-1 clear, then one bit sets
        prev = code - 1
        bit = 0
        while (prev >> bit) & 1:
            bit += 1
        for b in range(bit + 1):
            i = n - 1 - b
            d = local[i] if q[i] == 0 else -local[i]
            sign = 1.0 if q[i] == 0 else -1.0
            q[i] = 1 - q[i]
            e += d
            for j in range(n):
                local[j] += sign * W[i, j]
        if e < best_e - 1e-12 * max(1.0, abs(best_e)):
            best_e = e
            best_code = code
    return best_code


def brute_force(problem: QuboProblem) -> SolveResult:
    """Exact minimum; ties resolve to the lexicographically smallest assignment."""
    n = problem.n_vars
    if n > BRUTE_FORCE_MAX_VARS:
        raise ValueError(f"brute force is capped at {BRUTE_FORCE_MAX_VARS} variables, got {n}")
    W, h = _dense(problem)
    code = _enumerate(W, h)
    q = np.array([(code >> (n - 1 - i)) & 1 for i in range(n)], dtype=np.int8)
    return SolveResult(q, problem.energy(q), 1 << n, 1)


def solve_blocks(blocks: list[QuboProblem], config: TabuConfig = TabuConfig(),
                 method: str = "tabu") -> list[SolveResult]:
    """Solve independent blocks; block ``g`` uses a seed derived from ``(seed, g)``."""
    out = []
    for g, block in enumerate(blocks):
        block_seed = derive_seed(config.seed, 1000 + g)
        if method == "tabu":
            out.append(tabu_search(block, TabuConfig(config.tenure, config.max_iterations,
                                                     config.restarts, block_seed)))
        elif method == "sa":
            out.append(simulated_annealing(block, seed=block_seed))
        else:
            raise ValueError(f"unknown solver {method!r}")
    return out


def solve_joint(problem: QuboProblem, n_groups: int, n_expanded: int,
                config: TabuConfig = TabuConfig(), method: str = "tabu") -> SolveResult:
    """Minimize the full group-wise problem.

    The coupling graph has one component per group, so the search runs on each
    component and the assignments are concatenated; the reported energy is
    re-evaluated on the joint problem.
    """
    parts = solve_blocks(split_blocks(problem, n_groups, n_expanded), config, method)
    q = np.concatenate([r.best_q for r in parts])
    return SolveResult(q, problem.energy(q), sum(r.iterations_used for r in parts),
                       max(r.restarts_used for r in parts))


def verify_cardinality(q, n_groups: int, n_expanded: int, mf: int) -> CardinalityCheck:
    q = np.asarray(q).reshape(n_groups, n_expanded)
    return CardinalityCheck([int(c) for c in q.sum(axis=1)], mf)
