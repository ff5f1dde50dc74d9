"""Independent reference evaluators shared by unit and acceptance tests."""

import itertools

import numpy as np

from ffm_l0.qubo import QuboBuildInputs, QuboProblem


def all_assignments(n):
    return np.array(list(itertools.product([0, 1], repeat=n)), dtype=np.int8)


def direct_objective(inputs: QuboBuildInputs, qs) -> np.ndarray:
    """Sum of squared residuals plus cardinality penalty, evaluated as written (no expansion).

    ``qs`` holds assignments as rows, variable (s, g) at column g * S + s.
    """
    qs = np.atleast_2d(np.asarray(qs, dtype=np.float64))
    S, G = inputs.n_expanded, inputs.n_groups
    # coef[i, g*S + s] = alpha_s X_is p_ig
    coef = np.concatenate([inputs.alpha * inputs.X * inputs.p[:, [g]] for g in range(G)], axis=1)
    resid = (inputs.y - inputs.w0)[None, :] - qs @ coef.T
    counts = qs.reshape(len(qs), G, S).sum(axis=2)
    return (resid**2).sum(axis=1) + inputs.penalty * ((counts - inputs.mf) ** 2).sum(axis=1)


def random_inputs(rng, max_vars=12, **overrides) -> QuboBuildInputs:
    while True:
        G = int(rng.integers(1, 4))
        S = int(rng.integers(1, 7))
        if G * S <= max_vars and G * S >= 2:
            break
    n = int(rng.integers(G, 12))
    groups = np.concatenate([np.arange(G), rng.integers(0, G, n - G)])
    p = np.eye(G, dtype=np.int8)[groups]
    X = rng.integers(0, 2, size=(n, S)).astype(np.int8)
    kwargs = dict(y=rng.normal(size=n), w0=float(rng.normal(scale=0.3)),
                  alpha=rng.normal(size=S), X=X, p=p, mf=int(rng.integers(0, S + 1)),
                  penalty=float(rng.choice([10.0, 1.0, 0.5])))
    kwargs.update(overrides)
    return QuboBuildInputs(**kwargs)


def random_qubo(rng, n, density=1.0, scale=1.0) -> QuboProblem:
    upper = np.triu(rng.normal(scale=scale, size=(n, n)), 1)
    upper *= np.triu(rng.random((n, n)) < density, 1)
    return QuboProblem.from_dense(rng.normal(scale=scale, size=n), upper, float(rng.normal()))


def exhaustive_minimum(problem: QuboProblem) -> float:
    return float(problem.energies(all_assignments(problem.n_vars)).min())
