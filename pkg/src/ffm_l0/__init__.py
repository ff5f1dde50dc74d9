"""Field-aware factorization machine with group-wise L0 feature selection via QUBO."""

__version__ = "0.1.0"
