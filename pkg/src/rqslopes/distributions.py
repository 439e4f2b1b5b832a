"""Error distributions with the tail constants used by the tail-condition checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

# tail exponent/constant shipped with every built-in model; a < 1/4 - eps with eps = 0.1.
DEFAULT_TAIL_A = 0.05
DEFAULT_TAIL_C = 30.0


@dataclass(frozen=True)
class ErrorModel:
    name: str
    cdf: Callable[[np.ndarray], np.ndarray]
    density: Callable[[np.ndarray], np.ndarray]
    quantile: Callable[[np.ndarray], np.ndarray]
    tail_exponent_a: float = DEFAULT_TAIL_A
    tail_constant_c: float = DEFAULT_TAIL_C
    symmetric: bool = False
    sparsity: Callable[[np.ndarray], np.ndarray] | None = None

    def density_at_quantile(self, alpha):
        """``f(F^{-1}(alpha))``, using a closed form when the model has one."""
        if self.sparsity is not None:
            return self.sparsity(alpha)
        return self.density(self.quantile(alpha))


def _logistic_density_at_quantile(alpha):
    alpha = np.asarray(alpha, dtype=float)
    return alpha * (1.0 - alpha)


def _make(name: str) -> ErrorModel:
    if name == "normal":
        d = stats.norm()
        return ErrorModel("normal", d.cdf, d.pdf, d.ppf, symmetric=True)
    if name == "logistic":
        # closed forms keep f(F^{-1}(a)) = a(1 - a) accurate deep in the tails
        return ErrorModel(
            "logistic",
            cdf=stats.logistic.cdf,
            density=stats.logistic.pdf,
            quantile=lambda a: np.log(a) - np.log1p(-np.asarray(a, dtype=float)),
            symmetric=True,
            sparsity=_logistic_density_at_quantile,
        )
    if name == "laplace":
        d = stats.laplace()
        return ErrorModel("laplace", d.cdf, d.pdf, d.ppf, symmetric=True,
                          sparsity=lambda a: np.minimum(a, 1.0 - np.asarray(a, dtype=float)))
    raise KeyError(f"unknown error model {name!r}; choose from {', '.join(BUILTIN_MODELS)}")


BUILTIN_MODELS = ("normal", "logistic", "laplace")


def error_model(name: str) -> ErrorModel:
    return _make(name)
