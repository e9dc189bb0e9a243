"""MIDAS dictionaries built from shifted Jacobi polynomials and lag aggregation.

A dictionary is a ``d x L`` matrix ``W`` with ``W[j, l] = w_l(j/d) / d`` for
lag fractions ``j/d, j = 0..d-1``.  Aggregating a unit's ``K x d`` lag panel
with ``W`` gives ``K`` groups of ``L`` regressors plus an intercept.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import SchemaError

FAMILIES = ("jacobi", "legendre", "gegenbauer", "chebyshev1", "chebyshev2",
            "unrestricted", "latest")


def jacobi_recurrence(x, n_terms: int, a: float, b: float) -> np.ndarray:
    """Evaluate Jacobi polynomials ``P_0..P_{n_terms-1}`` at ``x``.

    Uses the three-term recurrence
    ``P_{n+1} = (A x + B) P_n - C P_{n-1}`` with

    * ``A = (2n+a+b+1)(2n+a+b+2) / (2(n+1)(n+a+b+1))``
    * ``B = (2n+a+b+1)(a^2-b^2) / (2(n+1)(n+a+b+1)(2n+a+b))``
    * ``C = (n+a)(n+b)(2n+a+b+2) / ((n+1)(n+a+b+1)(2n+a+b))``

    ``P_1`` is taken from its closed form because the coefficients are
    singular at ``n = 0`` for some ``(a, b)``.  No normalisation is applied.

    Returns
    -------
    ndarray, shape (len(x), n_terms)
    """
    if a <= -1 or b <= -1:
        raise ValueError(f"Jacobi parameters must exceed -1, got ({a}, {b})")
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (n_terms,))
    if n_terms == 0:
        return out
    out[..., 0] = 1.0
    if n_terms == 1:
        return out
    out[..., 1] = (a + b + 2) * x / 2 + (a - b) / 2
    for n in range(1, n_terms - 1):
        s = 2 * n + a + b
        A = (s + 1) * (s + 2) / (2 * (n + 1) * (n + a + b + 1))
        B = (s + 1) * (a * a - b * b) / (2 * (n + 1) * (n + a + b + 1) * s)
        C = (n + a) * (n + b) * (s + 2) / ((n + 1) * (n + a + b + 1) * s)
        out[..., n + 1] = (A * x + B) * out[..., n] - C * out[..., n - 1]
    return out


@dataclass(frozen=True)
class MidasDictionary:
    """``d x L`` weighting matrix and the family that generated it."""

    w: np.ndarray
    family: str
    params: tuple = ()

    @property
    def d(self) -> int:
        return self.w.shape[0]

    @property
    def L(self) -> int:
        return self.w.shape[1]

    def to_dict(self) -> dict:
        return {"family": self.family, "params": list(self.params), "L": self.L, "d": self.d}

    @classmethod
    def from_dict(cls, obj) -> "MidasDictionary":
        return make_dictionary(obj["family"], obj["L"], obj["d"], tuple(obj.get("params", ())))

    def spec_string(self) -> str:
        if self.params:
            return f"{self.family}:{','.join(repr(float(p)) for p in self.params)}"
        return self.family


def _lag_fractions(d):
    return np.arange(d) / d


def jacobi_dictionary(alpha_poly: float, beta_poly: float, L: int, d: int) -> MidasDictionary:
    """Shifted Jacobi dictionary on ``[0, 1]`` with entries divided by ``d``."""
    if L < 1 or d < 1:
        raise ValueError("L and d must be positive")
    u = _lag_fractions(d)
    w = jacobi_recurrence(2 * u - 1, L, alpha_poly, beta_poly) / d
    return MidasDictionary(w, "jacobi", (float(alpha_poly), float(beta_poly)))


def make_dictionary(family: str, L: int | None, d: int, params: tuple = ()) -> MidasDictionary:
    """Build a dictionary by family name.

    ``gegenbauer`` takes one parameter used for both Jacobi exponents,
    ``jacobi`` takes two.  ``unrestricted`` is ``I_d / d`` with ``L = d``;
    ``latest`` keeps only lag 1 (``L = 1``).
    """
    family = family.lower()
    if family == "unrestricted":
        return MidasDictionary(np.eye(d) / d, "unrestricted")
    if family == "latest":
        w = np.zeros((d, 1))
        w[0, 0] = 1.0
        return MidasDictionary(w, "latest")
    if L is None:
        raise ValueError(f"family {family!r} needs a dictionary size L")
    if family == "jacobi":
        if len(params) != 2:
            raise ValueError("jacobi needs two parameters")
        a, b = params
    elif family == "gegenbauer":
        (a,) = params if params else (-0.5,)
        b = a
    elif family == "legendre":
        a = b = 0.0
    elif family == "chebyshev1":
        a = b = -0.5
    elif family == "chebyshev2":
        a = b = 0.5
    else:
        raise ValueError(f"unknown dictionary family {family!r}")
    base = jacobi_dictionary(a, b, L, d)
    kept = (float(a), float(b)) if family == "jacobi" else ((float(a),) if family == "gegenbauer" else ())
    return MidasDictionary(base.w, family, kept)


def parse_dictionary(text: str, L: int | None, d: int) -> MidasDictionary:
    """Parse ``jacobi:a,b``, ``gegenbauer:a``, ``legendre``, ``unrestricted``..."""
    name, _, rest = text.partition(":")
    params = tuple(float(v) for v in rest.split(",")) if rest else ()
    return make_dictionary(name, L, d, params)


def default_dictionary(d: int) -> MidasDictionary:
    return make_dictionary("gegenbauer", 3, d, (-0.5,))


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Aggregated regressors with the intercept in column 0.

    ``groups[0]`` is the intercept; ``groups[k]`` for ``k >= 1`` holds the
    ``L`` columns of covariate ``k``.
    """

    x: np.ndarray
    groups: tuple
    penalized: np.ndarray
    group_names: tuple = field(default=())

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def rows(self, index) -> "DesignMatrix":
        return DesignMatrix(self.x[index], self.groups, self.penalized, self.group_names)


def group_structure(k: int, L: int):
    groups = [np.array([0])] + [1 + g * L + np.arange(L) for g in range(k)]
    penalized = np.ones(1 + k * L, dtype=bool)
    penalized[0] = False
    return tuple(groups), penalized


def aggregate_panel(panel, w: MidasDictionary) -> DesignMatrix:
    panel = np.asarray(panel, dtype=float)
    if panel.ndim != 3 or panel.shape[2] != w.d:
        raise SchemaError(f"panel lag count {panel.shape[-1]} does not match dictionary d={w.d}")
    n, k, _ = panel.shape
    agg = np.einsum("nkd,dl->nkl", panel, w.w).reshape(n, k * w.L)
    x = np.hstack([np.ones((n, 1)), agg])
    groups, penalized = group_structure(k, w.L)
    return DesignMatrix(x, groups, penalized)


def aggregate(ds, w: MidasDictionary) -> DesignMatrix:
    """Row ``i`` is ``(1, Z_i1' W, ..., Z_iK' W)``; ``p = 1 + K*L``."""
    dm = aggregate_panel(ds.panel, w)
    return DesignMatrix(dm.x, dm.groups, dm.penalized, ("(intercept)",) + tuple(ds.covariate_names))


def expand_weights(beta, w: MidasDictionary) -> np.ndarray:
    """Implied high-frequency lag coefficients, shape ``(K, d)``.

    ``theta[k, j] = sum_l beta_{k,l} W[j, l]`` so that
    ``x' beta = beta_0 + sum_{k,j} theta[k, j] * panel[k, j]``.
    """
    beta = np.asarray(beta, dtype=float)
    slopes = beta[1:]
    if slopes.size % w.L:
        raise SchemaError("coefficient vector is not intercept + K groups of L")
    return slopes.reshape(-1, w.L) @ w.w.T
