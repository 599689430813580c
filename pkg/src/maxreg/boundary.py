"""Boundary operators, extended boundary matrices, and solvability checks.

A boundary operator B_i = sum_j b^(i)_j Tr_j pairs coefficient symbols on
(tau, xi') with normal-derivative traces.  Appending the banded
coefficients of D+ produces the extended boundary matrix; its pointwise
invertibility is the Lopatinskii-Shapiro condition, and its mixed-order
ellipticity is the complementing condition.  The two builtin pairs
(Dirichlet and the Tr_1/Tr_3 Neumann pair) separate the conditions: the
Dirichlet matrix has determinant identically one, which can never dominate
the growing weight the complementing check demands.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .factorization import MU_D, MU_MINUS, dplus_coeffs
from .polygons import (
    OFLike,
    OrderFunction,
    OrderFunctionDiff,
    ZERO_OF,
    as_diff,
    chg_shape,
    of_add,
    of_neg,
    trace_order_function,
)
from .symbols import (
    GridSpec,
    MatrixSymbol,
    PolySymbol,
    SymbolFn,
    as_symbol,
    det,
    mixed_order_certify,
)

F = Fraction

MAX_TRACE = 3  # the determinant is quartic: traces Tr_0..Tr_3


def d0_plus_symbol() -> SymbolFn:
    return SymbolFn(fn=lambda t, x: dplus_coeffs(t, x).d0_plus,
                    name="d0_plus", oscillatory_only=True)


def d1_plus_symbol() -> SymbolFn:
    return SymbolFn(fn=lambda t, x: dplus_coeffs(t, x).d1_plus,
                    name="d1_plus", oscillatory_only=True)


def _is_zero_symbol(sym) -> bool:
    if isinstance(sym, (int, float, complex)):
        return complex(sym) == 0
    if isinstance(sym, PolySymbol):
        return not sym.monomials
    if isinstance(sym, SymbolFn) and isinstance(sym.fn, PolySymbol):
        return not sym.fn.monomials
    return False


@dataclass(frozen=True)
class BoundaryOperator:
    """B = sum_{j=0}^{3} b_j Tr_j with target boundary order function chi."""

    coeffs: tuple
    chi: Optional[OrderFunctionDiff] = None
    name: str = ""

    def __post_init__(self):
        if len(self.coeffs) != MAX_TRACE + 1:
            raise ValueError("boundary operator needs 4 trace coefficients")
        coerced = []
        for c in self.coeffs:
            if isinstance(c, (int, float, complex)):
                c = PolySymbol(1, True, ((complex(c), 0, 0),))
            coerced.append(as_symbol(c))
        object.__setattr__(self, "coeffs", tuple(coerced))
        if self.chi is not None:
            object.__setattr__(self, "chi", as_diff(self.chi))

    def leading_trace(self) -> int:
        """Largest j with a (detectably) nonzero coefficient."""
        for j in range(MAX_TRACE, -1, -1):
            if not _is_zero_symbol(self.coeffs[j]):
                return j
        return 0

    def evaluate_at_root(self, tau, xi_prime_norm, rho):
        """B(rho) = sum_j b_j (i rho)^j, the action on e^{i rho x_n}."""
        acc = 0
        for j, c in enumerate(self.coeffs):
            acc = acc + np.asarray(c(tau, xi_prime_norm)) * (1j * rho) ** j
        return acc


def trace_operator(j: int, chi: Optional[OFLike] = None,
                   name: str = "") -> BoundaryOperator:
    coeffs = [0, 0, 0, 0]
    coeffs[j] = 1
    return BoundaryOperator(tuple(coeffs),
                            chi=None if chi is None else as_diff(chi),
                            name=name or f"Tr_{j}")


@dataclass(frozen=True)
class ExtendedBoundaryMatrix:
    """The (4+m)x(4+m) matrix [boundary rows; shifted D+ band] with orders."""

    m: int
    matrix: MatrixSymbol
    nu: OrderFunction
    bc: tuple[BoundaryOperator, BoundaryOperator]

    @property
    def size(self) -> int:
        return 4 + self.m

    def evaluate(self, tau, xi_prime_norm) -> np.ndarray:
        return self.matrix.evaluate(tau, xi_prime_norm)

    def det_symbol(self) -> SymbolFn:
        return det(self.matrix)


def _default_chi(op: BoundaryOperator, nu: OrderFunction,
                 override: Optional[OFLike] = None) -> OrderFunctionDiff:
    if override is not None:
        return as_diff(override)
    # an operator's attached chi is its nu = 0 target; for shifted systems
    # the row order must follow the shifted trace spaces T_j(mu_D + nu),
    # which is not a constant shift of T_j(mu_D)
    if op.chi is not None and nu == ZERO_OF:
        return op.chi
    return as_diff(trace_order_function(MU_D + nu, op.leading_trace()))


def build_extended_matrix(bc: Sequence[BoundaryOperator], m: int = 0,
                          nu: OrderFunction = ZERO_OF,
                          chis: Optional[Sequence[Optional[OFLike]]] = None,
                          ) -> ExtendedBoundaryMatrix:
    """Assemble B^(m): rows 1-2 from the boundary coefficients, rows >= 3
    the shifted band (d0+, d1+, -1) of D+.

    Column orders t_j = T_{j-1}(mu_D + nu); row orders s_i = -chi_i for the
    boundary rows and s_i = -T_{i-3}(mu_minus + nu) for the band rows.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    if len(bc) != 2:
        raise ValueError("exactly two boundary operators")
    if chg_shape(MU_D + nu) is None:
        raise ValueError("nu does not keep mu_D + nu CHG-shaped")
    size = 4 + m
    zero = as_symbol(0)
    band = {0: d0_plus_symbol(), 1: d1_plus_symbol(), 2: as_symbol(-1)}
    rows = []
    for i in range(1, size + 1):  # 1-based as in the definition
        row = []
        for j in range(1, size + 1):
            if i <= 2:
                k = j - 1
                row.append(bc[i - 1].coeffs[k] if k <= MAX_TRACE else zero)
            else:
                row.append(band.get(j + 2 - i, zero))
        rows.append(tuple(row))
    col_orders = tuple(as_diff(trace_order_function(MU_D + nu, j))
                       for j in range(size))
    if chis is None:
        chis = (None, None)
    row_orders = tuple(
        [of_neg(_default_chi(op, nu, ov)) for op, ov in zip(bc, chis)]
        + [of_neg(trace_order_function(MU_MINUS + nu, i)) for i in range(size - 2)])
    M = MatrixSymbol(tuple(rows), row_orders=row_orders, col_orders=col_orders)
    return ExtendedBoundaryMatrix(m=m, matrix=M, nu=nu, bc=tuple(bc))


def lopatinskii_check(B: ExtendedBoundaryMatrix,
                      grid: GridSpec = GridSpec()) -> dict:
    """Pointwise invertibility of the extended matrix over the grid."""
    T, X = np.meshgrid(grid.tau_values(), grid.xi_norms(), indexing="ij")
    d = np.abs(B.det_symbol()(T, X))
    idx = np.unravel_index(int(d.argmin()), d.shape)
    return {"pass": bool(d.min() > 0), "min_abs_det": float(d.min()),
            "max_abs_det": float(d.max()),
            "argmin": {"tau": float(T[idx]), "xi": float(X[idx])}}


def complementing_check(bc: Sequence[BoundaryOperator],
                        chi1: Optional[OFLike] = None,
                        chi2: Optional[OFLike] = None,
                        nu: OrderFunction = ZERO_OF,
                        m: Optional[int] = None,
                        grid: GridSpec = GridSpec()) -> dict:
    """Mixed-order ellipticity of B^(ord nu) with the definition's orders."""
    ops = list(bc)
    if m is None:
        m = int(nu.ord)
        if m != nu.ord or m < 0:
            raise ValueError("ord nu must be a nonnegative integer "
                             "(or pass m explicitly)")
    B = build_extended_matrix(ops, m=m, nu=nu, chis=(chi1, chi2))
    out = mixed_order_certify(B.matrix, grid=grid)
    out["matrix"] = B
    out["lopatinskii"] = lopatinskii_check(B, grid)
    return out


def dirichlet_pair() -> tuple[BoundaryOperator, BoundaryOperator]:
    """(Tr_0, Tr_1) with targets (T_0(mu_D), T_1(mu_D))."""
    return (trace_operator(0, trace_order_function(MU_D, 0), "dirichlet-0"),
            trace_operator(1, trace_order_function(MU_D, 1), "dirichlet-1"))


def neumann_pair_13() -> tuple[BoundaryOperator, BoundaryOperator]:
    """(Tr_1, Tr_3) with targets (T_1(mu_D), T_3(mu_D))."""
    return (trace_operator(1, trace_order_function(MU_D, 1), "neumann-1"),
            trace_operator(3, trace_order_function(MU_D, 3), "neumann-3"))


def builtin_boundary_conditions() -> dict:
    return {"dirichlet": dirichlet_pair, "neumann_13": neumann_pair_13}


# ---------------------------------------------------------------------------
# Boundary-condition definition files
# ---------------------------------------------------------------------------

_NAMED_COEFFS = {
    "d0_plus": d0_plus_symbol,
    "d1_plus": d1_plus_symbol,
}


def _coeff_to_jsonable(sym: SymbolFn):
    if sym.name in _NAMED_COEFFS:
        return {"ref": sym.name}
    if isinstance(sym.fn, PolySymbol):
        return {"poly": sym.fn.to_jsonable()}
    raise ValueError(f"coefficient {sym.name or sym!r} is not serializable")


def _coeff_from_jsonable(obj):
    if isinstance(obj, (int, float)):
        return as_symbol(obj)
    if "ref" in obj:
        return _NAMED_COEFFS[obj["ref"]]()
    if "re" in obj or "im" in obj:
        return as_symbol(complex(obj.get("re", 0.0), obj.get("im", 0.0)))
    return as_symbol(PolySymbol.from_jsonable(obj["poly"]))


def bc_to_jsonable(bc: Sequence[BoundaryOperator], m: int = 0,
                   nu: OrderFunction = ZERO_OF) -> dict:
    return {
        "ops": [{
            "coeffs": [_coeff_to_jsonable(c) for c in op.coeffs],
            "chi": None if op.chi is None else op.chi.to_jsonable(),
            "name": op.name,
        } for op in bc],
        "m": m,
        "nu": nu.to_jsonable(),
    }


def bc_from_jsonable(obj) -> tuple[tuple[BoundaryOperator, ...], int, OrderFunction]:
    ops = tuple(
        BoundaryOperator(
            tuple(_coeff_from_jsonable(c) for c in op["coeffs"]),
            chi=None if op.get("chi") is None
            else OrderFunctionDiff.from_jsonable(op["chi"]),
            name=op.get("name", ""))
        for op in obj["ops"])
    return ops, int(obj.get("m", 0)), OrderFunction.from_jsonable(obj["nu"])
