"""Pointwise Hamiltonians of the game and their mixed-strategy value.

For a query point (t, x, p, M) the running term of the game is

    L(u, v) = b(t, x, u, v) . p + 1/2 tr(sigma sigma^T M),

a finite matrix over the control sets.  The lower Hamiltonian is
max_u min_v L, the upper one min_v max_u L, and the mixed value is the
zero-sum matrix-game value of L, wedged between the two.  The gap between
upper and lower is the price of the players' order of commitment; it
vanishes exactly when the matrix has a pure saddle point.

The matrix-game solver tries, in order: a pure saddle point (exact), the
2x2 closed form (exact for completely mixed games), and a pair of linear
programs whose duality gap doubles as the accuracy certificate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import ModelEvaluationError, NumericalSolveError
from .sde_core import ProblemSpec, eval_diffusion, eval_drift

__all__ = [
    "HamiltonianQuery",
    "HamiltonianResult",
    "MixedSolution",
    "lagrangian",
    "lagrangian_matrix",
    "hamiltonian_lower",
    "hamiltonian_upper",
    "hamiltonian_mixed",
    "isaacs_gap",
    "solve_matrix_game",
]


@dataclass(frozen=True, eq=False)
class HamiltonianQuery:
    """One (t, x, p, M) evaluation point; M is symmetrized on input."""

    t: float
    x: np.ndarray
    p: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        if p.shape != x.shape or M.shape != (x.size, x.size):
            raise ModelEvaluationError(
                f"query shapes inconsistent: x {x.shape}, p {p.shape}, M {M.shape}")
        if not (np.isfinite(self.t) and np.all(np.isfinite(x))
                and np.all(np.isfinite(p)) and np.all(np.isfinite(M))):
            raise ModelEvaluationError("query contains non-finite entries")
        M = 0.5 * (M + M.T)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "M", M)


def lagrangian(spec: ProblemSpec, q: HamiltonianQuery,
               u: np.ndarray, v: np.ndarray) -> float:
    """b . p + 1/2 tr(sigma sigma^T M) at one control pair."""
    b = eval_drift(spec, q.t, q.x, u, v)
    sig = eval_diffusion(spec, q.t, q.x, u, v)
    a = sig @ sig.T
    return float(b @ q.p + 0.5 * np.trace(a @ q.M))


def lagrangian_matrix(spec: ProblemSpec, q: HamiltonianQuery) -> np.ndarray:
    """The full (n_u, n_v) matrix of running terms at one query point."""
    out = np.empty((spec.controls_u.size, spec.controls_v.size))
    for i in range(spec.controls_u.size):
        u = spec.controls_u.point(i)
        for j in range(spec.controls_v.size):
            out[i, j] = lagrangian(spec, q, u, spec.controls_v.point(j))
    return out


@dataclass(frozen=True, eq=False)
class HamiltonianResult:
    """Value of one Hamiltonian plus the optimizers that certify it.

    For the lower Hamiltonian, ``inner_best[i]`` is v's best reply to u_i and
    ``outer_index`` the maximizing u; for the upper one the roles swap.
    ``matrix`` is the full running-term matrix, so a result can be re-checked
    without re-evaluating the model.
    """

    which: str
    value: float
    outer_index: int
    inner_best: np.ndarray
    matrix: np.ndarray

    @property
    def u_index(self) -> int:
        return self.outer_index if self.which == "lower" else int(self.inner_best[self.outer_index])

    @property
    def v_index(self) -> int:
        return int(self.inner_best[self.outer_index]) if self.which == "lower" else self.outer_index


def hamiltonian_lower(spec: ProblemSpec, q: HamiltonianQuery) -> HamiltonianResult:
    """max_u min_v of the running term. Ties break to the lowest index."""
    L = lagrangian_matrix(spec, q)
    inner = np.argmin(L, axis=1)
    inner_vals = L[np.arange(L.shape[0]), inner]
    outer = int(np.argmax(inner_vals))
    return HamiltonianResult(which="lower", value=float(inner_vals[outer]),
                             outer_index=outer, inner_best=inner.astype(np.int64),
                             matrix=L)


def hamiltonian_upper(spec: ProblemSpec, q: HamiltonianQuery) -> HamiltonianResult:
    """min_v max_u of the running term. Ties break to the lowest index."""
    L = lagrangian_matrix(spec, q)
    inner = np.argmax(L, axis=0)
    inner_vals = L[inner, np.arange(L.shape[1])]
    outer = int(np.argmin(inner_vals))
    return HamiltonianResult(which="upper", value=float(inner_vals[outer]),
                             outer_index=outer, inner_best=inner.astype(np.int64),
                             matrix=L)


def isaacs_gap(spec: ProblemSpec, q: HamiltonianQuery) -> float:
    """upper - lower, clipped at zero; a genuinely negative gap is a solver bug."""
    lo = hamiltonian_lower(spec, q).value
    hi = hamiltonian_upper(spec, q).value
    gap = hi - lo
    if gap < -1e-10:
        raise NumericalSolveError(
            f"upper Hamiltonian {hi} below lower {lo}", residual=gap)
    return max(gap, 0.0)


# ----------------------------------------------------------- matrix games ---- #


@dataclass(frozen=True, eq=False)
class MixedSolution:
    """Mixed-strategy value of a matrix game with its accuracy certificate.

    ``residual`` bounds the distance to the exact value: how far the
    returned (mu, nu) pair is from closing the duality gap.  ``method`` is
    "saddle", "2x2" or "lp".
    """

    value: float
    mu: np.ndarray
    nu: np.ndarray
    residual: float
    method: str


def solve_matrix_game(A: np.ndarray, tol: float = 1e-8) -> MixedSolution:
    """Value and optimal mixed strategies of the zero-sum game max_mu min_nu mu^T A nu.

    The row player maximizes.  Exact shortcuts handle pure saddle points and
    2x2 games; everything else goes through two linear programs whose gap is
    checked against ``tol`` (scaled by the matrix magnitude).
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.size == 0:
        raise ModelEvaluationError(f"game matrix must be 2-d and non-empty, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ModelEvaluationError("game matrix contains non-finite entries")
    n_u, n_v = A.shape

    row_min = A.min(axis=1)
    col_max = A.max(axis=0)
    v_low = float(row_min.max())
    v_up = float(col_max.min())
    if v_up <= v_low:
        # pure saddle point: exact, degenerate weights, lowest-index ties
        mu = np.zeros(n_u)
        mu[int(np.argmax(row_min))] = 1.0
        nu = np.zeros(n_v)
        nu[int(np.argmin(col_max))] = 1.0
        return MixedSolution(value=v_low, mu=mu, nu=nu, residual=0.0, method="saddle")

    if A.shape == (2, 2):
        # completely mixed 2x2 game (no saddle): closed form
        a, b = A[0]
        c, d = A[1]
        denom = a + d - b - c  # nonzero, else a saddle would exist
        value = (a * d - b * c) / denom
        mu = np.array([(d - c) / denom, (a - b) / denom])
        nu = np.array([(d - b) / denom, (a - c) / denom])
        return MixedSolution(value=float(value), mu=mu, nu=nu, residual=0.0, method="2x2")

    scale = max(1.0, float(np.max(np.abs(A))))
    v_row, mu = _lp_value(A)            # max_mu min_j (mu^T A)_j
    v_col, nu = _lp_value(-A.T)         # nu optimal for the column player
    v_col = -v_col
    # worst-case payoffs under the returned strategies certify the value
    guaranteed_row = float((mu @ A).min())
    guaranteed_col = float((A @ nu).max())
    residual = max(abs(v_row - v_col), guaranteed_col - guaranteed_row)
    if residual > tol * scale:
        raise NumericalSolveError(
            f"matrix game LP residual {residual:.3e} exceeds {tol:.1e} * {scale:.3g}",
            residual=residual)
    return MixedSolution(value=0.5 * (guaranteed_row + guaranteed_col),
                         mu=mu, nu=nu, residual=residual, method="lp")


def _lp_value(A: np.ndarray) -> tuple[float, np.ndarray]:
    """max over weights mu of min_j (mu^T A)_j via one LP (HiGHS)."""
    n, m = A.shape
    # variables (w, mu): maximize w  s.t.  w <= (mu^T A)_j, sum mu = 1, mu >= 0
    c = np.zeros(n + 1)
    c[0] = -1.0
    A_ub = np.hstack([np.ones((m, 1)), -A.T])
    b_ub = np.zeros(m)
    A_eq = np.zeros((1, n + 1))
    A_eq[0, 1:] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                  bounds=[(None, None)] + [(0.0, 1.0)] * n, method="highs")
    if not res.success:
        raise NumericalSolveError(f"matrix game LP failed: {res.message}")
    mu = np.clip(res.x[1:], 0.0, None)
    mu /= mu.sum()
    return float(res.x[0]), mu


def hamiltonian_mixed(spec: ProblemSpec, q: HamiltonianQuery,
                      tol: float = 1e-8) -> MixedSolution:
    """Mixed-strategy value of the running-term game at one query point.

    Always wedged between the lower and upper Hamiltonians (up to the
    solution's residual), with equality on both sides iff a saddle exists.
    """
    return solve_matrix_game(lagrangian_matrix(spec, q), tol=tol)
