"""Galerkin coarse problem and the two flavors of coarse correction.

The coarse function tests the fine residual against the interpolation
basis: F_0(u_0) = P_0^T F(P_0 u_0), one DOF per subdomain.  The test
space has to match the trial space here: aggregating residuals with
plain per-coarse-cell sums instead (the other natural finite-volume
choice, kept as decomposition.coarse_restrict_sum) breaks the Galerkin
symmetry, and the resulting two-level correction amplifies interface
modes -- on the linear Darcy problem the two-level iteration operator
then has spectral radius around 5-6 and the fixed point diverges.

The full-approximation-scheme correction C_0(u) (used by the two-level
Newton solver on the restricted Schwarz function) solves

    F_0(R_0 u + C_0(u)) = F_0(R_0 u) - P_0^T F(u),

by coarse Newton from the initial guess R_0 u, which makes J_0 = F_0'(R_0 u)
a free by-product of the first step.  The additive-Schwarz variant instead
precomputes the coarse solution u_0* (F_0(u_0*) = 0) once and solves

    F_0(C_0^A(u) + u_0*) = -P_0^T F(u)

from the initial guess u_0*.  Both retain the dense coarse Jacobian at the
converged iterate (J^_0), factorized, for the outer Jacobian actions

    dC_0/du   = -R_0 + J^_0^{-1} (J_0 R_0 - P_0^T J(u)),
    dC_0^A/du = -J^_0^{-1} P_0^T J(u).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .local_solver import StaleCacheError

__all__ = [
    "CoarseSolveResult",
    "CoarseSolveError",
    "coarse_residual",
    "coarse_jacobian",
    "fas_correction",
    "fas_correction_jacobian_action",
    "aspin_coarse_setup",
    "aspin_coarse_correction",
    "aspin_coarse_jacobian_action",
]


class CoarseSolveError(RuntimeError):
    """The coarse Newton solve failed to converge or became singular."""


@dataclass(frozen=True, eq=False)
class CoarseSolveResult:
    """Outcome of one coarse correction solve.

    J0 is the coarse Jacobian at the initial guess (FAS only, None for the
    additive-Schwarz correction); J0_hat_lu factorizes the coarse Jacobian
    at the converged iterate.  base_state guards against reuse at a
    different fine state.
    """

    correction: np.ndarray
    J0: np.ndarray = field(repr=False)
    J0_hat: np.ndarray = field(repr=False)
    J0_hat_lu: tuple = field(repr=False)
    inner_iterations: int
    base_state: np.ndarray = field(repr=False)


def coarse_residual(problem, layout, u0):
    """F_0(u_0) = P_0^T F(P_0 u_0)."""
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (layout.n_coarse,):
        raise ValueError(f"expected coarse vector of length {layout.n_coarse}")
    return layout.P0.T @ problem.residual(layout.P0 @ u0)


def coarse_jacobian(problem, layout, u0):
    """Dense F_0'(u_0) = P_0^T J(P_0 u_0) P_0 (coarse dimension is small)."""
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (layout.n_coarse,):
        raise ValueError(f"expected coarse vector of length {layout.n_coarse}")
    J = problem.jacobian(layout.P0 @ u0)
    return np.asarray((layout.P0.T @ J @ layout.P0).todense())


def _coarse_newton(problem, layout, w0, rhs, settings, what):
    """Solve F_0(w) = rhs by Newton from w0.

    Returns (w, iterations, J_first) with J_first the coarse Jacobian
    assembled at w0 (None when no step was needed).
    """
    w = np.asarray(w0, dtype=float).copy()
    J_first = None
    iterations = 0
    r = coarse_residual(problem, layout, w) - rhs
    rnorm = np.linalg.norm(r)
    while rnorm > settings.inner_tol:
        if iterations >= settings.max_inner:
            raise CoarseSolveError(
                f"{what}: coarse Newton did not reach {settings.inner_tol} "
                f"within {settings.max_inner} iterations (residual {rnorm:.3e})"
            )
        J = coarse_jacobian(problem, layout, w)
        if J_first is None:
            J_first = J
        try:
            step = sla.solve(J, r)
        except sla.LinAlgError as exc:
            raise CoarseSolveError(f"{what}: singular coarse Jacobian") from exc
        w -= step
        iterations += 1
        r = coarse_residual(problem, layout, w) - rhs
        rnorm = np.linalg.norm(r)
        if not np.isfinite(rnorm):
            raise CoarseSolveError(f"{what}: coarse Newton produced non-finite values")
    return w, iterations, J_first


def fas_correction(problem, layout, u, settings):
    """Full-approximation-scheme coarse correction C_0(u)."""
    u = np.asarray(u, dtype=float)
    u0 = layout.R0 @ u
    rhs = coarse_residual(problem, layout, u0) - layout.P0.T @ problem.residual(u)
    w, iterations, J_first = _coarse_newton(
        problem, layout, u0, rhs, settings, "FAS coarse correction"
    )
    J0_hat = coarse_jacobian(problem, layout, w)
    J0 = J_first if J_first is not None else J0_hat
    return CoarseSolveResult(
        correction=w - u0,
        J0=J0,
        J0_hat=J0_hat,
        J0_hat_lu=sla.lu_factor(J0_hat),
        inner_iterations=iterations,
        base_state=u.copy(),
    )


def fas_correction_jacobian_action(result, problem, layout, u, v, J_u=None):
    """Apply dC_0/du = -R_0 + J^_0^{-1}(J_0 R_0 - P_0^T J(u)) to v.

    J_u may pass a preassembled fine Jacobian at u to avoid reassembly;
    otherwise problem.jacobian(u) is used.
    """
    if not np.array_equal(u, result.base_state):
        raise StaleCacheError(
            "FAS coarse correction was solved at a different state"
        )
    if J_u is None:
        J_u = problem.jacobian(u)
    R0v = layout.R0 @ v
    w = result.J0 @ R0v - layout.P0.T @ (J_u @ v)
    return -R0v + sla.lu_solve(result.J0_hat_lu, w)


def aspin_coarse_setup(problem, layout, settings):
    """Solve the plain coarse problem F_0(u_0*) = 0 once, from zero."""
    zero = np.zeros(layout.n_coarse)
    w, _, _ = _coarse_newton(
        problem, layout, zero, np.zeros(layout.n_coarse), settings,
        "coarse base solve",
    )
    return w


def aspin_coarse_correction(problem, layout, u, u0_star, settings):
    """Additive-Schwarz coarse correction: F_0(C_0^A + u_0*) = -P_0^T F(u)."""
    u = np.asarray(u, dtype=float)
    u0_star = np.asarray(u0_star, dtype=float)
    rhs = -(layout.P0.T @ problem.residual(u))
    w, iterations, J_first = _coarse_newton(
        problem, layout, u0_star, rhs, settings, "AS coarse correction"
    )
    J0_hat = coarse_jacobian(problem, layout, w)
    return CoarseSolveResult(
        correction=w - u0_star,
        J0=J_first if J_first is not None else J0_hat,
        J0_hat=J0_hat,
        J0_hat_lu=sla.lu_factor(J0_hat),
        inner_iterations=iterations,
        base_state=u.copy(),
    )


def aspin_coarse_jacobian_action(result, problem, layout, u, v, J_u=None):
    """Apply dC_0^A/du = -J^_0^{-1} P_0^T J(u) to v."""
    if not np.array_equal(u, result.base_state):
        raise StaleCacheError(
            "AS coarse correction was solved at a different state"
        )
    if J_u is None:
        J_u = problem.jacobian(u)
    return -sla.lu_solve(result.J0_hat_lu, layout.P0.T @ (J_u @ v))
