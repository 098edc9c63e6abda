"""Macroscopic moments and the discrete Maxwellian pair.

The reduced distributions (phi, psi) define the conservative moments

    rho = <phi>,  m = <v phi>,  E = <v^2/2 phi + psi>,

with bulk velocity U = m/rho and temperature T = (2 rho E - m^2)/(3 rho^2).
Because the velocity domain is truncated, the continuous Maxwellian
evaluated at the quadrature nodes does not reproduce these moments
exactly.  The discrete Maxwellian ansatz

    M_phi = exp(a1 + a2 v + a3 v^2),   M_psi = -M_phi / (2 a3),

removes that error: its three parameters are fixed by a Newton iteration
so that the quadrature moments of (M_phi, M_psi) match (rho, m, E) to
solver tolerance.  This exact moment matching is what makes the
relaxation step conservative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStateError, NewtonConvergenceError
from .quadrature import VelocityGrid

__all__ = [
    "Moments",
    "MaxwellParams",
    "NewtonSettings",
    "moments_from_state",
    "continuous_maxwellian_pair",
    "eval_maxwellian_pair",
    "newton_discrete_maxwellian",
    "solve_discrete_maxwellian",
]


@dataclass(frozen=True)
class Moments:
    """Conservative triple (rho, m, E) with derived (U, T).

    Fields are arrays of identical shape (scalars allowed); a state is
    physically admissible iff rho > 0 and T > 0.
    """

    rho: np.ndarray
    m: np.ndarray
    e: np.ndarray

    @property
    def u(self) -> np.ndarray:
        return self.m / self.rho

    @property
    def T(self) -> np.ndarray:
        return (2.0 * self.rho * self.e - self.m**2) / (3.0 * self.rho**2)

    def validate(self, *, t=None, stage=None):
        """Raise :class:`DegenerateStateError` if any state is non-physical."""
        rho = np.asarray(self.rho)
        bad = ~(rho > 0.0) | ~np.isfinite(rho)
        if np.any(bad):
            cell = np.argwhere(bad)[0]
            raise DegenerateStateError(
                f"non-positive density rho={rho[tuple(cell)]:.6g}",
                cell=tuple(cell), t=t, stage=stage,
            )
        T = np.asarray(self.T)
        bad = ~(T > 0.0) | ~np.isfinite(T)
        if np.any(bad):
            cell = np.argwhere(bad)[0]
            raise DegenerateStateError(
                f"non-positive temperature T={T[tuple(cell)]:.6g}",
                cell=tuple(cell), t=t, stage=stage,
            )
        return self


@dataclass(frozen=True)
class MaxwellParams:
    """Parameters (a1, a2, a3) of the discrete Maxwellian; a3 < 0."""

    alpha1: np.ndarray
    alpha2: np.ndarray
    alpha3: np.ndarray


@dataclass(frozen=True)
class NewtonSettings:
    tol: float = 1e-12           # success threshold on inf-norm residual / scale
    max_iter: int = 50
    max_halvings: int = 20
    alpha3_ceiling: float = -1e-8  # keep exp(a3 v^2) integrable


def moments_from_state(grid: VelocityGrid, phi: np.ndarray, psi: np.ndarray,
                       *, validate: bool = True, t=None, stage=None) -> Moments:
    """Quadrature moments of a reduced state; arrays may be batched.

    Raises :class:`DegenerateStateError` when the state yields rho <= 0 or
    T <= 0 (unless ``validate=False``).
    """
    phi = np.asarray(phi)
    psi = np.asarray(psi)
    if phi.shape != psi.shape or phi.shape[-1] != grid.nv:
        raise ValueError("phi/psi must share shape (..., Nv)")
    w, xw, x2w = grid.xjw[0], grid.xjw[1], grid.xjw[2]
    mom = Moments(rho=phi @ w, m=phi @ xw, e=0.5 * (phi @ x2w) + psi @ w)
    if validate:
        mom.validate(t=t, stage=stage)
    return mom


def continuous_maxwellian_pair(grid: VelocityGrid, rho, u, T):
    """Pointwise evaluation of the continuous reduced Maxwellian pair.

    phi(v) = rho/sqrt(2 pi T) exp(-(v-U)^2/(2T)),  psi = T * phi.
    Inputs broadcast; output gains a trailing velocity axis.
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    T = np.asarray(T, dtype=float)
    if np.any(~(rho > 0)) or np.any(~(T > 0)):
        raise ValueError("continuous Maxwellian requires rho > 0 and T > 0")
    v = grid.nodes
    arg = -((v - u[..., None]) ** 2) / (2.0 * T[..., None])
    phi = (rho / np.sqrt(2.0 * np.pi * T))[..., None] * np.exp(arg)
    return phi, T[..., None] * phi


def eval_maxwellian_pair(grid: VelocityGrid, params: MaxwellParams):
    """Evaluate (M_phi, M_psi) at the velocity nodes; strictly positive."""
    a1 = np.asarray(params.alpha1, dtype=float)[..., None]
    a2 = np.asarray(params.alpha2, dtype=float)[..., None]
    a3 = np.asarray(params.alpha3, dtype=float)[..., None]
    if np.any(a3 >= 0):
        raise ValueError("alpha3 must be strictly negative")
    v = grid.nodes
    mphi = np.exp(a1 + a2 * v + a3 * v * v)
    return mphi, (-0.5 / a3) * mphi


def _initial_guess(target: Moments) -> np.ndarray:
    """Continuous-Maxwellian parameters: within truncation distance of the root."""
    rho = np.asarray(target.rho, dtype=float)
    u = np.asarray(target.u, dtype=float)
    T = np.asarray(target.T, dtype=float)
    a3 = -0.5 / T
    a2 = u / T
    a1 = np.log(rho / np.sqrt(2.0 * np.pi * T)) - u * u / (2.0 * T)
    return np.stack([a1, a2, a3], axis=-1)


def _residual(grid: VelocityGrid, alphas: np.ndarray, tgt: np.ndarray):
    """Residual of the moment-matching system and node values of M_phi.

    Returns (residual (..., 3), mus (..., 5), mphi (..., Nv)).
    """
    v = grid.nodes
    with np.errstate(over="ignore"):
        mphi = np.exp(alphas[..., 0:1] + alphas[..., 1:2] * v + alphas[..., 2:3] * v * v)
    mus = mphi @ grid.xjw.T  # <v^j M_phi>, j = 0..4
    beta = -0.5 / alphas[..., 2]
    res = np.stack(
        [mus[..., 0] - tgt[..., 0],
         mus[..., 1] - tgt[..., 1],
         0.5 * mus[..., 2] + beta * mus[..., 0] - tgt[..., 2]],
        axis=-1,
    )
    return res, mus, mphi


def _solve3(jac: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Direct 3x3 elimination (Cramer), vectorized over the leading axis."""
    a, b, c = jac[:, 0, 0], jac[:, 0, 1], jac[:, 0, 2]
    d, e, f = jac[:, 1, 0], jac[:, 1, 1], jac[:, 1, 2]
    g, h, i = jac[:, 2, 0], jac[:, 2, 1], jac[:, 2, 2]
    co_a = e * i - f * h
    co_b = f * g - d * i
    co_c = d * h - e * g
    det = a * co_a + b * co_b + c * co_c
    r0, r1, r2 = rhs[:, 0], rhs[:, 1], rhs[:, 2]
    x0 = r0 * co_a + r1 * (c * h - b * i) + r2 * (b * f - c * e)
    x1 = r0 * co_b + r1 * (a * i - c * g) + r2 * (c * d - a * f)
    x2 = r0 * co_c + r1 * (b * g - a * h) + r2 * (a * e - b * d)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.stack([x0, x1, x2], axis=-1) / det[:, None]
    return out


def _flatten_problem(grid, target, guess):
    """Broadcast, validate, and flatten a Newton problem to (n, 3) arrays."""
    rho = np.asarray(target.rho, dtype=float)
    shape = rho.shape
    tgt = np.stack([np.broadcast_to(np.asarray(f, dtype=float), shape)
                    for f in (target.rho, target.m, target.e)], axis=-1)
    tgt = np.ascontiguousarray(tgt.reshape(-1, 3))
    if np.any(~(tgt[:, 0] > 0)):
        raise ValueError("Newton target requires rho > 0")
    temp = (2.0 * tgt[:, 0] * tgt[:, 2] - tgt[:, 1] ** 2) / (3.0 * tgt[:, 0] ** 2)
    if np.any(~(temp > 0)):
        raise ValueError("Newton target requires T > 0")
    if guess is None:
        alphas = _initial_guess(Moments(rho=tgt[:, 0], m=tgt[:, 1], e=tgt[:, 2]))
    else:
        alphas = np.stack(
            [np.broadcast_to(np.asarray(a, dtype=float), shape).reshape(-1)
             for a in (guess.alpha1, guess.alpha2, guess.alpha3)], axis=-1)
    return np.ascontiguousarray(alphas), tgt, shape


def newton_discrete_maxwellian_fast(grid: VelocityGrid, target: Moments,
                                    guess: MaxwellParams | None = None,
                                    settings: NewtonSettings = NewtonSettings()):
    """Kernel-backed counterpart of :func:`newton_discrete_maxwellian`.

    Same contract and tolerances; differs from the numpy path only by
    summation order inside the quadrature moments (last-bit effects).
    """
    from . import _kernels

    alphas, tgt, shape = _flatten_problem(grid, target, guess)
    n = tgt.shape[0]
    mphi = np.empty((n, grid.nv))
    iters = np.empty(n, dtype=np.int64)
    ok = np.empty(n, dtype=np.bool_)
    _kernels.newton(tgt, alphas, grid.nodes, grid.xjw,
                    settings.tol, 1e-2 * settings.tol, settings.max_iter,
                    settings.max_halvings, settings.alpha3_ceiling,
                    mphi, iters, ok)
    params = MaxwellParams(
        alpha1=alphas[:, 0].reshape(shape),
        alpha2=alphas[:, 1].reshape(shape),
        alpha3=alphas[:, 2].reshape(shape),
    )
    return params, iters.reshape(shape), ok.reshape(shape), \
        mphi.reshape(shape + (grid.nv,))


def newton_discrete_maxwellian(grid: VelocityGrid, target: Moments,
                               guess: MaxwellParams | None = None,
                               settings: NewtonSettings = NewtonSettings()):
    """Damped Newton iteration for the discrete Maxwellian parameters.

    Vectorized over arbitrary batch shapes.  Returns
    ``(params, iterations, converged, mphi)`` where ``iterations`` counts
    the Newton steps each cell needed to reach the tolerance, ``converged``
    flags per-cell success, and ``mphi`` holds the already-evaluated node
    values of M_phi (the hot path reuses them instead of re-evaluating).
    The analytic 3x3 Jacobian is assembled from quadrature moments of
    M_phi and solved by direct elimination; the step is halved while a3
    would leave the admissible region or the residual would increase (at
    most ``max_halvings`` times).
    """
    alphas, tgt, shape = _flatten_problem(grid, target, guess)
    n = tgt.shape[0]
    scale = np.maximum.reduce(
        [np.ones(n), tgt[:, 0], np.abs(tgt[:, 1]), tgt[:, 2]])
    # iterate two decades below the contract so per-step conservation
    # errors stay far under the acceptance budget
    target_tol = 1e-2 * settings.tol

    res, mus, mphi = _residual(grid, alphas, tgt)
    res_norm = np.max(np.abs(res), axis=-1)
    iters = np.zeros(n, dtype=int)
    first_hit = np.where(res_norm <= settings.tol * scale, 0, settings.max_iter + 1)
    # compressed active set: cells below target or unable to improve are
    # ejected, so late iterations touch only the few remaining stragglers
    active = np.flatnonzero(res_norm > target_tol * scale)

    for it in range(1, settings.max_iter + 1):
        if active.size == 0:
            break
        a = alphas[active]
        mu = mus[active]
        r = res[active]
        rn = res_norm[active]
        beta = -0.5 / a[:, 2]
        k = active.size
        jac = np.empty((k, 3, 3))
        jac[:, 0, 0] = mu[:, 0]
        jac[:, 0, 1] = mu[:, 1]
        jac[:, 0, 2] = mu[:, 2]
        jac[:, 1, 0] = mu[:, 1]
        jac[:, 1, 1] = mu[:, 2]
        jac[:, 1, 2] = mu[:, 3]
        jac[:, 2, 0] = 0.5 * mu[:, 2] + beta * mu[:, 0]
        jac[:, 2, 1] = 0.5 * mu[:, 3] + beta * mu[:, 1]
        jac[:, 2, 2] = 0.5 * mu[:, 4] + beta * mu[:, 2] \
            + mu[:, 0] / (2.0 * a[:, 2] ** 2)
        delta = _solve3(jac, r)
        bad_delta = ~np.all(np.isfinite(delta), axis=-1)
        if np.any(bad_delta):
            delta[bad_delta] = 0.0

        step = np.ones(k)
        trial = a - delta
        t_res, t_mus, t_mphi = _residual(grid, trial, tgt[active])
        t_norm = np.max(np.abs(t_res), axis=-1)
        for _ in range(settings.max_halvings):
            bad = ((trial[:, 2] >= settings.alpha3_ceiling)
                   | ~np.isfinite(t_norm) | (t_norm > rn))
            if not np.any(bad):
                break
            idx = np.flatnonzero(bad)
            step[idx] *= 0.5
            trial[idx] = a[idx] - step[idx, None] * delta[idx]
            sub_res, sub_mus, sub_mphi = _residual(grid, trial[idx], tgt[active[idx]])
            t_res[idx] = sub_res
            t_mus[idx] = sub_mus
            t_mphi[idx] = sub_mphi
            t_norm[idx] = np.max(np.abs(sub_res), axis=-1)

        improved = (np.isfinite(t_norm) & (trial[:, 2] < settings.alpha3_ceiling)
                    & (t_norm < rn))
        acc = active[improved]
        alphas[acc] = trial[improved]
        res[acc] = t_res[improved]
        mus[acc] = t_mus[improved]
        mphi[acc] = t_mphi[improved]
        res_norm[acc] = t_norm[improved]
        iters[active] = it
        hits = acc[(first_hit[acc] > settings.max_iter)
                   & (res_norm[acc] <= settings.tol * scale[acc])]
        first_hit[hits] = it
        # keep cells that improved but still sit above the target
        active = acc[res_norm[acc] > target_tol * scale[acc]]

    converged = res_norm <= settings.tol * scale
    iters = np.where(first_hit <= settings.max_iter, first_hit, iters)
    params = MaxwellParams(
        alpha1=alphas[:, 0].reshape(shape),
        alpha2=alphas[:, 1].reshape(shape),
        alpha3=alphas[:, 2].reshape(shape),
    )
    return params, iters.reshape(shape), converged.reshape(shape), \
        mphi.reshape(shape + (grid.nv,))


def solve_discrete_maxwellian(grid: VelocityGrid, target: Moments,
                              guess: MaxwellParams | None = None,
                              settings: NewtonSettings = NewtonSettings()) -> MaxwellParams:
    """Solve the moment-matching system; raise on any non-converged cell."""
    params, _, converged, _ = newton_discrete_maxwellian(grid, target, guess, settings)
    if not np.all(converged):
        res, _, _ = _residual(
            grid,
            np.stack([np.atleast_1d(params.alpha1),
                      np.atleast_1d(params.alpha2),
                      np.atleast_1d(params.alpha3)], axis=-1),
            np.stack([np.atleast_1d(np.asarray(target.rho, dtype=float)),
                      np.atleast_1d(np.asarray(target.m, dtype=float)),
                      np.atleast_1d(np.asarray(target.e, dtype=float))], axis=-1),
        )
        raise NewtonConvergenceError(
            f"{int(np.sum(~converged))} cell(s) failed to converge "
            f"within {settings.max_iter} iterations",
            residual=float(np.max(np.abs(res))),
        )
    return params
