"""Reference solutions and error functionals.

Two kinds of references:

* stochastic collocation -- deterministic solves at Gauss-Legendre nodes
  in z, combined with the uniform-density weights w_j / 2; used to build
  E[q] and V[q] fields (V via the identity E[q^2] - E[q]^2);
* the exact Riemann solution of the compressible Euler system with
  gamma = 5/3 and p = rho T -- the fluid-limit oracle used to check the
  asymptotic-preserving property of the kinetic solver.

Error functionals (K replication fields q_j against a reference field):

* overall:   sqrt( (1/K) sum_j ||q_j - q_ref||_{L1}^2 ),  ||.||_{L1} = dx sum |.|
* pointwise: sqrt( (1/K) sum_j (q_j(x) - q_ref(x))^2 )  per cell
* relative:  same formula against a reference computed on the matched
  (finest) mesh, isolating the statistical error from the spatial bias.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._version import __version__
from .errors import VacuumError
from .quadrature import VelocityGrid, build_gauss_legendre
from .random_inputs import Scenario, boundary_for, initial_state
from .solver import SolverConfig, SpatialMesh, solve_to_time

__all__ = [
    "ReferenceSolution",
    "collocation_reference",
    "euler_star_state",
    "euler_riemann_exact",
    "restrict",
    "error_overall",
    "error_pointwise",
    "error_relative",
    "QUANTITIES",
]

QUANTITIES = ("rho", "U", "T")
GAMMA = 5.0 / 3.0  # monatomic: E = 3/2 rho T + 1/2 rho U^2


@dataclass(frozen=True)
class ReferenceSolution:
    """Per-cell E[q] and V[q] fields plus provenance metadata."""

    kind: str  # "collocation" or "riemann_exact"
    scenario: str
    nc: int
    nx: int
    t: float
    mean: np.ndarray      # (3, nx) ordered as QUANTITIES
    variance: np.ndarray  # (3, nx)


def _moment_fields(grid, result) -> np.ndarray:
    """Stack (rho, U, T) per-cell fields from a solve result: (..., 3, Nx)."""
    mom = result.moments
    return np.stack([mom.rho, mom.u, mom.T], axis=-2)


def solve_scenario_fields(scenario: Scenario, z, nx: int, t: float | None = None,
                          grid: VelocityGrid | None = None,
                          config: SolverConfig | None = None) -> np.ndarray:
    """Deterministic solve(s) of a scenario; returns (..., 3, nx) fields."""
    if grid is None:
        grid = build_gauss_legendre(40, 5.0)
    if config is None:
        config = SolverConfig(epsilon=scenario.epsilon)
    mesh = SpatialMesh(scenario.a, scenario.b, nx)
    state = initial_state(scenario, z, mesh, grid)
    spec = boundary_for(scenario, z)
    t_final = scenario.t_final if t is None else t
    result = solve_to_time(state, t_final, config, grid, mesh, spec)
    return _moment_fields(grid, result)


def _cache_key(scenario, nc, nx, t, grid, config) -> str:
    payload = json.dumps(
        {
            "scenario": scenario.id,
            "constants": dict(scenario.constants),
            "nc": nc, "nx": nx, "t": t,
            "nv": grid.nv, "r": grid.r,
            "epsilon": config.epsilon, "cfl_ratio": config.cfl_ratio,
            "tableau": getattr(config.tableau, "name", config.tableau),
            "version": __version__,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def collocation_reference(scenario: Scenario, nc: int, nx: int,
                          t: float | None = None,
                          grid: VelocityGrid | None = None,
                          config: SolverConfig | None = None,
                          cache_dir: str | Path | None = None) -> ReferenceSolution:
    """E[q] and V[q] by Gauss-Legendre collocation in z at nc nodes.

    Nodes z_j and weights w_j come from the [-1, 1] rule; the uniform
    density contributes the factor 1/2, so sum_j w_j / 2 = 1.  With
    nc = 1 the single node is z = 0 and the reference equals the
    deterministic midpoint solve.  Results are cached on disk when
    ``cache_dir`` is given (purely an optimization).
    """
    if nc < 1:
        raise ValueError("collocation needs at least one node")
    if grid is None:
        grid = build_gauss_legendre(40, 5.0)
    if config is None:
        config = SolverConfig(epsilon=scenario.epsilon)
    t_final = scenario.t_final if t is None else float(t)

    cache_file = None
    if cache_dir is not None:
        cache_file = Path(cache_dir) / (
            _cache_key(scenario, nc, nx, t_final, grid, config) + ".npz")
        if cache_file.exists():
            data = np.load(cache_file)
            return ReferenceSolution(
                kind="collocation", scenario=scenario.id, nc=nc, nx=nx,
                t=t_final, mean=data["mean"], variance=data["variance"])

    zj, wj = np.polynomial.legendre.leggauss(int(nc))
    fields = solve_scenario_fields(scenario, zj, nx, t_final, grid, config)
    half_w = 0.5 * wj  # uniform density on [-1, 1]
    mean = np.tensordot(half_w, fields, axes=(0, 0))
    second = np.tensordot(half_w, fields**2, axes=(0, 0))
    variance = second - mean**2

    ref = ReferenceSolution(kind="collocation", scenario=scenario.id, nc=nc,
                            nx=nx, t=t_final, mean=mean, variance=variance)
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        np.savez(cache_file, mean=mean, variance=variance)
    return ref


# ---------------------------------------------------------------------------
# exact Riemann solution of the Euler system (gamma-law gas, p = rho T)
# ---------------------------------------------------------------------------

def _pressure_fn(p, rho_k, p_k, a_k, gamma):
    """Toro's f_K(p) and its derivative for one side of the star region."""
    shock = p > p_k
    ak_c = 2.0 / ((gamma + 1.0) * rho_k)
    bk_c = (gamma - 1.0) / (gamma + 1.0) * p_k
    sq = np.sqrt(ak_c / (p + bk_c))
    f_shock = (p - p_k) * sq
    df_shock = sq * (1.0 - 0.5 * (p - p_k) / (p + bk_c))
    pr = np.maximum(p, 1e-300) / p_k
    ex = (gamma - 1.0) / (2.0 * gamma)
    f_rare = 2.0 * a_k / (gamma - 1.0) * (pr**ex - 1.0)
    df_rare = pr ** (-(gamma + 1.0) / (2.0 * gamma)) / (rho_k * a_k)
    return np.where(shock, f_shock, f_rare), np.where(shock, df_shock, df_rare)


def euler_star_state(left, right, gamma: float = GAMMA, tol: float = 1e-12):
    """Star-region pressure and velocity for (rho, U, T) left/right states.

    Newton iteration on the pressure function with the two-rarefaction
    initial guess.  Raises :class:`VacuumError` for vacuum-generating data.
    """
    rho_l, u_l, t_l = (float(v) for v in left)
    rho_r, u_r, t_r = (float(v) for v in right)
    if min(rho_l, rho_r, t_l, t_r) <= 0.0:
        raise ValueError("Riemann states need positive density and temperature")
    p_l, p_r = rho_l * t_l, rho_r * t_r
    a_l = np.sqrt(gamma * p_l / rho_l)
    a_r = np.sqrt(gamma * p_r / rho_r)
    du = u_r - u_l
    if 2.0 * (a_l + a_r) / (gamma - 1.0) <= du:
        raise VacuumError("initial states generate vacuum")

    z = (gamma - 1.0) / (2.0 * gamma)
    p = ((a_l + a_r - 0.5 * (gamma - 1.0) * du)
         / (a_l / p_l**z + a_r / p_r**z)) ** (1.0 / z)
    p = max(p, 1e-14 * (p_l + p_r))
    for _ in range(100):
        f_l, df_l = _pressure_fn(p, rho_l, p_l, a_l, gamma)
        f_r, df_r = _pressure_fn(p, rho_r, p_r, a_r, gamma)
        dp = (f_l + f_r + du) / (df_l + df_r)
        p_new = p - dp
        if p_new <= 0.0:
            p_new = 0.5 * p
        if 2.0 * abs(p_new - p) / (p_new + p) < tol:
            p = p_new
            break
        p = p_new
    f_l, _ = _pressure_fn(p, rho_l, p_l, a_l, gamma)
    f_r, _ = _pressure_fn(p, rho_r, p_r, a_r, gamma)
    u_star = 0.5 * (u_l + u_r) + 0.5 * (f_r - f_l)
    return float(p), float(u_star)


def euler_riemann_exact(left, right, xi, gamma: float = GAMMA, tol: float = 1e-12):
    """Self-similar exact Riemann solution sampled at xi = x / t.

    ``left`` and ``right`` are (rho, U, T) triples; returns (rho, U, T)
    arrays over the sample points.
    """
    xi = np.asarray(xi, dtype=float)
    rho_l, u_l, t_l = (float(v) for v in left)
    rho_r, u_r, t_r = (float(v) for v in right)
    p_l, p_r = rho_l * t_l, rho_r * t_r
    a_l = np.sqrt(gamma * p_l / rho_l)
    a_r = np.sqrt(gamma * p_r / rho_r)
    p_star, u_star = euler_star_state(left, right, gamma, tol)
    gm = (gamma - 1.0) / (gamma + 1.0)

    rho = np.empty_like(xi)
    u = np.empty_like(xi)
    p = np.empty_like(xi)

    left_side = xi <= u_star
    # --- left wave ---
    if p_star > p_l:  # shock
        s_l = u_l - a_l * np.sqrt((gamma + 1.0) / (2.0 * gamma) * p_star / p_l
                                  + (gamma - 1.0) / (2.0 * gamma))
        rho_star_l = rho_l * ((p_star / p_l + gm) / (gm * p_star / p_l + 1.0))
        m = left_side & (xi < s_l)
        rho[m], u[m], p[m] = rho_l, u_l, p_l
        m = left_side & (xi >= s_l)
        rho[m], u[m], p[m] = rho_star_l, u_star, p_star
    else:  # rarefaction
        a_star_l = a_l * (p_star / p_l) ** ((gamma - 1.0) / (2.0 * gamma))
        head, tail = u_l - a_l, u_star - a_star_l
        rho_star_l = rho_l * (p_star / p_l) ** (1.0 / gamma)
        m = left_side & (xi < head)
        rho[m], u[m], p[m] = rho_l, u_l, p_l
        m = left_side & (xi > tail)
        rho[m], u[m], p[m] = rho_star_l, u_star, p_star
        m = left_side & (xi >= head) & (xi <= tail)
        fac = 2.0 / (gamma + 1.0) + gm / a_l * (u_l - xi[m])
        rho[m] = rho_l * fac ** (2.0 / (gamma - 1.0))
        u[m] = 2.0 / (gamma + 1.0) * (a_l + 0.5 * (gamma - 1.0) * u_l + xi[m])
        p[m] = p_l * fac ** (2.0 * gamma / (gamma - 1.0))

    right_side = ~left_side
    # --- right wave ---
    if p_star > p_r:  # shock
        s_r = u_r + a_r * np.sqrt((gamma + 1.0) / (2.0 * gamma) * p_star / p_r
                                  + (gamma - 1.0) / (2.0 * gamma))
        rho_star_r = rho_r * ((p_star / p_r + gm) / (gm * p_star / p_r + 1.0))
        m = right_side & (xi > s_r)
        rho[m], u[m], p[m] = rho_r, u_r, p_r
        m = right_side & (xi <= s_r)
        rho[m], u[m], p[m] = rho_star_r, u_star, p_star
    else:  # rarefaction
        a_star_r = a_r * (p_star / p_r) ** ((gamma - 1.0) / (2.0 * gamma))
        head, tail = u_r + a_r, u_star + a_star_r
        rho_star_r = rho_r * (p_star / p_r) ** (1.0 / gamma)
        m = right_side & (xi > head)
        rho[m], u[m], p[m] = rho_r, u_r, p_r
        m = right_side & (xi < tail)
        rho[m], u[m], p[m] = rho_star_r, u_star, p_star
        m = right_side & (xi <= head) & (xi >= tail)
        fac = 2.0 / (gamma + 1.0) - gm / a_r * (u_r - xi[m])
        rho[m] = rho_r * fac ** (2.0 / (gamma - 1.0))
        u[m] = 2.0 / (gamma + 1.0) * (-a_r + 0.5 * (gamma - 1.0) * u_r + xi[m])
        p[m] = p_r * fac ** (2.0 * gamma / (gamma - 1.0))

    return rho, u, p / rho


# ---------------------------------------------------------------------------
# mesh transfer and error functionals
# ---------------------------------------------------------------------------

def restrict(field: np.ndarray, to_nx: int) -> np.ndarray:
    """Conservative 2^k-cell averaging onto a coarser nested mesh."""
    nx = field.shape[-1]
    if nx == to_nx:
        return field
    if to_nx < 1 or nx % to_nx != 0:
        raise ValueError(f"cannot restrict {nx} cells to {to_nx}")
    factor = nx // to_nx
    if factor & (factor - 1):
        raise ValueError(f"restriction factor {factor} is not a power of 2")
    return field.reshape(field.shape[:-1] + (to_nx, factor)).mean(axis=-1)


def _as_replication_stack(fields) -> np.ndarray:
    arr = np.asarray(fields, dtype=float)
    if arr.ndim == 2:  # single replication (Q, Nx)
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError("replication fields must have shape (K, Q, Nx)")
    return arr


def error_overall(fields, reference: np.ndarray, dx: float) -> np.ndarray:
    """RMS over replications of the L1 distance to the reference: (Q,)."""
    arr = _as_replication_stack(fields)
    if arr.shape[1:] != np.shape(reference):
        raise ValueError("replication fields and reference live on different meshes")
    l1 = dx * np.sum(np.abs(arr - reference), axis=-1)  # (K, Q)
    return np.sqrt(np.mean(l1**2, axis=0))


def error_pointwise(fields, reference: np.ndarray) -> np.ndarray:
    """Per-cell RMS over replications against the reference: (Q, Nx)."""
    arr = _as_replication_stack(fields)
    if arr.shape[1:] != np.shape(reference):
        raise ValueError("replication fields and reference live on different meshes")
    return np.sqrt(np.mean((arr - reference) ** 2, axis=0))


def error_relative(fields, matched_reference: np.ndarray) -> np.ndarray:
    """Per-cell RMS against the matched-finest-mesh reference: (Q, Nx)."""
    return error_pointwise(fields, matched_reference)
