"""Deterministic engine for the reduced 1D BGK system.

Advances the pair (phi, psi) with a second-order IMEX Runge-Kutta scheme:
transport is explicit (MUSCL finite volume, MC limiter), relaxation is
implicit but closed-form because the stage Maxwellians are known from a
moment pre-solve (the collision term has zero quadrature moments, so the
stage moments follow from the explicit transport update alone).  A final
relaxation correction with coefficient ``alpha * dt^2 / eps^2`` keeps the
scheme second order, positivity preserving, and asymptotic preserving.

Solves are single-threaded and self-contained; an arbitrary leading batch
axis lets many independent samples advance in lockstep.  When numba is
available the time loop runs on fused kernels (:mod:`bgkuq._kernels`);
the numpy operations in this module are the reference implementation and
the two paths are pinned together by an equivalence test.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import DegenerateWallError
from .maxwellian import (
    Moments,
    NewtonSettings,
    continuous_maxwellian_pair,
    moments_from_state,
    newton_discrete_maxwellian,
    newton_discrete_maxwellian_fast,
)
from .quadrature import VelocityGrid

__all__ = [
    "SpatialMesh",
    "KineticState",
    "Boundary",
    "BoundarySpec",
    "ImexTableau",
    "TABLEAUX",
    "get_tableau",
    "SolverConfig",
    "SolveDiagnostics",
    "SolveResult",
    "minmod3",
    "muscl_slopes",
    "upwind_flux",
    "apply_boundary",
    "transport_residual",
    "imex_step",
    "solve_to_time",
]

NGHOST = 2  # MUSCL stencil needs two ghost cells per side


@dataclass(frozen=True)
class SpatialMesh:
    """Uniform cell-centered mesh of [a, b] with Nx cells."""

    a: float
    b: float
    nx: int

    def __post_init__(self):
        if self.nx < 2:
            raise ValueError("mesh needs at least 2 cells")
        if not self.b > self.a:
            raise ValueError("mesh endpoints must satisfy a < b")

    @property
    def dx(self) -> float:
        return (self.b - self.a) / self.nx

    def centers(self) -> np.ndarray:
        return self.a + (np.arange(self.nx) + 0.5) * self.dx

    def refined(self) -> "SpatialMesh":
        return SpatialMesh(self.a, self.b, 2 * self.nx)


@dataclass
class KineticState:
    """Cell averages of (phi, psi) at the velocity nodes at time t.

    Arrays have shape (..., Nx, Nv); a leading batch axis carries
    independent samples.
    """

    phi: np.ndarray
    psi: np.ndarray
    t: float = 0.0

    @property
    def nx(self) -> int:
        return self.phi.shape[-2]

    def validate(self):
        if self.phi.shape != self.psi.shape:
            raise ValueError("phi and psi must share a shape")
        if not (np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.psi))):
            raise ValueError("state contains non-finite entries")
        return self


@dataclass(frozen=True)
class Boundary:
    """One side of the domain.

    kind:
      * ``periodic``          -- wraparound (must be set on both sides)
      * ``dirichlet``         -- prescribed ghost distributions
      * ``diffusive_wall``    -- wall Maxwellian with zero net mass flux
      * ``neumann``           -- homogeneous: copy of adjacent interior cell
    """

    kind: str
    temperature: float | np.ndarray | None = None  # diffusive wall T_w > 0
    phi: np.ndarray | None = None  # dirichlet ghost values, broadcast to (2, Nv)
    psi: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("periodic", "dirichlet", "diffusive_wall", "neumann"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "diffusive_wall":
            if self.temperature is None or np.any(np.asarray(self.temperature) <= 0):
                raise ValueError("diffusive wall requires T_w > 0")
        if self.kind == "dirichlet" and (self.phi is None or self.psi is None):
            raise ValueError("dirichlet boundary requires ghost phi/psi values")


@dataclass(frozen=True)
class BoundarySpec:
    left: Boundary
    right: Boundary

    def __post_init__(self):
        if (self.left.kind == "periodic") != (self.right.kind == "periodic"):
            raise ValueError("periodic boundaries must be set on both sides")

    @staticmethod
    def periodic() -> "BoundarySpec":
        return BoundarySpec(Boundary("periodic"), Boundary("periodic"))

    @staticmethod
    def neumann() -> "BoundarySpec":
        return BoundarySpec(Boundary("neumann"), Boundary("neumann"))


@dataclass(frozen=True)
class ImexTableau:
    """Double Butcher tableau plus final-correction coefficient.

    ``explicit`` is strictly lower triangular, ``implicit`` lower
    triangular with strictly positive diagonal; the scheme is stiffly
    accurate (the new state is the last stage, then the correction with
    coefficient ``correction`` is applied through the moment identity).
    """

    name: str
    explicit: np.ndarray
    implicit: np.ndarray
    correction: float

    def __post_init__(self):
        ex = np.asarray(self.explicit, dtype=float)
        im = np.asarray(self.implicit, dtype=float)
        if ex.ndim != 2 or ex.shape[0] != ex.shape[1] or ex.shape != im.shape:
            raise ValueError("tableaux must be square matrices of equal size")
        if np.any(np.triu(ex) != 0.0):
            raise ValueError("explicit tableau must be strictly lower triangular")
        if np.any(np.triu(im, 1) != 0.0):
            raise ValueError("implicit tableau must be lower triangular")
        if np.any(np.diag(im) <= 0.0):
            raise ValueError("implicit tableau needs a strictly positive diagonal")
        if self.correction < 0.0:
            raise ValueError("correction coefficient must be nonnegative")
        ex.setflags(write=False)
        im.setflags(write=False)
        object.__setattr__(self, "explicit", ex)
        object.__setattr__(self, "implicit", im)

    @property
    def stages(self) -> int:
        return self.explicit.shape[0]


# Second-order positivity/asymptotic-preserving tables.  The explicit part
# is the two-stage SSP scheme written with the final combination as a third
# stage; the implicit part and the correction coefficient close the
# second-order conditions of the relaxation (which satisfies g'g = -g
# because the Maxwellian matches the moments of its argument).  In the
# default table a21 = a11, which makes the second stage an exact forward
# Euler step from the relaxed first stage; this is what keeps the scheme
# positive at the CFL limit.
TABLEAUX: dict[str, ImexTableau] = {
    "pp-ap-2": ImexTableau(
        name="pp-ap-2",
        explicit=np.array([[0.0, 0.0, 0.0],
                           [1.0, 0.0, 0.0],
                           [0.5, 0.5, 0.0]]),
        implicit=np.array([[1.0 / 3.0, 0.0, 0.0],
                           [1.0 / 3.0, 1.0 / 3.0, 0.0],
                           [0.5, 0.0, 0.5]]),
        correction=1.0 / 6.0,
    ),
    "pp-ap-2-alt": ImexTableau(
        name="pp-ap-2-alt",
        explicit=np.array([[0.0, 0.0, 0.0],
                           [1.0, 0.0, 0.0],
                           [0.5, 0.5, 0.0]]),
        implicit=np.array([[0.5, 0.0, 0.0],
                           [0.0, 0.5, 0.0],
                           [0.5, 0.0, 0.5]]),
        correction=0.25,
    ),
}

DEFAULT_TABLEAU = "pp-ap-2"


def get_tableau(name_or_tableau) -> ImexTableau:
    if isinstance(name_or_tableau, ImexTableau):
        return name_or_tableau
    try:
        return TABLEAUX[name_or_tableau]
    except KeyError:
        raise ValueError(
            f"unknown IMEX tableau {name_or_tableau!r}; "
            f"available: {sorted(TABLEAUX)}"
        ) from None


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float
    cfl_ratio: float = 0.1
    tableau: str | ImexTableau = DEFAULT_TABLEAU
    theta: float = 2.0  # MC limiter coefficient
    newton: NewtonSettings = field(default_factory=NewtonSettings)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("Knudsen number must be positive")
        if not 0.0 < self.cfl_ratio <= 1.0:
            raise ValueError("cfl_ratio must lie in (0, 1]")
        get_tableau(self.tableau)


@dataclass
class SolveDiagnostics:
    """Counters surfaced to the CLI output."""

    steps: int = 0
    newton_fallbacks: int = 0
    min_phi: float = np.inf
    min_psi: float = np.inf

    def merge(self, other: "SolveDiagnostics"):
        self.steps += other.steps
        self.newton_fallbacks += other.newton_fallbacks
        self.min_phi = min(self.min_phi, other.min_phi)
        self.min_psi = min(self.min_psi, other.min_psi)


@dataclass
class SolveResult:
    state: KineticState
    moments: Moments
    diagnostics: SolveDiagnostics


def minmod3(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    pos = (a > 0) & (b > 0) & (c > 0)
    neg = (a < 0) & (b < 0) & (c < 0)
    out = np.where(pos, np.minimum(np.minimum(a, b), c), 0.0)
    return np.where(neg, np.maximum(np.maximum(a, b), c), out)


def muscl_slopes(q_padded: np.ndarray, dx: float, theta: float = 2.0) -> np.ndarray:
    """Limited slopes for all cells that have both neighbours available.

    ``q_padded`` has shape (..., P, Nv) with ghost cells already filled;
    the result covers cells 1..P-2 (shape (..., P-2, Nv)).
    """
    dq = np.diff(q_padded, axis=-2) / dx
    central = (q_padded[..., 2:, :] - q_padded[..., :-2, :]) / (2.0 * dx)
    return minmod3(central, theta * dq[..., :-1, :], theta * dq[..., 1:, :])


def upwind_flux(grid: VelocityGrid, q_left: np.ndarray, q_right: np.ndarray) -> np.ndarray:
    """Interface flux max(0, v) q_l + min(0, v) q_r, per velocity node."""
    v = grid.nodes
    return np.maximum(v, 0.0) * q_left + np.minimum(v, 0.0) * q_right


def _wall_maxwellian(grid: VelocityGrid, t_wall) -> np.ndarray:
    """Unit-density wall Maxwellian at the velocity nodes; batched over T_w."""
    tw = np.asarray(t_wall, dtype=float)
    return np.exp(-grid.nodes**2 / (2.0 * tw[..., None])) / np.sqrt(2.0 * np.pi * tw[..., None])


def _ghost_pair(phi, psi, b: Boundary, side: str, grid: VelocityGrid, t: float):
    """Two ghost layers (..., 2, Nv) for one side; shared by both solver paths."""
    batch = phi.shape[:-2]
    nv = grid.nv
    shape = batch + (NGHOST, nv)
    if b.kind == "periodic":
        src = slice(-NGHOST, None) if side == "left" else slice(0, NGHOST)
        return phi[..., src, :], psi[..., src, :]
    if b.kind == "neumann":
        edge = slice(0, 1) if side == "left" else slice(-1, None)
        return (np.broadcast_to(phi[..., edge, :], shape),
                np.broadcast_to(psi[..., edge, :], shape))
    if b.kind == "dirichlet":
        return (np.broadcast_to(b.phi, shape), np.broadcast_to(b.psi, shape))
    # diffusive wall: incoming nodes re-emitted as a wall Maxwellian whose
    # density closes the discrete zero-net-mass-flux balance; outgoing
    # nodes extrapolated from the adjacent interior cell
    v = grid.nodes
    edge = 0 if side == "left" else -1
    incoming = v > 0 if side == "left" else v < 0
    phi_edge = phi[..., edge, :]
    psi_edge = psi[..., edge, :]
    out_flux = (phi_edge * ~incoming) @ grid.xjw[1]
    tw = np.asarray(b.temperature, dtype=float)
    mw_unit = _wall_maxwellian(grid, tw)
    half_flux = (mw_unit * incoming) @ grid.xjw[1]
    signed_out = -out_flux if side == "left" else out_flux
    if np.any(signed_out <= 0.0):
        raise DegenerateWallError(
            f"vanishing outgoing flux at {side} diffusive wall (t={t:.6g})")
    rho_w = signed_out / np.abs(half_flux)
    ghost_phi = np.where(incoming, rho_w[..., None] * mw_unit, phi_edge)
    ghost_psi = np.where(incoming, tw[..., None] * rho_w[..., None] * mw_unit,
                         psi_edge)
    return (np.broadcast_to(ghost_phi[..., None, :], shape),
            np.broadcast_to(ghost_psi[..., None, :], shape))


def apply_boundary(phi: np.ndarray, psi: np.ndarray, spec: BoundarySpec,
                   grid: VelocityGrid, mesh: SpatialMesh, t: float = 0.0):
    """Return ghost-padded copies of (phi, psi), two ghost cells per side."""
    batch = phi.shape[:-2]
    pad_shape = batch + (mesh.nx + 2 * NGHOST, grid.nv)
    phip = np.empty(pad_shape)
    psip = np.empty(pad_shape)
    phip[..., NGHOST:-NGHOST, :] = phi
    psip[..., NGHOST:-NGHOST, :] = psi
    gl_phi, gl_psi = _ghost_pair(phi, psi, spec.left, "left", grid, t)
    gr_phi, gr_psi = _ghost_pair(phi, psi, spec.right, "right", grid, t)
    phip[..., :NGHOST, :] = gl_phi
    psip[..., :NGHOST, :] = gl_psi
    phip[..., -NGHOST:, :] = gr_phi
    psip[..., -NGHOST:, :] = gr_psi
    return phip, psip


def _flux_divergence(grid: VelocityGrid, qp: np.ndarray, dx: float, theta: float):
    """MUSCL transport residual -d/dx F for the Nx interior cells."""
    slopes = muscl_slopes(qp, dx, theta)  # cells 1..P-2
    half = 0.5 * dx
    q_left = qp[..., 1:-2, :] + half * slopes[..., :-1, :]
    q_right = qp[..., 2:-1, :] - half * slopes[..., 1:, :]
    flux = upwind_flux(grid, q_left, q_right)  # interfaces 0..Nx
    return -np.diff(flux, axis=-2) / dx


def transport_residual(phi: np.ndarray, psi: np.ndarray, spec: BoundarySpec,
                       grid: VelocityGrid, mesh: SpatialMesh,
                       t: float = 0.0, theta: float = 2.0):
    """Transport residuals of (phi, psi) and their quadrature moment rates.

    Returns (t_phi, t_psi, t_mom) where ``t_mom[..., :]`` stacks the rates
    of (rho, m, E) used by the stage moment pre-solve.
    """
    phip, psip = apply_boundary(phi, psi, spec, grid, mesh, t)
    t_phi = _flux_divergence(grid, phip, mesh.dx, theta)
    t_psi = _flux_divergence(grid, psip, mesh.dx, theta)
    t_mom = np.stack(
        [t_phi @ grid.xjw[0],
         t_phi @ grid.xjw[1],
         0.5 * (t_phi @ grid.xjw[2]) + t_psi @ grid.xjw[0]],
        axis=-1,
    )
    return t_phi, t_psi, t_mom


def _stage_maxwellian(grid, mom_stack, config, warm, diag, *, t, stage, fast=False):
    """Newton solve for the stage Maxwellian pair, with continuous fallback.

    Returns (params, mphi, psifac) where the stage pair is
    (mphi, psifac[..., None] * mphi).
    """
    target = Moments(rho=mom_stack[..., 0], m=mom_stack[..., 1], e=mom_stack[..., 2])
    target.validate(t=t, stage=stage)
    solver_fn = (newton_discrete_maxwellian_fast
                 if fast and _kernels.HAVE_NUMBA else newton_discrete_maxwellian)
    params, _, ok, mphi = solver_fn(grid, target, warm, config.newton)
    psifac = -0.5 / np.asarray(params.alpha3)
    if not np.all(ok):
        # robustness over hard abort: lose exact discrete conservation for
        # the failed cells and surface the count in the diagnostics
        diag.newton_fallbacks += int(np.sum(~ok))
        cphi, _ = continuous_maxwellian_pair(grid, target.rho, target.u, target.T)
        mphi = np.where(ok[..., None], mphi, cphi)
        psifac = np.where(ok, psifac, target.T)
    return params, np.ascontiguousarray(mphi), np.ascontiguousarray(psifac)


def _moment_rates_pair(grid, t_phi, t_psi):
    return np.stack(
        [t_phi @ grid.xjw[0],
         t_phi @ grid.xjw[1],
         0.5 * (t_phi @ grid.xjw[2]) + t_psi @ grid.xjw[0]],
        axis=-1,
    )


def imex_step(state: KineticState, dt: float, config: SolverConfig,
              grid: VelocityGrid, mesh: SpatialMesh, spec: BoundarySpec,
              diag: SolveDiagnostics | None = None,
              warm: list | None = None,
              fast: bool | None = None) -> KineticState:
    """One IMEX-RK step of size dt.

    Stage moments come from the explicit moment update (collision moments
    vanish), each implicit stage is solved in closed form once the stage
    Maxwellian is known, and the final correction reuses the last stage's
    Maxwellian because the updated moments equal the last stage's.
    ``warm`` (optional, mutated) carries Newton warm starts across steps.
    """
    if fast is None:
        fast = _kernels.HAVE_NUMBA
    if fast:
        stepper = _FastStepper(state.phi.shape, config, grid, mesh, spec)
        f_stacked = stepper.stack_state(state.phi, state.psi)
        if diag is None:
            diag = SolveDiagnostics()
        if warm is not None and len(warm) == stepper.tab.stages:
            stepper.warm = warm
        f_new = stepper.step(f_stacked, state.t, dt, diag)
        if warm is not None:
            warm[:] = stepper.warm
        phi, psi = stepper.unstack_state(f_new)
        return KineticState(phi=phi, psi=psi, t=state.t + dt)

    if diag is None:
        diag = SolveDiagnostics()
    tab = get_tableau(config.tableau)
    ex, im, nstage = tab.explicit, tab.implicit, tab.stages
    eps = config.epsilon
    theta = config.theta
    phi_n, psi_n, t = state.phi, state.psi, state.t

    mom_n = _moment_rates_pair(grid, phi_n, psi_n)
    transport_needed = [bool(np.any(ex[i + 1:, i] != 0.0)) for i in range(nstage)]
    t_phi = [None] * nstage
    t_psi = [None] * nstage
    t_mom = [None] * nstage
    d_phi = [None] * nstage  # M_phi - phi at each stage
    d_psi = [None] * nstage
    if warm is None or len(warm) != nstage:
        warm_params = [None] * nstage
    else:
        warm_params = warm

    phi_s = psi_s = mphi_s = psifac_s = None
    for i in range(nstage):
        ex_phi = phi_n.copy()
        ex_psi = psi_n.copy()
        mom_i = mom_n.copy()
        for j in range(i):
            if ex[i, j] != 0.0:
                c = dt * ex[i, j]
                ex_phi += c * t_phi[j]
                ex_psi += c * t_psi[j]
                mom_i += c * t_mom[j]
            if im[i, j] != 0.0:
                c = dt * im[i, j] / eps
                ex_phi += c * d_phi[j]
                ex_psi += c * d_psi[j]
        params, mphi_s, psifac_s = _stage_maxwellian(
            grid, mom_i, config, warm_params[i], diag, t=t, stage=i + 1)
        warm_params[i] = params
        mpsi_s = psifac_s[..., None] * mphi_s
        c = dt * im[i, i] / eps
        phi_s = (ex_phi + c * mphi_s) / (1.0 + c)
        psi_s = (ex_psi + c * mpsi_s) / (1.0 + c)
        d_phi[i] = mphi_s - phi_s
        d_psi[i] = mpsi_s - psi_s
        diag.min_phi = min(diag.min_phi, float(phi_s.min()))
        diag.min_psi = min(diag.min_psi, float(psi_s.min()))
        if transport_needed[i]:
            t_phi[i], t_psi[i], t_mom[i] = transport_residual(
                phi_s, psi_s, spec, grid, mesh, t, theta)

    if tab.correction != 0.0:
        # moments at n+1 equal the last stage's, so its Maxwellian is reused
        c = tab.correction * dt * dt / (eps * eps)
        phi_s = (phi_s + c * mphi_s) / (1.0 + c)
        psi_s = (psi_s + c * psifac_s[..., None] * mphi_s) / (1.0 + c)
        diag.min_phi = min(diag.min_phi, float(phi_s.min()))
        diag.min_psi = min(diag.min_psi, float(psi_s.min()))

    diag.steps += 1
    return KineticState(phi=phi_s, psi=psi_s, t=t + dt)


class _FastStepper:
    """Workspace and driver for the fused-kernel step (one solve)."""

    def __init__(self, state_shape, config, grid, mesh, spec):
        self.config = config
        self.grid = grid
        self.mesh = mesh
        self.spec = spec
        self.tab = get_tableau(config.tableau)
        self.batch = state_shape[:-2]
        b = int(np.prod(self.batch)) if self.batch else 1
        nx, nv = mesh.nx, grid.nv
        s = self.tab.stages
        self.b = b
        self.t_terms = np.empty((s, b, 2, nx, nv))
        self.d_terms = np.empty((s, b, 2, nx, nv))
        self.m_rates = np.empty((s, b, nx, 3))
        self.mom = np.empty((b, nx, 3))
        self.f_out = np.empty((b, 2, nx, nv))
        self.mins = np.empty((b, 2))
        self.warm = [None] * s
        self.prev_warm = [None] * s
        ex = self.tab.explicit
        im = self.tab.implicit
        self.transport_needed = [bool(np.any(ex[i + 1:, i] != 0.0))
                                 for i in range(s)]
        self.dterm_needed = [bool(np.any(im[i + 1:, i] != 0.0))
                             for i in range(s)]

    def stack_state(self, phi, psi):
        b, nx, nv = self.b, self.mesh.nx, self.grid.nv
        f = np.empty((b, 2, nx, nv))
        f[:, 0] = phi.reshape(b, nx, nv)
        f[:, 1] = psi.reshape(b, nx, nv)
        return f

    def unstack_state(self, f):
        shape = self.batch + (self.mesh.nx, self.grid.nv)
        return f[:, 0].reshape(shape).copy(), f[:, 1].reshape(shape).copy()

    def _predict(self, i):
        """Newton warm start: linear extrapolation of the stage parameters.

        Cuts roughly one Newton iteration per stage once two steps have
        run; the a3 admissibility guard falls back to the previous value.
        """
        prev = self.warm[i]
        prev2 = self.prev_warm[i]
        if prev is None or prev2 is None:
            return prev
        from .maxwellian import MaxwellParams

        a3 = 2.0 * prev.alpha3 - prev2.alpha3
        bad = a3 >= -1e-8
        if np.any(bad):
            a3 = np.where(bad, prev.alpha3, a3)
        return MaxwellParams(
            alpha1=2.0 * prev.alpha1 - prev2.alpha1,
            alpha2=2.0 * prev.alpha2 - prev2.alpha2,
            alpha3=a3,
        )

    def _ghosts(self, f, t):
        phi, psi = f[:, 0], f[:, 1]
        gl_phi, gl_psi = _ghost_pair(phi, psi, self.spec.left, "left", self.grid, t)
        gr_phi, gr_psi = _ghost_pair(phi, psi, self.spec.right, "right", self.grid, t)
        gl = np.ascontiguousarray(np.stack([gl_phi, gl_psi], axis=-3))
        gr = np.ascontiguousarray(np.stack([gr_phi, gr_psi], axis=-3))
        return gl, gr

    def step(self, f, t, dt, diag):
        grid, mesh, config = self.grid, self.mesh, self.config
        tab = self.tab
        ex, im = tab.explicit, tab.implicit
        eps = config.epsilon
        w, xw, x2w = grid.xjw[0], grid.xjw[1], grid.xjw[2]

        _kernels.moments(f, w, xw, x2w, self.mom)
        mphi = psifac = None
        for i in range(tab.stages):
            mom_i = self.mom.copy()
            for j in range(i):
                if ex[i, j] != 0.0:
                    mom_i += (dt * ex[i, j]) * self.m_rates[j]
            params, mphi, psifac = _stage_maxwellian(
                grid, mom_i, config, self._predict(i), diag, t=t, stage=i + 1,
                fast=True)
            self.prev_warm[i] = self.warm[i]
            self.warm[i] = params
            excoef = dt * ex[i, :]  # strictly lower: entries >= i are zero
            imcoef = dt * im[i, :] / eps
            imcoef[i:] = 0.0  # the diagonal enters through the closed form
            c = dt * im[i, i] / eps
            _kernels.assemble_relax(
                f, self.t_terms, self.d_terms, i, excoef, imcoef,
                mphi, psifac, c, self.f_out, self.d_terms[i],
                self.dterm_needed[i], self.mins)
            diag.min_phi = min(diag.min_phi, float(self.mins[:, 0].min()))
            diag.min_psi = min(diag.min_psi, float(self.mins[:, 1].min()))
            if self.transport_needed[i]:
                gl, gr = self._ghosts(self.f_out, t)
                _kernels.transport(self.f_out, gl, gr, mesh.dx, config.theta,
                                   grid.nodes, w, xw, x2w,
                                   self.t_terms[i], self.m_rates[i])

        if tab.correction != 0.0:
            c = tab.correction * dt * dt / (eps * eps)
            _kernels.relax(self.f_out, mphi, psifac, c, self.mins)
            diag.min_phi = min(diag.min_phi, float(self.mins[:, 0].min()))
            diag.min_psi = min(diag.min_psi, float(self.mins[:, 1].min()))

        diag.steps += 1
        out = self.f_out
        self.f_out = f  # ping-pong buffers
        return out


def solve_to_time(state: KineticState, t_final: float, config: SolverConfig,
                  grid: VelocityGrid, mesh: SpatialMesh, spec: BoundarySpec,
                  snapshot_times=None, snapshot_callback=None,
                  fast: bool | None = None) -> SolveResult:
    """Integrate to ``t_final`` with dt = cfl_ratio * dx.

    The last step before ``t_final`` (and before every requested snapshot
    time) is shortened so output times are hit exactly.
    """
    if t_final < state.t:
        raise ValueError("t_final precedes the state's current time")
    if fast is None:
        fast = _kernels.HAVE_NUMBA
    diag = SolveDiagnostics()
    dt_nominal = config.cfl_ratio * mesh.dx
    targets = sorted(set(float(s) for s in (snapshot_times or [])) | {float(t_final)})
    targets = [s for s in targets if s > state.t + 1e-14]
    tiny = 1e-12 * max(1.0, abs(t_final))

    if fast:
        stepper = _FastStepper(state.phi.shape, config, grid, mesh, spec)
        f = stepper.stack_state(state.phi, state.psi)
        t = state.t
        for target in targets:
            while t < target - tiny:
                dt = min(dt_nominal, target - t)
                f = stepper.step(f, t, dt, diag)
                t += dt
            t = target
            if snapshot_callback is not None:
                phi, psi = stepper.unstack_state(f)
                snap = KineticState(phi=phi, psi=psi, t=t)
                snapshot_callback(snap, moments_from_state(grid, phi, psi, t=t))
        phi, psi = stepper.unstack_state(f)
        state = KineticState(phi=phi, psi=psi, t=t if targets else state.t)
    else:
        warm: list = [None] * get_tableau(config.tableau).stages
        for target in targets:
            while state.t < target - tiny:
                dt = min(dt_nominal, target - state.t)
                state = imex_step(state, dt, config, grid, mesh, spec, diag, warm,
                                  fast=False)
            state = replace(state, t=target)
            if snapshot_callback is not None:
                mom = moments_from_state(grid, state.phi, state.psi, t=state.t)
                snapshot_callback(state, mom)

    mom = moments_from_state(grid, state.phi, state.psi, t=state.t)
    return SolveResult(state=state, moments=mom, diagnostics=diag)
