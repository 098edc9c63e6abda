"""Benchmark scenarios with random initial or boundary data.

Each scenario is driven by a single random variable z ~ Uniform[-1, 1]:

* ``test1_smooth``     -- smooth bimodal initial data with random density
  and temperature perturbations, periodic boundaries, eps = 1.
* ``test2_interface``  -- shock tube with random interface location
  0.5 + 0.05 z, eps = 1e-6.
* ``test2_state``      -- shock tube with random left density
  1 + 0.1 (z + 1), fixed interface at 0.5, eps = 1e-6.
* ``test3_heating``    -- sudden wall heating: diffusive wall at x = 0
  with random temperature T_w = 3 (1 + 0.2 z), homogeneous Neumann at
  x = 1, eps = 0.1.

Sampling is counter-based: a seed path (global seed, replication, level,
sample index) is hashed into a Philox key, so the same path yields a
bit-identical draw regardless of execution order or thread count, and a
coupled fine/coarse pair trivially shares its z.
"""
from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from .maxwellian import continuous_maxwellian_pair
from .quadrature import VelocityGrid
from .solver import Boundary, BoundarySpec, KineticState, SpatialMesh

__all__ = [
    "Scenario",
    "SCENARIOS",
    "get_scenario",
    "SampleDraw",
    "draw_z",
    "draw_z_batch",
    "initial_state",
    "boundary_for",
]


@dataclass(frozen=True)
class Scenario:
    """Identifier, physical regime, and frozen constants of one benchmark."""

    id: str
    epsilon: float
    t_final: float
    domain: tuple[float, float]
    constants: MappingProxyType

    @property
    def a(self) -> float:
        return self.domain[0]

    @property
    def b(self) -> float:
        return self.domain[1]


def _scn(id, epsilon, t_final, **constants):
    return Scenario(id=id, epsilon=epsilon, t_final=t_final,
                    domain=(0.0, 1.0), constants=MappingProxyType(constants))


SCENARIOS = {
    "test1_smooth": _scn(
        "test1_smooth", epsilon=1.0, t_final=0.1,
        bulk_speed=0.2, branch_weight=0.5,
        rho_base=2.0, rho_wave=1.0, rho_noise=0.5, rho_scale=3.0,
        temp_base=3.0, temp_wave=1.0, temp_noise=0.5, temp_scale=4.0,
    ),
    "test2_interface": _scn(
        "test2_interface", epsilon=1e-6, t_final=0.15,
        interface=0.5, interface_shift=0.05,
        rho_left=1.0, u_left=0.0, temp_left=1.0,
        rho_right=0.125, u_right=0.0, temp_right=0.25,
    ),
    "test2_state": _scn(
        "test2_state", epsilon=1e-6, t_final=0.15,
        interface=0.5, rho_left_base=1.0, rho_left_amp=0.1,
        u_left=0.0, temp_left=1.0,
        rho_right=0.125, u_right=0.0, temp_right=0.25,
    ),
    "test3_heating": _scn(
        "test3_heating", epsilon=0.1, t_final=0.1,
        rho0=1.0, u0=0.0, temp0=1.0,
        wall_factor=3.0, wall_noise=0.2,
    ),
}


def get_scenario(id: str) -> Scenario:
    try:
        return SCENARIOS[id]
    except KeyError:
        raise ValueError(
            f"unknown scenario {id!r}; available: {sorted(SCENARIOS)}") from None


@dataclass(frozen=True)
class SampleDraw:
    """One realization of z together with the seed path that produced it."""

    z: float
    seed: int
    level: int
    sample: int
    replication: int = 0


_MASK64 = (1 << 64) - 1


def _philox_key(seed: int, level: int, sample: int, replication: int) -> int:
    """Pack the seed path into a 128-bit Philox key.

    Layout (low word): sample (40 bits) | level (8 bits) | replication
    (16 bits); high word: the global seed.  Collisions across distinct
    paths are impossible within these ranges.
    """
    if not 0 <= sample < (1 << 40):
        raise ValueError("sample index out of range")
    if not 0 <= level < (1 << 8):
        raise ValueError("level index out of range")
    if not 0 <= replication < (1 << 16):
        raise ValueError("replication index out of range")
    low = sample | (level << 40) | (replication << 48)
    return ((int(seed) & _MASK64) << 64) | low


def draw_z(seed: int, level: int, sample: int, replication: int = 0) -> float:
    """Deterministic z ~ Uniform[-1, 1] for the given seed path."""
    key = _philox_key(seed, level, sample, replication)
    u = np.random.Generator(np.random.Philox(key=key)).random()
    return 2.0 * u - 1.0


def draw_z_batch(seed: int, level: int, n: int, replication: int = 0) -> np.ndarray:
    """Vector of draws for sample indices 0..n-1 (same stream as draw_z)."""
    return np.array([draw_z(seed, level, i, replication) for i in range(n)])


def _check_z(z):
    z = np.asarray(z, dtype=float)
    if np.any(z < -1.0) or np.any(z > 1.0) or not np.all(np.isfinite(z)):
        raise ValueError("z must lie in [-1, 1]")
    return z


def initial_state(scenario: Scenario, z, mesh: SpatialMesh,
                  grid: VelocityGrid) -> KineticState:
    """Initial reduced state at t = 0.

    ``z`` may be a scalar or a batch array (leading axis of the state).
    Smooth data is sampled at cell centers (second-order consistent with
    cell averages).  Shock-tube data is cell-averaged exactly: the cell
    straddling the interface carries the overlap-weighted mixture of the
    two Maxwellian states.  Center sampling would quantize the random
    interface position to the mesh (on the coarsest level the data would
    not depend on z at all), destroying the level coupling the multilevel
    estimators rely on.
    """
    z = _check_z(z)
    c = scenario.constants
    x = mesh.centers()
    zc = z[..., None] if z.ndim else z  # broadcast against x

    if scenario.id == "test1_smooth":
        rho = (c["rho_base"] + c["rho_wave"] * np.sin(2 * np.pi * x)
               + c["rho_noise"] * np.sin(4 * np.pi * x) * zc) / c["rho_scale"]
        temp = (c["temp_base"] + c["temp_wave"] * np.cos(2 * np.pi * x)
                + c["temp_noise"] * np.cos(4 * np.pi * x) * zc) / c["temp_scale"]
        rho, temp = np.broadcast_arrays(rho, temp)
        u = c["bulk_speed"] * np.ones_like(rho)
        w = c["branch_weight"]
        phi_p, psi_p = continuous_maxwellian_pair(grid, rho, u, temp)
        phi_m, psi_m = continuous_maxwellian_pair(grid, rho, -u, temp)
        phi = w * phi_p + (1.0 - w) * phi_m
        psi = w * psi_p + (1.0 - w) * psi_m
    elif scenario.id in ("test2_interface", "test2_state"):
        if scenario.id == "test2_interface":
            x0 = c["interface"] + c["interface_shift"] * zc
            rho_left = np.asarray(c["rho_left"], dtype=float)
        else:
            x0 = c["interface"] + 0.0 * zc
            rho_left = c["rho_left_base"] + c["rho_left_amp"] * (zc + 1.0)
        # exact cell average of the two-state data: w is the fraction of
        # the cell lying left of the interface
        w = np.clip((x0 - (x - 0.5 * mesh.dx)) / mesh.dx, 0.0, 1.0)
        phi_l, psi_l = continuous_maxwellian_pair(
            grid, rho_left, c["u_left"], c["temp_left"])
        phi_r, psi_r = continuous_maxwellian_pair(
            grid, np.asarray(c["rho_right"], dtype=float), c["u_right"],
            c["temp_right"])
        wv = w[..., None]
        phi = wv * phi_l + (1.0 - wv) * phi_r
        psi = wv * psi_l + (1.0 - wv) * psi_r
    elif scenario.id == "test3_heating":
        shape = np.broadcast_shapes(np.shape(zc), x.shape)
        rho = np.broadcast_to(c["rho0"], shape)
        u = np.broadcast_to(c["u0"], shape)
        temp = np.broadcast_to(c["temp0"], shape)
        phi, psi = continuous_maxwellian_pair(grid, rho, u, temp)
    else:  # pragma: no cover
        raise ValueError(f"unknown scenario {scenario.id!r}")
    return KineticState(phi=phi, psi=psi, t=0.0)


def boundary_for(scenario: Scenario, z) -> BoundarySpec:
    """Boundary conditions of the scenario; T_w is z-dependent for test 3."""
    z = _check_z(z)
    if scenario.id == "test1_smooth":
        return BoundarySpec.periodic()
    if scenario.id in ("test2_interface", "test2_state"):
        # outer boundaries unreached by the waves before t_final
        return BoundarySpec.neumann()
    if scenario.id == "test3_heating":
        c = scenario.constants
        t_wall = c["wall_factor"] * (c["temp0"] + c["wall_noise"] * z)
        return BoundarySpec(
            left=Boundary("diffusive_wall", temperature=t_wall),
            right=Boundary("neumann"),
        )
    raise ValueError(f"unknown scenario {scenario.id!r}")  # pragma: no cover
