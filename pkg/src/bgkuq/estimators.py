"""Monte Carlo, multilevel and control-variate multilevel estimators.

Estimates per-cell E[q] and V[q] for q in (rho, U, T).  The multilevel
telescope samples differences between consecutive nested meshes; the
control-variate variants scale each coarse term by a per-cell multiplier
field lambda_l(x):

    E_CV = lhat_1 E_{M_1}[q_1] + sum_{l>=2} lhat_l E_{M_l}[q_l - lam_{l-1} q_{l-1}],

with lhat_l = prod_{i>=l} lam_i and lam_L = 1.  Multipliers come either
from the pairwise covariance/variance ratio of consecutive levels
(quasi-optimal) or from the global variance-minimization system solved by
recursive substitution (optimal).  All statistics use the population
(1/M) normalization, and V[q] is assembled from two telescoped
expectations as E[q^2] - E[q]^2.

Sample solves are embarrassingly parallel: they run in fixed-size chunks
(optionally spread over worker threads) and are reduced in fixed sample
order, so every statistic is independent of thread count and scheduling.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BgkError, SolverFailure
from .quadrature import VelocityGrid, build_gauss_legendre
from .random_inputs import Scenario, boundary_for, draw_z, initial_state
from .solver import SolverConfig, SpatialMesh, solve_to_time

__all__ = [
    "LevelPlan",
    "collect_paired_samples",
    "LevelSamples",
    "PairedSamples",
    "EstimatorField",
    "mc_estimate",
    "prolong",
    "prolong_to",
    "quasi_optimal_lambdas",
    "optimal_lambdas",
    "mlmc_estimate",
    "estimate_field",
    "run_plan",
    "plan_workload",
    "QUANTITIES",
]

QUANTITIES = ("rho", "U", "T")
OPTIMIZERS = ("none", "standard", "quasi_optimal", "optimal")

# variance below this scale counts as degenerate (constant field); the
# multiplier falls back so the estimator reduces to standard MLMC locally
_GUARD_REL = 1e-14

# chunk size cap on B*Nx*Nv: keeps the solver scratch arrays cache-friendly
# and the working memory of batched solves modest
_MAX_CHUNK_ELEMS = 1 << 20


@dataclass(frozen=True)
class LevelPlan:
    """Nested mesh hierarchy (Nx_l, M_l) plus the optimizer mode."""

    levels: tuple
    optimizer: str = "standard"
    replications: int = 1

    def __post_init__(self):
        levels = tuple((int(n), int(m)) for n, m in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ValueError("plan needs at least one level")
        for (n0, _), (n1, _) in zip(levels, levels[1:]):
            if n1 != 2 * n0:
                raise ValueError("level meshes must double: got "
                                 f"{n0} -> {n1}")
        if any(m < 1 for _, m in levels):
            raise ValueError("sample counts must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.optimizer == "none" and len(levels) != 1:
            raise ValueError("optimizer 'none' is single-level MC")
        if self.optimizer in ("quasi_optimal", "optimal"):
            if any(m < 2 for _, m in levels):
                raise ValueError(
                    "control-variate multipliers need M_l >= 2 at every level")
        if self.replications < 1:
            raise ValueError("replication count must be positive")

    @property
    def finest_nx(self) -> int:
        return self.levels[-1][0]

    @property
    def n_levels(self) -> int:
        return len(self.levels)


def plan_workload(plan: LevelPlan) -> float:
    """Cost units sum_l M_l (Nx_l^2 + Nx_{l-1}^2) with Nx_0 = 0."""
    w = 0.0
    prev = 0
    for nx, m in plan.levels:
        w += m * (nx**2 + prev**2)
        prev = nx
    return w


@dataclass(frozen=True)
class LevelSamples:
    """Per-level paired sample fields, already prolonged to the finest mesh.

    ``fine[i]`` and ``coarse[i]`` share the draw z^i; ``coarse`` is None at
    the first level (the telescope convention q_0 := 0).
    """

    nx: int
    m: int
    fine: np.ndarray            # (M, Q, NxL)
    coarse: np.ndarray | None   # (M, Q, NxL) or None

    def squared(self) -> "LevelSamples":
        return LevelSamples(
            nx=self.nx, m=self.m, fine=self.fine**2,
            coarse=None if self.coarse is None else self.coarse**2)


@dataclass(frozen=True)
class PairedSamples:
    finest_nx: int
    levels: tuple

    def __post_init__(self):
        for lv in self.levels:
            if lv.fine.shape[0] != lv.m or lv.fine.shape[-1] != self.finest_nx:
                raise ValueError("level sample arrays do not match the plan")
        if self.levels[0].coarse is not None:
            raise ValueError("first level has no coarse companion")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def squared(self) -> "PairedSamples":
        return PairedSamples(self.finest_nx,
                             tuple(lv.squared() for lv in self.levels))


@dataclass
class EstimatorField:
    """Per-cell statistical output on the finest mesh."""

    scenario: str
    optimizer: str
    levels: tuple
    nx: int
    dx: float
    x: np.ndarray
    quantities: tuple
    mean: np.ndarray          # (Q, Nx)
    variance: np.ndarray      # (Q, Nx), clamped at 0
    lam: np.ndarray           # (L, Q, Nx) multipliers of the mean telescope
    lamhat: np.ndarray        # (L, Q, Nx) cumulative products, lamhat_L = lam_L = 1
    lam_var: np.ndarray       # (L, Q, Nx) multipliers of the E[q^2] telescope
    workload: float
    seed: int
    replication: int
    counters: dict = field(default_factory=dict)


def mc_estimate(samples: np.ndarray):
    """Plain MC mean and population variance over the first axis."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < 1:
        raise ValueError("MC estimate needs at least one sample")
    mean = samples.mean(axis=0)
    variance = (samples**2).mean(axis=0) - mean**2
    return mean, variance


def prolong(coarse: np.ndarray) -> np.ndarray:
    """Piecewise-linear prolongation from N to 2N cell centers.

    Interior fine centers interpolate the two nearest coarse centers;
    the outermost fine centers extrapolate one-sidedly, which keeps the
    operator exact on linear fields.
    """
    coarse = np.asarray(coarse, dtype=float)
    n = coarse.shape[-1]
    if n < 2:
        raise ValueError("prolongation needs at least 2 cells")
    fine = np.empty(coarse.shape[:-1] + (2 * n,))
    fine[..., 2:-1:2] = 0.25 * coarse[..., :-1] + 0.75 * coarse[..., 1:]
    fine[..., 1:-1:2] = 0.75 * coarse[..., :-1] + 0.25 * coarse[..., 1:]
    fine[..., 0] = 1.25 * coarse[..., 0] - 0.25 * coarse[..., 1]
    fine[..., -1] = 1.25 * coarse[..., -1] - 0.25 * coarse[..., -2]
    return fine


def prolong_to(field_arr: np.ndarray, to_nx: int) -> np.ndarray:
    """Repeated doubling onto the (nested) target mesh."""
    out = np.asarray(field_arr, dtype=float)
    nx = out.shape[-1]
    if to_nx < nx or to_nx % nx != 0:
        raise ValueError(f"cannot prolong {nx} cells to {to_nx}")
    factor = to_nx // nx
    if factor & (factor - 1):
        raise ValueError(f"prolongation factor {factor} is not a power of 2")
    while out.shape[-1] < to_nx:
        out = prolong(out)
    return out


def _degenerate(var: np.ndarray, mean: np.ndarray) -> np.ndarray:
    return var < _GUARD_REL * (mean**2 + _GUARD_REL)


def quasi_optimal_lambdas(paired: PairedSamples):
    """Pairwise Cov/Var multipliers estimated from each level's own samples.

    lambda_{l-1} = sum_i (f_i - fbar)(c_i - cbar) / sum_i (c_i - cbar)^2
    over the M_l paired samples of level l; degenerate coarse variance
    falls back to lambda = 1 (standard MLMC is exact there).
    Returns (lam, guarded) with lam[L-1] = 1 and ``guarded`` a boolean
    mask of the same shape flagging the fallback cells.
    """
    L = paired.n_levels
    shape = paired.levels[0].fine.shape[1:]
    lam = np.ones((L,) + shape)
    guarded = np.zeros((L,) + shape, dtype=bool)
    for li in range(1, L):
        lv = paired.levels[li]
        fbar = lv.fine.mean(axis=0)
        cbar = lv.coarse.mean(axis=0)
        num = np.sum((lv.fine - fbar) * (lv.coarse - cbar), axis=0)
        den = np.sum((lv.coarse - cbar) ** 2, axis=0)
        bad = _degenerate(den / lv.m, cbar)
        guarded[li - 1] = bad
        with np.errstate(divide="ignore", invalid="ignore"):
            lam[li - 1] = np.where(bad, 1.0, num / np.where(bad, 1.0, den))
    return lam, guarded


def optimal_lambdas(paired: PairedSamples):
    """Global variance-minimization multipliers by recursive substitution.

    Per cell, with V_l the sample variance of the level-l fine fields and
    Cov_l the sample covariance of the level-(l+1) pair, the recursion

        lam_1 V_1 = M_1/(M_1+M_2) Cov_1,
        lam_l [V_l - lam_{l-1} M_{l+1}/(M_l+M_{l+1}) Cov_{l-1}]
            = M_l/(M_l+M_{l+1}) Cov_l,      l = 2..L-1,

    is solved line by line; lhat_l = prod_{i>=l} lam_i with lam_L = 1.
    Cells with degenerate V_l (or a vanishing bracket) fall back to the
    quasi-optimal value.  Returns (lam, lamhat, guarded) where ``guarded``
    masks the fallback cells per recursion row.
    """
    L = paired.n_levels
    shape = paired.levels[0].fine.shape[1:]
    lam_quasi, _ = quasi_optimal_lambdas(paired)
    lam = np.ones((L,) + shape)
    guarded = np.zeros((L,) + shape, dtype=bool)

    var_l = []   # V_l from level-l fine samples, l = 1..L-1
    cov_l = []   # Cov_l from level-(l+1) paired samples
    mean_l = []
    for li in range(L - 1):
        _, v = mc_estimate(paired.levels[li].fine)
        var_l.append(v)
        mean_l.append(paired.levels[li].fine.mean(axis=0))
        up = paired.levels[li + 1]
        fbar = up.fine.mean(axis=0)
        cbar = up.coarse.mean(axis=0)
        cov_l.append(np.mean((up.fine - fbar) * (up.coarse - cbar), axis=0))

    ms = [lv.m for lv in paired.levels]
    prev = None
    for l in range(1, L):  # solves lam_l, 1-based
        v = var_l[l - 1]
        cov = cov_l[l - 1]
        w_own = ms[l - 1] / (ms[l - 1] + ms[l])
        w_next = ms[l] / (ms[l - 1] + ms[l])
        bracket = v if l == 1 else v - prev * w_next * cov_l[l - 2]
        bad = _degenerate(v, mean_l[l - 1]) | (np.abs(bracket) <= _GUARD_REL * (v + _GUARD_REL))
        guarded[l - 1] = bad
        with np.errstate(divide="ignore", invalid="ignore"):
            val = w_own * cov / np.where(bad, 1.0, bracket)
        lam[l - 1] = np.where(bad, lam_quasi[l - 1], val)
        prev = lam[l - 1]

    lamhat = np.ones_like(lam)
    for l in range(L - 2, -1, -1):
        lamhat[l] = lam[l] * lamhat[l + 1]
    return lam, lamhat, guarded


def _lamhat(lam: np.ndarray) -> np.ndarray:
    out = np.ones_like(lam)
    for l in range(lam.shape[0] - 2, -1, -1):
        out[l] = lam[l] * out[l + 1]
    return out


def mlmc_estimate(paired: PairedSamples, multipliers: np.ndarray | None = None) -> np.ndarray:
    """Telescoped mean field on the finest mesh.

    With ``multipliers`` None every lambda is 1 and the estimator is the
    standard MLMC telescope; otherwise the control-variate form is used
    (bit-identical to standard MLMC when all multipliers equal 1).
    """
    L = paired.n_levels
    shape = paired.levels[0].fine.shape[1:]
    if multipliers is None:
        lam = np.ones((L,) + shape)
    else:
        lam = np.asarray(multipliers, dtype=float)
        if lam.shape != (L,) + shape:
            raise ValueError(f"multipliers must have shape {(L,) + shape}")
    lamhat = _lamhat(lam)
    total = lamhat[0] * paired.levels[0].fine.mean(axis=0)
    for li in range(1, L):
        lv = paired.levels[li]
        total = total + lamhat[li] * np.mean(
            lv.fine - lam[li - 1] * lv.coarse, axis=0)
    return total


def estimate_field(paired: PairedSamples, optimizer: str) -> tuple:
    """Mean/variance fields plus multiplier fields and guard counters.

    Returns (mean, variance, lam, lamhat, lam_var, counters).  The E[q^2]
    telescope recomputes its own multipliers from the squared sample
    fields; the variance is clamped at zero with a diagnostics flag.
    """
    if optimizer not in OPTIMIZERS:
        raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
    counters = {"lambda_guards_mean": 0, "lambda_guards_var": 0,
                "variance_clamps": 0}
    sq = paired.squared()
    if optimizer in ("none", "standard"):
        L = paired.n_levels
        shape = paired.levels[0].fine.shape[1:]
        lam = np.ones((L,) + shape)
        lam_var = lam
    elif optimizer == "quasi_optimal":
        lam, g1 = quasi_optimal_lambdas(paired)
        lam_var, g2 = quasi_optimal_lambdas(sq)
        counters["lambda_guards_mean"] = int(np.sum(g1))
        counters["lambda_guards_var"] = int(np.sum(g2))
    else:
        lam, _, g1 = optimal_lambdas(paired)
        lam_var, _, g2 = optimal_lambdas(sq)
        counters["lambda_guards_mean"] = int(np.sum(g1))
        counters["lambda_guards_var"] = int(np.sum(g2))
    lamhat = _lamhat(lam)
    mean = mlmc_estimate(paired, lam)
    second = mlmc_estimate(sq, lam_var)
    variance = second - mean**2
    neg = variance < 0
    counters["variance_clamps"] = int(np.sum(neg & (variance < -1e-12)))
    variance = np.maximum(variance, 0.0)
    return mean, variance, lam, lamhat, lam_var, counters


# ---------------------------------------------------------------------------
# sample-farm driver
# ---------------------------------------------------------------------------

def _chunk_slices(n: int, chunk: int):
    return [slice(i, min(i + chunk, n)) for i in range(0, n, chunk)]


def _solve_fields(scenario, z, nx, t, grid, config):
    mesh = SpatialMesh(scenario.a, scenario.b, nx)
    state = initial_state(scenario, z, mesh, grid)
    spec = boundary_for(scenario, z)
    result = solve_to_time(state, t, config, grid, mesh, spec)
    mom = result.moments
    return np.stack([mom.rho, mom.u, mom.T], axis=-2), result.diagnostics


def _solve_many(scenario, z_flat, nx, t, grid, config, threads, max_batch,
                level, diag_counters):
    """Batched solves split into fixed chunks; reduction in index order."""
    n = z_flat.size
    if max_batch is None:
        max_batch = max(1, _MAX_CHUNK_ELEMS // (nx * grid.nv))
    slices = _chunk_slices(n, max_batch)
    out = np.empty((n, len(QUANTITIES), nx))

    def work(sl):
        try:
            return _solve_fields(scenario, z_flat[sl], nx, t, grid, config)
        except BgkError as exc:
            sample = sl.start
            if getattr(exc, "cell", None):
                sample += int(exc.cell[0])
            raise SolverFailure(
                f"sample solve failed at level {level}: {exc}",
                level=level, sample=sample, cause=exc) from exc

    if threads > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(work, sl) for sl in slices]
            for sl, fut in zip(slices, futures):
                fields, diag = fut.result()
                out[sl] = fields
                diag_counters["newton_fallbacks"] += diag.newton_fallbacks
    else:
        for sl in slices:
            fields, diag = work(sl)
            out[sl] = fields
            diag_counters["newton_fallbacks"] += diag.newton_fallbacks
    return out


def collect_paired_samples(scenario: Scenario, plan: LevelPlan, seed: int,
                           t: float | None = None,
                           grid: VelocityGrid | None = None,
                           config: SolverConfig | None = None,
                           threads: int = 1,
                           max_batch: int | None = None):
    """Run the sample farm; return one PairedSamples per replication.

    For every level l and sample i the draw z = draw_z(seed, l, i, rep)
    feeds coupled solves on meshes Nx_l and Nx_{l-1}; all fields are
    prolonged to the finest mesh.  Deterministic for a fixed seed,
    independent of ``threads``.  Returns (paired_list, counters).
    """
    if grid is None:
        grid = build_gauss_legendre(40, 5.0)
    if config is None:
        config = SolverConfig(epsilon=scenario.epsilon)
    t_final = scenario.t_final if t is None else float(t)
    k_rep = plan.replications
    nx_finest = plan.finest_nx
    diag_counters = {"newton_fallbacks": 0}

    # per level: draws for all replications, solved in one chunked batch
    per_level = []
    for li, (nx, m) in enumerate(plan.levels):
        level = li + 1
        z = np.array([draw_z(seed, level, i, rep)
                      for rep in range(k_rep) for i in range(m)])
        fine = _solve_many(scenario, z, nx, t_final, grid, config,
                           threads, max_batch, level, diag_counters)
        fine = prolong_to(fine, nx_finest).reshape(k_rep, m, len(QUANTITIES), nx_finest)
        if li == 0:
            coarse = None
        else:
            nx_c = plan.levels[li - 1][0]
            coarse = _solve_many(scenario, z, nx_c, t_final, grid, config,
                                 threads, max_batch, level, diag_counters)
            coarse = prolong_to(coarse, nx_finest).reshape(
                k_rep, m, len(QUANTITIES), nx_finest)
        per_level.append((nx, m, fine, coarse))

    paired_list = [
        PairedSamples(
            finest_nx=nx_finest,
            levels=tuple(
                LevelSamples(nx=nx, m=m, fine=fine[rep],
                             coarse=None if coarse is None else coarse[rep])
                for nx, m, fine, coarse in per_level),
        )
        for rep in range(k_rep)
    ]
    return paired_list, diag_counters


def run_plan(scenario: Scenario, plan: LevelPlan, seed: int,
             t: float | None = None,
             grid: VelocityGrid | None = None,
             config: SolverConfig | None = None,
             threads: int = 1,
             max_batch: int | None = None) -> list:
    """Execute the sample farm and assemble one EstimatorField per replication.

    Multipliers are estimated from the same paired data (no extra solves).
    Deterministic for a fixed seed, independent of ``threads``.
    """
    paired_list, diag_counters = collect_paired_samples(
        scenario, plan, seed, t, grid, config, threads, max_batch)
    nx_finest = plan.finest_nx
    mesh = SpatialMesh(scenario.a, scenario.b, nx_finest)
    workload = plan_workload(plan)
    fields = []
    for rep, paired in enumerate(paired_list):
        mean, variance, lam, lamhat, lam_var, counters = estimate_field(
            paired, plan.optimizer)
        counters.update(diag_counters if rep == 0 else {"newton_fallbacks": 0})
        fields.append(EstimatorField(
            scenario=scenario.id, optimizer=plan.optimizer, levels=plan.levels,
            nx=nx_finest, dx=mesh.dx, x=mesh.centers(), quantities=QUANTITIES,
            mean=mean, variance=variance, lam=lam, lamhat=lamhat,
            lam_var=lam_var, workload=workload, seed=seed, replication=rep,
            counters=counters))
    return fields
