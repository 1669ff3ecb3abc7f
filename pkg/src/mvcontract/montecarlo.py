"""Monte-Carlo evaluation of contract costs and terminal-output variance.

For a multiplier triple the pipeline is: integrate the backward coefficient
system, solve the averaged dynamics, assemble the closed-loop field, and
run the Euler scheme over seeded Brownian increments.  Per path,

    J_A-path = sum_k (s_k - e_k)^2 / 2 * dt - alpha x_T^2 / 2,
    J_P-path = sum_k  s_k^2        / 2 * dt - beta  x_T^2 / 2,

with left-endpoint Riemann sums matching the order of the forward scheme.
Estimates are sample means with standard errors; Var(x(T)) uses the
unbiased sample estimator with a delta-method standard error from the
fourth central moment.

Paths are processed in chunks drawn directly from the counter-based noise
stream, so every per-path value is bit-identical no matter how the path
range is split across chunks or workers; the final reductions run over
fully assembled per-path arrays in a fixed order.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .model import AS_PRINTED, MIN_LAMBDA_P, LqParams, check_mode, terminal_costs
from .multipliers import MultiplierTriple
from .noise import sample_noise_block
from .riccati import (
    ClosedLoopField,
    closed_loop_field,
    integrate_means,
    integrate_riccati,
)
from .errors import DegenerateMultiplierError, SimulationDivergedError
from .timegrid import make_grid

DEFAULT_CHUNK_SIZE = 65536


@dataclass(frozen=True)
class ContractEvaluation:
    """Monte-Carlo estimates for one (params, multiplier) point."""

    j_a: float
    j_a_se: float
    j_p: float
    j_p_se: float
    var_xt: float
    var_xt_se: float
    j_a_integral: float  # running-cost part of J_A, before the terminal term
    j_p_integral: float
    n_paths: int
    n_steps: int
    seed: int
    multipliers: MultiplierTriple
    params: LqParams
    p2_drift_mode: str


def _mean_and_se(values: np.ndarray):
    n = values.size
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(n))


def _variance_and_se(values: np.ndarray):
    n = values.size
    var = float(values.var(ddof=1))
    centered = values - values.mean()
    m2 = float(np.mean(centered**2))
    m4 = float(np.mean(centered**4))
    se = float(np.sqrt(max(m4 - m2 * m2, 0.0) / n))
    return var, se


def simulate_costs(
    field: ClosedLoopField,
    n_paths: int,
    seed: int,
    chunk_size: Optional[int] = DEFAULT_CHUNK_SIZE,
):
    """Per-path cost integrals and terminal state under the closed loop.

    Returns arrays (ja_integral, jp_integral, x_T) of length n_paths.  The
    dynamics are stepped without retaining full trajectories, chunked over
    the path range; chunking cannot change any output bit.
    """
    grid = field.sol.grid
    params = field.params
    dt = grid.dt
    if chunk_size is None:
        chunk_size = n_paths
    ja_int = np.empty(n_paths)
    jp_int = np.empty(n_paths)
    x_T = np.empty(n_paths)
    for lo in range(0, n_paths, chunk_size):
        hi = min(lo + chunk_size, n_paths)
        noise = sample_noise_block(grid, n_paths, seed, lo, hi)
        dW = noise.increments
        m = hi - lo
        x = np.zeros(m)
        R = np.zeros(m)
        ja = np.zeros(m)
        jp = np.zeros(m)
        for k in range(grid.n_steps):
            p, P1, P2, s, e = field.controls_at_index(k, x, R)
            ja += (s - e) ** 2 * (0.5 * dt)
            jp += s**2 * (0.5 * dt)
            fx, fR = field.drift_terms(p, P1, P2, s, x, R)
            x = x + fx * dt + params.sigma * dW[:, k]
            R = R + fR * dt
            if not np.all(np.isfinite(x)) or not np.all(np.isfinite(R)):
                bad = np.argwhere(~(np.isfinite(x) & np.isfinite(R)))[0][0]
                raise SimulationDivergedError(path=lo + int(bad), step=k + 1)
        ja_int[lo:hi] = ja
        jp_int[lo:hi] = jp
        x_T[lo:hi] = x
    return ja_int, jp_int, x_T


def evaluate_contract(
    params: LqParams,
    mult: MultiplierTriple,
    n_paths: int,
    n_steps: int,
    seed: int,
    p2_drift_mode: str = AS_PRINTED,
    chunk_size: Optional[int] = DEFAULT_CHUNK_SIZE,
    blow_up_bound: Optional[float] = None,
) -> ContractEvaluation:
    """Estimate J_A, J_P and Var(x(T)) along the optimal closed loop.

    Fully determined by (params, mult, n_paths, n_steps, seed, mode): the
    same inputs reproduce every estimate bit-exactly.
    """
    check_mode(p2_drift_mode)
    if mult.lam_P < MIN_LAMBDA_P:
        raise DegenerateMultiplierError(
            f"lambda_P = {mult.lam_P:g} is below the floor {MIN_LAMBDA_P:g}"
        )
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2 to form standard errors")
    grid = make_grid(params.T, n_steps)
    kwargs = {} if blow_up_bound is None else {"blow_up_bound": blow_up_bound}
    sol = integrate_riccati(params, mult, grid, p2_drift_mode, **kwargs)
    means = integrate_means(sol)
    field = closed_loop_field(params, sol, means)
    ja_int, jp_int, x_T = simulate_costs(field, n_paths, seed, chunk_size)

    agent_term, principal_term = terminal_costs(x_T, params.alpha, params.beta)
    j_a, j_a_se = _mean_and_se(ja_int + agent_term)
    j_p, j_p_se = _mean_and_se(jp_int + principal_term)
    var_xt, var_xt_se = _variance_and_se(x_T)

    return ContractEvaluation(
        j_a=j_a,
        j_a_se=j_a_se,
        j_p=j_p,
        j_p_se=j_p_se,
        var_xt=var_xt,
        var_xt_se=var_xt_se,
        j_a_integral=float(ja_int.mean()),
        j_p_integral=float(jp_int.mean()),
        n_paths=n_paths,
        n_steps=n_steps,
        seed=seed,
        multipliers=mult,
        params=params,
        p2_drift_mode=p2_drift_mode,
    )


@dataclass(frozen=True)
class StudyRow:
    n_paths: int
    n_steps: int
    evaluation: ContractEvaluation


def convergence_study(
    params: LqParams,
    mult: MultiplierTriple,
    n_paths_list: Sequence[int],
    n_steps_list: Sequence[int],
    seed: int,
    p2_drift_mode: str = AS_PRINTED,
) -> List[StudyRow]:
    """Evaluate over the (n_paths, n_steps) grid, n_steps-major ordering.

    With a shared seed the first N paths of a larger run coincide with a
    smaller run's paths (counter-based draws), so rows differ only by the
    added paths or the refined step; useful for eyeballing 1/sqrt(N) error
    decay and step-bias stabilization.
    """
    n_paths_list = list(n_paths_list)
    n_steps_list = list(n_steps_list)
    if not n_paths_list or not n_steps_list:
        raise ValueError("n_paths_list and n_steps_list must be non-empty")
    if sorted(n_paths_list) != n_paths_list or sorted(n_steps_list) != n_steps_list:
        raise ValueError("study lists must be increasing")
    rows = []
    for n_steps in n_steps_list:
        for n_paths in n_paths_list:
            ev = evaluate_contract(
                params, mult, n_paths, n_steps, seed, p2_drift_mode
            )
            rows.append(StudyRow(n_paths=n_paths, n_steps=n_steps, evaluation=ev))
    return rows
