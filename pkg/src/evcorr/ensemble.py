"""Perturbed-initial-data ensembles: members, means, fluctuation statistics.

Members share one mesh, timestep, closure and beta; they differ only in the
seeded solenoidal perturbation of the initial velocity.  Advancement is
deterministic and sequential in a fixed member order, so reruns with the
same seeds are bit-identical and statistics are independent of any later
parallel execution strategy.
"""

from dataclasses import dataclass, field

import numpy as np

from .calibration import intensities
from .diagnostics import ensemble_rs
from .errors import CalibrationError, DivergenceError
from .linsolve import SaddleSystem, solve_saddle
from .spaces import (
    assemble_div,
    assemble_mass,
    pressure_integral_vector,
    velocity_function,
)
from .stepping import initial_state, startup_method3, step


def perturb_initial(base, amplitude, seed):
    """base plus a divergence-projected random field of given relative size.

    The perturbation is drawn from a seeded generator, projected onto the
    discretely divergence-free subspace (L2 projection with the divergence
    constraint), zeroed on the Dirichlet boundary and rescaled so its L2
    norm is amplitude * ||base|| (or amplitude itself when base vanishes).
    """
    if amplitude < 0.0:
        raise ValueError(f"amplitude must be nonnegative, got {amplitude}")
    if amplitude == 0.0:
        return base.copy()
    space = base.space
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal(space.n_velocity)
    raw[space.velocity_dirichlet] = 0.0

    mass = assemble_mass(space)
    system = SaddleSystem(
        A=mass,
        B=assemble_div(space),
        rhs_u=mass @ raw,
        dirichlet=space.velocity_dirichlet,
        mean_weights=pressure_integral_vector(space),
    )
    proj, _ = solve_saddle(system, tol=1e-10)
    proj_norm = np.sqrt(proj @ (mass @ proj))
    if proj_norm == 0.0:
        return base.copy()
    base_norm = np.sqrt(base.coeffs @ (mass @ base.coeffs))
    target = amplitude * base_norm if base_norm > 0.0 else amplitude
    return velocity_function(space, base.coeffs + proj * (target / proj_norm))


@dataclass
class EnsembleStats:
    t: float
    step: int
    rs: float
    variance_residual: float
    mean_ke: float
    fluct_ke: float
    i_u: float = None
    i_grad_u: float = None


@dataclass
class EnsembleRun:
    """J member states advancing in lockstep, plus recorded statistics."""

    config: object
    method: int
    members: list
    amplitude: float
    seed: int
    forcing: object
    snapshot_every: int = 1
    stats: list = field(default_factory=list)
    records: list = field(default_factory=list)
    _prev_snapshot: list = None

    @property
    def J(self):
        return len(self.members)


def init_ensemble(config, method, base_w0, J, amplitude, seed, forcing,
                  snapshot_every=1):
    """Build J members with distinct seeds; method 3 members run the startup."""
    if J < 2:
        raise ValueError(f"ensemble statistics need J >= 2, got {J}")
    members = []
    for j in range(J):
        w0 = perturb_initial(base_w0, amplitude, seed + j)
        if method == 3:
            state, _ = startup_method3(config, w0, forcing)
        else:
            state = initial_state(config, w0, method=method)
        members.append(state)
    return EnsembleRun(
        config=config,
        method=method,
        members=members,
        amplitude=amplitude,
        seed=seed,
        forcing=forcing,
        snapshot_every=snapshot_every,
    )


def ensemble_mean(run):
    """Arithmetic mean of the member coefficient vectors."""
    coeffs = np.mean([m.w.coeffs for m in run.members], axis=0)
    return velocity_function(run.config.space, coeffs)


def advance_ensemble(run, steps):
    """Advance every member by `steps`; record statistics at the cadence.

    Any member divergence aborts the run with the member id and step index.
    Returns the list of newly recorded statistics.
    """
    new_stats = []
    for _ in range(steps):
        t_next = run.members[0].t + run.config.k
        f_next = run.forcing(t_next)
        step_records = []
        for j, member in enumerate(run.members):
            try:
                run.members[j], rec = step(member, f_next)
            except DivergenceError as exc:
                raise DivergenceError(
                    f"ensemble member {j} diverged: {exc}", step=exc.step
                ) from exc
            step_records.append(rec)
        run.records.append(step_records)

        n = run.members[0].n
        if n % run.snapshot_every == 0:
            snapshot = [m.w for m in run.members]
            _record_stats(run, snapshot, new_stats)
            run._prev_snapshot = [w.copy() for w in snapshot]
    run.stats.extend(new_stats)
    return new_stats


def _record_stats(run, snapshot, out):
    space = run.config.space
    nu = run.config.nu
    dt = run.config.k * run.snapshot_every
    if run._prev_snapshot is not None:
        rs_report = ensemble_rs(snapshot, run._prev_snapshot, dt=dt, nu=nu)
    else:
        rs_report = ensemble_rs(snapshot)
    coeff_stack = np.stack([w.coeffs for w in snapshot])
    mean_coeffs = coeff_stack.mean(axis=0)
    mass = run.config.mass
    mean_ke = 0.5 * float(mean_coeffs @ (mass @ mean_coeffs))
    fluct = coeff_stack - mean_coeffs
    fluct_ke = 0.5 * float(np.mean([fc @ (mass @ fc) for fc in fluct]))
    try:
        report = intensities(snapshot)
        i_u, i_grad_u = report.i_u, report.i_grad_u
    except CalibrationError:
        i_u = i_grad_u = None
    member = run.members[0]
    out.append(
        EnsembleStats(
            t=member.t,
            step=member.n,
            rs=rs_report.rs,
            variance_residual=rs_report.variance_residual,
            mean_ke=mean_ke,
            fluct_ke=fluct_ke,
            i_u=i_u,
            i_grad_u=i_grad_u,
        )
    )
