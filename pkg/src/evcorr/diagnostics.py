"""Per-step energy-budget quantities, energy-equality audits, backscatter stats.

Every quantity is evaluated with the shared assembly quadrature rule, so the
budget decomposition MD = TMD + EVD and the per-step energy identities hold
to round-off against the operators the steppers actually solved with.

Budget quantities per step (strain mode replaces |grad w|^2 by 2|S(w)|^2,
matching the viscous operator of the run):

    TMD = int b^2 a_n ((a_n w_{n+1} - a_{n-1} w_n) / dt) . w_{n+1}
    EVD = int nu_t_n D(w_{n+1})
    VD  = nu int D(w_{n+1})
    MD  = TMD + EVD

The second-order stepper uses its extrapolated weights and BDF2 quotient in
TMD, mirroring its scheme.
"""

from dataclasses import dataclass, field

import numpy as np

from .spaces import integrate, qp_velocity_grads, qp_velocity_values


@dataclass
class DiagnosticsRecord:
    """One step's energy bookkeeping.

    energy_new/energy_old are the method's energy functional after/before
    the step; residual is the signed defect of the method's per-step energy
    equality and scale the largest term entering it.
    """

    t: float
    step: int
    method: int
    MD: float
    TMD: float
    EVD: float
    VD: float
    KE: float
    CKE: float
    energy_new: float
    energy_old: float
    numdiff: float
    dissipation_k: float
    work_k: float
    residual: float
    scale: float
    md_equiv: float = None
    w_temp: object = None


@dataclass
class TimeAverageReport:
    """Time-averaged model dissipation and its sign statistics."""

    window: tuple
    mean_md: float
    fraction_negative: float
    sign_changes: int
    running: np.ndarray = field(repr=False, default=None)


@dataclass
class AuditReport:
    residuals: np.ndarray
    scales: np.ndarray
    flagged: np.ndarray
    tol: float
    telescoped: float
    telescoped_scale: float
    lemma_mismatch: float = None


@dataclass
class RsReport:
    rs: float
    variance_residual: float = None


def dissipation_density(space, coeffs, mode):
    """Pointwise dissipation density of a velocity field: |grad w|^2 or 2|S|^2."""
    grads = qp_velocity_grads(space, coeffs)
    if mode == "gradient":
        return np.sum(grads**2, axis=(2, 3))
    sym = 0.5 * (grads + np.swapaxes(grads, 2, 3))
    return 2.0 * np.sum(sym**2, axis=(2, 3))


def weighted_sq_norm(space, weight, values):
    """int (weight * |v|)^2 for a per-point weight and vector values."""
    mag2 = np.sum(values**2, axis=2)
    return integrate(space, weight**2 * mag2)


def compute_budget(before, after):
    """(MD, TMD, EVD, VD) for the step taking `before` to `after`.

    Both arguments are stepper states on the same space; the quotient and
    the weights follow the method recorded on `before`.
    """
    cfg = before.config
    space = cfg.space
    if after.config.space is not space:
        raise ValueError("states live on different spaces")
    k = cfg.k
    mode = cfg.closure.mode
    v_new = qp_velocity_values(space, after.w.coeffs)

    if before.method in (1, 2):
        l_now = cfg.beta_qp * before.a
        l_prev = cfg.beta_qp * before.a_prev
        v_old = qp_velocity_values(space, before.w.coeffs)
        dot_new = np.sum(v_new * v_new, axis=2)
        dot_mix = np.sum(v_old * v_new, axis=2)
        tmd = integrate(space, l_now * (l_now * dot_new - l_prev * dot_mix)) / k
        nu_t = before.nu_t
        diss_on = after.w.coeffs
        if before.method == 2 and getattr(after, "w_temp", None) is not None:
            diss_on = after.w_temp.coeffs
        dens = dissipation_density(space, diss_on, mode)
    elif before.method == 3:
        l_new = cfg.beta_qp * (2.0 * before.a_hist[0] - before.a_hist[1])
        l_now = cfg.beta_qp * (2.0 * before.a_hist[1] - before.a_hist[2])
        l_prev = cfg.beta_qp * (2.0 * before.a_hist[2] - before.a_hist[3])
        v_now = qp_velocity_values(space, before.w.coeffs)
        v_prev = qp_velocity_values(space, before.w_prev.coeffs)
        quot = (
            3.0 * l_new * np.sum(v_new * v_new, axis=2)
            - 4.0 * l_now * np.sum(v_now * v_new, axis=2)
            + l_prev * np.sum(v_prev * v_new, axis=2)
        )
        tmd = integrate(space, l_new * quot) / (2.0 * k)
        nu_t = 2.0 * before.nu_t_hist[0] - before.nu_t_hist[1]
        dens = dissipation_density(space, after.w.coeffs, mode)
    else:
        raise ValueError(f"unknown method {before.method}")

    evd = integrate(space, nu_t * dens)
    vd = cfg.closure.nu * integrate(space, dens)
    md = tmd + evd
    return md, tmd, evd, vd


def audit_energy_equality(records, method=None, tol=1e-8):
    """Recompute per-step and telescoped energy residuals and flag violations.

    The per-step residual is energy_new - energy_old + numerical diffusion
    + k * dissipation - k * work; it is checked against tol relative to the
    largest term of the step.  For first-order records the two forms of the
    model dissipation are also cross-checked.
    """
    if not records:
        raise ValueError("empty record sequence")
    if method is not None:
        bad = [r.step for r in records if r.method != method]
        if bad:
            raise ValueError(f"records from another method at steps {bad[:5]}")

    residuals = np.array(
        [
            r.energy_new - r.energy_old + r.numdiff + r.dissipation_k - r.work_k
            for r in records
        ]
    )
    scales = np.array(
        [
            max(
                abs(r.energy_new),
                abs(r.energy_old),
                abs(r.numdiff),
                abs(r.dissipation_k),
                abs(r.work_k),
                1e-300,
            )
            for r in records
        ]
    )
    flagged = np.nonzero(np.abs(residuals) > tol * scales)[0]

    telescoped = float(np.sum(residuals))
    tel_scale = float(np.max(scales))

    lemma = None
    m1 = [r for r in records if r.method == 1 and r.md_equiv is not None]
    if m1:
        lemma = max(
            abs(r.MD - r.md_equiv) / max(abs(r.MD), abs(r.md_equiv), 1e-300)
            for r in m1
        )
    return AuditReport(
        residuals=residuals,
        scales=scales,
        flagged=flagged,
        tol=tol,
        telescoped=telescoped,
        telescoped_scale=tel_scale,
        lemma_mismatch=lemma,
    )


def time_average(records, window=None):
    """Uniform-step time average of MD over a window plus sign statistics."""
    if window is not None:
        t0, t1 = window
        records = [r for r in records if t0 <= r.t <= t1]
    if not records:
        raise ValueError("empty averaging window")
    md = np.array([r.MD for r in records])
    ts = np.array([r.t for r in records])
    signs = np.sign(md)
    changes = int(np.sum(signs[1:] * signs[:-1] < 0))
    running = np.cumsum(md) / np.arange(1, len(md) + 1)
    return TimeAverageReport(
        window=(float(ts[0]), float(ts[-1])),
        mean_md=float(md.mean()),
        fraction_negative=float(np.mean(md < 0.0)),
        sign_changes=changes,
        running=running,
    )


def _member_qp_data(members):
    space = members[0].space
    for m in members[1:]:
        if m.space is not space:
            raise ValueError("ensemble members live on different meshes")
    vals = np.stack([qp_velocity_values(space, m.coeffs) for m in members])
    grads = np.stack([qp_velocity_grads(space, m.coeffs) for m in members])
    return space, vals, grads


def ensemble_rs(members, prev_members=None, dt=None, nu=None):
    """Reynolds-stress activity RS = int R(u,u) : grad<u> of an ensemble.

    R(u,u) = <u> x <u> - <u x u>.  With a previous snapshot and dt, the
    residual of the fluctuation-variance evolution balance is reported as
    well (a reported quantity, never asserted).
    """
    if len(members) < 2:
        raise ValueError("ensemble statistics need at least 2 members")
    space, vals, grads = _member_qp_data(members)
    mean_vals = vals.mean(axis=0)
    mean_grads = grads.mean(axis=0)
    outer_mean = np.einsum("jeqa,jeqb->eqab", vals, vals) / len(members)
    r_tensor = np.einsum("eqa,eqb->eqab", mean_vals, mean_vals) - outer_mean
    rs = integrate(space, np.sum(r_tensor * mean_grads, axis=(2, 3)))

    var_resid = None
    if prev_members is not None:
        if dt is None or nu is None:
            raise ValueError("variance residual needs dt and nu")
        _, pvals, _ = _member_qp_data(prev_members)
        fluct = vals - mean_vals
        fluct_prev = pvals - pvals.mean(axis=0)
        var_now = integrate(space, np.sum(fluct**2, axis=3).mean(axis=0))
        var_prev = integrate(space, np.sum(fluct_prev**2, axis=3).mean(axis=0))
        gfluct = grads - mean_grads
        gvar = integrate(space, np.sum(gfluct**2, axis=(3, 4)).mean(axis=0))
        var_resid = rs - (0.5 * (var_now - var_prev) / dt + nu * gvar)
    return RsReport(rs=float(rs), variance_residual=var_resid)
