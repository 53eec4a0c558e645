"""Run configuration, scenario library, orchestration and file output.

Config files are plain text "key = value" lines with '#' comments.  Keys
(exhaustive): scenario, mesh_nodes, mesh_elements, nu, dt, T, beta,
beta_mode, method, cs, closure_mode, delta_mode, solver_tol, audit_tol,
strict, out_csv, out_fields, snapshot_every, ens_J, ens_amplitude,
ens_seed.  Unknown keys are rejected with the offending line.

Scenarios:

  offset-circles  rotational forcing between two offset circles on a
                  shipped graded mesh (desk resolution by default, the
                  finer reference mesh behind --paper-mesh), zero initial
                  velocity, Smagorinsky closure;
  taylor-green    manufactured decaying vortex on the unit square with the
                  closure switched off (convergence studies); mesh_nodes
                  may hold the grid resolution (integer, default 16).

The diagnostics CSV has exactly the header
t,MD,TMD,EVD,VD,KE,CKE,VD_total,residual with one row per completed step;
VD_total = VD + EVD is the total (molecular plus eddy) viscous
dissipation.
"""

import importlib.resources
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .calibration import beta_default, beta_k41_3d, PhenomenologyInputs
from .closures import ClosureSpec
from .diagnostics import audit_energy_equality, time_average
from .ensemble import advance_ensemble, init_ensemble
from .errors import ConfigError, DivergenceError, EvcorrError
from .manufactured import exact_velocity, forcing as manufactured_forcing
from .mesh import load_mesh, min_edge, unit_square_mesh
from .spaces import TaylorHood, interpolate_velocity, velocity_function
from .stepping import SteppingConfig, initial_state, startup_method3, step

CSV_HEADER = "t,MD,TMD,EVD,VD,KE,CKE,VD_total,residual"

_KEYS = {
    "scenario": str,
    "mesh_nodes": str,
    "mesh_elements": str,
    "nu": float,
    "dt": float,
    "T": float,
    "beta": float,
    "beta_mode": str,
    "method": int,
    "cs": float,
    "closure_mode": str,
    "delta_mode": str,
    "solver_tol": float,
    "audit_tol": float,
    "strict": bool,
    "out_csv": str,
    "out_fields": str,
    "snapshot_every": int,
    "ens_J": int,
    "ens_amplitude": float,
    "ens_seed": int,
}

_SCENARIO_DEFAULTS = {
    "offset-circles": {"nu": 1e-4, "dt": 0.01, "T": 10.0, "beta": 8e-5},
    "taylor-green": {"nu": 0.05, "dt": 0.01, "T": 1.0, "beta": 0.0},
}


@dataclass
class RunConfig:
    scenario: str
    mesh_nodes: str = None
    mesh_elements: str = None
    nu: float = None
    dt: float = None
    T: float = None
    beta: float = None
    beta_mode: str = "number"
    method: int = 1
    cs: float = 0.1
    closure_mode: str = "strain"
    delta_mode: str = "global"
    solver_tol: float = 1e-10
    audit_tol: float = 1e-8
    strict: bool = False
    out_csv: str = "diagnostics.csv"
    out_fields: str = None
    snapshot_every: int = 10
    ens_J: int = 0
    ens_amplitude: float = 1e-3
    ens_seed: int = 12345


def _parse_bool(value, key, line):
    low = value.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}", key=key, line=line)


def parse_config(text):
    """Parse and validate a run configuration from key = value text."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEYS:
            raise ConfigError("unknown key", key=key, line=lineno)
        if key in values:
            raise ConfigError("duplicate key", key=key, line=lineno)
        caster = _KEYS[key]
        if caster is bool:
            values[key] = _parse_bool(value, key, lineno)
        elif caster is str:
            values[key] = value
        else:
            try:
                values[key] = caster(value)
            except ValueError:
                raise ConfigError(
                    f"expected {caster.__name__}, got {value!r}", key=key, line=lineno
                ) from None

    if "scenario" not in values:
        raise ConfigError("missing required key", key="scenario")
    scenario = values["scenario"]
    if scenario not in _SCENARIO_DEFAULTS:
        raise ConfigError(
            f"unknown scenario {scenario!r}; expected one of "
            f"{sorted(_SCENARIO_DEFAULTS)}",
            key="scenario",
        )
    for key, default in _SCENARIO_DEFAULTS[scenario].items():
        values.setdefault(key, default)

    cfg = RunConfig(**values)
    if cfg.dt is None or cfg.dt <= 0.0:
        raise ConfigError(f"dt must be positive, got {cfg.dt}", key="dt")
    if cfg.T is None or cfg.T < cfg.dt:
        raise ConfigError(f"T must be at least dt, got {cfg.T}", key="T")
    if cfg.nu is None or cfg.nu <= 0.0:
        raise ConfigError(f"nu must be positive, got {cfg.nu}", key="nu")
    if cfg.beta is not None and cfg.beta < 0.0:
        raise ConfigError(f"beta must be nonnegative, got {cfg.beta}", key="beta")
    if cfg.method not in (1, 2, 3):
        raise ConfigError(f"method must be 1, 2 or 3, got {cfg.method}", key="method")
    if cfg.closure_mode not in ("gradient", "strain"):
        raise ConfigError(
            f"closure_mode must be gradient or strain, got {cfg.closure_mode!r}",
            key="closure_mode",
        )
    if cfg.delta_mode not in ("global", "local"):
        raise ConfigError(
            f"delta_mode must be global or local, got {cfg.delta_mode!r}",
            key="delta_mode",
        )
    if cfg.snapshot_every < 1:
        raise ConfigError("snapshot_every must be >= 1", key="snapshot_every")
    if cfg.ens_J < 0 or cfg.ens_J == 1:
        raise ConfigError("ens_J must be 0 (no ensemble) or >= 2", key="ens_J")
    return cfg


def _mesh_data_text(name):
    root = importlib.resources.files("evcorr").joinpath("data")
    return root.joinpath(name + ".node").read_text(), root.joinpath(
        name + ".ele"
    ).read_text()


def load_builtin_mesh(name):
    """Load one of the shipped meshes ('offset_circles_desk' / '_paper')."""
    node_text, ele_text = _mesh_data_text(name)
    return load_mesh(node_text, ele_text)


def resolve_beta(cfg, mesh):
    """Turn beta/beta_mode config into a scalar or per-element array."""
    mode = cfg.beta_mode
    if mode == "number":
        return cfg.beta
    if mode == "default-global":
        return beta_default(mesh, "global")
    if mode == "default-local":
        return beta_default(mesh, "local")
    match = re.fullmatch(
        r"k41-3d\(\s*re\s*=\s*([^,()\s]+)\s*,\s*delta_over_l\s*=\s*([^,()\s]+)\s*\)",
        mode,
    )
    if match:
        re_num, dol = float(match.group(1)), float(match.group(2))
        length = 1.0
        inputs = PhenomenologyInputs(re=re_num, delta=dol * length, length_scale=length)
        return beta_k41_3d(inputs).beta
    raise ConfigError(
        "beta_mode must be number, default-global, default-local or "
        "k41-3d(re=..., delta_over_l=...)",
        key="beta_mode",
    )


def offset_circles_forcing(x, y):
    """Rotational body force (-4y(1-x^2-y^2), 4x(1-x^2-y^2))."""
    factor = 1.0 - x**2 - y**2
    return -4.0 * y * factor, 4.0 * x * factor


@dataclass
class Scenario:
    """An initialized problem: space, stepper context, forcing, start data."""

    name: str
    mesh: object
    space: TaylorHood
    stepping: SteppingConfig
    forcing: object  # t -> velocity FeFunction
    w0: object
    exact: object = None  # t -> (x, y) -> (u1, u2), when known
    beta: object = None


def build_scenario(cfg, paper_mesh=False):
    if cfg.scenario == "offset-circles":
        if cfg.mesh_nodes or cfg.mesh_elements:
            if not (cfg.mesh_nodes and cfg.mesh_elements):
                raise ConfigError(
                    "mesh_nodes and mesh_elements must be given together",
                    key="mesh_nodes",
                )
            with open(cfg.mesh_nodes) as fh:
                node_text = fh.read()
            with open(cfg.mesh_elements) as fh:
                ele_text = fh.read()
            mesh = load_mesh(node_text, ele_text)
        else:
            mesh = load_builtin_mesh(
                "offset_circles_paper" if paper_mesh else "offset_circles_desk"
            )
        space = TaylorHood(mesh)
        delta = min_edge(mesh) if cfg.delta_mode == "global" else mesh.element_min_edge()
        closure = ClosureSpec(
            kind="smagorinsky",
            cs=cfg.cs,
            delta=delta,
            mode=cfg.closure_mode,
            nu=cfg.nu,
        )
        beta = resolve_beta(cfg, mesh)
        stepping = SteppingConfig(
            space=space,
            closure=closure,
            k=cfg.dt,
            beta=beta,
            solver_tol=cfg.solver_tol,
            audit_tol=cfg.audit_tol,
        )
        f_interp = interpolate_velocity(space, offset_circles_forcing)

        def forcing_at(t):
            return f_interp

        return Scenario(
            name=cfg.scenario,
            mesh=mesh,
            space=space,
            stepping=stepping,
            forcing=forcing_at,
            w0=velocity_function(space),
            beta=beta,
        )

    if cfg.scenario == "taylor-green":
        n = 16
        if cfg.mesh_nodes:
            try:
                n = int(cfg.mesh_nodes)
            except ValueError:
                raise ConfigError(
                    "for taylor-green, mesh_nodes holds the grid resolution",
                    key="mesh_nodes",
                ) from None
        mesh = unit_square_mesh(n)
        space = TaylorHood(mesh)
        closure = ClosureSpec(kind="constant", a_const=0.0, nu=cfg.nu,
                              mode=cfg.closure_mode)
        beta = resolve_beta(cfg, mesh)
        stepping = SteppingConfig(
            space=space,
            closure=closure,
            k=cfg.dt,
            beta=beta,
            solver_tol=cfg.solver_tol,
            audit_tol=cfg.audit_tol,
        )

        def forcing_at(t):
            return interpolate_velocity(space, manufactured_forcing(t, cfg.nu))

        def exact_at(t):
            return exact_velocity(t)

        return Scenario(
            name=cfg.scenario,
            mesh=mesh,
            space=space,
            stepping=stepping,
            forcing=forcing_at,
            w0=interpolate_velocity(space, exact_velocity(0.0)),
            exact=exact_at,
            beta=beta,
        )

    raise ConfigError(f"unknown scenario {cfg.scenario!r}", key="scenario")


def write_csv(path, records):
    with open(path, "w", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in records:
            row = (
                r.t, r.MD, r.TMD, r.EVD, r.VD, r.KE, r.CKE, r.VD + r.EVD, r.residual
            )
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def write_snapshot(path, t, velocity, pressure):
    """Plain-text field dump: header with counts and tags, then coefficients."""
    with open(path, "w", newline="\n") as fh:
        fh.write("evcorr-fields\n")
        fh.write(f"t {t:.17g}\n")
        fh.write(f"velocity {len(velocity.coeffs)}\n")
        for v in velocity.coeffs:
            fh.write(f"{v:.17g}\n")
        fh.write(f"pressure {len(pressure.coeffs)}\n")
        for v in pressure.coeffs:
            fh.write(f"{v:.17g}\n")


def read_snapshot(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "evcorr-fields":
        raise EvcorrError(f"{path}: not a field snapshot")
    t = float(lines[1].split()[1])
    pos = 2
    arrays = {}
    while pos < len(lines):
        tag, count = lines[pos].split()
        count = int(count)
        arrays[tag] = np.array([float(v) for v in lines[pos + 1 : pos + 1 + count]])
        pos += 1 + count
    return t, arrays["velocity"], arrays["pressure"]


def _run_single(cfg, scenario, quiet):
    stepping = scenario.stepping
    n_steps = int(round(cfg.T / cfg.dt))
    records = []
    if cfg.method == 3:
        if n_steps < 4:
            raise ConfigError("method 3 needs at least 4 steps", key="T")
        state, startup_records = startup_method3(stepping, scenario.w0, scenario.forcing)
        records.extend(startup_records)
    else:
        state = initial_state(stepping, scenario.w0, method=cfg.method)
    while state.n < n_steps:
        state, rec = step(state, scenario.forcing(state.t + cfg.dt))
        records.append(rec)
        if cfg.out_fields and state.n % cfg.snapshot_every == 0:
            os.makedirs(cfg.out_fields, exist_ok=True)
            write_snapshot(
                os.path.join(cfg.out_fields, f"fields_{state.n:06d}.txt"),
                state.t,
                state.w,
                state.q,
            )
    return records, state


def _run_ensemble(cfg, scenario, quiet):
    run = init_ensemble(
        scenario.stepping,
        cfg.method,
        scenario.w0,
        cfg.ens_J,
        cfg.ens_amplitude,
        cfg.ens_seed,
        scenario.forcing,
        snapshot_every=cfg.snapshot_every,
    )
    n_steps = int(round(cfg.T / cfg.dt))
    already = run.members[0].n  # method-3 startup steps
    advance_ensemble(run, n_steps - already)
    if cfg.out_fields:
        os.makedirs(cfg.out_fields, exist_ok=True)
        for j, member in enumerate(run.members):
            write_snapshot(
                os.path.join(cfg.out_fields, f"fields_final_m{j}.txt"),
                member.t,
                member.w,
                member.q,
            )
    records = [recs[0] for recs in run.records]
    return records, run


def run(cfg, paper_mesh=False, quiet=False):
    """Execute a configured run; returns the process exit status.

    Nonzero on member/step divergence, and in strict mode on any audit
    violation (including a solver tolerance too loose to support the audit).
    """

    def say(msg):
        if not quiet:
            print(msg)

    scenario = build_scenario(cfg, paper_mesh=paper_mesh)
    say(
        f"scenario {scenario.name}: {scenario.mesh.num_triangles} elements, "
        f"{scenario.space.n_velocity} velocity dofs, "
        f"{scenario.space.n_pressure} pressure dofs"
    )
    try:
        if cfg.ens_J >= 2:
            records, run_obj = _run_ensemble(cfg, scenario, quiet)
            for s in run_obj.stats[-5:]:
                say(
                    f"  t={s.t:.3f} RS={s.rs:.6g} mean_ke={s.mean_ke:.6g} "
                    f"fluct_ke={s.fluct_ke:.6g}"
                )
        else:
            records, _ = _run_single(cfg, scenario, quiet)
    except DivergenceError as exc:
        say(f"run diverged: {exc}")
        return 1

    write_csv(cfg.out_csv, records)
    say(f"wrote {len(records)} steps to {cfg.out_csv}")

    avg = time_average(records)
    say(
        f"time-averaged MD = {avg.mean_md:.6g} over t in {avg.window}; "
        f"negative fraction {avg.fraction_negative:.3f}, "
        f"{avg.sign_changes} sign change(s)"
    )
    audit = audit_energy_equality(records, tol=cfg.audit_tol)
    worst = float(np.max(np.abs(audit.residuals) / audit.scales))
    say(
        f"energy audit: worst relative residual {worst:.3e} "
        f"({len(audit.flagged)} flagged of {len(records)})"
    )
    if cfg.beta_mode != "number":
        say(f"beta report: mode {cfg.beta_mode} -> beta = {scenario.beta}")

    exit_code = 0
    if cfg.strict:
        if len(audit.flagged):
            say("strict mode: energy audit failed")
            exit_code = 1
        if cfg.solver_tol > cfg.audit_tol / 10.0:
            say(
                "strict mode: solver_tol too loose to support the energy audit "
                f"(need <= audit_tol/10 = {cfg.audit_tol / 10.0:.1e})"
            )
            exit_code = 1
    return exit_code
