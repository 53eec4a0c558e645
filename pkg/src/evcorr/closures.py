"""Eddy-viscosity closures and the correction weight a = sqrt(nu_t / nu).

The Smagorinsky closure evaluates nu_t = (cs * delta)^2 * |G| at quadrature
points, where G is either the full velocity gradient (gradient mode,
|G| Frobenius) or the strain rate (strain mode, |S~| = sqrt(2 S:S)).
delta is either a global length (the mesh's shortest edge by default) or
the per-element local width.  A constant closure (fixed a) is provided as a
test hook and as the off switch (a = 0 gives plain Navier-Stokes).
"""

from dataclasses import dataclass

import numpy as np

from .spaces import FeFunction, qp_velocity_grads


@dataclass(frozen=True)
class ClosureSpec:
    """Closure parameters: kind 'smagorinsky' or 'constant'.

    delta may be a float (global length) or a per-element array; for the
    'constant' kind, a_const pins a directly and delta/cs are ignored.
    """

    kind: str = "smagorinsky"
    cs: float = 0.1
    delta: object = 1.0
    mode: str = "strain"
    nu: float = 1.0
    a_const: float = 0.0

    def __post_init__(self):
        if self.kind not in ("smagorinsky", "constant"):
            raise ValueError(f"unknown closure kind {self.kind!r}")
        if self.mode not in ("gradient", "strain"):
            raise ValueError(f"unknown closure mode {self.mode!r}")
        if self.nu <= 0.0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if self.kind == "smagorinsky":
            if self.cs <= 0.0:
                raise ValueError(f"cs must be positive, got {self.cs}")
            delta = np.asarray(self.delta, dtype=float)
            if np.any(delta <= 0.0):
                raise ValueError("delta must be positive")
        if self.kind == "constant" and self.a_const < 0.0:
            raise ValueError(f"a_const must be nonnegative, got {self.a_const}")


@dataclass(frozen=True)
class ClosureField:
    """nu_t and a at every quadrature point, tied to the iterate they came from."""

    nu_t: np.ndarray
    a: np.ndarray
    source: FeFunction = None


def _tensor_magnitude(grad, mode):
    if mode == "gradient":
        return np.sqrt(np.sum(grad**2, axis=(-2, -1)))
    sym = 0.5 * (grad + np.swapaxes(grad, -2, -1))
    return np.sqrt(2.0 * np.sum(sym**2, axis=(-2, -1)))


def eval_nu_t(spec, grad_w):
    """Eddy viscosity at one quadrature point from a 2x2 velocity gradient."""
    grad_w = np.asarray(grad_w, dtype=float)
    if not np.all(np.isfinite(grad_w)):
        raise FloatingPointError("non-finite velocity gradient")
    if spec.kind == "constant":
        return spec.nu * spec.a_const**2
    delta = float(np.min(spec.delta)) if np.ndim(spec.delta) else float(spec.delta)
    return (spec.cs * delta) ** 2 * float(_tensor_magnitude(grad_w, spec.mode))


def eval_a(spec, nu_t):
    """Correction weight a = sqrt(nu_t / nu); satisfies a^2 * nu = nu_t."""
    nu_t = np.asarray(nu_t, dtype=float)
    if np.any(nu_t < 0.0):
        raise ValueError("nu_t must be nonnegative")
    return np.sqrt(nu_t / spec.nu)


def closure_field(spec, w):
    """Evaluate nu_t and a at every quadrature point from the gradient of w."""
    if w.kind != "velocity":
        raise ValueError("closure_field expects a velocity FeFunction")
    space = w.space
    shape = (space.num_elements, len(space.quad.weights))
    if spec.kind == "constant":
        a = np.full(shape, spec.a_const)
        return ClosureField(nu_t=spec.nu * a**2, a=a, source=w)
    grads = qp_velocity_grads(space, w.coeffs)
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite velocity gradient field")
    mag = _tensor_magnitude(grads, spec.mode)
    delta = np.asarray(spec.delta, dtype=float)
    if delta.ndim == 1:
        if len(delta) != space.num_elements:
            raise ValueError("per-element delta must have one entry per element")
        delta = delta[:, None]
    nu_t = (spec.cs * delta) ** 2 * mag
    return ClosureField(nu_t=nu_t, a=np.asarray(eval_a(spec, nu_t)), source=w)
