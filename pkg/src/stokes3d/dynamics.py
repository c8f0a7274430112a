"""Speed selection, reduced momentum straightening, and the gradient-like flow.

The reduced functional Phi(c, v) = (c - c*).I2(v) + G(c, v) (I2 the quadratic
momentum, G a model) determines for every small kernel point a speed c(v)
solving d_v Phi(c, v)[grad I2(v)] = 0.  The selection is a contraction fixed
point: away from the 2d blocks on the full 2x2 system, near a block on the
same system rotated into the block frame (where the singular structure is
explicit), and on a block on the scalar parallel equation with the orthogonal
speed component pinned at c*.

On top of the speed sit the reduced momentum I(v) = I2(v) + d_c G(v), its
straightening flow (a time-1 map pulling I back to I2), and the
momentum-preserving gradient-like flow

    Y(v) = -grad_v Phi(c(v), v) + mu(v).grad I2(v),    A(v)^T mu = d_v I[grad Phi]

along which I is conserved and the reduced Hamiltonian H = Phi - c.I decays
with rate ||grad_v Phi||^2.  Stationary points of Y are exactly the zeros of
the full gradient of Phi, i.e. genuine critical points (natural constraint).

All per-class projections go through the exact class-frame tables of
KernelSpace, so block-tangency is exact in floating point and near-block
solves never suffer cancellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalError, PreconditionError
from .geometry import Verdict, join_parametrize
from .kernel import (KernelPoint, KernelSpace, momentum, momentum_gradient,
                     momentum_pairing_matrix)
from .models import ModelHamiltonian, integer_kernel_basis


@dataclass(frozen=True)
class EngineConfig:
    """Calibration constants for the fixed points, integrators and searches.

    The regime radii are existential in the underlying theory; these defaults
    are monitored at runtime (contraction and conditioning checks raise
    NumericalError instead of silently degrading).
    """

    regime_radius: float = 1.0          # r': largest ||v|| accepted by speed()
    fixed_point_tol: float = 1e-14
    max_fixed_point_iter: int = 100
    det_floor_coeff: float = 1e-3       # times delta * ||v||^2 * d(v)^2
    straighten_steps: int = 64
    flow_dt: float | None = None        # fixed step; None = from Hessian scale
    flow_dt_max: float = 500.0
    flow_courant: float = 1.2           # times 1/L_est when flow_dt is None
    flow_t_max: float = 1e6
    grad_tol: float = 1e-9
    drift_tol: float = 1e-8
    reproject_every: int = 10
    max_step_halvings: int = 12
    tube_eta_factor: float = 0.5        # tube radius = factor*sqrt(delta/4)*||v||
    record_every: int = 1


DEFAULT_CONFIG = EngineConfig()


def _dc_norm(space: KernelSpace) -> float:
    return max(1.0, float(np.hypot(*space.c_star)))


def near_class(v: KernelPoint) -> int:
    """Class carrying the dominant share of the norm (the near-block frame)."""
    return int(np.argmax(v.class_norms_sq()))


def region_of(v: KernelPoint) -> str:
    """'zero' | 'block' (exactly on a 2d block) | 'far' | 'near'."""
    def compute():
        n2 = v.norm_sq()
        if n2 == 0.0:
            return "zero"
        s = v.class_norms_sq()
        smax = float(np.max(s))
        if smax == n2:
            return "block"
        d2 = n2 - smax
        return "far" if d2 >= (v.space.delta / 4.0) * n2 else "near"
    return v.cache_slot("region", compute)


def _rotated_quadratic_matrix(v: KernelPoint, frame: int) -> np.ndarray:
    """cA in the frame of a class; the frame class feeds only the (1,1) entry."""
    space = v.space
    s = v.class_norms_sq()
    par = space.par_dots[frame]
    perp = space.perp_dots[frame]
    a11 = float(np.sum(s * par * par))
    a12 = float(np.sum(s * par * perp))
    a22 = float(np.sum(s * perp * perp))
    return np.array([[a11, a12], [a12, a22]])


def speed(v: KernelPoint, model: ModelHamiltonian,
          config: EngineConfig = DEFAULT_CONFIG) -> np.ndarray:
    """The selected speed c(v); equals c* at v = 0.

    Fixed point of c = c* - cA(v)^{-1} G~(c, v) in the appropriate frame.
    Raises outside the regime radius or if the iteration fails to contract.
    """
    space = v.space
    nrm = v.norm()
    if nrm > config.regime_radius:
        raise PreconditionError(
            f"||v|| = {nrm:.3g} exceeds the speed regime radius "
            f"{config.regime_radius:g}"
        )
    reg = region_of(v)
    if reg == "zero":
        return space.c_star.copy()

    scale = _dc_norm(space)
    if reg == "block":
        ci = near_class(v)
        u = space.classes[ci].unit
        s = v.class_norms_sq()
        a11 = float(s[ci]) * float(space.par_dots[ci, ci]) ** 2
        dpar = 0.0
        if not model.c_dependent:
            gpar, _ = model.pair_with_momentum_gradients_rotated(
                np.zeros(2), v, ci)
            return space.c_star + (-gpar / a11) * u
        prev_step = math.inf
        for it in range(config.max_fixed_point_iter):
            dc = dpar * u
            gpar, _ = model.pair_with_momentum_gradients_rotated(dc, v, ci)
            new = -gpar / a11
            step = abs(new - dpar)
            dpar = new
            if step <= config.fixed_point_tol * scale:
                return space.c_star + dpar * u
            if it >= 3 and step > prev_step * 1.5:
                raise NumericalError(
                    f"2d speed fixed point not contracting (step {step:g})"
                )
            prev_step = step
        raise NumericalError(
            f"2d speed fixed point: no convergence, last step {prev_step:g}"
        )

    if reg == "far":
        A = momentum_pairing_matrix(v)
        det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        def solve(rhs):
            return np.array([(A[1, 1] * rhs[0] - A[0, 1] * rhs[1]) / det,
                             (-A[1, 0] * rhs[0] + A[0, 0] * rhs[1]) / det])
        dc = np.zeros(2)
        if not model.c_dependent:
            return space.c_star + solve(-model.pair_with_momentum_gradients(dc, v))
        prev_step = math.inf
        for it in range(config.max_fixed_point_iter):
            gt = model.pair_with_momentum_gradients(dc, v)
            new = solve(-gt)
            step = float(np.hypot(*(new - dc)))
            dc = new
            if step <= config.fixed_point_tol * scale:
                return space.c_star + dc
            if it >= 3 and step > prev_step * 1.5:
                raise NumericalError(
                    f"speed fixed point not contracting (step {step:g})"
                )
            prev_step = step
        raise NumericalError(
            f"speed fixed point: no convergence, last step {prev_step:g}"
        )

    # near a block: solve in the rotated frame where the singular scales split
    ci = near_class(v)
    u = space.classes[ci].unit
    up = space.classes[ci].unit_perp
    M = _rotated_quadratic_matrix(v, ci)
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    d2 = v.norm_sq() - float(v.class_norms_sq()[ci])
    floor = config.det_floor_coeff * space.delta * v.norm_sq() * d2
    if det < floor:
        raise NumericalError(
            f"rotated speed system below the determinant floor: det {det:g} "
            f"< {floor:g}"
        )
    dpar, dperp = 0.0, 0.0
    if not model.c_dependent:
        gpar, gperp = model.pair_with_momentum_gradients_rotated(
            np.zeros(2), v, ci)
        dpar = -(M[1, 1] * gpar - M[0, 1] * gperp) / det
        dperp = -(-M[0, 1] * gpar + M[0, 0] * gperp) / det
        return space.c_star + dpar * u + dperp * up
    prev_step = math.inf
    for it in range(config.max_fixed_point_iter):
        dc = dpar * u + dperp * up
        gpar, gperp = model.pair_with_momentum_gradients_rotated(dc, v, ci)
        npar = -(M[1, 1] * gpar - M[0, 1] * gperp) / det
        nperp = -(-M[0, 1] * gpar + M[0, 0] * gperp) / det
        step = math.hypot(npar - dpar, nperp - dperp)
        dpar, dperp = npar, nperp
        if step <= config.fixed_point_tol * scale:
            return space.c_star + dpar * u + dperp * up
        if it >= 3 and step > prev_step * 1.5:
            raise NumericalError(
                f"near-block speed fixed point not contracting (step {step:g})"
            )
        prev_step = step
    raise NumericalError(
        f"near-block speed fixed point: no convergence, last step {prev_step:g}"
    )


# -- reduced quantities --------------------------------------------------------

def reduced_momentum(v: KernelPoint, model: ModelHamiltonian,
                     config: EngineConfig = DEFAULT_CONFIG) -> np.ndarray:
    """I(v) = I2(v) + d_c G(v) (affine c-dependence makes d_c G speed-free)."""
    return momentum(v) + model.c_gradient(v)


def reduced_hamiltonian(v: KernelPoint, model: ModelHamiltonian,
                        config: EngineConfig = DEFAULT_CONFIG) -> float:
    """H(v) = Phi(c(v), v) - c(v).I(v)."""
    space = v.space
    c = speed(v, model, config)
    dc = c - space.c_star
    phi = float(dc @ momentum(v)) + model.value(dc, v)
    return phi - float(c @ reduced_momentum(v, model, config))


def phi_gradient(v: KernelPoint, model: ModelHamiltonian, c: np.ndarray
                 ) -> KernelPoint:
    """grad_v Phi(c, v) in the kernel metric: -(dc.j_hat) z_j + 2 dG/dzbar /|j|."""
    space = v.space
    dc = c - space.c_star
    quad = -(space.units_per_vector @ dc) * v.z
    gz = model.wirtinger_zbar(dc, v)
    return KernelPoint(space, quad + 2.0 * gz / space.weights)


def momentum_jacobian(v: KernelPoint, model: ModelHamiltonian) -> np.ndarray:
    """A(v) with A[i, l] = d_v I_l (v)[grad I2_i(v)] = cA + model correction."""
    return momentum_pairing_matrix(v) + model.momentum_correction_matrix(v)


def _rotated_jacobian(t: float, v: KernelPoint, model: ModelHamiltonian,
                      frame: int) -> np.ndarray:
    """A(t, v) = t A(v) + (1-t) cA(v) in a class frame, exact block structure."""
    M = _rotated_quadratic_matrix(v, frame)
    if model.c_dependent and t != 0.0:
        m = model._monomials(v)
        e_par, e_perp, w_par, w_perp = model.frame_tables(frame)
        R = -np.real(np.array([
            [np.sum(m * w_par * e_par), np.sum(m * w_par * e_perp)],
            [np.sum(m * w_perp * e_par), np.sum(m * w_perp * e_perp)],
        ]))
        return M + t * R
    return M


def _dI_pairing(v: KernelPoint, model: ModelHamiltonian, h: KernelPoint
                ) -> np.ndarray:
    """(d_v I_1[h], d_v I_2[h]) for an arbitrary direction h."""
    space = v.space
    g1, g2 = momentum_gradient(v)
    quad = np.array([g1.inner(h), g2.inner(h)])
    return quad + model.dP_directional(v, h)


def _dI_pairing_rotated(v: KernelPoint, model: ModelHamiltonian,
                        h: KernelPoint, frame: int) -> tuple[float, float]:
    """(d_v I^par[h], d_v I^perp[h]) in a class frame with exact zeros."""
    space = v.space
    # quadratic part: d_v(I2.dir)[h] = -sum_cls dot(j_cls, dir) <Pi_cls v, h>
    w = space.weights
    per_class = np.zeros(space.n_classes)
    vals = w * (v.z * np.conj(h.z)).real
    np.add.at(per_class, space.class_of, vals)
    qpar = -float(per_class @ space.par_dots[frame])
    qperp = -float(per_class @ space.perp_dots[frame])
    mpar, mperp = model.dP_directional_projected(v, h, frame)
    return qpar + mpar, qperp + mperp


def mu_solve(t: float, v: KernelPoint, b, model: ModelHamiltonian,
             config: EngineConfig = DEFAULT_CONFIG,
             b_rotated: tuple[float, float] | None = None) -> np.ndarray:
    """Solve A(t, v)^T mu = b; rank-1 parallel solve on a 2d block.

    `b_rotated` optionally supplies (b.j_hat, b.j_hat_perp) in the near-block
    frame computed without cancellation; internal callers use it.
    Raises a conditioning error below the theoretical determinant floor.
    """
    space = v.space
    reg = region_of(v)
    if reg == "zero":
        return np.zeros(2)
    b = np.asarray(b, dtype=float)

    if reg == "block":
        ci = near_class(v)
        u = space.classes[ci].unit
        up = space.classes[ci].unit_perp
        if b_rotated is not None:
            bpar, bperp = b_rotated
        else:
            bpar, bperp = float(b @ u), float(b @ up)
        scale = max(1.0, float(np.hypot(*b)))
        if abs(bperp) > 1e-9 * scale:
            raise PreconditionError(
                "right-hand side has a transverse component on a 2d block; "
                "the rank-1 solve requires the structural decay b_perp = 0"
            )
        At = _rotated_jacobian(t, v, model, ci)
        a11 = At[0, 0]
        if a11 < config.det_floor_coeff * v.norm_sq():
            raise NumericalError(
                f"block solve below the (1,1) floor: {a11:g}"
            )
        return (bpar / a11) * u

    if reg == "far":
        A = momentum_jacobian(v, model)
        cA = momentum_pairing_matrix(v)
        At = t * A + (1.0 - t) * cA
        det = At[0, 0] * At[1, 1] - At[0, 1] * At[1, 0]
        d2 = v.norm_sq() - float(np.max(v.class_norms_sq()))
        floor = config.det_floor_coeff * space.delta * v.norm_sq() * d2
        if det < floor:
            raise NumericalError(
                f"far solve below the determinant floor: det {det:g} < {floor:g}"
            )
        return np.array([(At[1, 1] * b[0] - At[1, 0] * b[1]) / det,
                         (-At[0, 1] * b[0] + At[0, 0] * b[1]) / det])

    ci = near_class(v)
    u = space.classes[ci].unit
    up = space.classes[ci].unit_perp
    At = _rotated_jacobian(t, v, model, ci)
    det = At[0, 0] * At[1, 1] - At[0, 1] * At[1, 0]
    d2 = v.norm_sq() - float(v.class_norms_sq()[ci])
    floor = config.det_floor_coeff * space.delta * v.norm_sq() * d2
    if det < floor:
        raise NumericalError(
            f"near solve below the determinant floor: det {det:g} < {floor:g}"
        )
    if b_rotated is not None:
        bpar, bperp = b_rotated
    else:
        bpar, bperp = float(b @ u), float(b @ up)
    # solve At^T (mu_par, mu_perp) = (b_par, b_perp)
    mpar = (At[1, 1] * bpar - At[1, 0] * bperp) / det
    mperp = (-At[0, 1] * bpar + At[0, 0] * bperp) / det
    return mpar * u + mperp * up


def _apply_momentum_field(v: KernelPoint, mu: np.ndarray) -> KernelPoint:
    """mu . grad I2(v): the per-class real scaling -(mu.j_hat_c) z."""
    space = v.space
    coeff = -(space.units @ mu)
    return KernelPoint(space, coeff[space.class_of] * v.z)


# -- Moser straightening ---------------------------------------------------------

def _straighten_field(t: float, v: KernelPoint, model: ModelHamiltonian,
                      config: EngineConfig) -> KernelPoint:
    space = v.space
    if v.norm_sq() == 0.0:
        return space.zero()
    b = -model.c_gradient(v)  # I2 - I
    reg = region_of(v)
    if reg in ("block", "near"):
        ci = near_class(v)
        ppar, pperp = model.c_gradient_rotated(v, ci)
        mu = mu_solve(t, v, b, model, config, b_rotated=(-ppar, -pperp))
    else:
        mu = mu_solve(t, v, b, model, config)
    return _apply_momentum_field(v, mu)


def moser_straighten(v: KernelPoint, model: ModelHamiltonian,
                     steps: int | None = None,
                     config: EngineConfig = DEFAULT_CONFIG) -> KernelPoint:
    """Time-1 map zeta with I(zeta(v)) = I2(v); identity for c-free models.

    Fixed-step RK4 on the rectifying field mu(t,.) . grad I2; the field is a
    per-class real scaling, so 2d blocks and the off-block set are preserved
    exactly.
    """
    if not model.c_dependent:
        return v.copy()
    steps = steps or config.straighten_steps
    w = v.copy()
    h = 1.0 / steps
    for n in range(steps):
        t0 = n * h
        try:
            k1 = _straighten_field(t0, w, model, config)
            k2 = _straighten_field(t0 + 0.5 * h,
                                   KernelPoint(w.space, w.z + 0.5 * h * k1.z),
                                   model, config)
            k3 = _straighten_field(t0 + 0.5 * h,
                                   KernelPoint(w.space, w.z + 0.5 * h * k2.z),
                                   model, config)
            k4 = _straighten_field(t0 + h,
                                   KernelPoint(w.space, w.z + h * k3.z),
                                   model, config)
        except NumericalError as exc:
            raise NumericalError(
                f"straightening integrator failed at t={t0:.3f}, ||v||="
                f"{w.norm():.3g}, d(v)={w.distance_2d():.3g}: {exc}"
            ) from exc
        w = KernelPoint(w.space,
                        w.z + (h / 6.0) * (k1.z + 2 * k2.z + 2 * k3.z + k4.z))
    return w


# -- gradient-like flow -----------------------------------------------------------

@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    hamiltonian: list[float] = field(default_factory=list)
    momentum1: list[float] = field(default_factory=list)
    momentum2: list[float] = field(default_factory=list)
    moduli: list[np.ndarray] = field(default_factory=list)
    dissipation: list[float] = field(default_factory=list)

    def record(self, t, H, I, v: KernelPoint, D):
        self.times.append(float(t))
        self.hamiltonian.append(float(H))
        self.momentum1.append(float(I[0]))
        self.momentum2.append(float(I[1]))
        self.moduli.append(np.abs(v.z))
        self.dissipation.append(float(D))


@dataclass
class FlowResult:
    point: KernelPoint
    time: float
    grad_norm: float
    momentum_drift: float
    converged: bool
    trajectory: Trajectory


def flow_field(v: KernelPoint, model: ModelHamiltonian,
               config: EngineConfig = DEFAULT_CONFIG, sign: float = -1.0
               ) -> tuple[KernelPoint, float]:
    """(Y(v), ||grad Phi||^2) with Y = sign*grad Phi + mu.grad I2, d_v I[Y] = 0."""
    space = v.space
    if v.norm_sq() == 0.0:
        return space.zero(), 0.0
    c = speed(v, model, config)
    g = phi_gradient(v, model, c)
    gn2 = g.norm_sq()
    reg = region_of(v)
    if reg in ("block", "near"):
        ci = near_class(v)
        bpar, bperp = _dI_pairing_rotated(v, model, g, ci)
        bpar, bperp = -sign * bpar, -sign * bperp
        u = space.classes[ci].unit
        up = space.classes[ci].unit_perp
        b = bpar * u + bperp * up
        mu = mu_solve(1.0, v, b, model, config, b_rotated=(bpar, bperp))
    else:
        b = -sign * _dI_pairing(v, model, g)
        mu = mu_solve(1.0, v, b, model, config)
    Y = KernelPoint(space, sign * g.z + _apply_momentum_field(v, mu).z)
    return Y, gn2


def _reproject(v: KernelPoint, model: ModelHamiltonian, target: np.ndarray,
               config: EngineConfig, iters: int = 2) -> KernelPoint:
    """Newton steps along span(grad I2) pulling I(v) back to the target."""
    w = v
    for _ in range(iters):
        err = target - reduced_momentum(w, model, config)
        if float(np.hypot(*err)) <= 1e-15 * (1.0 + float(np.hypot(*target))):
            break
        if region_of(w) == "block":
            ci = near_class(w)
            u = w.space.classes[ci].unit
            up = w.space.classes[ci].unit_perp
            mu = mu_solve(1.0, w, err, model, config,
                          b_rotated=(float(err @ u), float(err @ up)))
        else:
            mu = mu_solve(1.0, w, err, model, config)
        w = KernelPoint(w.space, w.z + _apply_momentum_field(w, mu).z)
    return w


def hessian_scale(v0: KernelPoint, model: ModelHamiltonian) -> float:
    """Crude upper scale of the flow field's Lipschitz constant near v0.

    The quartic-and-higher model terms contribute O(coeff * ||v||^(deg-2));
    the dominant scale sets the stable step size of the explicit integrator.
    """
    n2 = max(v0.norm_sq(), 1e-30)
    wmin = float(np.min(v0.space.weights))
    scale = 0.0
    for t in range(len(model.const)):
        deg = int(np.sum(model.A[t]) + np.sum(model.B[t]))
        coeff = abs(model.const[t]) + float(np.hypot(*model.clin[t]))
        scale += coeff * deg * deg * n2 ** ((deg - 2) / 2.0)
    return max(scale / wmin, 1e-30)


def run_flow(v0: KernelPoint, model: ModelHamiltonian,
             config: EngineConfig = DEFAULT_CONFIG, *,
             t_max: float | None = None, dt: float | None = None,
             ascend: bool = False, grad_tol: float | None = None,
             record: bool = False) -> FlowResult:
    """Integrate the momentum-preserving gradient-like flow from v0.

    Fixed-step RK4 (step chosen once from the model's Hessian scale unless
    given) with periodic Newton reprojection onto the momentum level.  Steps
    crossing the near-block tube boundary d(v) = eta ||v|| are halved,
    deterministically and at most max_step_halvings times, mirroring the
    far/near split of the speed construction.  Stops when
    ||grad Phi(c(v), v)|| < grad_tol or at t_max.
    """
    if dt is not None:
        dt0 = dt
    elif config.flow_dt is not None:
        dt0 = config.flow_dt
    else:
        dt0 = min(config.flow_dt_max,
                  config.flow_courant / hessian_scale(v0, model))
    t_end = t_max if t_max is not None else config.flow_t_max
    gtol = grad_tol if grad_tol is not None else config.grad_tol
    sign = +1.0 if ascend else -1.0
    space = v0.space
    eta = config.tube_eta_factor * math.sqrt(space.delta / 4.0)

    target = reduced_momentum(v0, model, config)
    v = v0.copy()
    t = 0.0
    D = 0.0
    traj = Trajectory()
    Y, gn2 = flow_field(v, model, config, sign)
    if record:
        traj.record(t, reduced_hamiltonian(v, model, config), target, v, D)

    H_prev = reduced_hamiltonian(v, model, config)
    H_slack = 1e-9
    steps_done = 0
    while t < t_end and math.sqrt(gn2) >= gtol:
        h = min(dt0, t_end - t)
        for _ in range(config.max_step_halvings + 1):
            try:
                k1, d1 = Y, gn2
                w2 = KernelPoint(space, v.z + 0.5 * h * k1.z)
                k2, d2 = flow_field(w2, model, config, sign)
                w3 = KernelPoint(space, v.z + 0.5 * h * k2.z)
                k3, d3 = flow_field(w3, model, config, sign)
                w4 = KernelPoint(space, v.z + h * k3.z)
                k4, d4 = flow_field(w4, model, config, sign)
            except NumericalError:
                h *= 0.5
                continue
            v_new = KernelPoint(
                space, v.z + (h / 6.0) * (k1.z + 2 * k2.z + 2 * k3.z + k4.z))
            # clamp steps crossing the near-tube boundary d(v) = eta ||v||
            gap_old = v.distance_2d() - eta * v.norm()
            gap_new = v_new.distance_2d() - eta * v_new.norm()
            if gap_old * gap_new < 0.0 and h > 2.0 ** -config.max_step_halvings * dt0:
                h *= 0.5
                continue
            break
        else:
            raise NumericalError("flow step size collapsed near the 2d blocks")
        D_new = D + (h / 6.0) * (d1 + 2 * d2 + 2 * d3 + d4)
        v, t, D = v_new, t + h, D_new
        steps_done += 1
        check_now = steps_done % config.reproject_every == 0
        if check_now:
            v = _reproject(v, model, target, config)
        Y, gn2 = flow_field(v, model, config, sign)
        if record and steps_done % config.record_every == 0:
            traj.record(t, reduced_hamiltonian(v, model, config),
                        reduced_momentum(v, model, config), v, D)
        if check_now:
            H_now = reduced_hamiltonian(v, model, config)
            progress = sign * (H_now - H_prev)  # descent: H_prev - H_now >= 0
            if progress < -H_slack * (1.0 + abs(H_prev)):
                word = "increased" if not ascend else "decreased"
                raise NumericalError(
                    f"H {word} along the flow at t={t:.3f}: "
                    f"{H_prev!r} -> {H_now!r}"
                )
            H_prev = H_now

    v = _reproject(v, model, target, config)
    Y, gn2 = flow_field(v, model, config, sign)
    drift = float(np.hypot(*(reduced_momentum(v, model, config) - target)))
    if record:
        traj.record(t, reduced_hamiltonian(v, model, config),
                    reduced_momentum(v, model, config), v, D)
    return FlowResult(point=v, time=t, grad_norm=math.sqrt(gn2),
                      momentum_drift=drift, converged=math.sqrt(gn2) < gtol,
                      trajectory=traj)


def polish_critical_point(v: KernelPoint, model: ModelHamiltonian,
                          target, config: EngineConfig = DEFAULT_CONFIG, *,
                          grad_tol: float = 1e-11, max_iter: int = 40
                          ) -> KernelPoint | None:
    """Damped Gauss-Newton on [grad Phi(c(v), v); I(v) - target].

    The system is degenerate along the group orbit (and along neutral phase
    directions of action-only models); the least-squares step handles the
    null space.  Returns None when the iteration leaves the starting basin or
    fails to reach the tolerance.
    """
    space = v.space
    nv = space.n_vectors
    target = np.asarray(target, dtype=float)
    scale0 = max(v.norm(), 1e-12)

    def residual(x):
        w = KernelPoint(space, x[:nv] + 1j * x[nv:])
        g = phi_gradient(w, model, speed(w, model, config))
        dI = reduced_momentum(w, model, config) - target
        return np.concatenate([g.z.real, g.z.imag, dI]), w, g

    x = np.concatenate([v.z.real, v.z.imag])
    F, w, g = residual(x)
    for _ in range(max_iter):
        if (g.norm() < grad_tol
                and np.hypot(*(F[-2:])) < grad_tol * (1 + np.hypot(*target))):
            return w
        # central differences: the degenerate orbit directions leave singular
        # values near the derivative noise floor, so accuracy matters here
        eps = 1e-5 * scale0
        J = np.empty((len(F), 2 * nv))
        try:
            for i in range(2 * nv):
                xp = x.copy()
                xp[i] += eps
                Fp, _, _ = residual(xp)
                xp[i] -= 2 * eps
                Fm, _, _ = residual(xp)
                J[:, i] = (Fp - Fm) / (2 * eps)
        except (NumericalError, PreconditionError):
            return None
        U, S, VT = np.linalg.svd(J, full_matrices=False)
        keep = S > 1e-9 * S[0]
        step = VT[keep].T @ ((U[:, keep].T @ -F) / S[keep])
        lam = 1.0
        for _ in range(25):
            try:
                F_new, w_new, g_new = residual(x + lam * step)
            except (NumericalError, PreconditionError):
                lam *= 0.5
                continue
            if np.linalg.norm(F_new) < np.linalg.norm(F):
                break
            lam *= 0.5
        else:
            return None
        x = x + lam * step
        F, w, g = F_new, w_new, g_new
        if float(np.abs(w.z - v.z).max()) > 0.75 * scale0:
            return None  # left the basin of the flowed point
    if (g.norm() < grad_tol
            and np.hypot(*(F[-2:])) < grad_tol * (1 + np.hypot(*target))):
        return w
    return None


# -- critical orbits ---------------------------------------------------------------

@dataclass
class CriticalOrbit:
    representative: KernelPoint
    value: float                       # H at the orbit
    momentum: tuple[float, float]
    moduli: np.ndarray                 # |z_j| in kernel order
    phases: tuple                      # invariant-monomial phases (or None)
    kind: str                          # "2d" or "3d"
    direction_class: int | None        # class index for 2d orbits
    grad_residual: float
    n_hits: int = 1


def orbit_fingerprint(v: KernelPoint, kernel_basis, phase_floor: float = 1e-8):
    """Moduli plus invariant phases, canonicalized under reversal."""
    mod = np.abs(v.z)
    scale = float(np.max(mod)) if len(mod) else 1.0
    phases = []
    for n in kernel_basis:
        supp = np.nonzero(n)[0]
        if np.all(mod[supp] > phase_floor * max(scale, 1e-30)):
            ph = float(np.sum(n[supp] * np.angle(v.z[supp])) % (2 * math.pi))
            phases.append(ph)
        else:
            phases.append(None)
    def normalize(phs):
        return tuple(-1.0 if p is None else p for p in phs)
    conj_phases = [None if p is None else (-p) % (2 * math.pi) for p in phases]
    if normalize(conj_phases) < normalize(phases):
        phases = conj_phases
    return mod, tuple(phases)


def _phase_distance(p1, p2) -> float:
    d = 0.0
    for a, b in zip(p1, p2):
        if a is None or b is None:
            continue
        delta = abs(a - b) % (2 * math.pi)
        d = max(d, min(delta, 2 * math.pi - delta))
    return d


def two_d_level(model: ModelHamiltonian, a, class_index: int,
                config: EngineConfig = DEFAULT_CONFIG,
                space: KernelSpace | None = None) -> tuple[KernelPoint, float]:
    """2d representative on the momentum level and its H value.

    The block must be collinear with a.  Solves the scalar equation
    I(lambda e).j_hat = a.j_hat by Newton from the quadratic-order amplitude
    sqrt(2|a|/|j0|).
    """
    space = space or model.space
    a = np.asarray(a, dtype=float)
    cls = space.classes[class_index]
    u = cls.unit
    apar = float(a @ u)
    if abs(float(a @ cls.unit_perp)) > 1e-10 * float(np.hypot(*a)):
        raise PreconditionError("momentum is not collinear with the class")
    j0 = cls.members[0]
    pos = [i for i, w in enumerate(space.vectors) if w.index == j0.index][0]

    def point(lam):
        z = np.zeros(space.n_vectors, dtype=complex)
        z[pos] = lam
        return KernelPoint(space, z)

    lam = math.sqrt(2.0 * abs(apar) / j0.norm)
    for _ in range(60):
        val = float(reduced_momentum(point(lam), model, config) @ u) - apar
        if abs(val) <= 1e-14 * max(1.0, abs(apar)):
            break
        eps = 1e-7 * max(lam, 1e-7)
        der = (float(reduced_momentum(point(lam + eps), model, config) @ u)
               - float(reduced_momentum(point(lam - eps), model, config) @ u)
               ) / (2 * eps)
        lam -= val / der
    else:
        raise NumericalError("2d level solve did not converge")
    rep = point(lam)
    return rep, reduced_hamiltonian(rep, model, config)


def find_critical_orbits(model: ModelHamiltonian, a, classification,
                         n_starts: int,
                         tol: float = 1e-7,
                         config: EngineConfig = DEFAULT_CONFIG,
                         rng: np.random.Generator | None = None,
                         straighten_seeds: bool | None = None
                         ) -> list[CriticalOrbit]:
    """Multi-start search for critical orbits of H on the momentum level.

    Seeds are drawn through the join parametrization of the quadratic level
    set (straightened to the reduced level for speed-dependent models) and
    flowed in both the descending and ascending directions.  Converged points
    are validated by the natural-constraint check (full gradient of Phi below
    tol), clustered into group orbits by moduli-and-phase fingerprints, and
    typed 2d/3d by support projection and revalidation.
    """
    space = model.space
    a = np.asarray(a, dtype=float)
    if classification.verdict not in (Verdict.INTERIOR_NONCOLLINEAR,
                                      Verdict.INTERIOR_COLLINEAR_UNIQUE,
                                      Verdict.INTERIOR_COLLINEAR_DOUBLE):
        raise PreconditionError(
            f"orbit search needs an interior verdict, got "
            f"{classification.verdict.value}"
        )
    if n_starts < 10 * space.n_vectors:
        raise PreconditionError(
            f"n_starts={n_starts} below the floor 10*#V={10 * space.n_vectors}"
        )
    rng = rng if rng is not None else np.random.default_rng(0)
    if straighten_seeds is None:
        straighten_seeds = model.c_dependent

    a_perp = np.array([-a[1], a[0]])
    scale_a = float(np.hypot(*a))
    signs = space.units @ a_perp
    minus_ids = [i for i in range(space.n_classes) if signs[i] < -1e-12 * scale_a]
    plus_ids = [i for i in range(space.n_classes) if signs[i] > 1e-12 * scale_a]
    zero_ids = [i for i in range(space.n_classes)
                if abs(signs[i]) <= 1e-12 * scale_a]

    def random_block_unit(ids) -> np.ndarray:
        """Random point on the unit sphere of the direct sum of the classes."""
        z = np.zeros(space.n_vectors, dtype=complex)
        for ci in ids:
            members = np.nonzero(space.class_of == ci)[0]
            z[members] = (rng.standard_normal(len(members))
                          + 1j * rng.standard_normal(len(members)))
        total = float(np.sum(KernelPoint(space, z).class_norms_sq()[ids]))
        return z / math.sqrt(total)

    def normalized_blocks(ids_list) -> KernelPoint:
        z = np.zeros(space.n_vectors, dtype=complex)
        for ids in ids_list:
            z += random_block_unit(ids)
        return KernelPoint(space, z)

    kernel_basis = integer_kernel_basis(space.k_indices)
    width = 10.0 * tol

    candidates = []
    for s_idx in range(n_starts):
        v1 = normalized_blocks([minus_ids, plus_ids])
        if zero_ids:
            v0 = normalized_blocks([[ci] for ci in zero_ids])
            t = rng.uniform(0.1, 0.9)
        else:
            v0 = space.zero()
            t = 0.0
        seed = join_parametrize(v1, v0, t, a)
        if straighten_seeds:
            seed = moser_straighten(seed, model, config=config)
        seed = _reproject(seed, model, a, config, iters=3)
        # the flow selects a basin; a least-squares Newton polish finishes
        hscale = hessian_scale(seed, model)
        t_budget = min(config.flow_t_max, 120.0 / hscale)
        g0 = flow_field(seed, model, config)[1] ** 0.5
        loose = max(tol, 1e-3 * g0)
        for ascend in (False, True):
            try:
                res = run_flow(seed, model, config, ascend=ascend,
                               grad_tol=loose, t_max=t_budget)
            except NumericalError:
                continue
            if res.momentum_drift > 100.0 * config.drift_tol * (1.0 + scale_a):
                continue
            polished = polish_critical_point(res.point, model, a, config,
                                             grad_tol=min(tol, 1e-10))
            if polished is not None:
                candidates.append(polished)

    if not candidates:
        return []

    orbits: list[CriticalOrbit] = []
    for v in candidates:
        # 2d / 3d typing by projection-revalidation
        s = v.class_norms_sq()
        dom = int(np.argmax(s))
        kind, cls_idx, rep = "3d", None, v
        off = v.norm_sq() - float(s[dom])
        if off <= 1e-2 * v.norm_sq() and dom in zero_ids:
            try:
                rep2d, _ = two_d_level(model, a, dom, config, space)
                # keep the flowed phases: project v onto the block and rescale
                proj = v.project_class(dom)
                proj = KernelPoint(space,
                                   proj.z * (rep2d.norm() / proj.norm()))
                g = phi_gradient(proj, model, speed(proj, model, config))
                dI = reduced_momentum(proj, model, config) - a
                if (g.norm() < 10 * tol
                        and float(np.hypot(*dI)) <= 1e-6 * (1 + scale_a)):
                    kind, cls_idx, rep = "2d", dom, proj
            except (NumericalError, PreconditionError):
                pass
        g = phi_gradient(rep, model, speed(rep, model, config))
        if g.norm() >= 10 * tol:
            continue
        H = reduced_hamiltonian(rep, model, config)
        I = reduced_momentum(rep, model, config)
        mod, phases = orbit_fingerprint(rep, kernel_basis)
        merged = False
        # phases are neutral directions of action-only models: critical points
        # with matching moduli sweep a connected critical manifold there
        phase_blind = model.is_action_only
        for orb in orbits:
            if (orb.kind == kind
                    and float(np.max(np.abs(orb.moduli - mod))) <= width
                    and (phase_blind
                         or _phase_distance(orb.phases, phases) <= width * 100)):
                if abs(orb.value - H) > width:
                    raise NumericalError(
                        "fingerprint collision: orbits with matching "
                        f"fingerprints at distinct values {orb.value!r} vs {H!r}"
                    )
                orb.n_hits += 1
                merged = True
                break
        if not merged:
            orbits.append(CriticalOrbit(
                representative=rep, value=H,
                momentum=(float(I[0]), float(I[1])), moduli=mod,
                phases=phases, kind=kind, direction_class=cls_idx,
                grad_residual=g.norm(),
            ))
    orbits.sort(key=lambda o: (o.value, tuple(o.moduli)))
    return orbits


def distinct_critical_values(orbits, width: float) -> list[float]:
    """Cluster orbit values with the given width; returns sorted representatives."""
    values = sorted(o.value for o in orbits)
    out = []
    for v in values:
        if not out or v - out[-1][-1] > width:
            out.append([v])
        else:
            out[-1].append(v)
    return [float(np.mean(c)) for c in out]
