"""Spatial lattices, the gravity-capillary dispersion relation, and resonant sets.

A spatial lattice Gamma = 2*pi*W*Z^2 is described by its (invertible) generator
matrix W.  Wave vectors live on the dual lattice Gamma' = W^{-T} Z^2 and are
always carried together with their integer index pair k, so that set operations
are exact.  The linear frequency of a plane wave with wave vector xi is

    omega(xi) = sqrt((g + kappa*|xi|^2) * |xi| * tanh(h*|xi|))

with the tanh factor replaced by 1 at infinite depth.  A speed c is a
bifurcation speed exactly when some dual vector j satisfies omega(j) = c.j;
the set of such j (up to a tolerance, on floats) is the resonant set.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from math import gcd

import numpy as np

from .errors import BudgetError, NumericalError, PreconditionError

INFINITE_DEPTH = math.inf

DEFAULT_RESONANCE_TOL = 1e-9
DEFAULT_ENUMERATION_BUDGET = 4_000_000  # integer index pairs scanned per call


@dataclass(frozen=True)
class PhysicalParams:
    """Gravity g > 0, surface tension kappa > 0, depth h > 0 (math.inf allowed)."""

    gravity: float = 1.0
    surface_tension: float = 1.0
    depth: float = INFINITE_DEPTH

    def __post_init__(self):
        if not (self.gravity > 0):
            raise PreconditionError(f"gravity must be positive, got {self.gravity}")
        if not (self.surface_tension > 0):
            raise PreconditionError(
                f"surface tension must be positive, got {self.surface_tension}"
            )
        if not (self.depth > 0):
            raise PreconditionError(f"depth must be positive, got {self.depth}")

    @property
    def infinite_depth(self) -> bool:
        return math.isinf(self.depth)

    def tanh_factor(self, r: float) -> float:
        # tanh(h*r), with the infinite-depth replacement by 1.
        if self.infinite_depth:
            return 1.0
        return math.tanh(self.depth * r)


def omega(xi, params: PhysicalParams) -> float:
    """Linear frequency of the wave vector xi (total on valid params; omega(0)=0)."""
    x, y = float(xi[0]), float(xi[1])
    r = math.hypot(x, y)
    if r == 0.0:
        return 0.0
    g, kap = params.gravity, params.surface_tension
    return math.sqrt((g + kap * r * r) * r * params.tanh_factor(r))


def phase_speed(xi, params: PhysicalParams) -> float:
    """omega(xi)/|xi|, the distance of the bifurcation line of xi from the origin."""
    r = math.hypot(float(xi[0]), float(xi[1]))
    if r == 0.0:
        raise PreconditionError("phase speed undefined for the zero wave vector")
    return omega(xi, params) / r


@dataclass(frozen=True)
class DualVector:
    """A dual-lattice vector: exact integer index k and its embedding j = W^{-T} k."""

    index: tuple[int, int]
    vector: tuple[float, float]

    def __post_init__(self):
        if self.index == (0, 0):
            raise PreconditionError("wave vectors must have nonzero index")

    @property
    def norm(self) -> float:
        return math.hypot(*self.vector)

    @property
    def norm1(self) -> float:
        return abs(self.vector[0]) + abs(self.vector[1])

    @property
    def unit(self) -> np.ndarray:
        v = np.array(self.vector)
        return v / self.norm

    def as_array(self) -> np.ndarray:
        return np.array(self.vector)


@dataclass(frozen=True)
class LatticeSpec:
    """Spatial lattice Gamma = 2*pi*W*Z^2 given by the generator matrix W (columns)."""

    generators: tuple[tuple[float, float], tuple[float, float]]

    def __post_init__(self):
        W = self.matrix
        if abs(np.linalg.det(W)) < 1e-14:
            raise PreconditionError("lattice generator matrix is singular")
        resid = np.abs(W.T @ self.dual_matrix - np.eye(2)).max()
        if resid > 1e-12:
            raise NumericalError(f"dual lattice inconsistent, residual {resid:g}")

    @classmethod
    def from_matrix(cls, W) -> "LatticeSpec":
        W = np.asarray(W, dtype=float)
        return cls(((W[0, 0], W[0, 1]), (W[1, 0], W[1, 1])))

    @classmethod
    def square(cls) -> "LatticeSpec":
        return cls(((1.0, 0.0), (0.0, 1.0)))

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.generators, dtype=float)

    @property
    def dual_matrix(self) -> np.ndarray:
        # W^{-T}; columns are the dual generators.
        return np.linalg.inv(self.matrix).T

    def dual_vector(self, k) -> DualVector:
        k = (int(k[0]), int(k[1]))
        j = self.dual_matrix @ np.array(k, dtype=float)
        return DualVector(index=k, vector=(float(j[0]), float(j[1])))

    def embed_indices(self, K: np.ndarray) -> np.ndarray:
        """Vectorized embedding of an (n,2) integer index array."""
        return K.astype(float) @ self.dual_matrix.T


@dataclass(frozen=True)
class BifurcationLine:
    """The line {c : c.j = omega(j)}, stored as unit normal and positive offset."""

    normal: tuple[float, float]  # j/|j|
    offset: float                # omega(j)/|j|, the distance from the origin

    @property
    def distance(self) -> float:
        return self.offset


def bifurcation_line(j: DualVector, params: PhysicalParams) -> BifurcationLine:
    """Bifurcation line of the wave vector j; lies in the half-plane c.j > 0."""
    n = j.norm
    if n == 0.0:
        raise PreconditionError("zero wave vector has no bifurcation line")
    u = (j.vector[0] / n, j.vector[1] / n)
    return BifurcationLine(normal=u, offset=omega(j.vector, params) / n)


def Mj(j, params: PhysicalParams) -> float:
    """Normalization constant (g+kappa|j|^2)^(-1/4) (|j| tanh(h|j|))^(1/4)."""
    if isinstance(j, DualVector):
        j = j.vector
    r = math.hypot(float(j[0]), float(j[1]))
    if r == 0.0:
        raise PreconditionError("Mj undefined for the zero wave vector")
    g, kap = params.gravity, params.surface_tension
    return (g + kap * r * r) ** -0.25 * (r * params.tanh_factor(r)) ** 0.25


def linearized_multipliers(c_star, j, params: PhysicalParams,
                           kernel_tol: float = DEFAULT_RESONANCE_TOL):
    """Off-kernel multiplier c*.j - omega(j) and the ratio |j|^3/|(c*.j)^2-omega^2|.

    The ratio stays below a uniform constant over the dual lattice, which is
    what makes the linearized operator invertible on the range with loss of
    three derivatives.  Raises on (near-)resonant j, where the multiplier is a
    kernel direction.
    """
    if isinstance(j, DualVector):
        jv = j.vector
    else:
        jv = (float(j[0]), float(j[1]))
    om = omega(jv, params)
    cj = float(c_star[0]) * jv[0] + float(c_star[1]) * jv[1]
    mult = cj - om
    if abs(mult) <= kernel_tol:
        raise PreconditionError(
            f"wave vector {jv} is a kernel direction for c*={tuple(c_star)}"
        )
    r = math.hypot(*jv)
    ratio = r ** 3 / abs(cj * cj - om * om)
    return mult, ratio


def enumeration_radius(c_star, params: PhysicalParams, tol: float) -> float:
    """Radius R such that any resonance |omega(j) - c*.j| <= tol has |j| <= R.

    For |j| >= 1, omega(j) >= sqrt(kappa * C_h) |j|^(3/2) with
    C_h = tanh(h) (1 at infinite depth), while a resonance forces
    omega(j) <= (|c*| + tol)|j|.  Solving gives the cutoff; the unit ball is
    always included.
    """
    speed = math.hypot(float(c_star[0]), float(c_star[1]))
    c_h = 1.0 if params.infinite_depth else math.tanh(params.depth)
    r0 = (speed + tol) ** 2 / (params.surface_tension * c_h)
    return max(1.0, r0)


def enumerate_dual(lattice: LatticeSpec, radius: float,
                   budget: int = DEFAULT_ENUMERATION_BUDGET) -> list[DualVector]:
    """All nonzero dual vectors with |j| <= radius, sorted by index.

    The embedded ball pulls back to an ellipse in index space; we scan the
    bounding integer box.  Raises BudgetError if the box exceeds the budget.
    """
    if radius <= 0:
        return []
    # |k| = |W^T j| <= ||W^T||_2 |j|
    op = np.linalg.norm(lattice.matrix.T, 2)
    kmax = int(math.floor(op * radius)) + 1
    count = (2 * kmax + 1) ** 2
    if count > budget:
        raise BudgetError(
            f"enumeration box {2*kmax+1}x{2*kmax+1} exceeds budget {budget} "
            f"(radius {radius:g})"
        )
    rng = np.arange(-kmax, kmax + 1)
    K1, K2 = np.meshgrid(rng, rng, indexing="ij")
    K = np.stack([K1.ravel(), K2.ravel()], axis=1)
    K = K[(K[:, 0] != 0) | (K[:, 1] != 0)]
    J = lattice.embed_indices(K)
    keep = np.hypot(J[:, 0], J[:, 1]) <= radius
    K, J = K[keep], J[keep]
    order = np.lexsort((K[:, 1], K[:, 0]))
    return [
        DualVector(index=(int(K[i, 0]), int(K[i, 1])),
                   vector=(float(J[i, 0]), float(J[i, 1])))
        for i in order
    ]


@dataclass(frozen=True)
class ResonantSet:
    """Finite set of dual vectors resonant with speed c* at tolerance tol."""

    c_star: tuple[float, float]
    params: PhysicalParams
    lattice: LatticeSpec
    vectors: tuple[DualVector, ...]
    tol: float
    enumeration_radius: float

    def __len__(self) -> int:
        return len(self.vectors)

    def indices(self) -> list[tuple[int, int]]:
        return [v.index for v in self.vectors]

    def residual(self, j: DualVector) -> float:
        cj = self.c_star[0] * j.vector[0] + self.c_star[1] * j.vector[1]
        return omega(j.vector, self.params) - cj

    def verify_complete(self, radius_factor: float = 2.0,
                        budget: int = DEFAULT_ENUMERATION_BUDGET) -> bool:
        """Re-enumerate over an enlarged radius; True iff nothing new appears."""
        found = {
            v.index
            for v in enumerate_dual(self.lattice,
                                    radius_factor * self.enumeration_radius, budget)
            if abs(self.residual(v)) <= self.tol
        }
        return found == set(self.indices())


def resonant_set(c_star, params: PhysicalParams, lattice: LatticeSpec,
                 tol: float = DEFAULT_RESONANCE_TOL,
                 budget: int = DEFAULT_ENUMERATION_BUDGET) -> ResonantSet:
    """All dual vectors with |omega(j) - c*.j| <= tol, by exhaustive enumeration."""
    if tol < 0:
        raise PreconditionError("resonance tolerance must be nonnegative")
    if tol == 0.0:
        warnings.warn(
            "tol=0 with floating parameters: exact resonance is generically "
            "unattainable; expect an empty set", stacklevel=2
        )
    radius = enumeration_radius(c_star, params, tol)
    cs = (float(c_star[0]), float(c_star[1]))
    hits = [
        v for v in enumerate_dual(lattice, radius, budget)
        if abs(omega(v.vector, params) - (cs[0] * v.vector[0] + cs[1] * v.vector[1]))
        <= tol
    ]
    return ResonantSet(c_star=cs, params=params, lattice=lattice,
                       vectors=tuple(hits), tol=tol, enumeration_radius=radius)


def _collinear_classes(targets: list[tuple[int, int]]) -> list[list[tuple[int, int]]]:
    classes: list[list[tuple[int, int]]] = []
    for k in targets:
        for cls in classes:
            a = cls[0]
            if a[0] * k[1] - a[1] * k[0] == 0:
                cls.append(k)
                break
        else:
            classes.append([k])
    return classes


@dataclass
class DesignResult:
    c_star: tuple[float, float]
    params: PhysicalParams
    lattice: LatticeSpec
    resonances: ResonantSet
    residuals: np.ndarray = field(repr=False)


def design_resonance(targets, knobs=("c_star",), *,
                     params: PhysicalParams | None = None,
                     lattice: LatticeSpec | None = None,
                     c_star0=None,
                     tol: float = DEFAULT_RESONANCE_TOL,
                     max_iter: int = 60,
                     budget: int = DEFAULT_ENUMERATION_BUDGET) -> DesignResult:
    """Tune (c*, kappa, g, lattice scale) so the resonant set is exactly `targets`.

    Solves normalized residuals omega(j_i) - c*.j_i = 0 by damped Newton (least
    squares when over-determined), positivity of kappa/g enforced through a log
    parametrization.  The result is re-verified by resonant_set: any missing or
    extra resonance up to the derived radius is a failure.
    """
    targets = [(int(k[0]), int(k[1])) for k in targets]
    if len(set(targets)) != len(targets):
        raise PreconditionError("design targets must be pairwise distinct")
    if any(k == (0, 0) for k in targets):
        raise PreconditionError("design targets must be nonzero")
    if any(len(cls) > 2 for cls in _collinear_classes(targets)):
        raise PreconditionError(
            "three or more collinear targets can never be simultaneously resonant"
        )
    knobs = tuple(knobs)
    allowed = {"c_star", "kappa", "g", "lattice_scale"}
    if not set(knobs) <= allowed:
        raise PreconditionError(f"unknown knobs {set(knobs) - allowed}")
    n_unknowns = (2 if "c_star" in knobs else 0) + sum(
        1 for k in ("kappa", "g", "lattice_scale") if k in knobs
    )
    if n_unknowns == 0:
        raise PreconditionError("at least one knob is required")
    if len(targets) > n_unknowns:
        # Over-determined systems are allowed (least squares) but warn early
        # when there are more constraints than 2 + free scalars.
        if len(targets) - 2 > n_unknowns - (2 if "c_star" in knobs else 0):
            warnings.warn(
                f"{len(targets)} constraints with {n_unknowns} unknowns: the "
                "system is over-determined; Newton may not converge",
                stacklevel=2,
            )

    params = params or PhysicalParams()
    lattice = lattice or LatticeSpec.square()

    # Initial point: c* roughly on the first target's bifurcation line.
    j0 = lattice.dual_vector(targets[0])
    if c_star0 is None:
        c0 = phase_speed(j0.vector, params) * j0.unit
    else:
        c0 = np.array(c_star0, dtype=float)

    x = []
    if "c_star" in knobs:
        x += [c0[0], c0[1]]
    if "kappa" in knobs:
        x += [math.log(params.surface_tension)]
    if "g" in knobs:
        x += [math.log(params.gravity)]
    if "lattice_scale" in knobs:
        x += [0.0]  # log of the scale factor applied to W
    x = np.array(x, dtype=float)

    def unpack(x):
        i = 0
        c = c0.copy()
        kap, g, scale = params.surface_tension, params.gravity, 1.0
        if "c_star" in knobs:
            c = x[i:i + 2].copy()
            i += 2
        if "kappa" in knobs:
            kap = math.exp(x[i]); i += 1
        if "g" in knobs:
            g = math.exp(x[i]); i += 1
        if "lattice_scale" in knobs:
            scale = math.exp(x[i]); i += 1
        p = PhysicalParams(gravity=g, surface_tension=kap, depth=params.depth)
        lat = LatticeSpec.from_matrix(scale * lattice.matrix)
        return c, p, lat

    def residuals(x):
        c, p, lat = unpack(x)
        out = np.empty(len(targets))
        for i, k in enumerate(targets):
            j = lat.dual_vector(k)
            out[i] = omega(j.vector, p) - (c[0] * j.vector[0] + c[1] * j.vector[1])
        return out

    def jacobian(x, eps=1e-7):
        base = residuals(x)
        J = np.empty((len(base), len(x)))
        for i in range(len(x)):
            xp = x.copy()
            xp[i] += eps
            J[:, i] = (residuals(xp) - base) / eps
        return J

    r = residuals(x)
    for _ in range(max_iter):
        if np.abs(r).max() <= 1e-13:
            break
        J = jacobian(x)
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        lam = 1.0
        for _ in range(40):
            r_new = residuals(x + lam * step)
            if np.linalg.norm(r_new) < np.linalg.norm(r):
                break
            lam *= 0.5
        else:
            raise NumericalError(
                f"design_resonance: damped Newton stalled, residuals {r}"
            )
        x = x + lam * step
        r = r_new
    else:
        raise NumericalError(
            f"design_resonance: no convergence after {max_iter} iterations, "
            f"residuals {r}"
        )

    c, p, lat = unpack(x)
    found = resonant_set(c, p, lat, tol=tol, budget=budget)
    got = set(found.indices())
    want = set(targets)
    if not want <= got:
        raise NumericalError(
            f"designed configuration misses targets {sorted(want - got)} "
            f"(residuals {r})"
        )
    if got != want:
        raise NumericalError(
            f"designed configuration has extra resonances {sorted(got - want)}"
        )
    return DesignResult(c_star=(float(c[0]), float(c[1])), params=p, lattice=lat,
                        resonances=found, residuals=r)


def minimal_generator(lattice: LatticeSpec, index: tuple[int, int]) -> DualVector:
    """Generator of minimal norm of the 1d sub-lattice of vectors parallel to k."""
    k1, k2 = index
    g = gcd(abs(k1), abs(k2))
    return lattice.dual_vector((k1 // g, k2 // g))


def count_local_minima(values: np.ndarray) -> int:
    """Number of strict interior local minima of a sampled sequence."""
    v = np.asarray(values)
    return int(np.sum((v[1:-1] < v[:-2]) & (v[1:-1] < v[2:])))
