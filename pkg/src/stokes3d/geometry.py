"""The resonance cone, momentum classification, and reduced momentum level sets.

Small traveling waves carry a conserved momentum a.  The attainable momenta
fill the closed convex cone C spanned by the negatives of the resonant wave
vectors.  Where a sits relative to C, and whether it is parallel to a resonant
direction, decides the topology of the level set of the quadratic momentum:
empty outside C, a point at 0, a sphere on the boundary, a product of spheres
in the interior away from resonant rays, and a join of a product of spheres
with the circle of 2d waves on an interior resonant ray.  That topology in
turn feeds the orbit-count lower bounds.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .kernel import (DirectionClass, KernelPoint, KernelSpace,
                     momentum, partition_directions)
from .lattice import DualVector, ResonantSet

PARALLEL_TOL = 1e-12


def direction_classes(resonances: ResonantSet) -> list[DirectionClass]:
    """Partition of the resonant set by parallelism (exact index arithmetic)."""
    return partition_directions(resonances)


@dataclass(frozen=True)
class ResonanceCone:
    """C = {sum tau_j j, tau_j <= 0}: nonneg combinations of the -j directions."""

    rays: tuple[tuple[float, float], tuple[float, float]]  # extreme unit rays
    angle: float                                           # in [0, pi)

    @property
    def is_ray(self) -> bool:
        return self.angle == 0.0

    def coefficients(self, a) -> tuple[float, float]:
        """Coordinates of a in the extreme-ray frame (least squares for a ray)."""
        u1 = np.array(self.rays[0])
        u2 = np.array(self.rays[1])
        a = np.asarray(a, dtype=float)
        if self.is_ray:
            t = float(a @ u1)
            return t, float(np.hypot(*(a - t * u1)))  # (along, off-ray residual)
        M = np.column_stack([u1, u2])
        x = np.linalg.solve(M, a)
        return float(x[0]), float(x[1])

    def membership(self, a, tol: float = PARALLEL_TOL) -> str:
        """'outside' | 'zero' | 'boundary' | 'interior'."""
        a = np.asarray(a, dtype=float)
        scale = float(np.hypot(*a))
        if scale == 0.0:
            return "zero"
        if self.is_ray:
            t, off = self.coefficients(a)
            if off <= tol * scale and t > 0:
                return "boundary"  # a proper ray has empty interior in R^2
            return "outside"
        x1, x2 = self.coefficients(a)
        if x1 < -tol * scale or x2 < -tol * scale:
            return "outside"
        if x1 <= tol * scale or x2 <= tol * scale:
            return "boundary"
        return "interior"


def cone(resonances_or_classes) -> ResonanceCone:
    """Extreme rays of the momentum cone, by angular sweep of the -j directions."""
    if isinstance(resonances_or_classes, ResonantSet):
        classes = partition_directions(resonances_or_classes)
    else:
        classes = list(resonances_or_classes)
    if not classes:
        raise PreconditionError("cone of an empty resonant set is undefined")
    dirs = [-c.unit for c in classes]
    if len(dirs) == 1:
        u = tuple(dirs[0])
        return ResonanceCone(rays=(u, u), angle=0.0)
    # All directions lie in an open half-plane (a.c* < 0), so the extremes are
    # the angular min and max around any interior direction.
    mid = np.mean(dirs, axis=0)
    mid /= np.hypot(*mid)
    mid_perp = np.array([-mid[1], mid[0]])
    angles = [math.atan2(float(d @ mid_perp), float(d @ mid)) for d in dirs]
    lo, hi = int(np.argmin(angles)), int(np.argmax(angles))
    u1, u2 = tuple(dirs[lo]), tuple(dirs[hi])
    spread = angles[hi] - angles[lo]
    return ResonanceCone(rays=(u1, u2), angle=float(spread))


class Verdict(enum.Enum):
    OUTSIDE_CONE = "OutsideCone"
    ZERO_MOMENTUM = "ZeroMomentum"
    BOUNDARY_CONE = "BoundaryCone"
    INTERIOR_NONCOLLINEAR = "InteriorNoncollinear"
    INTERIOR_COLLINEAR_UNIQUE = "InteriorCollinearUnique"
    INTERIOR_COLLINEAR_DOUBLE = "InteriorCollinearDouble"


class TopologyKind(enum.Enum):
    EMPTY = "Empty"
    POINT = "Point"
    SPHERE = "Sphere"
    PRODUCT_OF_SPHERES = "ProductOfSpheres"
    JOIN_WITH_SPHERE = "JoinWithCircle"  # join partner is S^1 when dim V_0 = 2


@dataclass(frozen=True)
class Topology:
    kind: TopologyKind
    # sphere dimensions; meaning depends on kind:
    #   SPHERE: (n0,)  PRODUCT: (n-, n+)  JOIN: (n-, n+, n0)
    dims: tuple[int, ...] = ()

    @property
    def label(self) -> str:
        k = self.kind
        if k is TopologyKind.EMPTY:
            return "Empty"
        if k is TopologyKind.POINT:
            return "Point"
        if k is TopologyKind.SPHERE:
            return f"S{self.dims[0]}"
        if k is TopologyKind.PRODUCT_OF_SPHERES:
            return f"S{self.dims[0]}×S{self.dims[1]}"
        return (f"S{self.dims[0]}×S{self.dims[1]} ⋆ S{self.dims[2]}")


INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class ConeClassification:
    """Verdict, sign splits, block dimensions, level-set topology and bound."""

    momentum: tuple[float, float]
    verdict: Verdict
    splits: tuple[tuple[DirectionClass, ...], tuple[DirectionClass, ...],
                  tuple[DirectionClass, ...]]           # (D-, D0, D+)
    dims: tuple[int, int, int]                          # (dim V-, dim V0, dim V+)
    topology: Topology
    multiplicity_bound: int | str                       # int or INDETERMINATE
    collinear_vector: DualVector | None = None          # set for the unique case
    n_vectors: int = 0

    @property
    def classes_minus(self):
        return self.splits[0]

    @property
    def classes_zero(self):
        return self.splits[1]

    @property
    def classes_plus(self):
        return self.splits[2]


def _perp(a: np.ndarray) -> np.ndarray:
    return np.array([-a[1], a[0]])


def classify_momentum(a, resonances_or_space, *,
                      epsilon_valid: float | None = None,
                      tol: float = PARALLEL_TOL) -> ConeClassification:
    """Classify a momentum value against the resonance cone.

    The verdict, splits, dimensions, topology and bound depend only on the ray
    of a.  |a| is compared against epsilon_valid (a smallness knob, not a
    theorem constant) and a warning is emitted above it.
    """
    if isinstance(resonances_or_space, KernelSpace):
        space = resonances_or_space
    else:
        space = KernelSpace.from_resonances(resonances_or_space)
    classes = list(space.classes)
    a = np.asarray(a, dtype=float)
    n_vectors = space.n_vectors

    if epsilon_valid is None:
        epsilon_valid = 0.1 * min(1.0, space.delta)
    if np.hypot(*a) > epsilon_valid:
        warnings.warn(
            f"|a|={np.hypot(*a):.3g} exceeds the configured smallness "
            f"epsilon_valid={epsilon_valid:.3g}; the classification is formal",
            stacklevel=2,
        )

    def result(verdict, splits, topology, bound, collinear=None):
        dims = tuple(sum(c.subspace_dim for c in part) for part in splits)
        return ConeClassification(
            momentum=(float(a[0]), float(a[1])), verdict=verdict,
            splits=tuple(tuple(p) for p in splits), dims=dims,
            topology=topology, multiplicity_bound=bound,
            collinear_vector=collinear, n_vectors=n_vectors,
        )

    if np.hypot(*a) == 0.0:
        return result(Verdict.ZERO_MOMENTUM, ((), (), ()),
                      Topology(TopologyKind.POINT), 0)

    C = cone(classes)
    member = C.membership(a, tol)
    if member == "outside":
        return result(Verdict.OUTSIDE_CONE, ((), (), ()),
                      Topology(TopologyKind.EMPTY), 0)

    a_perp = _perp(a)
    scale = float(np.hypot(*a))
    minus, zero, plus = [], [], []
    for c in classes:
        s = float(c.unit @ a_perp)
        if abs(s) <= tol * scale:
            zero.append(c)
        elif s < 0:
            minus.append(c)
        else:
            plus.append(c)

    if not minus or not plus:
        # Boundary: a sits on an extreme ray; only the parallel class survives.
        dim0 = sum(c.subspace_dim for c in zero)
        return result(Verdict.BOUNDARY_CONE, (tuple(minus), tuple(zero),
                                              tuple(plus)),
                      Topology(TopologyKind.SPHERE, (dim0 - 1,)), 0)

    dim_minus = sum(c.subspace_dim for c in minus)
    dim_plus = sum(c.subspace_dim for c in plus)
    splits = (tuple(minus), tuple(zero), tuple(plus))

    if not zero:
        bound = n_vectors - 1  # cuplength + 1 = (n- + n+ - 2) + 1
        return result(Verdict.INTERIOR_NONCOLLINEAR, splits,
                      Topology(TopologyKind.PRODUCT_OF_SPHERES,
                               (dim_minus - 1, dim_plus - 1)), bound)

    cls0 = zero[0]
    dim0 = cls0.subspace_dim
    topo = Topology(TopologyKind.JOIN_WITH_SPHERE,
                    (dim_minus - 1, dim_plus - 1, dim0 - 1))
    if len(cls0.members) == 1:
        return result(Verdict.INTERIOR_COLLINEAR_UNIQUE, splits, topo,
                      n_vectors - 2, collinear=cls0.members[0])
    return result(Verdict.INTERIOR_COLLINEAR_DOUBLE, splits, topo,
                  INDETERMINATE)


# -- level sets of the quadratic momentum -------------------------------------

def _check_momentum_admissible(space: KernelSpace, a: np.ndarray):
    if float(a @ space.c_star) >= 0.0:
        raise PreconditionError(
            "momentum must satisfy a.c* < 0 (nonzero momenta in the cone do)"
        )


def level_set_functions(v: KernelPoint, a, c_star=None):
    """(B(v), K(v), residuals): v lies on the quadratic level set iff B=1, K=0.

        B(v) = (2|a.c*|)^{-1} sum_c (c*.j_hat_c) s_c
        K(v) = sum_c (j_hat_c . a_perp) s_c
    """
    space = v.space
    a = np.asarray(a, dtype=float)
    cs = space.c_star if c_star is None else np.asarray(c_star, dtype=float)
    _check_momentum_admissible(space, a)
    s = v.class_norms_sq()
    B = float(s @ (space.units @ cs)) / (2.0 * abs(float(a @ cs)))
    K = float(s @ (space.units @ _perp(a)))
    return B, K, (B - 1.0, K)


def _split_indices(space: KernelSpace, a: np.ndarray, tol: float = PARALLEL_TOL):
    a_perp = _perp(a)
    scale = float(np.hypot(*a))
    signs = space.units @ a_perp
    minus = np.where(signs < -tol * scale)[0]
    zero = np.where(np.abs(signs) <= tol * scale)[0]
    plus = np.where(signs > tol * scale)[0]
    return minus, zero, plus, signs


def _block_norm_sq(v: KernelPoint, class_ids) -> float:
    s = v.class_norms_sq()
    return float(np.sum(s[class_ids]))


def triple_norm_sq(v: KernelPoint, a) -> float:
    """Chart norm: 1/2 ||P- v||^2 + 1/2 ||P+ v||^2 + ||P0 v||^2."""
    minus, zero, plus, _ = _split_indices(v.space, np.asarray(a, dtype=float))
    return (0.5 * _block_norm_sq(v, minus) + 0.5 * _block_norm_sq(v, plus)
            + _block_norm_sq(v, zero))


def _psi_scales(space: KernelSpace, a: np.ndarray) -> np.ndarray:
    """Per-class scaling |j_hat.a_perp|^{-1/2} off the neutral classes."""
    minus, zero, plus, signs = _split_indices(space, a)
    scales = np.ones(space.n_classes)
    for ci in np.concatenate([minus, plus]):
        scales[ci] = 1.0 / math.sqrt(abs(float(signs[ci])))
    return scales


def xi_map(v: KernelPoint, a, c_star=None) -> KernelPoint:
    """Equivariant diffeomorphism xi(v) = g(v) psi(v) mapping the chart onto
    the level set: B(xi(v)) = |||v|||^2 and K(xi(v)) = g^2 (||P+v||^2-||P-v||^2).
    """
    space = v.space
    a = np.asarray(a, dtype=float)
    if v.norm_sq() == 0.0:
        raise PreconditionError("xi is undefined at v = 0")
    scales = _psi_scales(space, a)
    psi_v = KernelPoint(space, scales[space.class_of] * v.z)
    B, _, _ = level_set_functions(psi_v, a, c_star)
    g = math.sqrt(triple_norm_sq(v, a)) / math.sqrt(B)
    return KernelPoint(space, g * psi_v.z)


def xi_inverse(u: KernelPoint, a, c_star=None) -> KernelPoint:
    """Inverse of xi: undo the diagonal scaling, then normalize by g."""
    space = u.space
    a = np.asarray(a, dtype=float)
    if u.norm_sq() == 0.0:
        raise PreconditionError("xi^{-1} is undefined at 0")
    scales = _psi_scales(space, a)
    w = KernelPoint(space, u.z / scales[space.class_of])
    B, _, _ = level_set_functions(u, a, c_star)  # B(psi(w)) = B(u)
    g = math.sqrt(triple_norm_sq(w, a)) / math.sqrt(B)
    return KernelPoint(space, w.z / g)


def join_parametrize(v1: KernelPoint, v0: KernelPoint, t: float, a,
                     c_star=None, *, sphere_tol: float = 1e-9) -> KernelPoint:
    """Point of the momentum level set from join coordinates.

    v1 lives on the product of unit spheres S(V-) x S(V+), v0 on the unit
    sphere of the neutral block, t in [0,1]; t=0 lands on the product part,
    t=1 on the 2d circle.  Output is xi(sqrt(1-t^2) v1 + t v0).
    """
    space = v1.space
    a = np.asarray(a, dtype=float)
    if not 0.0 <= t <= 1.0:
        raise PreconditionError(f"join parameter t={t} outside [0,1]")
    minus, zero, plus, _ = _split_indices(space, a)
    for ids, w, name in ((minus, v1, "S(V-)"), (plus, v1, "S(V+)"),
                         (zero, v0, "S(V0)")):
        if len(ids) and abs(_block_norm_sq(w, ids) - 1.0) > sphere_tol:
            raise PreconditionError(f"join input not on the unit sphere {name}")
    blend = KernelPoint(space, math.sqrt(1.0 - t * t) * v1.z + t * v0.z)
    return xi_map(blend, a, c_star)
