"""Kernel coordinates for the finite-dimensional reduction.

The kernel of the linearization at a resonant speed c* is parametrized by one
complex amplitude z_j per resonant wave vector j, with the invariant scalar
product  <v,w> = Re sum_j |j| z_j(v) conj(z_j(w)).  Resonant vectors are
partitioned into direction classes (at most two collinear vectors per class);
each class [j] spans the block of 2d waves along j.

Everything downstream (momentum geometry, speed selection, flows) is phrased
in terms of the per-class squared norms s_c = ||Pi_c v||^2 and the class unit
directions.  All members of a class share one float unit vector, so projected
quantities that vanish identically (e.g. the perpendicular component of a
class direction in its own rotated frame) vanish exactly in floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .lattice import DualVector, LatticeSpec, ResonantSet, minimal_generator


@dataclass(frozen=True)
class DirectionClass:
    """All resonant wave vectors parallel to one direction."""

    direction: tuple[float, float]          # unit vector j/|j|
    members: tuple[DualVector, ...]         # V intersected with [j]
    minimal_gen: DualVector                 # generator of [j] of minimal norm

    def __post_init__(self):
        if not 1 <= len(self.members) <= 2:
            raise PreconditionError(
                f"a direction class has {len(self.members)} members; collinear "
                "resonant vectors come in groups of at most 2"
            )

    @property
    def subspace_dim(self) -> int:
        return 2 * len(self.members)

    @property
    def unit(self) -> np.ndarray:
        return np.array(self.direction)

    @property
    def unit_perp(self) -> np.ndarray:
        return np.array((-self.direction[1], self.direction[0]))


def partition_directions(resonances: ResonantSet) -> list[DirectionClass]:
    """Partition a resonant set into direction classes.

    Parallelism is decided by the integer cross product of the index pairs:
    the dual embedding is an invertible linear map, so two embedded vectors
    are parallel exactly when their indices are.  No float tolerance enters.
    """
    if len(resonances) == 0:
        raise PreconditionError("cannot partition an empty resonant set")
    lattice = resonances.lattice
    groups: list[list[DualVector]] = []
    for v in resonances.vectors:
        for grp in groups:
            a = grp[0].index
            if a[0] * v.index[1] - a[1] * v.index[0] == 0:
                grp.append(v)
                break
        else:
            groups.append([v])
    classes = []
    for grp in groups:
        gen = minimal_generator(lattice, grp[0].index)
        u = gen.as_array() / gen.norm
        classes.append(
            DirectionClass(direction=(float(u[0]), float(u[1])),
                           members=tuple(sorted(grp, key=lambda d: d.index)),
                           minimal_gen=gen)
        )
    classes.sort(key=lambda c: math.atan2(c.direction[1], c.direction[0]))
    return classes


class KernelSpace:
    """The kernel of the linearization at c*, with its class structure.

    Holds everything static: the resonant vectors in a fixed order, the class
    partition, per-vector |j| weights, class unit vectors and their pairwise
    rotated components, and the direction-separation constant

        delta = min over non-parallel class pairs of (j'_hat . j_hat_perp)^2.
    """

    def __init__(self, vectors, c_star, classes=None, lattice=None):
        self.vectors: tuple[DualVector, ...] = tuple(vectors)
        if not self.vectors:
            raise PreconditionError("kernel space needs at least one wave vector")
        self.c_star = np.array([float(c_star[0]), float(c_star[1])])
        self.lattice = lattice
        if classes is None:
            groups: list[list[int]] = []
            for i, v in enumerate(self.vectors):
                for grp in groups:
                    a = self.vectors[grp[0]].index
                    if a[0] * v.index[1] - a[1] * v.index[0] == 0:
                        grp.append(i)
                        break
                else:
                    groups.append([i])
            classes = []
            for grp in groups:
                v0 = self.vectors[grp[0]]
                u = v0.as_array() / v0.norm
                classes.append(
                    DirectionClass(direction=(float(u[0]), float(u[1])),
                                   members=tuple(self.vectors[i] for i in grp),
                                   minimal_gen=v0)
                )
        self.classes: tuple[DirectionClass, ...] = tuple(classes)

        index_pos = {v.index: i for i, v in enumerate(self.vectors)}
        self.class_of = np.zeros(len(self.vectors), dtype=int)
        for ci, cls in enumerate(self.classes):
            for m in cls.members:
                self.class_of[index_pos[m.index]] = ci
        self.weights = np.array([v.norm for v in self.vectors])  # |j|
        self.units = np.stack([c.unit for c in self.classes])    # (nc, 2)
        self.units_per_vector = self.units[self.class_of]        # (nv, 2)
        self.k_indices = np.array([v.index for v in self.vectors], dtype=np.int64)

        nc = len(self.classes)
        # Rotated components of every class direction in every class frame;
        # the diagonal of the perp table is an exact structural zero.
        self.par_dots = np.empty((nc, nc))
        self.perp_dots = np.empty((nc, nc))
        for a, ca in enumerate(self.classes):
            ua, pa = ca.unit, ca.unit_perp
            for b, cb in enumerate(self.classes):
                ub = cb.unit
                self.par_dots[a, b] = ua[0] * ub[0] + ua[1] * ub[1]
                self.perp_dots[a, b] = pa[0] * ub[0] + pa[1] * ub[1]
            self.perp_dots[a, a] = 0.0
        if nc >= 2:
            off = ~np.eye(nc, dtype=bool)
            self.delta = float(np.min(self.perp_dots[off] ** 2))
        else:
            self.delta = 1.0

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_resonances(cls, resonances: ResonantSet) -> "KernelSpace":
        return cls(resonances.vectors, resonances.c_star,
                   classes=partition_directions(resonances),
                   lattice=resonances.lattice)

    @classmethod
    def synthetic(cls, indices, c_star, lattice: LatticeSpec | None = None
                  ) -> "KernelSpace":
        """Kernel space from raw integer indices (no resonance certificate)."""
        lattice = lattice or LatticeSpec.square()
        return cls([lattice.dual_vector(k) for k in indices], c_star,
                   lattice=lattice)

    # -- bookkeeping ---------------------------------------------------------

    @property
    def n_vectors(self) -> int:
        return len(self.vectors)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def point(self, z) -> "KernelPoint":
        return KernelPoint(self, np.asarray(z, dtype=complex))

    def zero(self) -> "KernelPoint":
        return KernelPoint(self, np.zeros(self.n_vectors, dtype=complex))

    def from_amplitudes(self, amplitudes: dict) -> "KernelPoint":
        z = np.zeros(self.n_vectors, dtype=complex)
        pos = {v.index: i for i, v in enumerate(self.vectors)}
        for k, a in amplitudes.items():
            z[pos[(int(k[0]), int(k[1]))]] = a
        return self.point(z)

    def random_point(self, rng: np.random.Generator, scale: float = 1.0
                     ) -> "KernelPoint":
        z = rng.standard_normal(self.n_vectors) + 1j * rng.standard_normal(
            self.n_vectors)
        return self.point(scale * z)


class KernelPoint:
    """A kernel element: one complex amplitude per resonant wave vector.

    Treated as immutable by the dynamics layer; evaluation caches (class
    norms, model monomials) key off that.
    """

    __slots__ = ("space", "z", "_class_norms_sq", "_cache")

    def __init__(self, space: KernelSpace, z: np.ndarray):
        self.space = space
        self.z = np.asarray(z, dtype=complex)
        if self.z.shape != (space.n_vectors,):
            raise PreconditionError(
                f"amplitude vector has shape {self.z.shape}, expected "
                f"({space.n_vectors},)"
            )
        self._class_norms_sq = None
        self._cache: dict | None = None

    def cache_slot(self, key, compute):
        if self._cache is None:
            self._cache = {}
        if key not in self._cache:
            self._cache[key] = compute()
        return self._cache[key]

    # -- linear structure ----------------------------------------------------

    def __add__(self, other: "KernelPoint") -> "KernelPoint":
        return KernelPoint(self.space, self.z + other.z)

    def __sub__(self, other: "KernelPoint") -> "KernelPoint":
        return KernelPoint(self.space, self.z - other.z)

    def __mul__(self, t: float) -> "KernelPoint":
        return KernelPoint(self.space, self.z * t)

    __rmul__ = __mul__

    def copy(self) -> "KernelPoint":
        return KernelPoint(self.space, self.z.copy())

    # -- metric --------------------------------------------------------------

    def inner(self, other: "KernelPoint") -> float:
        return float(np.sum(self.space.weights
                            * (self.z * np.conj(other.z)).real))

    def norm_sq(self) -> float:
        return float(np.sum(self.class_norms_sq()))

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())

    def class_norms_sq(self) -> np.ndarray:
        """s_c = ||Pi_c v||^2 per direction class (cached)."""
        if self._class_norms_sq is None:
            self._class_norms_sq = np.bincount(
                self.space.class_of,
                weights=self.space.weights * np.abs(self.z) ** 2,
                minlength=self.space.n_classes)
        return self._class_norms_sq

    def check_cache(self, tol: float = 1e-14) -> bool:
        s = np.bincount(self.space.class_of,
                        weights=self.space.weights * np.abs(self.z) ** 2,
                        minlength=self.space.n_classes)
        return bool(np.max(np.abs(s - self.class_norms_sq()))
                    <= tol * max(1.0, self.norm_sq()))

    def project_class(self, ci: int) -> "KernelPoint":
        z = np.where(self.space.class_of == ci, self.z, 0.0)
        return KernelPoint(self.space, z)

    def project_class_complement(self, ci: int) -> "KernelPoint":
        z = np.where(self.space.class_of != ci, self.z, 0.0)
        return KernelPoint(self.space, z)

    def distance_2d(self) -> float:
        """d(v, V^2d) = min over classes of ||Pi_c^perp v||."""
        s = self.class_norms_sq()
        return math.sqrt(max(0.0, self.norm_sq() - float(np.max(s))))

    def support_classes(self, tol: float = 0.0) -> list[int]:
        s = self.class_norms_sq()
        scale = max(1.0, float(np.max(s)))
        return [i for i in range(self.space.n_classes) if s[i] > tol * scale]


@dataclass(frozen=True)
class GroupElement:
    """tau_theta rho^eps in the translation-reversal group of the lattice."""

    theta: tuple[float, float] = (0.0, 0.0)
    reversal: bool = False

    def compose(self, other: "GroupElement") -> "GroupElement":
        # (theta1,e1)(theta2,e2) = (theta1 + (-1)^e1 theta2, e1 xor e2)
        s = -1.0 if self.reversal else 1.0
        return GroupElement(
            theta=(self.theta[0] + s * other.theta[0],
                   self.theta[1] + s * other.theta[1]),
            reversal=self.reversal != other.reversal,
        )

    def inverse(self) -> "GroupElement":
        if self.reversal:
            return GroupElement(theta=self.theta, reversal=True)
        return GroupElement(theta=(-self.theta[0], -self.theta[1]))


def act(g: GroupElement, v: KernelPoint) -> KernelPoint:
    """z_j -> e^{-i j.theta} z_j after optional conjugation; a ||.||-isometry."""
    z = np.conj(v.z) if g.reversal else v.z
    J = np.array([w.vector for w in v.space.vectors])
    phases = np.exp(-1j * (J @ np.array(g.theta)))
    return KernelPoint(v.space, phases * z)


# -- momentum and its gradient ----------------------------------------------

def momentum(v: KernelPoint) -> np.ndarray:
    """Quadratic momentum -1/2 sum_c s_c j_hat_c (equals -1/2 sum_j j |z_j|^2)."""
    s = v.class_norms_sq()
    return -0.5 * (s @ v.space.units)


def momentum_gradient(v: KernelPoint) -> tuple[KernelPoint, KernelPoint]:
    """Gradients of the two momentum components: (grad I_i v)_j = -j_hat_i z_j."""
    u = v.space.units_per_vector
    return (KernelPoint(v.space, -u[:, 0] * v.z),
            KernelPoint(v.space, -u[:, 1] * v.z))


def momentum_pairing_matrix(v: KernelPoint) -> np.ndarray:
    """cA(v) = sum_c s_c j_hat_c (x) j_hat_c, the Gram matrix of the gradients."""
    s = v.class_norms_sq()
    U = v.space.units
    return (U.T * s) @ U


def det_identity(v: KernelPoint) -> tuple[float, float]:
    """(det cA(v), the explicit double-sum formula); both vanish iff v is 2d."""
    A = momentum_pairing_matrix(v)
    det = float(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])
    s = v.class_norms_sq()
    U = v.space.units
    cross = U[:, 0][:, None] * U[:, 1][None, :] - U[:, 1][:, None] * U[:, 0][None, :]
    formula = 0.5 * float(np.sum(cross ** 2 * np.outer(s, s)))
    return det, formula
