"""Model reduced Hamiltonians on the kernel.

The cubic-and-higher part of the reduced functional is not computable without
the full free-boundary expansion, so the dynamics layer works with model
families instead: finite sums of torus-invariant monomials

    prod_j z_j^{a_j} zbar_j^{b_j},   sum_j (a_j - b_j) k_j = 0  (exact integers)

of total degree >= 3, each carrying a real coefficient affine in (c - c*).
The term set is closed under conjugation (swap of a and b) with equal real
coefficients, which makes the sum real-valued and reversal-invariant.

One structural constraint is inherited from the water-wave reduction and is
required by the straightening and flow solvers: a monomial supported on a
single direction class must have its speed-linear coefficient parallel to the
class direction (the reduced functional on a 2d block does not feel the
orthogonal speed component).  The constructor enforces it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import PreconditionError
from .kernel import KernelPoint, KernelSpace


@dataclass(frozen=True)
class ModelTerm:
    """Canonical invariant monomial with coefficient const + clin.(c - c*)."""

    a: tuple[int, ...]
    b: tuple[int, ...]
    const: float = 0.0
    clin: tuple[float, float] = (0.0, 0.0)

    @property
    def degree(self) -> int:
        return sum(self.a) + sum(self.b)

    def swapped(self) -> "ModelTerm":
        return ModelTerm(a=self.b, b=self.a, const=self.const, clin=self.clin)


class ModelHamiltonian:
    """Evaluatable invariant model G(c, v) with affine speed dependence."""

    def __init__(self, space: KernelSpace, terms: list[ModelTerm]):
        self.space = space
        nv = space.n_vectors
        expanded: dict[tuple, list] = {}
        for t in terms:
            if len(t.a) != nv or len(t.b) != nv:
                raise PreconditionError("term exponents must match the kernel")
            if any(x < 0 for x in t.a + t.b):
                raise PreconditionError("exponents must be nonnegative")
            if t.degree < 3:
                raise PreconditionError(
                    f"model terms must have total degree >= 3, got {t.degree}"
                )
            self._check_invariance(t)
            for u in ((t,) if t.a == t.b else (t, t.swapped())):
                key = (u.a, u.b)
                if key in expanded:
                    prev = expanded[key]
                    prev[0] += u.const
                    prev[1][0] += u.clin[0]
                    prev[1][1] += u.clin[1]
                else:
                    expanded[key] = [u.const, [u.clin[0], u.clin[1]]]

        keys = sorted(expanded)
        T = len(keys)
        self.A = np.zeros((T, nv), dtype=np.int64)
        self.B = np.zeros((T, nv), dtype=np.int64)
        self.const = np.zeros(T)
        self.clin = np.zeros((T, 2))
        for i, key in enumerate(keys):
            self.A[i] = key[0]
            self.B[i] = key[1]
            self.const[i] = expanded[key][0]
            self.clin[i] = expanded[key][1]

        # Per-term class weights: cw[t, c] = sum of a+b exponents in class c.
        nc = space.n_classes
        self.class_weight = np.zeros((T, nc), dtype=np.int64)
        deg = self.A + self.B
        for j in range(nv):
            self.class_weight[:, space.class_of[j]] += deg[:, j]
        # Degree-weight vectors W_t = sum_j (a+b)_j j_hat(j), class-assembled.
        self.Wvec = self.class_weight.astype(float) @ space.units

        self._enforce_single_class_parallel()
        self.c_dependent = bool(np.any(self.clin != 0.0))
        self._frame_tables: dict[int, tuple] = {}

    @property
    def is_action_only(self) -> bool:
        """True when every monomial depends on |z_j|^2 only (a == b)."""
        return bool(np.all(self.A == self.B))

    def frame_tables(self, frame: int):
        """(e_par, e_perp, w_par, w_perp) of every term in a class frame.

        Single-class terms of the frame class have exactly zero perpendicular
        entries (their coefficients are parallel and the class-frame dot
        tables carry structural zeros).
        """
        if frame not in self._frame_tables:
            space = self.space
            par = space.par_dots[frame]
            perp = space.perp_dots[frame]
            T = len(self.const)
            e_par = np.empty(T)
            e_perp = np.empty(T)
            u = space.classes[frame].unit
            up = space.classes[frame].unit_perp
            for t in range(T):
                ci = self.term_class[t]
                if ci >= 0:
                    lam = self.clin_parallel[t]
                    e_par[t] = lam * par[ci]
                    e_perp[t] = lam * perp[ci]
                else:
                    e_par[t] = self.clin[t] @ u
                    e_perp[t] = self.clin[t] @ up
            w_par = self.class_weight.astype(float) @ par
            w_perp = self.class_weight.astype(float) @ perp
            self._frame_tables[frame] = (e_par, e_perp, w_par, w_perp)
        return self._frame_tables[frame]

    # -- validation ----------------------------------------------------------

    def _check_invariance(self, t: ModelTerm):
        K = self.space.k_indices
        net = np.zeros(2, dtype=np.int64)
        for j in range(self.space.n_vectors):
            net += (t.a[j] - t.b[j]) * K[j]
        if net[0] != 0 or net[1] != 0:
            raise PreconditionError(
                f"monomial a={t.a} b={t.b} is not torus invariant: "
                f"sum (a-b) k = {tuple(net)}"
            )

    def _enforce_single_class_parallel(self):
        # Store the parallel scalar for single-class terms; reject transverse
        # speed coupling on a 2d block.
        T = len(self.const)
        self.clin_parallel = np.full(T, np.nan)  # lambda for single-class terms
        self.term_class = np.full(T, -1, dtype=int)  # class if single-class
        for t in range(T):
            supp = np.nonzero(self.class_weight[t])[0]
            if len(supp) == 1:
                ci = int(supp[0])
                u = self.space.classes[ci].unit
                e = self.clin[t]
                lam = float(e @ u)
                resid = math.hypot(*(e - lam * u))
                if resid > 1e-12 * max(1.0, float(np.hypot(*e))):
                    raise PreconditionError(
                        f"term {t} lives on the single direction class {ci} but "
                        "its speed-linear coefficient has a component across "
                        "the class direction; inadmissible"
                    )
                self.term_class[t] = ci
                self.clin_parallel[t] = lam
                self.clin[t] = lam * u  # snap exactly parallel

    # -- raw monomial machinery ----------------------------------------------

    def _powers(self, v: KernelPoint) -> np.ndarray:
        def compute():
            z = v.z[None, :]
            return z ** self.A * np.conj(z) ** self.B  # (T, nv)
        return v.cache_slot((self, "powers"), compute)

    def _monomials(self, v: KernelPoint) -> np.ndarray:
        def compute():
            return np.prod(self._powers(v), axis=1)  # (T,)
        return v.cache_slot((self, "monomials"), compute)

    @staticmethod
    def _products_excluding_raw(P: np.ndarray) -> np.ndarray:
        """Row products of P excluding each column (prefix*suffix, no division)."""
        T, n = P.shape
        pre = np.ones((T, n), dtype=complex)
        suf = np.ones((T, n), dtype=complex)
        for i in range(1, n):
            pre[:, i] = pre[:, i - 1] * P[:, i - 1]
        for i in range(n - 2, -1, -1):
            suf[:, i] = suf[:, i + 1] * P[:, i + 1]
        return pre * suf

    def _rest_products(self, v: KernelPoint) -> np.ndarray:
        def compute():
            return self._products_excluding_raw(self._powers(v))
        return v.cache_slot((self, "rest"), compute)

    def _dz_factors(self, v: KernelPoint) -> np.ndarray:
        """z^(A-1) zbar^B per (term, vector); pair with A to form dz terms."""
        def compute():
            z = v.z[None, :]
            return z ** np.maximum(self.A - 1, 0) * np.conj(z) ** self.B
        return v.cache_slot((self, "dz"), compute)

    def _dzbar_factors(self, v: KernelPoint) -> np.ndarray:
        """z^A zbar^(B-1) per (term, vector); pair with B to form dzbar terms."""
        def compute():
            z = v.z[None, :]
            return z ** self.A * np.conj(z) ** np.maximum(self.B - 1, 0)
        return v.cache_slot((self, "dzbar"), compute)

    def _coeffs(self, dc: np.ndarray) -> np.ndarray:
        return self.const + self.clin @ dc

    # -- evaluations -----------------------------------------------------------

    def value(self, dc, v: KernelPoint) -> float:
        """G(c, v) with dc = c - c*."""
        if len(self.const) == 0:
            return 0.0
        return float(np.real(self._coeffs(np.asarray(dc)) @ self._monomials(v)))

    def c_gradient(self, v: KernelPoint) -> np.ndarray:
        """P(v) = d_c G (independent of c for affine models)."""
        if len(self.const) == 0:
            return np.zeros(2)
        m = self._monomials(v)
        return np.real(m @ self.clin)

    def c_gradient_rotated(self, v: KernelPoint, frame: int) -> tuple[float, float]:
        """(P.j_hat, P.j_hat_perp) in the frame of a class, with exact zeros.

        Single-class terms of the frame class contribute nothing to the
        perpendicular component (their coefficient is snapped parallel), so
        each summand of the perpendicular part is individually small near the
        class block; no cancellation is needed.
        """
        if len(self.const) == 0:
            return 0.0, 0.0
        m = self._monomials(v)
        e_par, e_perp, _, _ = self.frame_tables(frame)
        return float(np.real(m @ e_par)), float(np.real(m @ e_perp))

    def wirtinger_zbar(self, dc, v: KernelPoint) -> np.ndarray:
        """d G / d zbar_j as a complex vector over the wave vectors."""
        nv = self.space.n_vectors
        if len(self.const) == 0:
            return np.zeros(nv, dtype=complex)
        coeff = self._coeffs(np.asarray(dc))
        rest = self._rest_products(v)
        zb = self._dzbar_factors(v)
        return (coeff[:, None] * self.B * rest * zb).sum(axis=0)

    def directional(self, dc, v: KernelPoint, h: KernelPoint) -> float:
        """d_v G (c, v)[h] = 2 Re sum_j dG/dz_j h_j."""
        if len(self.const) == 0:
            return 0.0
        coeff = self._coeffs(np.asarray(dc))
        rest = self._rest_products(v)
        za = self._dz_factors(v)
        dz = (coeff[:, None] * self.A * rest * za).sum(axis=0)
        return float(2.0 * (dz @ h.z).real)

    def pair_with_momentum_gradients(self, dc, v: KernelPoint) -> np.ndarray:
        """G~(c,v): the pair d_v G[grad I_i] = -sum_t coeff_t W_t,i m_t."""
        if len(self.const) == 0:
            return np.zeros(2)
        coeff = self._coeffs(np.asarray(dc))
        m = self._monomials(v)
        return -np.real((coeff * m) @ self.Wvec)

    def pair_with_momentum_gradients_rotated(self, dc, v: KernelPoint,
                                             frame: int) -> tuple[float, float]:
        """Rotated G~ components; in-frame class weights hit exact zero dots."""
        if len(self.const) == 0:
            return 0.0, 0.0
        coeff = self._coeffs(np.asarray(dc))
        m = self._monomials(v)
        _, _, w_par, w_perp = self.frame_tables(frame)
        s = coeff * m
        return -float(np.real(s @ w_par)), -float(np.real(s @ w_perp))

    def momentum_correction_matrix(self, v: KernelPoint) -> np.ndarray:
        """R(v) with R_il = d_v P_l [grad I_i] = -sum_t m_t W_t,i e_t,l."""
        if len(self.const) == 0:
            return np.zeros((2, 2))
        m = self._monomials(v)
        return -np.real(np.einsum("t,ti,tl->il", m, self.Wvec, self.clin))

    def dP_directional(self, v: KernelPoint, h: KernelPoint) -> np.ndarray:
        """d_v P(v)[h] as a 2-vector (P = d_c G, affine in c so c-free)."""
        if len(self.const) == 0:
            return np.zeros(2)
        out = np.zeros(2)
        for l in range(2):
            coeff = self.clin[:, l]
            if not np.any(coeff != 0.0):
                continue
            out[l] = self._directional_with_coeff(coeff, v, h)
        return out

    def _directional_with_coeff(self, coeff: np.ndarray, v: KernelPoint,
             h: KernelPoint) -> float:
        rest = self._rest_products(v)
        za = self._dz_factors(v)
        zb = self._dzbar_factors(v)
        dz = (coeff[:, None] * self.A * rest * za).sum(axis=0)
        dzb = (coeff[:, None] * self.B * rest * zb).sum(axis=0)
        return float((dz @ h.z + dzb @ np.conj(h.z)).real)

    def dP_directional_projected(self, v: KernelPoint, h: KernelPoint,
                                 frame: int) -> tuple[float, float]:
        """(d_v(P.j_hat)[h], d_v(P.j_hat_perp)[h]) in a class frame, exact zeros."""
        if len(self.const) == 0:
            return (0.0, 0.0)
        e_par, e_perp, _, _ = self.frame_tables(frame)
        return (self._directional_with_coeff(e_par, v, h),
                self._directional_with_coeff(e_perp, v, h))


# -- invariant monomial enumeration -------------------------------------------

def _compositions(n_slots: int, max_sum: int):
    """All nonnegative integer tuples of given length with sum <= max_sum."""
    if n_slots == 0:
        yield ()
        return
    for head in range(max_sum + 1):
        for tail in _compositions(n_slots - 1, max_sum - head):
            yield (head,) + tail


def enumerate_invariant_monomials(space: KernelSpace, max_degree: int,
                                  min_degree: int = 3) -> list[tuple]:
    """Canonical (a, b) exponent pairs of torus-invariant monomials.

    Invariance is the exact integer relation sum (a_j - b_j) k_j = 0.  One
    representative per conjugate pair is returned (a >= b lexicographically).
    """
    nv = space.n_vectors
    K = space.k_indices
    out = []
    for a in _compositions(nv, max_degree):
        da = sum(a)
        for b in _compositions(nv, max_degree - da):
            if not (min_degree <= da + sum(b) <= max_degree):
                continue
            if a < b:
                continue  # conjugate representative
            net = np.zeros(2, dtype=np.int64)
            for j in range(nv):
                net += (a[j] - b[j]) * K[j]
            if net[0] == 0 and net[1] == 0:
                out.append((a, b))
    return sorted(out)


def action_monomials(space: KernelSpace, degree: int = 4) -> list[tuple]:
    """Invariant monomials depending on the action variables only (a == b)."""
    return [
        (a, b) for a, b in enumerate_invariant_monomials(space, degree)
        if a == b and sum(a) + sum(b) == degree
    ]


def random_action_model(space: KernelSpace, rng: np.random.Generator,
                        degree: int = 4, scale: float = 1.0) -> ModelHamiltonian:
    """Random c-independent model built from degree-`degree` action monomials."""
    terms = []
    for a, b in action_monomials(space, degree):
        coeff = float(scale * rng.uniform(0.25, 1.0) * rng.choice([-1.0, 1.0]))
        terms.append(ModelTerm(a=a, b=b, const=coeff))
    return ModelHamiltonian(space, terms)


def random_invariant_model(space: KernelSpace, rng: np.random.Generator,
                           max_degree: int = 4, scale: float = 1.0,
                           c_linear: bool = False) -> ModelHamiltonian:
    """Random model over all invariant monomials up to a degree cap."""
    terms = []
    for a, b in enumerate_invariant_monomials(space, max_degree):
        const = float(scale * rng.uniform(-1.0, 1.0))
        if c_linear:
            supp = {space.class_of[j] for j in range(space.n_vectors)
                    if a[j] + b[j] > 0}
            if len(supp) == 1:
                u = space.classes[next(iter(supp))].unit
                lam = float(scale * rng.uniform(-1.0, 1.0))
                clin = (lam * u[0], lam * u[1])
            else:
                clin = (float(scale * rng.uniform(-1.0, 1.0)),
                        float(scale * rng.uniform(-1.0, 1.0)))
        else:
            clin = (0.0, 0.0)
        terms.append(ModelTerm(a=a, b=b, const=const, clin=clin))
    return ModelHamiltonian(space, terms)


# -- model files ----------------------------------------------------------------

MODEL_HEADER = "# stokes3d model v1"


def write_model(model: ModelHamiltonian, path) -> None:
    """Structured-text model file: vector indices, then one term per line."""
    space = model.space
    lines = [MODEL_HEADER]
    for v in space.vectors:
        lines.append(f"vector {v.index[0]} {v.index[1]}")
    for t in range(len(model.const)):
        a = " ".join(str(int(x)) for x in model.A[t])
        b = " ".join(str(int(x)) for x in model.B[t])
        lines.append(
            f"term {a} | {b} | {float(model.const[t])!r} | "
            f"{float(model.clin[t, 0])!r} {float(model.clin[t, 1])!r}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_model(path, space: KernelSpace) -> ModelHamiltonian:
    """Parse a model file and align it with the given kernel space."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != MODEL_HEADER:
        raise PreconditionError(f"{path}: not a stokes3d model file")
    file_indices = []
    terms = []
    for ln in lines[1:]:
        if ln.startswith("vector "):
            _, k1, k2 = ln.split()
            file_indices.append((int(k1), int(k2)))
        elif ln.startswith("term "):
            body = ln[len("term "):]
            a_str, b_str, c_str, e_str = [p.strip() for p in body.split("|")]
            a = tuple(int(x) for x in a_str.split())
            b = tuple(int(x) for x in b_str.split())
            e1, e2 = (float(x) for x in e_str.split())
            terms.append((a, b, float(c_str), (e1, e2)))
        else:
            raise PreconditionError(f"{path}: unrecognized line {ln!r}")
    order = {k: i for i, k in enumerate(file_indices)}
    want = [v.index for v in space.vectors]
    if set(order) != set(want):
        raise PreconditionError(
            f"{path}: model vectors {sorted(order)} do not match the kernel "
            f"vectors {sorted(want)}"
        )
    perm = [order[k] for k in want]
    model_terms = []
    for a, b, const, clin in terms:
        model_terms.append(ModelTerm(
            a=tuple(a[p] for p in perm), b=tuple(b[p] for p in perm),
            const=const, clin=clin,
        ))
    return ModelHamiltonian(space, model_terms)


def integer_kernel_basis(K: np.ndarray) -> list[np.ndarray]:
    """Integer basis of {n : sum n_j K_j = 0} by exact rational elimination.

    Used for the invariant-phase part of orbit fingerprints.
    """
    nv = K.shape[0]
    rows = [[Fraction(int(K[j, 0])) for j in range(nv)],
            [Fraction(int(K[j, 1])) for j in range(nv)]]
    pivots = []
    r = 0
    for c in range(nv):
        piv = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        inv = 1 / rows[r][c]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
    free = [c for c in range(nv) if c not in pivots]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * nv
        vec[fc] = Fraction(1)
        for ri, pc in enumerate(pivots):
            vec[pc] = -rows[ri][fc]
        den = 1
        for x in vec:
            den = den * x.denominator // math.gcd(den, x.denominator)
        ints = np.array([int(x * den) for x in vec], dtype=np.int64)
        g = 0
        for x in ints:
            g = math.gcd(g, abs(int(x)))
        if g > 1:
            ints //= g
        basis.append(ints)
    return basis
