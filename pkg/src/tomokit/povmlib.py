"""Measurement-family constructors.

Families shipped here:

* ``sic``                 Weyl-Heisenberg orbit of a fiducial vector (d^2 elements)
* ``mub``                 d+1 mutually unbiased bases (prime d, and d = 2^n via
                          the Galois-ring GR(4, n) phases)
* ``gmb`` / ``gmb_4`` / ``gmb_5``   pair bases on ring pairs (m, m+k mod d); the
                          4r+1-basis family measures diagonals 0..r and d-r..d-1
* ``flammia_2d`` / ``flammia_rank_r``  row/column probing families (2d and
                          (2d-r)r+1 elements)
* ``psi_3d``              3d-2 rank-1 elements, tetrahedron pattern on adjacent
                          2-dim subspaces
* ``poly_bases``          4 or 5 bases from orthonormal-polynomial root tables
* ``random_bases`` / ``local_random_bases``   Haar bases, global or per-qubit
* ``neumark_extend``      embed a rank-1 POVM into a basis on a larger space

Every constructor returns a validated Povm or BasisSet.
"""

import numpy as np
import scipy.linalg as la

from . import matcore
from .qobjects import Povm, random_unitary

ORTHO_TOL = 1e-10


class UnsupportedDim(ValueError):
    """Requested dimension is not covered by this construction."""


class FiducialInvalid(ValueError):
    """Fiducial orbit fails the equiangular overlap law."""


class BasisSet:
    """A list of orthonormal bases; each basis is a d x d matrix of column vectors."""

    def __init__(self, bases, label="bases", validate=True):
        bases = [np.asarray(b, dtype=complex) for b in bases]
        d = bases[0].shape[0]
        if validate:
            for k, b in enumerate(bases):
                if b.shape != (d, d):
                    raise ValueError(f"basis {k} is not {d} x {d}")
                if np.abs(b.conj().T @ b - np.eye(d)).max() > ORTHO_TOL:
                    raise ValueError(f"basis {k} is not orthonormal")
        self.bases = bases
        self.dim = d
        self.label = label

    def __len__(self):
        return len(self.bases)

    def subset(self, n, label=None):
        return BasisSet(self.bases[:n], label or f"{self.label}[:{n}]",
                        validate=False)

    def as_povm(self, label=None):
        """Elements (1/B)|e><e| over all vectors of all B bases."""
        nb = len(self.bases)
        elements = []
        for b in self.bases:
            for v in b.T:
                elements.append(np.outer(v, v.conj()) / nb)
        return Povm(elements, label=label or self.label)

    def vectors(self):
        for b in self.bases:
            for v in b.T:
                yield v


# --- SIC ----------------------------------------------------------------------

# Fiducial vectors whose Weyl-Heisenberg orbit is equiangular.  d=2 is the
# Bloch vector (1,1,1)/sqrt(3); d=3 the classic (0,1,-1)/sqrt(2); d=4 found
# numerically once and frozen (verified to ~1e-15 by the overlap law).
_SIC_FIDUCIALS = {
    2: np.array([np.sqrt((1 + 1 / np.sqrt(3)) / 2),
                 np.exp(1j * np.pi / 4) * np.sqrt((1 - 1 / np.sqrt(3)) / 2)]),
    3: np.array([0.0, 1.0, -1.0]) / np.sqrt(2),
    4: np.array([
        +0.750284855853206589 + 0.000000000000000000j,
        -0.068909968959496914 - 0.480799096396238079j,
        -0.298029203182701097 - 0.268063475463547862j,
        +0.199153506504050920 - 0.028543443725732615j,
    ]),
}


def weyl_displacement(d, j, k):
    """X^j Z^k with X|m> = |m+1 mod d>, Z|m> = exp(2 pi i m / d)|m>."""
    omega = np.exp(2j * np.pi / d)
    x = np.roll(np.eye(d, dtype=complex), 1, axis=0)
    z = np.diag(omega ** np.arange(d))
    return np.linalg.matrix_power(x, j) @ np.linalg.matrix_power(z, k)


def sic(d, fiducial=None):
    """SIC POVM: d^2 elements (1/d)|psi_jk><psi_jk| on the WH orbit of a fiducial.

    Tr(E_mu E_nu) = 1/(d^2 (d+1)) off-diagonal and Tr(E_mu^2) = 1/d^2.
    """
    if fiducial is None:
        fiducial = _SIC_FIDUCIALS.get(d)
        if fiducial is None:
            raise UnsupportedDim(
                f"no built-in SIC fiducial for d={d}; supply one")
    psi = np.asarray(fiducial, dtype=complex).ravel()
    if psi.size != d:
        raise FiducialInvalid(f"fiducial has length {psi.size}, expected {d}")
    psi = psi / la.norm(psi)
    vecs = [weyl_displacement(d, j, k) @ psi for j in range(d) for k in range(d)]
    target = 1.0 / (d + 1)
    for i in range(len(vecs)):
        for j in range(i + 1, len(vecs)):
            ov = abs(vecs[i].conj() @ vecs[j]) ** 2
            if abs(ov - target) > 1e-8:
                raise FiducialInvalid(
                    f"orbit overlap {ov:.3e} != 1/(d+1) at pair ({i},{j})")
    elements = [np.outer(v, v.conj()) / d for v in vecs]
    return Povm(elements, label=f"sic(d={d})")


# --- MUB ------------------------------------------------------------------------

# Basic primitive polynomials for the Galois rings GR(4, n): the Hensel lifts
# of the binary primitives to Z4 (so that x generates the Teichmuller group of
# order 2^n - 1), written as x^n = tail in lower powers:
# n=1: x = 1;  n=2: x^2 = 3x + 3 (lift of x^2+x+1 is itself);
# n=4: x^4 = 2x^2 + x + 3 (lift of x^4+x+1 is x^4 + 2x^2 + 3x + 1).
_GR4_XN = {1: (1,), 2: (3, 3), 4: (3, 1, 2, 0)}


class _GaloisRing4:
    """Arithmetic in GR(4, n) = Z4[x]/(h), elements as coefficient tuples."""

    def __init__(self, n):
        if n not in _GR4_XN:
            raise UnsupportedDim(f"no GR(4, n) table for n={n}")
        self.n = n
        # reduction table: x^k for k = n .. 2n-2 expressed in powers < n
        red = {n: _GR4_XN[n] + (0,) * (n - len(_GR4_XN[n]))}
        for k in range(n + 1, 2 * n - 1):
            prev = red[k - 1]
            shifted = [0] + list(prev[: n - 1])
            top = prev[n - 1]
            if top:
                shifted = [(s + top * r) % 4 for s, r in zip(shifted, red[n])]
            red[k] = tuple(c % 4 for c in shifted)
        self.red = red
        self.zero = (0,) * n
        self.one = (1,) + (0,) * (n - 1)
        self.xi = self.one if n == 1 else (0, 1) + (0,) * (n - 2)

    def mul(self, a, b):
        n = self.n
        prod = [0] * (2 * n - 1)
        for i, ai in enumerate(a):
            if ai:
                for j, bj in enumerate(b):
                    prod[i + j] = (prod[i + j] + ai * bj) % 4
        for k in range(2 * n - 2, n - 1, -1):
            c = prod[k]
            if c:
                prod[k] = 0
                for j, rj in enumerate(self.red[k]):
                    prod[j] = (prod[j] + c * rj) % 4
        return tuple(prod[:n])

    def add(self, a, b):
        return tuple((x + y) % 4 for x, y in zip(a, b))

    def scale(self, a, c):
        return tuple((x * c) % 4 for x in a)

    def teichmuller(self):
        """T = {0} U {xi^j : j = 0..2^n-2}; multiplicatively closed, 2^n points."""
        t = [self.zero, self.one]
        p = self.one
        for _ in range(2 ** self.n - 2):
            p = self.mul(p, self.xi)
            t.append(p)
        return t

    def trace_i_power(self, a, b):
        """tr(a + 2b) in Z4 for a, b in T, via Frobenius sigma(a+2b) = a^2 + 2b^2."""
        total = self.zero
        pa, pb = a, b
        for _ in range(self.n):
            total = self.add(total, self.add(pa, self.scale(pb, 2)))
            pa = self.mul(pa, pa)
            pb = self.mul(pb, pb)
        if any(c % 4 for c in total[1:]):
            raise AssertionError("Galois-ring trace did not land in Z4")
        return total[0] % 4


def _is_prime(n):
    if n < 2:
        return False
    return all(n % p for p in range(2, int(n ** 0.5) + 1))


def mub(d):
    """d+1 mutually unbiased bases: |<e|f>|^2 = 1/d across distinct bases.

    Prime d uses quadratic phases omega^(a k^2 + b k); d in {2, 4, 16} uses the
    Galois-ring GR(4, n) construction with phases i^tr((a+2b)x).
    """
    bases = [np.eye(d, dtype=complex)]
    if d in (2, 4, 16):
        n = {2: 1, 4: 2, 16: 4}[d]
        ring = _GaloisRing4(n)
        tset = ring.teichmuller()
        ipow = 1j ** np.arange(4)
        for a in tset:
            cols = []
            for b in tset:
                comp = [ipow[ring.trace_i_power(ring.mul(a, x), ring.mul(b, x))]
                        for x in tset]
                cols.append(np.asarray(comp) / np.sqrt(d))
            bases.append(np.array(cols).T)
    elif _is_prime(d):
        omega = np.exp(2j * np.pi / d)
        k = np.arange(d)
        for a in range(d):
            cols = [omega ** ((a * k * k + b * k) % d) / np.sqrt(d)
                    for b in range(d)]
            bases.append(np.array(cols).T)
    else:
        raise UnsupportedDim(
            f"MUB construction needs prime d or d in (4, 16); got {d}")
    return BasisSet(bases, label=f"mub(d={d})")


# --- pair bases (ring-pattern x/y bases) -----------------------------------------


def _pair_vectors_x(d, pairs):
    cols = []
    for m, n in pairs:
        for s in (1.0, -1.0):
            v = np.zeros(d, dtype=complex)
            v[m] = 1 / np.sqrt(2)
            v[n] = s / np.sqrt(2)
            cols.append(v)
    return np.array(cols).T


def _pair_vectors_y(d, pairs):
    cols = []
    for m, n in pairs:
        for s in (1j, -1j):
            v = np.zeros(d, dtype=complex)
            v[m] = 1 / np.sqrt(2)
            v[n] = s / np.sqrt(2)
            cols.append(v)
    return np.array(cols).T


def gmb_layout(d, r):
    """Pairing plan for gmb(d, r): list of (k, group, kind, pairs) per basis.

    For each step k the ring pairs p_m = (m, (m+k) mod d) split into two
    perfect matchings by the parity of floor(m / l), l = largest power of two
    dividing k.  At k = d/2 the two matchings coincide and only one is kept.
    """
    plan = []
    for k in range(1, r + 1):
        ell = k & -k  # largest power of 2 dividing k
        groups = ([], [])
        for m in range(d):
            groups[(m // ell) % 2].append((m, (m + k) % d))
        n_groups = 1 if 2 * k == d else 2
        for j in range(n_groups):
            plan.append((k, j, "x", groups[j]))
            plan.append((k, j, "y", groups[j]))
    return plan


def gmb(d, r):
    """4r+1 pair bases measuring diagonals 0..r (and d-r..d-1) of rho.

    Basis 0 is computational; for each k = 1..r four bases (two x-type, two
    y-type) cover the step-k ring pairs.  d must be a power of two and
    r <= d/2; at r = d/2 the family is the full 2d-1 basis set.
    """
    if d < 2 or d & (d - 1):
        raise UnsupportedDim(f"pair-basis family needs d a power of 2; got {d}")
    if not 1 <= r <= d // 2:
        raise ValueError(f"rank r={r} out of range 1..{d // 2}")
    bases = [np.eye(d, dtype=complex)]
    for k, j, kind, pairs in gmb_layout(d, r):
        make = _pair_vectors_x if kind == "x" else _pair_vectors_y
        bases.append(make(d, pairs))
    return BasisSet(bases, label=f"gmb(d={d},r={r})")


def gmb_4(d):
    """Four bases on adjacent pairs: (2k, 2k+1) and (2k+1, 2k+2 mod d), x and y."""
    if d % 2:
        raise UnsupportedDim(f"pair pattern as written needs even d; got {d}")
    even_pairs = [(m, m + 1) for m in range(0, d, 2)]
    odd_pairs = [(m, (m + 1) % d) for m in range(1, d, 2)]
    bases = [_pair_vectors_x(d, even_pairs), _pair_vectors_x(d, odd_pairs),
             _pair_vectors_y(d, even_pairs), _pair_vectors_y(d, odd_pairs)]
    return BasisSet(bases, label=f"gmb4(d={d})")


def gmb_5(d):
    """gmb_4 plus the computational basis (prepended)."""
    four = gmb_4(d)
    return BasisSet([np.eye(d, dtype=complex)] + four.bases,
                    label=f"gmb5(d={d})")


# --- row/column probing families ---------------------------------------------


def _pair_element(d, k, n, coeff, imag):
    e = np.eye(d, dtype=complex)
    if imag:
        e[k, n] += -1j
        e[n, k] += 1j
    else:
        e[k, n] += 1.0
        e[n, k] += 1.0
    return coeff * e


def _closure_element(d, partial):
    return np.eye(d, dtype=complex) - partial


def _bisect_largest_feasible(min_eig, lo, hi, tol=1e-12):
    """Largest t in [lo, hi] with min_eig(t) >= 0, by bisection (feasible side)."""
    if min_eig(lo) < 0:
        raise ValueError(f"infeasible at t={lo}: margin {min_eig(lo):.3e}")
    while min_eig(hi) >= 0:
        hi *= 2
        if hi > 1e6:
            return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if min_eig(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return lo


def flammia_2d(d, a=0.5):
    """2d-element family probing row/column 0.

    E_0 = a|0><0|, E_k = b(1 + |0><k| + |k><0|), Et_k with -i/+i, plus the
    closure element; b is the largest value keeping the closure element PSD.
    """
    if not 0 < a < 1:
        raise ValueError(f"a must lie in (0, 1); got {a}")
    e0 = np.zeros((d, d), dtype=complex)
    e0[0, 0] = a

    def elements_for(b):
        els = [e0]
        for k in range(1, d):
            els.append(_pair_element(d, 0, k, b, imag=False))
        for k in range(1, d):
            els.append(_pair_element(d, 0, k, b, imag=True))
        return els

    def margin(b):
        partial = sum(elements_for(b))
        return la.eigvalsh(_closure_element(d, partial))[0]

    b = _bisect_largest_feasible(margin, 0.0, 1.0 / (2 * d))
    if b <= 0:
        raise ValueError(f"no feasible b for a={a}; PSD margin {margin(0):.3e}")
    els = elements_for(b)
    els.append(_closure_element(d, sum(els)))
    return Povm(els, label=f"flammia2d(d={d})")


def flammia_rank_r(d, r, a_vec=None):
    """(2d-r)r+1 elements probing the first r rows and columns.

    E_k = a_k|k><k| for k < r; pair elements b(1 +- |k><n| terms) for
    k < r, n = k+1..d-1; one closure element.  r = 1 reduces to flammia_2d's
    pattern.
    """
    if not 1 <= r < d:
        raise ValueError(f"rank r={r} out of range 1..{d - 1}")
    if a_vec is None:
        a_vec = [0.5] * r
    a_vec = np.atleast_1d(np.asarray(a_vec, dtype=float))
    if a_vec.size == 1:
        a_vec = np.repeat(a_vec, r)
    if a_vec.size != r or np.any(a_vec <= 0) or np.any(a_vec >= 1):
        raise ValueError("a_vec must hold r entries in (0, 1)")

    diag_els = []
    for k in range(r):
        e = np.zeros((d, d), dtype=complex)
        e[k, k] = a_vec[k]
        diag_els.append(e)

    def elements_for(b):
        els = list(diag_els)
        for k in range(r):
            for n in range(k + 1, d):
                els.append(_pair_element(d, k, n, b, imag=False))
        for k in range(r):
            for n in range(k + 1, d):
                els.append(_pair_element(d, k, n, b, imag=True))
        return els

    def margin(b):
        return la.eigvalsh(_closure_element(d, sum(elements_for(b))))[0]

    b = _bisect_largest_feasible(margin, 0.0, 1.0 / (4 * d * r))
    if b <= 0:
        raise ValueError(f"no feasible pair coefficient for a_vec={a_vec}")
    els = elements_for(b)
    els.append(_closure_element(d, sum(els)))
    assert len(els) == (2 * d - r) * r + 1
    return Povm(els, label=f"flammia_rr(d={d},r={r})")


# Unit tetrahedron directions used by the adjacent-subspace family; the first
# element a|0><0| points along +z on the (0,1) subspace, completing the
# tetrahedron there.
_TETRA = [
    (2 * np.sqrt(2) / 3, 0.0, -1 / 3),
    (-np.sqrt(2) / 3, np.sqrt(2.0 / 3), -1 / 3),
    (-np.sqrt(2) / 3, -np.sqrt(2.0 / 3), -1 / 3),
]


def psi_3d(d):
    """3d-2 rank-1 elements: tetrahedron triples on subspaces (j-1, j).

    Closure fixes the weights uniquely: b_{d-1} = 1/2, b_j = (1 - b_{j+1})/2
    going down, a = 1 - b_1.  All weights positive, every element rank 1.
    """
    if d < 2:
        raise ValueError("needs d >= 2")
    b = np.zeros(d)  # b[j] weights triple j, j = 1..d-1
    b[d - 1] = 0.5
    for j in range(d - 2, 0, -1):
        b[j] = 0.5 * (1 - b[j + 1])
    a = 1 - b[1]
    els = []
    e0 = np.zeros((d, d), dtype=complex)
    e0[0, 0] = a
    els.append(e0)
    for j in range(1, d):
        i0, i1 = j - 1, j
        for ux, uy, uz in _TETRA:
            e = np.zeros((d, d), dtype=complex)
            e[i0, i0] = (1 + uz) * b[j] / 2
            e[i1, i1] = (1 - uz) * b[j] / 2
            e[i0, i1] = (ux - 1j * uy) * b[j] / 2
            e[i1, i0] = (ux + 1j * uy) * b[j] / 2
            els.append(e)
    return Povm(els, label=f"psi3d(d={d})")


# --- polynomial bases ----------------------------------------------------------


def _hermite_offdiag(n):
    """Jacobi recurrence weights b_k = sqrt(k/2) for orthonormal Hermite."""
    return np.sqrt(np.arange(1, n) / 2.0)


def _hermite_column(d, x):
    """[h_0(x), ..., h_{d-1}(x)] via the three-term recurrence, h_0 = 1."""
    b = np.sqrt(np.arange(1, d + 1) / 2.0)
    col = np.zeros(d)
    col[0] = 1.0
    if d > 1:
        col[1] = x / b[0]
    for n in range(1, d - 1):
        col[n + 1] = (x * col[n] - b[n - 1] * col[n - 1]) / b[n]
    return col


def poly_bases(d, count=5, alpha=1.0):
    """4 or 5 bases from orthonormal-polynomial values at root grids.

    B1: columns [p_0(x_j)..p_{d-1}(x_j)] at the d roots of p_d (orthogonal by
    the Christoffel-Darboux identity); B2: same at the d-1 roots of p_{d-1},
    supplemented with (0,..,0,1); B3/B4: B1/B2 with component phases
    e^{i alpha k}; count=5 prepends the computational basis.  alpha must not
    be a rational multiple of pi (default 1.0 rad).
    """
    if count not in (4, 5):
        raise ValueError("count must be 4 or 5")
    if d < 2:
        raise UnsupportedDim("needs d >= 2")
    roots_d = la.eigvalsh_tridiagonal(np.zeros(d), _hermite_offdiag(d))
    roots_d1 = la.eigvalsh_tridiagonal(np.zeros(d - 1), _hermite_offdiag(d - 1))

    def basis_at(roots, pad):
        cols = []
        for x in roots:
            c = _hermite_column(d, x)
            cols.append(c / la.norm(c))
        if pad:
            v = np.zeros(d)
            v[-1] = 1.0
            cols.append(v)
        return np.array(cols, dtype=complex).T

    b1 = basis_at(roots_d, pad=False)
    b2 = basis_at(roots_d1, pad=True)
    resid = np.abs(b2[-1, :-1]).max()
    if resid > 1e-8:
        raise RuntimeError(f"root grid inconsistent: last-component residual {resid:.3e}")
    twist = np.exp(1j * alpha * np.arange(d))[:, None]
    b3 = b1 * twist
    b4 = b2 * twist
    bases = [b1, b2, b3, b4]
    if count == 5:
        bases = [np.eye(d, dtype=complex)] + bases
    return BasisSet(bases, label=f"poly{count}(d={d})")


# --- random bases ----------------------------------------------------------------


def random_bases(d, n, seed=None):
    """n independent Haar bases (columns of Haar unitaries)."""
    if n < 1:
        raise ValueError("need n >= 1 bases")
    rng = np.random.default_rng(seed)
    bases = []
    for _ in range(n):
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        q, r = la.qr(g)
        ph = np.diag(r).copy()
        ph /= np.abs(ph)
        bases.append(q * ph)
    return BasisSet(bases, label=f"random(d={d},n={n})")


def local_random_bases(n_qubits, n, seed=None):
    """n bases, each a tensor product of independent single-qubit Haar bases."""
    if n < 1:
        raise ValueError("need n >= 1 bases")
    rng = np.random.default_rng(seed)
    bases = []
    for _ in range(n):
        b = np.ones((1, 1), dtype=complex)
        for _ in range(n_qubits):
            g = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            q, r = la.qr(g)
            ph = np.diag(r).copy()
            ph /= np.abs(ph)
            b = np.kron(b, q * ph)
        bases.append(b)
    return BasisSet(bases, label=f"local_random(q={n_qubits},n={n})")


# --- Neumark extension -----------------------------------------------------------


def neumark_extend(povm, d):
    """Embed a rank-1 POVM on an s-dim space into one basis on a d-dim space.

    The POVM's N elements |phi_nu><phi_nu| give an s x N amplitude matrix V
    with orthonormal rows (that is the closure condition); stacking V on an
    orthonormal basis of its row-space complement gives an N x N unitary W
    whose columns, zero-padded to dimension d and supplemented with standard
    vectors, are the extended measurement basis.  Probabilities of states on
    the subspace are preserved.
    """
    s = povm.dim
    n = len(povm)
    if n > d:
        raise ValueError(f"cannot embed {n} outcomes into dimension {d}")
    cols = []
    for k, e in enumerate(povm.elements):
        w, v = la.eigh(e)
        if w[-1] < 0:
            raise ValueError(f"element {k} is not PSD")
        if n > 1 and np.sum(w > 1e-10 * max(w[-1], 1)) > 1:
            raise ValueError(f"element {k} is not rank 1")
        cols.append(np.sqrt(max(w[-1], 0.0)) * v[:, -1])
    vmat = np.array(cols).T  # s x N
    gram = vmat @ vmat.conj().T
    if np.abs(gram - np.eye(s)).max() > 1e-8:
        raise ValueError("amplitude-matrix rows are not orthonormal "
                         "(POVM does not resolve the subspace identity)")
    if n > s:
        comp = la.null_space(vmat.conj())  # N x (N - s), orthonormal columns
        wmat = np.vstack([vmat, comp.T])
    else:
        wmat = vmat
    basis = np.zeros((d, d), dtype=complex)
    basis[:n, :n] = wmat
    for k in range(n, d):
        basis[k, k] = 1.0
    return BasisSet([basis], label=f"neumark({povm.label}->d={d})")


# --- registry for the CLI --------------------------------------------------------


def build(kind, dim, rank=None, bases=None, seed=None, fiducial=None,
          alpha=1.0, a=0.5):
    """Uniform constructor used by the command line.  Returns Povm or BasisSet."""
    if kind == "sic":
        return sic(dim, fiducial=fiducial)
    if kind == "mub":
        return mub(dim)
    if kind == "gmb":
        return gmb(dim, rank if rank is not None else 1)
    if kind == "gmb4":
        return gmb_4(dim)
    if kind == "gmb5":
        return gmb_5(dim)
    if kind == "flammia2d":
        return flammia_2d(dim, a=a)
    if kind == "flammia-rr":
        return flammia_rank_r(dim, rank if rank is not None else 1)
    if kind == "psi3d":
        return psi_3d(dim)
    if kind == "poly4":
        return poly_bases(dim, count=4, alpha=alpha)
    if kind == "poly5":
        return poly_bases(dim, count=5, alpha=alpha)
    if kind == "random":
        return random_bases(dim, bases or 6, seed=seed)
    if kind == "local-random":
        nq = int(np.log2(dim))
        if 2 ** nq != dim:
            raise UnsupportedDim("local-random needs a power-of-two dim")
        return local_random_bases(nq, bases or 6, seed=seed)
    raise ValueError(f"unknown construction kind {kind!r}")
