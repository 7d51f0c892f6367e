"""Dense complex-matrix kernel.

Everything downstream (states, POVMs, process matrices, completion rules)
reduces to a handful of operations on dense Hermitian matrices: column-stacked
vectorization, trace-orthonormal Hermitian operator bases, eigendecomposition,
PSD projection, Schur complements, and eigenvalue inertia.  They live here so
the numerical conventions (stacking order, zero tolerances, singularity caps)
are fixed in exactly one place.
"""

import json
from collections import namedtuple

import numpy as np
import scipy.linalg as la

# Eigenvalues are declared "zero" below this fraction of the largest
# magnitude eigenvalue; one order above accumulated double-precision error
# for the matrix sizes used here (d <= 64).
ZERO_EIG_REL = 1e-9

# A Schur pivot block is declared singular when its condition number exceeds
# this cap.  The failure sets of the element-probing constructions are
# measure-zero but have to be fattened numerically.
DEFAULT_COND_CAP = 1e8

HERMITICITY_TOL = 1e-10


class SingularBlock(ValueError):
    """A pivot block required by a Schur-complement step is (numerically) singular.

    ``index`` identifies the offending block when raised from a sliding
    completion; it is 0 for the single-block case.
    """

    def __init__(self, message, index=0):
        super().__init__(message)
        self.index = index


Inertia = namedtuple("Inertia", ["n_minus", "n_zero", "n_plus"])


def _as_complex(a):
    return np.asarray(a, dtype=complex)


def check_finite(a, what="matrix"):
    a = _as_complex(a)
    if not np.all(np.isfinite(a.real)) or not np.all(np.isfinite(a.imag)):
        raise ValueError(f"{what} contains NaN/Inf entries")
    return a


def is_hermitian(a, tol=HERMITICITY_TOL):
    a = _as_complex(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = max(1.0, np.abs(a).max()) if a.size else 1.0
    return np.abs(a - a.conj().T).max() <= tol * scale


def require_hermitian(a, what="matrix", tol=HERMITICITY_TOL):
    a = check_finite(a, what)
    if not is_hermitian(a, tol):
        raise ValueError(f"{what} is not Hermitian within {tol:g}")
    # symmetrize so downstream eigensolvers see an exactly Hermitian input
    return 0.5 * (a + a.conj().T)


def vectorize(a):
    """Column-stack a matrix into a vector: |A) = (col_0; col_1; ...).

    With this convention Tr(A^dag B) equals vec(A)^dag vec(B).
    """
    a = _as_complex(a)
    if a.ndim != 2:
        raise ValueError("vectorize expects a matrix")
    return a.flatten(order="F")


def devectorize(v, shape=None):
    """Inverse of :func:`vectorize`.  Square by default."""
    v = _as_complex(v).ravel()
    if shape is None:
        d = int(round(np.sqrt(v.size)))
        if d * d != v.size:
            raise ValueError("vector length is not a perfect square; pass shape")
        shape = (d, d)
    return v.reshape(shape, order="F")


def hermitian_basis(d):
    """Trace-orthonormal Hermitian basis of d x d matrices.

    Element 0 is I/sqrt(d); elements 1..d^2-1 are traceless (generalized
    Gell-Mann pattern: diagonal ladder, then symmetric / antisymmetric pairs
    ordered by (i, j) with i < j).
    """
    if d < 1:
        raise ValueError("d must be positive")
    basis = [np.eye(d, dtype=complex) / np.sqrt(d)]
    for l in range(1, d):
        h = np.zeros((d, d), dtype=complex)
        h[:l, :l] = np.eye(l)
        h[l, l] = -l
        basis.append(h / np.sqrt(l * (l + 1)))
    for i in range(d):
        for j in range(i + 1, d):
            x = np.zeros((d, d), dtype=complex)
            x[i, j] = x[j, i] = 1 / np.sqrt(2)
            basis.append(x)
            y = np.zeros((d, d), dtype=complex)
            y[i, j] = -1j / np.sqrt(2)
            y[j, i] = 1j / np.sqrt(2)
            basis.append(y)
    return basis


def eigh(h):
    """Eigendecomposition of a Hermitian matrix, ascending eigenvalues."""
    h = require_hermitian(h)
    return la.eigh(h)


def zero_tol_for(eigvals, rel=ZERO_EIG_REL):
    """Absolute zero-threshold for a given spectrum (relative rule)."""
    scale = np.abs(eigvals).max() if len(eigvals) else 0.0
    return rel * max(scale, 1.0)


def inertia(h, zero_tol=None):
    """Eigenvalue sign counts (n_minus, n_zero, n_plus) of a Hermitian matrix.

    ``zero_tol`` is an absolute threshold; by default it is ZERO_EIG_REL
    relative to the largest |eigenvalue|.
    """
    h = require_hermitian(h)
    w = la.eigvalsh(h)
    tol = zero_tol_for(w) if zero_tol is None else float(zero_tol)
    n_minus = int(np.sum(w < -tol))
    n_plus = int(np.sum(w > tol))
    return Inertia(n_minus, h.shape[0] - n_minus - n_plus, n_plus)


def matrix_rank_eig(h, tol=1e-9):
    """Rank of a Hermitian matrix by |eigenvalue| > tol (absolute)."""
    w = la.eigvalsh(require_hermitian(h))
    return int(np.sum(np.abs(w) > tol))


def schur_complement(m, r, cond_cap=DEFAULT_COND_CAP):
    """Schur complement M/A = C - B A^{-1} B^dag w.r.t. the leading r x r block.

    Raises SingularBlock when A's condition number exceeds ``cond_cap``
    (the numerically-fattened failure set).
    """
    m = require_hermitian(m, "M")
    k = m.shape[0]
    if not 0 < r < k:
        raise ValueError(f"block size r={r} out of range for {k} x {k} matrix")
    a = m[:r, :r]
    bdag = m[:r, r:]
    b = m[r:, :r]
    c = m[r:, r:]
    sv = la.svdvals(a)
    if sv[-1] == 0 or sv[0] / sv[-1] > cond_cap:
        raise SingularBlock(
            f"leading {r} x {r} block is singular (cond cap {cond_cap:g})", index=0
        )
    comp = c - b @ la.solve(a, bdag, assume_a="her")
    return 0.5 * (comp + comp.conj().T)


def psd_project(h):
    """Nearest PSD matrix in the HS norm: clip negative eigenvalues to zero."""
    w, v = eigh(h)
    wc = np.clip(w, 0.0, None)
    return (v * wc) @ v.conj().T


def psd_project_rank(h, r):
    """Keep the r largest eigenvalues (clipped at zero), zero the rest."""
    w, v = eigh(h)
    wc = np.zeros_like(w)
    if r > 0:
        idx = np.argsort(w)[-r:]
        wc[idx] = np.clip(w[idx], 0.0, None)
    return (v * wc) @ v.conj().T


def simplex_project_spectrum(w, total=1.0):
    """Euclidean projection of a real vector onto {w >= 0, sum w = total}."""
    w = np.asarray(w, dtype=float)
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - total
    k = np.arange(1, len(w) + 1)
    cond = u - css / k > 0
    rho = k[cond][-1]
    theta = css[cond][-1] / rho
    return np.clip(w - theta, 0.0, None)


def density_project(h):
    """Projection onto {X >= 0, Tr X = 1}: eigenvalue simplex projection."""
    w, v = eigh(h)
    wc = simplex_project_spectrum(w, 1.0)
    return (v * wc) @ v.conj().T


# --- matrix exchange format ------------------------------------------------
#
# {"rows": r, "cols": c, "entries": [[re, im], ...]}  row-major.


def matrix_to_doc(a):
    a = check_finite(a)
    if a.ndim != 2:
        raise ValueError("expected a matrix")
    entries = [[float(z.real), float(z.imag)] for z in a.ravel(order="C")]
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]), "entries": entries}


def matrix_from_doc(doc):
    rows, cols = int(doc["rows"]), int(doc["cols"])
    entries = doc["entries"]
    if len(entries) != rows * cols:
        raise ValueError("entry count does not match rows * cols")
    flat = np.array([complex(re, im) for re, im in entries])
    return flat.reshape(rows, cols)


def save_matrix(path, a):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(matrix_to_doc(a), fh)


def load_matrix(path):
    with open(path, encoding="utf-8") as fh:
        return matrix_from_doc(json.load(fh))
