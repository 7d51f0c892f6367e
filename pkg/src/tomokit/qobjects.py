"""Quantum object types, random ensembles, and distance/fidelity metrics.

The value types here are thin validated wrappers over numpy arrays: a
DensityMatrix is PSD with unit trace, a Povm resolves the identity and
carries its vectorized measurement matrix Xi (rows = vec(E_mu)^dag acting on
|rho)), a ProcessMatrix is a chi matrix in a declared operator basis, and a
MeasurementRecord is a frequency vector with noise provenance.
"""

import json

import numpy as np
import scipy.linalg as la

from . import matcore
from .matcore import vectorize, devectorize

PSD_TOL_STATE = 1e-9
TRACE_TOL = 1e-9
PSD_TOL_CHI = 1e-8
CLOSURE_TOL = 1e-8
TP_TOL = 1e-7


def as_matrix(x):
    """Accept a wrapped object or a bare ndarray."""
    return x.mat if hasattr(x, "mat") else np.asarray(x, dtype=complex)


class DensityMatrix:
    """d x d PSD unit-trace matrix."""

    def __init__(self, mat, validate=True):
        mat = matcore.require_hermitian(mat, "density matrix")
        if validate:
            w = la.eigvalsh(mat)
            if w[0] < -PSD_TOL_STATE:
                raise ValueError(f"not PSD: min eigenvalue {w[0]:.3e}")
            tr = np.trace(mat).real
            if abs(tr - 1.0) > TRACE_TOL:
                raise ValueError(f"trace {tr!r} != 1")
        self.mat = mat
        self.dim = mat.shape[0]

    @classmethod
    def from_vector(cls, psi):
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / la.norm(psi)
        return cls(np.outer(psi, psi.conj()), validate=False)

    def purity(self):
        return float(np.trace(self.mat @ self.mat).real)

    def eigenvalues(self):
        return la.eigvalsh(self.mat)

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim}, purity={self.purity():.6f})"


class Povm:
    """Ordered list of PSD elements summing to the identity.

    ``xi`` is the N x d^2 measurement matrix whose row mu is vec(E_mu)^dag,
    so that born probabilities are p = real(xi.conj() @ vec(rho))... stored
    directly as rows vec(E_mu) with p_mu = vec(E_mu)^dag |rho) = Tr(E_mu rho).
    """

    def __init__(self, elements, label="povm", validate=True):
        elements = [matcore.require_hermitian(e, "POVM element") for e in elements]
        d = elements[0].shape[0]
        if any(e.shape != (d, d) for e in elements):
            raise ValueError("POVM elements have mismatched dimensions")
        if validate:
            for k, e in enumerate(elements):
                w = la.eigvalsh(e)
                if w[0] < -PSD_TOL_STATE:
                    raise ValueError(f"element {k} not PSD: min eig {w[0]:.3e}")
            total = sum(elements)
            if np.abs(total - np.eye(d)).max() > CLOSURE_TOL:
                raise ValueError("elements do not resolve the identity")
        self.elements = elements
        self.dim = d
        self.label = label
        self.xi = np.array([vectorize(e) for e in elements])

    def __len__(self):
        return len(self.elements)

    def probabilities(self, rho):
        return born_probabilities(self, rho)

    def __repr__(self):
        return f"Povm(label={self.label!r}, dim={self.dim}, n={len(self)})"


class ProcessMatrix:
    """d^2 x d^2 chi matrix in a declared operator basis.

    basis_label is one of "units" (matrix units from column-stacking), a
    Hermitian basis "hermitian", or a rotated-by-target basis recorded by the
    caller.  CP is checked up to -1e-8; the TP property is checked (in the
    "units" basis) when tp=True.
    """

    def __init__(self, chi, basis_label="units", tp=None, validate=True):
        chi = matcore.require_hermitian(chi, "process matrix")
        d2 = chi.shape[0]
        d = int(round(np.sqrt(d2)))
        if d * d != d2:
            raise ValueError("chi must be d^2 x d^2")
        self.chi = chi
        self.dim = d
        self.basis_label = basis_label
        if validate:
            w = la.eigvalsh(chi)
            if w[0] < -PSD_TOL_CHI:
                raise ValueError(f"chi not CP: min eig {w[0]:.3e}")
        if tp is None and basis_label == "units":
            tp = np.abs(tp_defect(chi, d)).max() <= TP_TOL
        if tp and basis_label == "units":
            defect = np.abs(tp_defect(chi, d)).max()
            if defect > TP_TOL:
                raise ValueError(f"chi not TP: defect {defect:.3e}")
        self.tp = bool(tp)

    def __repr__(self):
        return (f"ProcessMatrix(dim={self.dim}, basis={self.basis_label!r}, "
                f"tp={self.tp})")


class MeasurementRecord:
    """Frequency vector keyed to a POVM, with noise provenance."""

    def __init__(self, frequencies, povm_label="povm", noise_tag="ideal",
                 seed=None, validate=True):
        f = np.asarray(frequencies, dtype=float)
        if validate and (noise_tag == "ideal" or noise_tag.startswith("multinomial")):
            if f.min() < -1e-12 or f.max() > 1 + 1e-12:
                raise ValueError("frequencies outside [0, 1]")
            if abs(f.sum() - 1.0) > TRACE_TOL:
                raise ValueError(f"frequencies sum to {f.sum()!r}, not 1")
        self.f = f
        self.povm_label = povm_label
        self.noise_tag = noise_tag
        self.seed = seed

    def __len__(self):
        return len(self.f)

    def __repr__(self):
        return (f"MeasurementRecord(n={len(self)}, tag={self.noise_tag!r}, "
                f"seed={self.seed})")


# --- Born rule ---------------------------------------------------------------


def born_probabilities(povm, rho):
    """p_mu = Tr(E_mu rho), clipped at zero for tiny negative round-off."""
    rho = as_matrix(rho)
    if rho.shape[0] != povm.dim:
        raise ValueError("dimension mismatch between POVM and state")
    p = (povm.xi.conj() @ vectorize(rho)).real
    if p.min() < -1e-10:
        raise ValueError(f"negative probability {p.min():.3e} beyond round-off")
    return np.clip(p, 0.0, None)


# --- random ensembles --------------------------------------------------------


def random_pure(d, seed=None):
    """Haar-random pure state (normalized complex Gaussian vector)."""
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return DensityMatrix.from_vector(psi)


def random_mixed_rank(d, r, seed=None):
    """Rank-r mixed state from a d x r complex Ginibre block, GG^dag / Tr.

    At r = d this is the Hilbert-Schmidt-induced measure.
    """
    if not 1 <= r <= d:
        raise ValueError(f"rank r={r} out of range 1..{d}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    rho = g @ g.conj().T
    return DensityMatrix(rho / np.trace(rho).real, validate=False)


def random_unitary(d, seed=None):
    """Haar unitary via QR of a complex Ginibre matrix with phase fix."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = la.qr(g)
    ph = np.diag(r).copy()
    ph /= np.abs(ph)
    return q * ph


# --- metrics -----------------------------------------------------------------


def _psd_sqrt(h):
    w, v = la.eigh(h)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho, sigma):
    """Uhlmann fidelity; reduces to <psi|sigma|psi> when an argument is pure."""
    a, b = as_matrix(rho), as_matrix(sigma)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    for x, y in ((a, b), (b, a)):
        w, v = la.eigh(x)
        if w[-1] >= 1.0 - 1e-9:  # numerically pure
            psi = v[:, -1]
            return float(np.real(psi.conj() @ y @ psi))
    s = _psd_sqrt(a)
    inner = _psd_sqrt(s @ b @ s)
    return float(min(np.trace(inner).real ** 2, 1.0))


def infidelity(rho, sigma):
    return 1.0 - fidelity(rho, sigma)


def hs_distance(rho, sigma):
    """Hilbert-Schmidt (Frobenius) distance ||rho - sigma||_2."""
    a, b = as_matrix(rho), as_matrix(sigma)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    return float(la.norm(a - b))


def process_fidelity(chi1, chi2):
    """F = (Tr sqrt(sqrt(chi1) chi2 sqrt(chi1)))^2 / d^2 for Tr chi = d scaling."""
    c1 = chi1.chi if isinstance(chi1, ProcessMatrix) else np.asarray(chi1)
    c2 = chi2.chi if isinstance(chi2, ProcessMatrix) else np.asarray(chi2)
    if c1.shape != c2.shape:
        raise ValueError("dimension mismatch")
    if isinstance(chi1, ProcessMatrix) and isinstance(chi2, ProcessMatrix):
        if chi1.basis_label != chi2.basis_label:
            raise ValueError("process matrices use different operator bases")
    d2 = c1.shape[0]
    for x, y in ((c1, c2), (c2, c1)):
        w, v = la.eigh(x)
        if w[-1] >= (1.0 - 1e-9) * np.trace(x).real:  # numerically rank-1
            top = v[:, -1]
            return float(np.real(w[-1] * (top.conj() @ y @ top)) / d2)
    s = _psd_sqrt(matcore.psd_project(c1))
    inner = _psd_sqrt(s @ matcore.psd_project(c2) @ s)
    return float(np.trace(inner).real ** 2 / d2)


def process_fidelity_unitary(chi, u_t):
    """F(chi, U_t) = (U_t| chi |U_t) / d^2 with |U_t) = vec(U_t)."""
    c = chi.chi if isinstance(chi, ProcessMatrix) else np.asarray(chi)
    u = vectorize(as_matrix(u_t))
    d2 = c.shape[0]
    return float(np.real(u.conj() @ c @ u) / d2)


# --- chi / Kraus -------------------------------------------------------------


def matrix_unit_basis(d):
    """Operator basis {Upsilon_a} = devectorize(e_a): column-stacked matrix units."""
    return [devectorize(np.eye(d * d, dtype=complex)[:, a], (d, d))
            for a in range(d * d)]


def tp_defect(chi, d):
    """K - I where K_{j j'} = sum_i chi_{(i,j),(i,j')} (units basis).

    The map is trace-preserving iff the defect vanishes.
    """
    chi4 = np.reshape(chi, (d, d, d, d), order="F")
    return np.einsum("ijik->jk", chi4) - np.eye(d)


def kraus_to_chi(kraus_list, basis="units"):
    """chi_{ab} = sum_mu a_{mu a} a*_{mu b} with A_mu expanded in the basis.

    In the "units" basis the expansion coefficients are just vec(A_mu).
    """
    ks = [np.asarray(k, dtype=complex) for k in kraus_list]
    d = ks[0].shape[0]
    vecs = np.array([vectorize(k) for k in ks])
    chi = vecs.T @ vecs.conj()
    if basis != "units":
        c = basis_change_matrix(d, basis)
        chi = c.conj().T @ chi @ c
    tp = np.abs(sum(k.conj().T @ k for k in ks) - np.eye(d)).max() <= CLOSURE_TOL
    label = basis if isinstance(basis, str) else "custom"
    return ProcessMatrix(chi, basis_label=label, tp=tp, validate=False)


def basis_change_matrix(d, basis):
    """Unitary C with C_{a alpha} = vec(Upsilon_a)^dag vec(B_alpha).

    chi_units = C chi_basis C^dag.  ``basis`` is "hermitian" or an explicit
    list of d^2 operators orthonormal under the HS inner product.
    """
    if basis == "hermitian":
        mats = matcore.hermitian_basis(d)
    elif basis == "units":
        return np.eye(d * d, dtype=complex)
    else:
        mats = [as_matrix(b) for b in basis]
    return np.array([vectorize(b) for b in mats]).T


def chi_to_kraus(chi, tol=1e-12):
    """Signed Kraus-like decomposition chi = sum_k s_k vec(W_k) vec(W_k)^dag.

    Returns (weights, operators); weights nonnegative for CP chi.
    """
    c = chi.chi if isinstance(chi, ProcessMatrix) else np.asarray(chi)
    d = int(round(np.sqrt(c.shape[0])))
    w, v = la.eigh(matcore.require_hermitian(c))
    keep = np.abs(w) > tol * max(1.0, np.abs(w).max())
    return w[keep], [devectorize(v[:, k], (d, d)) for k in np.nonzero(keep)[0]]


def chi_apply(chi, rho):
    """Apply the map in the "units" basis: E[rho] = sum chi_{ab} Y_a rho Y_b^dag."""
    c = chi.chi if isinstance(chi, ProcessMatrix) else np.asarray(chi)
    if isinstance(chi, ProcessMatrix) and chi.basis_label != "units":
        raise ValueError("chi_apply expects the units basis; convert first")
    rho = as_matrix(rho)
    weights, ops = chi_to_kraus(c)
    out = np.zeros_like(rho)
    for s, wk in zip(weights, ops):
        out += s * (wk @ rho @ wk.conj().T)
    return 0.5 * (out + out.conj().T)


# --- serialization -----------------------------------------------------------


def save_state(path, rho, label="state"):
    doc = {"kind": "state", "dim": int(as_matrix(rho).shape[0]), "label": label,
           "matrix": matcore.matrix_to_doc(as_matrix(rho))}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def save_povm(path, povm, label=None):
    doc = {"kind": "povm", "dim": povm.dim, "label": label or povm.label,
           "elements": [matcore.matrix_to_doc(e) for e in povm.elements]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def save_process(path, proc, label="process"):
    doc = {"kind": "process", "dim": proc.dim, "basis_label": proc.basis_label,
           "label": label, "tp": proc.tp,
           "matrix": matcore.matrix_to_doc(proc.chi)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def save_record(path, record):
    doc = {"kind": "record", "povm_label": record.povm_label,
           "noise_tag": record.noise_tag, "seed": record.seed,
           "frequencies": [float(x) for x in record.f]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def save_recordset(path, records, label="records"):
    doc = {"kind": "recordset", "label": label,
           "records": [{"povm_label": r.povm_label, "noise_tag": r.noise_tag,
                        "seed": r.seed, "frequencies": [float(x) for x in r.f]}
                       for r in records]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def save_stateset(path, states, label="states"):
    """states: iterable of density matrices (arrays or DensityMatrix)."""
    mats = [as_matrix(s) for s in states]
    doc = {"kind": "stateset", "dim": int(mats[0].shape[0]), "label": label,
           "states": [matcore.matrix_to_doc(m) for m in mats]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def save_element(path, mat, label="element"):
    """A bare Hermitian operator (e.g. a detector element): no trace/PSD gate."""
    doc = {"kind": "element", "dim": int(mat.shape[0]), "label": label,
           "matrix": matcore.matrix_to_doc(np.asarray(mat, dtype=complex))}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load(path):
    """Load any tomokit JSON document, dispatching on its "kind" field."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    kind = doc.get("kind")
    if kind == "state":
        return DensityMatrix(matcore.matrix_from_doc(doc["matrix"]))
    if kind == "povm":
        elements = [matcore.matrix_from_doc(e) for e in doc["elements"]]
        return Povm(elements, label=doc.get("label", "povm"))
    if kind == "process":
        return ProcessMatrix(matcore.matrix_from_doc(doc["matrix"]),
                             basis_label=doc.get("basis_label", "units"),
                             tp=doc.get("tp"))
    if kind == "record":
        return MeasurementRecord(doc["frequencies"],
                                 povm_label=doc.get("povm_label", "povm"),
                                 noise_tag=doc.get("noise_tag", "ideal"),
                                 seed=doc.get("seed"), validate=False)
    if kind == "recordset":
        return [MeasurementRecord(r["frequencies"],
                                  povm_label=r.get("povm_label", "povm"),
                                  noise_tag=r.get("noise_tag", "ideal"),
                                  seed=r.get("seed"), validate=False)
                for r in doc["records"]]
    if kind == "stateset":
        from tomokit.qptsets import StateSet
        return StateSet([matcore.matrix_from_doc(m) for m in doc["states"]],
                        label=doc.get("label", "states"))
    if kind in ("unitary", "element"):
        return matcore.matrix_from_doc(doc["matrix"])
    raise ValueError(f"unknown document kind {kind!r} in {path}")


def save_unitary(path, u, label="unitary"):
    doc = {"kind": "unitary", "dim": int(u.shape[0]), "label": label,
           "matrix": matcore.matrix_to_doc(u)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
