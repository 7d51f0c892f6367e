"""Measurement records under noise and error models, for QST, QDT, and QPT.

Noise (on the recorded frequencies): ideal, multinomial counting statistics
over the pooled outcome collection, additive Gaussian, or a compound chain.
Errors (on the apparatus): POVM perturbation by per-basis unitary kicks,
preparation mixing, and coherent / incoherent deviations of a target process.

All sampling is seed-deterministic.  Child seeds derive from (seed, *key)
through one fixed splitting rule, so parallel maps over states/bases/trials
reproduce exactly.
"""

import zlib

import numpy as np
import scipy.linalg as la

from .qobjects import (DensityMatrix, MeasurementRecord, Povm, ProcessMatrix,
                       as_matrix, kraus_to_chi, random_mixed_rank,
                       random_unitary, vectorize)
from .povmlib import BasisSet


def _key_word(k):
    if isinstance(k, (int, np.integer)):
        return int(k) & 0xFFFFFFFF
    return zlib.crc32(str(k).encode("utf-8"))


def split_seed(seed, *key):
    """The repo-wide seed-splitting rule: SeedSequence([seed, *key]).

    Key parts may be ints or strings (strings enter via CRC-32), so a
    label like ("basis", 3) gives every consumer the same child stream.
    """
    if seed is None:
        return np.random.default_rng()
    return np.random.default_rng(
        np.random.SeedSequence([int(seed)] + [_key_word(k) for k in key]))


class NoiseSpec:
    """variant in {ideal, multinomial, gaussian, compound}."""

    def __init__(self, variant="ideal", m=None, sigma=None, parts=None,
                 seed=None):
        self.variant = variant
        self.seed = seed
        if variant == "multinomial":
            if not m or m < 1:
                raise ValueError("multinomial noise needs m >= 1")
            self.m = int(m)
        elif variant == "gaussian":
            if sigma is None or sigma < 0:
                raise ValueError("gaussian noise needs sigma >= 0")
            self.sigma = float(sigma)
        elif variant == "compound":
            self.parts = list(parts or [])
        elif variant != "ideal":
            raise ValueError(f"unknown noise variant {variant!r}")

    @classmethod
    def ideal(cls):
        return cls("ideal")

    @classmethod
    def multinomial(cls, m, seed=None):
        return cls("multinomial", m=m, seed=seed)

    @classmethod
    def gaussian(cls, sigma, seed=None):
        return cls("gaussian", sigma=sigma, seed=seed)

    @classmethod
    def compound(cls, parts, seed=None):
        return cls("compound", parts=parts, seed=seed)

    @classmethod
    def parse(cls, text, seed=None):
        """Parse "ideal", "multinomial:m=4800", "gaussian:sigma=0.01"."""
        head, _, tail = text.partition(":")
        kw = {}
        if tail:
            for item in tail.split(","):
                k, _, v = item.partition("=")
                kw[k.strip()] = float(v)
        if head == "ideal":
            return cls.ideal()
        if head == "multinomial":
            return cls.multinomial(int(kw["m"]), seed=seed)
        if head == "gaussian":
            return cls.gaussian(kw["sigma"], seed=seed)
        raise ValueError(f"cannot parse noise spec {text!r}")

    def tag(self):
        if self.variant == "multinomial":
            return f"multinomial(m={self.m})"
        if self.variant == "gaussian":
            return f"gaussian(sigma={self.sigma:g})"
        if self.variant == "compound":
            return "+".join(p.tag() for p in self.parts)
        return "ideal"


class ErrorSpec:
    """variant in {povm_perturb(eta), prep_mix(q), coherent(eta_c), incoherent(xi)}."""

    def __init__(self, variant, value, seed=None):
        checks = {"povm_perturb": lambda v: v >= 0,
                  "prep_mix": lambda v: 0 <= v <= 1,
                  "coherent": lambda v: v >= 0,
                  "incoherent": lambda v: 0 <= v <= 1}
        if variant not in checks:
            raise ValueError(f"unknown error variant {variant!r}")
        if not checks[variant](value):
            raise ValueError(f"{variant} parameter {value} out of range")
        self.variant = variant
        self.value = float(value)
        self.seed = seed

    def tag(self):
        return f"{self.variant}({self.value:g})"


def sample_record(p, noise, povm_label="povm", validate=None):
    """Draw a MeasurementRecord from outcome probabilities p under a NoiseSpec.

    multinomial: counts/m from ONE pooled draw of m trials over the whole
    collection; gaussian: p + N(0, sigma^2) i.i.d., not clipped or
    renormalized; compound: parts applied in order.  The per-stage error
    vectors are retained on the record as ``error_parts``.  validate=None
    keeps the sum-to-one check except for gaussian records.
    """
    p = np.asarray(p, dtype=float)
    parts = noise.parts if noise.variant == "compound" else [noise]
    f = p.copy()
    error_parts = []
    rng = split_seed(noise.seed) if noise.seed is not None else np.random.default_rng()
    for part in parts:
        if part.variant == "ideal":
            error_parts.append(np.zeros_like(f))
        elif part.variant == "multinomial":
            r = split_seed(part.seed) if part.seed is not None else rng
            q = np.clip(f, 0.0, None)
            q = q / q.sum()
            new = r.multinomial(part.m, q) / part.m
            error_parts.append(new - f)
            f = new
        elif part.variant == "gaussian":
            r = split_seed(part.seed) if part.seed is not None else rng
            e = part.sigma * r.standard_normal(f.shape)
            error_parts.append(e)
            f = f + e
        else:
            raise ValueError(f"cannot sample variant {part.variant!r}")
    tag = noise.tag()
    if validate is None:
        validate = "gaussian" not in tag
    rec = MeasurementRecord(f, povm_label=povm_label, noise_tag=tag,
                            seed=noise.seed, validate=validate)
    rec.error_parts = error_parts
    rec.ideal_probabilities = p
    return rec


def qpt_sample_records(p, n_states, noise, povm_label="qpt"):
    """Split a stacked state-major probability vector and sample per state.

    Counting statistics act on each input state's outcome collection
    independently (m copies of every probe state), so the pooled multinomial
    draw happens per state, with child seeds (seed, state index).
    """
    p = np.asarray(p, dtype=float)
    groups = p.reshape(n_states, -1)
    out = []
    for nu, row in enumerate(groups):
        part = noise
        if noise.seed is not None and noise.variant != "ideal":
            child = np.random.SeedSequence(
                [_key_word(noise.seed), nu]).generate_state(1)[0]
            part = NoiseSpec(noise.variant,
                             m=getattr(noise, "m", None),
                             sigma=getattr(noise, "sigma", None),
                             parts=getattr(noise, "parts", None),
                             seed=int(child))
        out.append(sample_record(row, part, povm_label=f"{povm_label}[{nu}]"))
    return out


def _random_unit_hermitian(d, rng):
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    h = 0.5 * (g + g.conj().T)
    return h / la.norm(h)


def perturb_povm(povm_or_bases, eta, seed=None):
    """Measurement error: conjugate by exp(i eta H), H random unit-norm Hermitian.

    A BasisSet gets an independent kick per basis; a bare Povm gets one global
    kick (both keep the POVM exactly valid).  eta = 0 returns the input
    unchanged in value.
    """
    if eta < 0 or eta > 0.5:
        raise ValueError("eta out of the supported range [0, 0.5]")
    rng = split_seed(seed)
    if isinstance(povm_or_bases, BasisSet):
        bs = povm_or_bases
        out = []
        for b in bs.bases:
            u = la.expm(1j * eta * _random_unit_hermitian(bs.dim, rng))
            out.append(u @ b)
        return BasisSet(out, label=f"{bs.label}~perturbed({eta:g})")
    povm = povm_or_bases
    u = la.expm(1j * eta * _random_unit_hermitian(povm.dim, rng))
    els = [u @ e @ u.conj().T for e in povm.elements]
    return Povm(els, label=f"{povm.label}~perturbed({eta:g})")


def prepare_with_error(psi, q, seed=None):
    """sigma = (1-q)|psi><psi| + q tau, tau full-rank HS-random."""
    if not 0 <= q <= 1:
        raise ValueError("q must lie in [0, 1]")
    rho = as_matrix(psi)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    d = rho.shape[0]
    if q == 0:
        return DensityMatrix(rho, validate=False)
    tau = random_mixed_rank(d, d, seed=split_seed(seed, 7)).mat
    return DensityMatrix((1 - q) * rho + q * tau, validate=False)


# --- process tomography sensing ------------------------------------------------


class SensingMatrix:
    """Rows vec(rho_nu^T kron E_mu) for p = Tr[(rho^T kron E) chi], units basis.

    Row order groups by state: row index = nu * n_outcomes + mu.
    """

    def __init__(self, matrix, n_states, n_outcomes, dim,
                 basis_label="units"):
        self.matrix = matrix
        self.n_states = n_states
        self.n_outcomes = n_outcomes
        self.dim = dim
        self.basis_label = basis_label

    def probabilities(self, chi):
        c = chi.chi if isinstance(chi, ProcessMatrix) else np.asarray(chi)
        return (self.matrix.conj() @ vectorize(c)).real

    def __repr__(self):
        return (f"SensingMatrix(states={self.n_states}, "
                f"outcomes={self.n_outcomes}, dim={self.dim})")


def qpt_sensing(states, povm, basis="units"):
    """Sensing matrix for probing states and an output POVM."""
    if basis != "units":
        raise ValueError("sensing rows are built in the units basis")
    mats = [as_matrix(s) for s in states]
    d = povm.dim
    if any(m.shape[0] != d for m in mats):
        raise ValueError("state/POVM dimension mismatch")
    rows = []
    for rho in mats:
        rt = rho.T
        for e in povm.elements:
            rows.append(vectorize(np.kron(rt, e)))
    return SensingMatrix(np.array(rows), len(mats), len(povm), d)


def qpt_probabilities(chi, sensing):
    """p_(nu, mu) = Tr[(rho_nu^T kron E_mu) chi]."""
    return sensing.probabilities(chi)


def coherent_generator(d, seed=None):
    """Random trace-one Hermitian H used by coherent_error.

    (G + G^dag)/2 from complex Ginibre G, divided by its trace; draws with
    |Tr| < 0.5 before scaling are rejected so the division stays tame.
    """
    rng = split_seed(seed, 11)
    while True:
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        h = 0.5 * (g + g.conj().T)
        tr = np.trace(h).real
        if abs(tr) >= 0.5:
            break
    return h / tr


def coherent_error(u_t, eta_c, seed=None):
    """Unitary error: chi of exp(i eta_c H) U_t with H = coherent_generator."""
    u_t = as_matrix(u_t)
    h = coherent_generator(u_t.shape[0], seed=seed)
    u_err = la.expm(1j * eta_c * h)
    return kraus_to_chi([u_err @ u_t])


def incoherent_kraus(d, seed=None):
    """Kraus operators A_n = (I kron <n|) U (I kron |nu>) of a random channel.

    U is Haar on system x environment (dimension d * d^2 = d^3) and |nu> is a
    random pure environment state, so sum_n A_n^dag A_n = I exactly.
    """
    de = d * d
    rng = split_seed(seed, 13)
    big = random_unitary(d * de, seed=rng)
    nu = rng.standard_normal(de) + 1j * rng.standard_normal(de)
    nu /= la.norm(nu)
    u4 = big.reshape(d, de, d, de)
    return np.einsum("anbf,f->nab", u4, nu)


def incoherent_error(u_t, xi, seed=None):
    """Mixture error: (1-xi) U_t . U_t^dag + xi sum_n A_n U_t . U_t^dag A_n^dag."""
    u_t = as_matrix(u_t)
    kraus = incoherent_kraus(u_t.shape[0], seed=seed)
    chi_t = kraus_to_chi([u_t]).chi
    chi_n = kraus_to_chi([k @ u_t for k in kraus]).chi
    chi = (1 - xi) * chi_t + xi * chi_n
    return ProcessMatrix(chi, basis_label="units", tp=True)


# --- detector tomography --------------------------------------------------------


def qdt_probing_states(d):
    """Rank-1 strictly-complete probing set: translated row/column probes.

    |0><0|, the states (1/d)(1 +- |0><k| +- |k><0| patterns) for k = 1..d-1,
    plus the trace-fixing projectors |k><k| for k = 1..d-1 (k = 0 is already
    the first probe).  3d - 2 states in total.
    """
    states = []
    e0 = np.zeros((d, d), dtype=complex)
    e0[0, 0] = 1.0
    states.append(DensityMatrix(e0, validate=False))
    for k in range(1, d):
        m = np.eye(d, dtype=complex)
        m[0, k] += 1.0
        m[k, 0] += 1.0
        states.append(DensityMatrix(m / d, validate=False))
    for k in range(1, d):
        m = np.eye(d, dtype=complex)
        m[0, k] += -1j
        m[k, 0] += 1j
        states.append(DensityMatrix(m / d, validate=False))
    for k in range(1, d):
        m = np.zeros((d, d), dtype=complex)
        m[k, k] = 1.0
        states.append(DensityMatrix(m, validate=False))
    return states


def qdt_probing_matrix(states):
    """Theta: d^2 x M matrix with columns vec(rho_nu)."""
    return np.array([vectorize(as_matrix(s)) for s in states]).T


def qdt_probe_element(e_unknown, states, noise=None, seed=None):
    """Record entries Tr(E rho_nu) (+ noise), one probe per state.

    Multinomial noise is per-entry binomial (each probe state is its own
    experiment); entries need not sum to one.
    """
    e = as_matrix(e_unknown)
    p = np.array([float(np.trace(e @ as_matrix(s)).real) for s in states])
    noise = noise or NoiseSpec.ideal()
    rng = split_seed(seed if seed is not None else noise.seed, 17)
    if noise.variant == "ideal":
        f = p
    elif noise.variant == "multinomial":
        f = rng.binomial(noise.m, np.clip(p, 0.0, 1.0)) / noise.m
    elif noise.variant == "gaussian":
        f = p + noise.sigma * rng.standard_normal(p.shape)
    else:
        raise ValueError("qdt probing supports ideal/multinomial/gaussian")
    rec = MeasurementRecord(f, povm_label="qdt-probe", noise_tag=noise.tag(),
                            seed=seed, validate=False)
    rec.ideal_probabilities = p
    return rec
