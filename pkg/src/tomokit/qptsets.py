"""Probe-state catalogs for process tomography.

Ships the full operator-spanning standard set (d^2 states) and three
minimal sets that identify a unitary process from only O(d) probes: a
two-state mixed set, and two d-state pure sets.  A supplement operation
greedily extends any set to operator-space rank d^2 while preserving the
input order, which is what sweeps over "number of probe states" consume.
"""

import numpy as np
import numpy.linalg as la

from .qobjects import DensityMatrix, as_matrix, vectorize


class StateSet:
    """An ordered list of probe states with a label.

    states hold density matrices; iteration yields bare arrays so the set
    can feed sensing-map constructors directly.
    """

    def __init__(self, states, label="states", dim=None):
        mats = [as_matrix(s) for s in states]
        if not mats:
            raise ValueError("empty state set")
        self.dim = dim or mats[0].shape[0]
        for m in mats:
            if m.shape != (self.dim, self.dim):
                raise ValueError("mixed dimensions in state set")
        self.states = [DensityMatrix(m) for m in mats]
        self.label = label

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return (s.mat for s in self.states)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return StateSet([s.mat for s in self.states[i]],
                            label=self.label, dim=self.dim)
        return self.states[i].mat

    def matrices(self):
        return [s.mat for s in self.states]

    def operator_rank(self, tol=1e-10):
        stack = np.column_stack([vectorize(m) for m in self])
        s = la.svd(stack, compute_uv=False)
        return int(np.sum(s > tol * s[0]))


def _ket(d, k):
    v = np.zeros(d, dtype=complex)
    v[k] = 1.0
    return v


def _proj(v):
    return np.outer(v, v.conj())


def standard_states(d):
    """The d^2-state operator-spanning probe set.

    Order: computational kets |k>, then (|k>+|n>)/sqrt2 for k<n in
    lexicographic order, then (|k>+i|n>)/sqrt2 in the same order.
    """
    if d < 2:
        raise ValueError("need dimension >= 2")
    states = [_proj(_ket(d, k)) for k in range(d)]
    for k in range(d - 1):
        for n in range(k + 1, d):
            states.append(_proj((_ket(d, k) + _ket(d, n)) / np.sqrt(2)))
    for k in range(d - 1):
        for n in range(k + 1, d):
            states.append(_proj((_ket(d, k) + 1j * _ket(d, n)) / np.sqrt(2)))
    return StateSet(states, label=f"standard(d={d})", dim=d)


def uic_minimal_mixed(d, spectrum=None):
    """Two probe states whose joint commutant is trivial.

    The first is a full-rank diagonal state with strictly decreasing
    eigenvalues (default geometric, ratio 1/2); the second is the uniform
    superposition projector.  Only the identity commutes with both, so
    ideal data from the pair pins down a unitary process.
    """
    if spectrum is None:
        lam = 0.5 ** np.arange(d)
        lam = lam / lam.sum()
    else:
        lam = np.asarray(spectrum, dtype=float)
        if lam.shape != (d,):
            raise ValueError("spectrum length must equal the dimension")
        if abs(lam.sum() - 1.0) > 1e-9 or np.any(lam <= 0):
            raise ValueError("spectrum must be positive and sum to 1")
        if np.any(np.diff(lam) >= 0):
            raise ValueError("spectrum must be strictly decreasing")
    rho0 = np.diag(lam).astype(complex)
    plus = np.full(d, 1 / np.sqrt(d), dtype=complex)
    return StateSet([rho0, _proj(plus)], label=f"uic-mixed(d={d})", dim=d)


def uic_pure_nplus(d):
    """{|0>, ..., |d-2>, |+>}: d pure probes with trivial joint commutant."""
    if d < 2:
        raise ValueError("need dimension >= 2")
    states = [_proj(_ket(d, k)) for k in range(d - 1)]
    states.append(_proj(np.full(d, 1 / np.sqrt(d), dtype=complex)))
    return StateSet(states, label=f"uic-nplus(d={d})", dim=d)


def uic_pure_0plus(d):
    """{|0>, (|0>+|n>)/sqrt2 for n=1..d-1}: a subset of the standard set."""
    if d < 2:
        raise ValueError("need dimension >= 2")
    states = [_proj(_ket(d, 0))]
    for n in range(1, d):
        states.append(_proj((_ket(d, 0) + _ket(d, n)) / np.sqrt(2)))
    return StateSet(states, label=f"uic-0plus(d={d})", dim=d)


def supplement_to_full(state_set, d=None):
    """Extend a probe set to operator-space rank d^2, preserving order.

    Candidates come from standard_states(d) in their catalog order; a
    candidate joins only if it increases the rank of the vectorized stack.
    A full-IC input comes back unchanged (same states, same order).
    """
    if d is None:
        d = state_set.dim
    mats = list(state_set) if isinstance(state_set, StateSet) else \
        [as_matrix(s) for s in state_set]
    stack = [vectorize(m) for m in mats]
    rank = np.linalg.matrix_rank(np.column_stack(stack), tol=1e-10)
    if rank < len(mats):
        raise ValueError("input states are not linearly independent")
    out = list(mats)
    for cand in standard_states(d):
        if rank == d * d:
            break
        trial = np.column_stack(stack + [vectorize(cand)])
        r = np.linalg.matrix_rank(trial, tol=1e-10)
        if r > rank:
            stack.append(vectorize(cand))
            out.append(cand)
            rank = r
    if rank != d * d:
        raise ValueError("could not reach an operator-spanning set")
    label = getattr(state_set, "label", "states")
    return StateSet(out, label=f"{label}+supplement", dim=d)
