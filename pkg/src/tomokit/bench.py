"""Benchmark sweeps: seeded Monte-Carlo experiments emitting CSV tables.

Every sweep consumes a SweepSpec (or plain keyword arguments) and returns a
Table whose CSV serialization is byte-identical for identical (spec, seed);
wall-clock time and library versions go to the JSON manifest, never into the
tables.  Heavy lifting stays in the solver and construction modules -- this
module only orchestrates cells, derives child seeds, and aggregates medians.
"""

import io
import json
import os
import time

import numpy as np
import scipy.linalg as la
from scipy.optimize import brentq

from . import __version__, povmlib, qobjects, qptsets, simkit, solvers
from .matcore import hermitian_basis, vectorize
from .povmlib import BasisSet
from .qobjects import (MeasurementRecord, born_probabilities, infidelity,
                       process_fidelity, process_fidelity_unitary,
                       random_mixed_rank, random_pure, random_unitary)
from .simkit import NoiseSpec, split_seed
from .solvers import RankDeficient, SolverOptions


# --- tables, specs, manifests ---------------------------------------------------


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    v = float(x)
    if np.isnan(v):
        return "nan"
    return format(v, ".12g")


class Table:
    """Column-named rows with deterministic CSV serialization."""

    def __init__(self, name, columns, rows=None, meta=None):
        self.name = name
        self.columns = list(columns)
        self.rows = [tuple(r) for r in rows] if rows else []
        self.meta = meta or {}

    def add(self, *row):
        if len(row) != len(self.columns):
            raise ValueError(f"row width {len(row)} != {len(self.columns)}")
        self.rows.append(tuple(row))

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def select(self, **match):
        idx = {k: self.columns.index(k) for k in match}
        return [r for r in self.rows
                if all(r[idx[k]] == v for k, v in match.items())]

    def to_csv_text(self):
        out = io.StringIO()
        out.write(",".join(self.columns) + "\n")
        for r in self.rows:
            out.write(",".join(_fmt(x) for x in r) + "\n")
        return out.getvalue()

    def to_csv(self, path):
        _atomic_write(path, self.to_csv_text())

    def __len__(self):
        return len(self.rows)

    def __repr__(self):
        return f"Table({self.name}, {len(self.rows)} rows x {self.columns})"


def _atomic_write(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


class SweepSpec:
    """Declarative description of one experiment: id, cells, seed, knobs.

    Unknown keys are rejected so config typos fail loudly.  Every experiment
    reads only its own knobs; dims/constructions are validated when the sweep
    actually builds them.
    """

    _KNOWN = {
        "strict": {"dims", "ranks", "n_states", "family", "max_bases",
                   "infid_threshold", "seed"},
        "robustness": {"constructions", "n_pairs", "n_bins", "seed"},
        "noisy": {"dims", "basis_counts", "n_states", "q", "m_per_basis_factor",
                  "estimators", "seed"},
        "qpt": {"dim", "k_values", "n_seeds", "error", "target_fidelity",
                "estimators", "povm_kind", "solver_max_iter", "solver_tol",
                "seed"},
        "gramian": {"povm_kind", "dim", "sigma", "x_sys", "n_max", "n_draws",
                    "seed"},
        "counts": {"constructions", "dims", "seed"},
    }

    _DEFAULTS = {
        "strict": {"dims": (11, 16, 21), "ranks": (1, 2, 3), "n_states": 50,
                   "family": "haar", "max_bases": 25, "infid_threshold": 1e-5},
        "robustness": {"constructions": None, "n_pairs": 10000, "n_bins": 60},
        "noisy": {"dims": (8, 16), "basis_counts": (6, 8, 10), "n_states": 50,
                  "q": 1e-3, "m_per_basis_factor": 300,
                  "estimators": ("ls", "ml", "trmin")},
        "qpt": {"dim": 5, "k_values": (1, 2, 3, 4, 5, 6, 7), "n_seeds": 50,
                "error": "ideal", "target_fidelity": None,
                "estimators": ("ls",), "povm_kind": "psi3d",
                "solver_max_iter": 20000, "solver_tol": 1e-8},
        "gramian": {"povm_kind": "mub", "dim": 4, "sigma": 0.02,
                    "x_sys": 0.01, "n_max": 40, "n_draws": 200},
        "counts": {"constructions": ("sic", "mub", "gmb5", "flammia2d",
                                     "psi3d"), "dims": (2, 3, 4, 8, 16)},
    }

    def __init__(self, experiment, seed=0, **params):
        if experiment not in self._KNOWN:
            raise ValueError(f"unknown experiment {experiment!r}")
        allowed = self._KNOWN[experiment]
        unknown = set(params) - allowed
        if unknown:
            raise ValueError(f"unknown keys for {experiment}: {sorted(unknown)}")
        self.experiment = experiment
        self.seed = int(seed)
        merged = dict(self._DEFAULTS[experiment])
        merged.update(params)
        self.params = merged
        for k, v in merged.items():
            setattr(self, k, v)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        experiment = d.pop("experiment")
        seed = d.pop("seed", 0)
        return cls(experiment, seed=seed, **d)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        out = {"experiment": self.experiment, "seed": self.seed}
        for k, v in sorted(self.params.items()):
            out[k] = list(v) if isinstance(v, tuple) else v
        return out


def write_manifest(out_dir, spec, outputs, wall_time, extra=None):
    """JSON manifest next to the tables: spec, seed, versions, timing."""
    import scipy
    payload = {
        "spec": spec.to_dict() if isinstance(spec, SweepSpec) else spec,
        "outputs": sorted(outputs),
        "versions": {"tomokit": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "wall_time_s": round(float(wall_time), 3),
    }
    if extra:
        payload.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


# --- strict-completeness sweep ---------------------------------------------------


def _family_bases(family, d, n, rng):
    if family == "haar":
        return povmlib.random_bases(d, n, seed=rng)
    if family == "local":
        nq = int(round(np.log2(d)))
        if 2 ** nq != d:
            raise povmlib.UnsupportedDim(
                f"local bases need a power-of-two dim; got {d}")
        return povmlib.local_random_bases(nq, n, seed=rng)
    raise ValueError(f"unknown basis family {family!r}")


def min_bases_for_cell(d, r, spec, opts=None):
    """Smallest basis count at which every sampled state reconstructs.

    Nested scan: each state gets its own nested random-basis sequence; the
    running candidate only moves up, and every increment is justified by a
    state that failed at the previous count, so the returned count is minimal
    for this sample.  Returns (count, exhausted).
    """
    opts = opts or SolverOptions()
    count = 1
    for i in range(spec.n_states):
        rho = random_mixed_rank(
            d, r, seed=split_seed(spec.seed, "strict", d, r, i, 0))
        bs = _family_bases(spec.family, d, spec.max_bases,
                           split_seed(spec.seed, "strict", d, r, i, 1))
        while True:
            if count > spec.max_bases:
                return spec.max_bases, True
            povm = bs.subset(count).as_povm()
            p = born_probabilities(povm, rho)
            rec = simkit.sample_record(p, NoiseSpec.ideal(),
                                       povm_label=povm.label)
            est = solvers.ls_state(rec, povm, opts)
            if infidelity(rho.mat, est.matrix) < spec.infid_threshold:
                break
            count += 1
    return count, False


def sweep_strict_completeness(spec):
    """Minimal random-basis counts for reconstruction, per (dim, rank) cell."""
    table = Table("strict", ["family", "dim", "rank", "n_states",
                             "min_bases", "exhausted"])
    for d in spec.dims:
        for r in spec.ranks:
            count, exhausted = min_bases_for_cell(d, r, spec)
            table.add(spec.family, d, r, spec.n_states,
                      f">{spec.max_bases}" if exhausted else str(count),
                      exhausted)
    return table


# --- robustness-ratio histograms --------------------------------------------------


class RatioHistogram:
    """Distance-contraction ratios for one measurement at one (d, r)."""

    def __init__(self, label, dim, rank, ratios, n_bins=60):
        self.label = label
        self.dim = int(dim)
        self.rank = int(rank)
        self.ratios = np.asarray(ratios, dtype=float)
        self.max = float(self.ratios.max())
        self.median = float(np.median(self.ratios))
        lo, hi = float(self.ratios.min()), self.max
        if hi - lo < 1e-12:  # tight frames contract every direction equally
            lo, hi = lo - 0.5, hi + 0.5
        counts, edges = np.histogram(self.ratios, bins=n_bins, range=(lo, hi))
        self.counts = counts
        self.edges = edges

    def __repr__(self):
        return (f"RatioHistogram({self.label}, d={self.dim}, r={self.rank}, "
                f"median={self.median:.3f}, max={self.max:.3f})")


def _measurement_rows(meas):
    """Born-map rows: per-basis probability blocks for a BasisSet, xi for a Povm."""
    if isinstance(meas, BasisSet):
        rows = [vectorize(np.outer(v, v.conj())) for v in meas.vectors()]
        return np.array(rows), f"{meas.label}"
    return meas.xi, meas.label


def sweep_robustness_ratio(meas, r, n_pairs, seed, n_bins=60):
    """Histogram of ||rho_r - sigma|| / ||M[rho_r - sigma]|| over random pairs.

    rho_r is a Haar-block rank-r state, sigma a full-rank one; zero-distance
    pairs (never seen in practice) would be resampled.  A BasisSet is measured
    basis-by-basis (unit-weight blocks); a Povm through its own weighted map.
    """
    rows, label = _measurement_rows(meas)
    d = meas.dim
    rng = split_seed(seed, "ratio", d, r)
    ratios = np.empty(n_pairs)
    k = 0
    while k < n_pairs:
        rho = random_mixed_rank(d, r, seed=rng).mat
        sigma = random_mixed_rank(d, d, seed=rng).mat
        delta = rho - sigma
        nd = la.norm(delta)
        if nd < 1e-12:
            continue
        image = (rows.conj() @ vectorize(delta)).real
        ratios[k] = nd / la.norm(image)
        k += 1
    return RatioHistogram(label, d, r, ratios, n_bins=n_bins)


#: Rank-r strictly-complete random-basis counts used by the roster, keyed by
#: dimension: the smallest counts at which least-squares reconstruction of
#: every sampled rank-r state sets in (see sweep_strict_completeness).
HAAR_COUNTS = {11: (6, 7, 9), 16: (6, 8, 10), 21: (6, 8, 11)}
LOCAL_COUNTS = {8: (6, 9, 12), 16: (6, 9, 15)}

_ROSTER_SEED = 2026  # fixed so the roster (hence every CSV) is reproducible


def strict_roster(max_dim=31):
    """Robustness-sweep roster: strictly-complete families at their (d, r).

    Basis families enter as BasisSet (measured basis by basis), POVMs through
    their own outcome map.  Only constructions whose distance-contraction
    ratios stay inside the bounded envelope belong here; the elementwise-
    completion POVMs (flammia2d, flammia-rr, psi3d) are strictly complete
    too, but their closure/chain weight structure leaves soft directions
    with unbounded ratio tails, so they are exercised via eprec instead.
    """
    roster = []
    for d, counts in sorted(HAAR_COUNTS.items()):
        for r, n in zip((1, 2, 3), counts):
            roster.append(("haar", d, r,
                           povmlib.random_bases(d, n, seed=_ROSTER_SEED)))
    for d, counts in sorted(LOCAL_COUNTS.items()):
        nq = int(np.log2(d))
        for r, n in zip((1, 2, 3), counts):
            roster.append(("local", d, r,
                           povmlib.local_random_bases(nq, n,
                                                      seed=_ROSTER_SEED)))
    for d in (4, 8, 16):
        for r in (1, 2, 3):
            if r >= d // 2:
                continue
            roster.append(("gmb", d, r, povmlib.gmb(d, r)))
    for d in (2, 3, 4):
        roster.append(("sic", d, 1, povmlib.sic(d)))
    for d in (2, 4, 7, 16):
        roster.append(("mub", d, 1, povmlib.mub(d)))
    for d in (4, 11, 16):
        roster.append(("poly5", d, 1, povmlib.poly_bases(d, count=5)))
    return [(label, d, r, m) for label, d, r, m in roster if d <= max_dim]


def _resolve_roster(constructions):
    """Accept ready (label, d, r, measurement) tuples or (kind, d, r) names."""
    if constructions is None:
        return strict_roster()
    roster = []
    for entry in constructions:
        if len(entry) == 4:
            roster.append(tuple(entry))
        else:
            kind, d, r = entry
            roster.append((str(kind), int(d), int(r),
                           povmlib.build(str(kind), int(d), rank=int(r))))
    return roster


def sweep_robustness(spec):
    """Summary and histogram tables over the strictly-complete roster."""
    roster = _resolve_roster(spec.constructions)
    summary = Table("robustness_summary",
                    ["construction", "dim", "rank", "n_pairs", "median",
                     "p90", "max"])
    hists = Table("robustness_hist",
                  ["construction", "dim", "rank", "bin_left", "bin_right",
                   "count"])
    results = []
    for label, d, r, meas in roster:
        h = sweep_robustness_ratio(meas, r, spec.n_pairs, spec.seed,
                                   n_bins=spec.n_bins)
        results.append(h)
        summary.add(label, d, r, spec.n_pairs, h.median,
                    float(np.quantile(h.ratios, 0.9)), h.max)
        for j, c in enumerate(h.counts):
            hists.add(label, d, r, float(h.edges[j]), float(h.edges[j + 1]),
                      int(c))
    return summary, hists, results


# --- noisy estimation sweep -------------------------------------------------------


def sample_basis_records(bs, rho, m, seed):
    """Per-basis multinomial frequency blocks (m trials per basis)."""
    blocks = []
    for b in range(len(bs)):
        povm_b = BasisSet([bs.bases[b]], validate=False).as_povm(
            label=f"{bs.label}[{b}]")
        p_b = born_probabilities(povm_b, rho)
        child = int(split_seed(seed, "basis", b).integers(2 ** 32))
        rec = simkit.sample_record(p_b, NoiseSpec.multinomial(m, seed=child),
                                   povm_label=povm_b.label)
        blocks.append(np.asarray(rec.f))
    return blocks


def stacked_record(blocks, count, m, label):
    """Record over the first `count` bases; matches BasisSet.as_povm weights.

    The tag carries the total trial count plus a plug-in residual-ball
    radius: eps^2 = sum_bk f_bk (1 - f_bk) / (m count^2), the unbiased
    estimate of E||f - p||^2 for per-basis multinomial sampling.  The
    generic pooled bound sqrt((1 - 1/N)/m_total) overshoots blocked
    records by ~15%, which would slacken the ball-constrained programs.
    """
    eps2 = sum(float(np.sum(fb * (1.0 - fb))) for fb in blocks[:count])
    eps2 /= m * count ** 2
    f = np.concatenate(blocks[:count]) / count
    tag = f"multinomial(m={m * count}, eps={np.sqrt(eps2):.12g})"
    return MeasurementRecord(f, povm_label=f"{label}[:{count}]",
                             noise_tag=tag)


_STATE_ESTIMATORS = {"ls": solvers.ls_state, "ml": solvers.ml_state,
                     "trmin": solvers.trmin_state}


def sweep_noisy_estimation(spec):
    """Median infidelity to the target pure state vs number of measured bases.

    Protocol per state: Haar target psi, prepared state (1-q) psi + q tau
    with tau a random full-rank state, m = factor * d trials per Haar basis;
    nested basis blocks so "add a basis" means extending the same record.
    """
    table = Table("noisy", ["dim", "n_bases", "estimator", "n_states",
                            "median_infid", "q25", "q75", "failures"])
    max_count = max(spec.basis_counts)
    for d in spec.dims:
        m = spec.m_per_basis_factor * d
        cells = {(c, e): [] for c in spec.basis_counts
                 for e in spec.estimators}
        fails = {(c, e): 0 for c in spec.basis_counts
                 for e in spec.estimators}
        for i in range(spec.n_states):
            psi = random_pure(d, seed=split_seed(spec.seed, "noisy", d, i, 0))
            prep_seed = int(
                split_seed(spec.seed, "noisy", d, i, 1).integers(2 ** 32))
            prepared = simkit.prepare_with_error(psi, spec.q, seed=prep_seed)
            bs = povmlib.random_bases(
                d, max_count, seed=split_seed(spec.seed, "noisy", d, i, 2))
            rec_seed = int(
                split_seed(spec.seed, "noisy", d, i, 3).integers(2 ** 32))
            blocks = sample_basis_records(bs, prepared, m, rec_seed)
            for c in spec.basis_counts:
                rec = stacked_record(blocks, c, m, bs.label)
                povm = bs.subset(c).as_povm()
                for e in spec.estimators:
                    try:
                        est = _STATE_ESTIMATORS[e](rec, povm)
                        cells[(c, e)].append(infidelity(psi.mat, est.matrix))
                    except solvers.Infeasible:
                        fails[(c, e)] += 1
                        cells[(c, e)].append(np.nan)
        for c in spec.basis_counts:
            for e in spec.estimators:
                vals = np.asarray(cells[(c, e)])
                table.add(d, c, e, spec.n_states,
                          float(np.nanmedian(vals)),
                          float(np.nanquantile(vals, 0.25)),
                          float(np.nanquantile(vals, 0.75)),
                          fails[(c, e)])
    return table


# --- process-tomography sweep -----------------------------------------------------


def coherent_eta_for_fidelity(d, target, seed):
    """eta with |Tr exp(i eta H)|^2 / d^2 = target for the seeded generator H."""
    h = simkit.coherent_generator(d, seed=seed)
    w = la.eigvalsh(h)

    def fid(eta):
        return abs(np.exp(1j * eta * w).sum()) ** 2 / d ** 2

    hi = 0.1
    while fid(hi) > target:
        hi *= 2.0
        if hi > 1e4:
            raise ValueError("could not bracket the requested fidelity")
    return float(brentq(lambda e: fid(e) - target, 0.0, hi, xtol=1e-12))


def incoherent_xi_for_fidelity(d, target, seed):
    """xi with (1 - xi) + xi F_K = target for the seeded Kraus channel."""
    kraus = simkit.incoherent_kraus(d, seed=seed)
    f_k = sum(abs(np.trace(a)) ** 2 for a in kraus) / d ** 2
    xi = (1.0 - target) / (1.0 - f_k)
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"target fidelity {target} unreachable (F_K={f_k:.3f})")
    return float(xi)


def applied_process(u_target, error, target_fidelity, seed):
    """chi of the actually-applied map for one error model.

    error: "ideal" (no error), "coherent" (extra unitary exp(i eta H)), or
    "incoherent" (mixture with a random channel); eta / xi are calibrated so
    the process fidelity to the target unitary equals target_fidelity.
    """
    d = u_target.shape[0]
    if error == "ideal":
        return qobjects.kraus_to_chi([u_target]).chi
    if error == "coherent":
        eta = coherent_eta_for_fidelity(d, target_fidelity, seed)
        return simkit.coherent_error(u_target, eta, seed=seed).chi
    if error == "incoherent":
        xi = incoherent_xi_for_fidelity(d, target_fidelity, seed)
        return simkit.incoherent_error(u_target, xi, seed=seed).chi
    raise ValueError(f"unknown error model {error!r}")


def _qpt_estimate(name, records, sensing, u_target, opts):
    if name == "ls":
        return solvers.ls_process(records, sensing, opts)
    if name == "trmin":
        return solvers.trmin_process(records, sensing, opts)
    if name == "l1":
        return solvers.l1_process(records, sensing, u_target, opts)
    raise ValueError(f"unknown process estimator {name!r}")


def sweep_qpt(spec):
    """Process-estimate fidelities vs number of probe states, per estimator.

    Probe states: the minimal pure commutant-free set extended to a spanning
    catalog; ideal records throughout (the error lives in the applied map,
    not in sampling).
    """
    d = spec.dim
    povm = povmlib.build(spec.povm_kind, d)
    if isinstance(povm, BasisSet):
        povm = povm.as_povm()
    states = qptsets.supplement_to_full(qptsets.uic_pure_0plus(d))
    if max(spec.k_values) > len(states):
        raise ValueError(f"k up to {max(spec.k_values)} but only "
                         f"{len(states)} probe states")
    opts = SolverOptions(max_iter=spec.solver_max_iter, tol_obj=spec.solver_tol)
    table = Table("qpt", ["error", "target_fidelity", "dim", "seed_index",
                          "k", "estimator", "fid_applied", "fid_target",
                          "applied_vs_target", "converged"])
    for s in range(spec.n_seeds):
        child = split_seed(spec.seed, "qpt", s).integers(2 ** 32)
        u_t = random_unitary(d, seed=split_seed(spec.seed, "qpt", s, 0))
        chi_a = applied_process(u_t, spec.error, spec.target_fidelity, child)
        f_at = process_fidelity_unitary(chi_a, u_t)
        for k in spec.k_values:
            sub = states[:k]
            sensing = simkit.qpt_sensing(sub, povm)
            p = simkit.qpt_probabilities(chi_a, sensing)
            records = simkit.qpt_sample_records(p, k, NoiseSpec.ideal())
            for e in spec.estimators:
                est = _qpt_estimate(e, records, sensing, u_t, opts)
                table.add(spec.error,
                          spec.target_fidelity if spec.target_fidelity
                          else 1.0,
                          d, s, k, e,
                          process_fidelity(est.matrix, chi_a),
                          process_fidelity_unitary(est.matrix, u_t),
                          f_at, est.converged)
    return table


def median_curve(table, estimator, value="fid_target", **match):
    """k -> median of one fidelity column for one estimator."""
    rows = table.select(estimator=estimator, **match)
    ik = table.columns.index("k")
    iv = table.columns.index(value)
    ks = sorted({r[ik] for r in rows})
    return {k: float(np.median([r[iv] for r in rows if r[ik] == k]))
            for k in ks}


def cusp_location(curve):
    """Argmax |second difference| of a k -> value curve (interior points)."""
    ks = sorted(curve)
    if len(ks) < 3:
        raise ValueError("need at least three points for a second difference")
    vals = np.array([curve[k] for k in ks])
    d2 = np.abs(vals[2:] - 2 * vals[1:-1] + vals[:-2])
    return ks[1 + int(np.argmax(d2))]


# --- gramian / repetition-averaging analysis --------------------------------------


class GramianNoise:
    """Synthetic frequency-space error model with exact ground truth.

    Per repetition the frequencies get i.i.d. N(0, sigma^2) noise; a fixed
    offset (drawn once from the seed) is scaled so the reconstructed-state
    systematic error power is exactly x_sys.
    """

    def __init__(self, sigma=0.02, x_sys=0.01, seed=0):
        self.sigma = float(sigma)
        self.x_sys = float(x_sys)
        self.seed = seed


class GramianReport:
    def __init__(self, g, x_rand, x_sys, x_rand_true, x_sys_true, stderr,
                 series, loglog_slope):
        self.g = g
        self.x_rand = float(x_rand)
        self.x_sys = float(x_sys)
        self.x_rand_true = float(x_rand_true)
        self.x_sys_true = float(x_sys_true)
        self.stderr = stderr
        self.series = series
        self.loglog_slope = float(loglog_slope)

    def __repr__(self):
        return (f"GramianReport(x_rand={self.x_rand:.4g} "
                f"(true {self.x_rand_true:.4g}), x_sys={self.x_sys:.4g} "
                f"(true {self.x_sys_true:.4g}), slope={self.loglog_slope:.3f})")


def gramian_analysis(povm, noise_model, n_max=40, n_draws=200):
    """Fit mean-square reconstruction error vs repetition count.

    The linear-inversion error is devec(Xi^+ (f - p)), independent of the
    state, so the analysis works directly on the error term: per repetition
    draw e ~ N(0, sigma^2 I) plus the fixed offset, average n repetitions
    (equivalently scale the random part by 1/sqrt(n)), and record
    ||reconstruction error||_HS^2.  The law E = x_rand/n + x_sys holds
    exactly with x_rand = sigma^2 Tr G; the fit is weighted least squares
    (weights 1/fitted, two passes) because the draw variance scales with the
    mean.
    """
    basis = hermitian_basis(povm.dim)
    bmat = np.array([vectorize(h) for h in basis]).T
    rmat = (povm.xi.conj() @ bmat).real
    if np.linalg.matrix_rank(rmat, tol=1e-10) < povm.dim ** 2:
        raise RankDeficient("gramian analysis needs a fully-IC measurement")
    pinv_r = la.pinv(rmat)
    g = pinv_r @ pinv_r.T
    n_out = rmat.shape[0]
    x_rand_true = noise_model.sigma ** 2 * float(np.trace(g))
    rng = split_seed(noise_model.seed, "gramian")
    u = rng.standard_normal(n_out)
    if noise_model.x_sys > 0:
        delta = u * np.sqrt(noise_model.x_sys) / la.norm(pinv_r @ u)
    else:
        delta = np.zeros(n_out)
    x_sys_true = float(la.norm(pinv_r @ delta) ** 2)
    ns = np.arange(1, n_max + 1)
    means = np.empty(n_max)
    for j, n in enumerate(ns):
        e = rng.standard_normal((n_draws, n_out)) * (
            noise_model.sigma / np.sqrt(n))
        err = (e + delta) @ pinv_r.T
        means[j] = float(np.mean(np.sum(err ** 2, axis=1)))
    design = np.column_stack([1.0 / ns, np.ones(n_max)])
    coef, *_ = la.lstsq(design, means)
    for _ in range(2):
        w = 1.0 / np.clip(design @ coef, 1e-30, None)
        coef, *_ = la.lstsq(design * w[:, None], means * w)
    resid = means - design @ coef
    dof = max(n_max - 2, 1)
    cov = (float(resid @ resid) / dof) * la.inv(design.T @ design)
    stderr = tuple(np.sqrt(np.diag(cov)))
    slope = float(np.polyfit(np.log(ns), np.log(np.clip(means, 1e-300, None)),
                             1)[0])
    series = Table("gramian_series", ["n", "mean_sq_error"],
                   rows=list(zip(ns.tolist(), means.tolist())))
    return GramianReport(g, coef[0], coef[1], x_rand_true, x_sys_true,
                         stderr, series, slope)


# --- element-count report ---------------------------------------------------------


def element_count_report(constructions, dims):
    """Element and setting counts for each supported (construction, dim)."""
    table = Table("counts", ["construction", "dim", "settings", "elements"])
    for kind in constructions:
        for d in dims:
            try:
                built = povmlib.build(kind, d)
            except ValueError:
                continue
            if isinstance(built, BasisSet):
                table.add(kind, d, len(built), len(built) * d)
            else:
                table.add(kind, d, len(built), len(built))
    return table


# --- experiment dispatch (CLI back end) --------------------------------------------


def run_experiment(spec, out_dir, extra=None):
    """Run one experiment, write its CSVs and manifest into out_dir.

    extra: additional manifest fields (the CLI records its command line and
    config digest here).
    """
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    outputs = []

    def emit(table):
        path = os.path.join(out_dir, f"{table.name}.csv")
        table.to_csv(path)
        outputs.append(os.path.basename(path))
    if spec.experiment == "strict":
        emit(sweep_strict_completeness(spec))
    elif spec.experiment == "robustness":
        summary, hists, _ = sweep_robustness(spec)
        emit(summary)
        emit(hists)
    elif spec.experiment == "noisy":
        emit(sweep_noisy_estimation(spec))
    elif spec.experiment == "qpt":
        table = sweep_qpt(spec)
        emit(table)
        med = Table("qpt_medians", ["estimator", "k", "median_fid_applied",
                                    "median_fid_target"])
        for e in spec.estimators:
            ca = median_curve(table, e, value="fid_applied")
            ct = median_curve(table, e, value="fid_target")
            for k in sorted(ct):
                med.add(e, k, ca[k], ct[k])
        emit(med)
    elif spec.experiment == "gramian":
        povm = povmlib.build(spec.povm_kind, spec.dim)
        if isinstance(povm, BasisSet):
            povm = povm.as_povm()
        noise = GramianNoise(spec.sigma, spec.x_sys, seed=spec.seed)
        report = gramian_analysis(povm, noise, n_max=spec.n_max,
                                  n_draws=spec.n_draws)
        emit(report.series)
        fit = Table("gramian_fit",
                    ["x_rand", "x_rand_true", "x_rand_stderr", "x_sys",
                     "x_sys_true", "x_sys_stderr", "loglog_slope",
                     "trace_g", "lambda_min_g", "lambda_max_g"])
        wg = la.eigvalsh(report.g)
        fit.add(report.x_rand, report.x_rand_true, report.stderr[0],
                report.x_sys, report.x_sys_true, report.stderr[1],
                report.loglog_slope, float(np.trace(report.g)),
                float(wg[0]), float(wg[-1]))
        emit(fit)
    elif spec.experiment == "counts":
        emit(element_count_report(spec.constructions, spec.dims))
    else:
        raise ValueError(f"unknown experiment {spec.experiment!r}")
    manifest = write_manifest(out_dir, spec, outputs, time.time() - t0, extra)
    return outputs + [os.path.basename(manifest)]
