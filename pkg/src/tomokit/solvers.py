"""Estimators: linear inversion, LS, ML, trace-minimization, l1, rank-projection.

Three engines drive everything here:

* an accelerated projected-gradient loop (FISTA with backtracking and
  restart-on-nonmonotone) for the smooth-objective programs (LS, ML,
  detector-element LS),
* a plain projected-gradient loop with random restarts for the non-convex
  rank-constrained program,
* a consensus ADMM for the conic programs (trace minimization and l1
  minimization under a residual ball, and CPTP-constrained process LS),
* a Gauss-Newton search over low-rank factors that polishes ideal-data
  solutions down to the zero-misfit floor of the convex programs, so the
  factorization doubles as a certificate of global optimality.

Every solver returns an Estimate carrying the matrix, objective, residual,
iteration count, a converged flag, and a dict of diagnostic flags; failure to
converge is always reported, never silent.
"""

import numpy as np
import scipy.linalg as la
from scipy.optimize import least_squares

from . import matcore
from .matcore import devectorize, psd_project, psd_project_rank, vectorize
from .qobjects import as_matrix, tp_defect


class RankDeficient(ValueError):
    """The measurement map does not determine operator space."""


class Infeasible(ValueError):
    """No PSD matrix meets the residual ball: epsilon below the data floor."""


class SolverOptions:
    """Knobs shared by all iterative solvers.

    epsilon     residual-ball radius for constrained programs (None = derive
                from the record's noise tag; ideal -> 0)
    tol_obj     relative objective stall / ADMM residual tolerance
    tol_grad    stationarity tolerance (rank-projection "trapped" test)
    target_obj  success threshold on the residual norm (rank projection)
    max_iter    iteration cap per solve
    restarts    random restarts for the rank-constrained program
    refine      "auto" tries the certified low-rank refinement on ideal
                records, "off" disables it
    refine_rank_cap  largest factor rank the refinement escalates to
    """

    def __init__(self, epsilon=None, tol_obj=1e-8, tol_grad=1e-5,
                 target_obj=1e-5, max_iter=20000, restarts=20,
                 refine="auto", refine_rank_cap=4):
        self.epsilon = epsilon
        self.tol_obj = float(tol_obj)
        self.tol_grad = float(tol_grad)
        self.target_obj = float(target_obj)
        self.max_iter = int(max_iter)
        self.restarts = int(restarts)
        self.refine = refine
        self.refine_rank_cap = int(refine_rank_cap)


class Estimate:
    def __init__(self, matrix, objective, residual, iterations, converged,
                 label="", flags=None):
        self.matrix = matrix
        self.objective = float(objective)
        self.residual = float(residual)
        self.iterations = int(iterations)
        self.converged = bool(converged)
        self.label = label
        self.flags = flags or {}

    def __repr__(self):
        state = "converged" if self.converged else "NOT converged"
        return (f"Estimate({self.label}, obj={self.objective:.3e}, "
                f"res={self.residual:.3e}, it={self.iterations}, {state})")


def default_epsilon(n_outcomes, m=None, sigma=None, eta_hat=0.0):
    """Residual-ball radius: sampling term xi_hat plus systematic term eta_hat.

    Pooled multinomial with m trials over N outcomes: xi_hat =
    sqrt((1 - 1/N)/m), the mean-square bound on ||f - p||.  Gaussian with
    per-entry sigma: xi_hat = sigma sqrt(N).
    """
    if m is not None:
        xi_hat = np.sqrt((1.0 - 1.0 / n_outcomes) / m)
    elif sigma is not None:
        xi_hat = sigma * np.sqrt(n_outcomes)
    else:
        xi_hat = 0.0
    return float(xi_hat + eta_hat)


def _epsilon_from_tag(record):
    tag = getattr(record, "noise_tag", "ideal")
    n = len(record.f)
    if "eps=" in tag:
        return float(tag.split("eps=")[1].split(")")[0].split(",")[0])
    if "multinomial" in tag:
        m = int(float(tag.split("m=")[1].split(")")[0].split(",")[0]))
        return default_epsilon(n, m=m)
    if "gaussian" in tag:
        sigma = float(tag.split("sigma=")[1].split(")")[0].split(",")[0])
        return default_epsilon(n, sigma=sigma)
    return 0.0


def _epsilon_for(records, opts):
    """Ball radius for one record or a list (quadrature over records)."""
    if opts is not None and opts.epsilon is not None:
        return float(opts.epsilon)
    if hasattr(records, "f"):
        return _epsilon_from_tag(records)
    return float(np.sqrt(sum(_epsilon_from_tag(r) ** 2 for r in records)))


# --- linear inversion -----------------------------------------------------------


def _real_sensing(xi, d):
    """Real matrix of the Born map in an orthonormal Hermitian basis."""
    basis = matcore.hermitian_basis(d)
    bmat = np.array([vectorize(h) for h in basis]).T
    return (xi.conj() @ bmat).real, bmat


def linear_inversion(record, povm):
    """Pseudo-inverse estimate devec(Xi^+ f); requires rank(Xi) = d^2.

    The output is Hermitian but can have negative eigenvalues on noisy data;
    that is reported in flags, not repaired.
    """
    xi = povm.xi
    d = povm.dim
    sv = la.svdvals(xi)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    if rank < d * d:
        raise RankDeficient(f"measurement map has rank {rank} < {d * d}")
    f = np.asarray(record.f, dtype=float)
    x, *_ = la.lstsq(xi.conj(), f.astype(complex))
    rho = devectorize(x, (d, d))
    rho = 0.5 * (rho + rho.conj().T)
    eigs = la.eigvalsh(rho)
    resid = la.norm((xi.conj() @ vectorize(rho)).real - f)
    return Estimate(rho, resid, resid, 0, True, label="linear-inversion",
                    flags={"min_eig": float(eigs[0]),
                           "negative_eigs": bool(eigs[0] < -1e-12),
                           "trace": float(np.trace(rho).real)})


def inversion_error_bound(povm, epsilon):
    """Worst-case HS error of linear inversion: 2 eps / smin(Born map)."""
    rmat, _ = _real_sensing(povm.xi, povm.dim)
    smin = la.svdvals(rmat)[-1]
    return 2.0 * epsilon / smin


# --- accelerated projected gradient ---------------------------------------------


def _apg(x0, value_grad, project, opts, stop_value=-np.inf, lipschitz=1.0):
    """FISTA with backtracking and restart-on-nonmonotone.

    Returns (x, value, iters, converged).  The stall test is relative to the
    current value, so ideal-data solves run down to stop_value rather than
    parking early.
    """
    x = project(np.asarray(x0, dtype=complex))
    fx, _ = value_grad(x)
    y, t, L = x, 1.0, max(lipschitz, 1e-12)
    stall = 0
    for it in range(1, opts.max_iter + 1):
        fy, gy = value_grad(y)
        L *= 0.9
        while True:
            z = project(y - gy / L)
            dz = z - y
            fz, _ = value_grad(z)
            gap = np.vdot(gy, dz).real + 0.5 * L * la.norm(dz) ** 2
            if fz <= fy + gap + 1e-15 * max(1.0, abs(fy)) or L > 1e18:
                break
            L *= 2.0
        if fz <= fx:
            df = fx - fz
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = z + ((t - 1.0) / t_next) * (z - x)
            x, fx, t = z, fz, t_next
        else:
            # overshoot: restart momentum and retake a plain step from x
            df = 0.0
            y, t = x, 1.0
        if fx <= stop_value:
            return x, fx, it, True
        if df <= opts.tol_obj * (abs(fx) + 1e-30):
            stall += 1
            if stall >= 8:
                return x, fx, it, True
        else:
            stall = 0
    return x, fx, opts.max_iter, False


def _ls_pieces(record, xi):
    f = np.asarray(record.f, dtype=float)
    lip = 2.0 * la.svdvals(xi)[0] ** 2

    def value_grad(x):
        p = (xi.conj() @ vectorize(x)).real
        r = p - f
        grad = devectorize(xi.T @ r, x.shape)
        return float(r @ r), 2.0 * grad

    return f, lip, value_grad


def ls_state(record, povm, opts=None):
    """min ||Xi rho - f||_2 over density matrices, by accelerated projection.

    Ideal records that stall above the zero-misfit floor are handed to the
    certified refinement, warm-started from the projected-gradient point and
    run at that point's own numerical rank, so the refinement polishes the
    optimum this solver was already approaching.  It must not search over
    ranks: a rank-escalating search solves the rank-constrained problem,
    which can reconstruct states from strictly fewer settings than the
    convex program and would misreport where reconstruction sets in.  The
    candidate is kept only if it beats the incumbent objective;
    flags["certified"] records whether the final point sits on the floor
    (and is therefore a global optimum of this program).
    """
    opts = opts or SolverOptions()
    d = povm.dim
    _, lip, value_grad = _ls_pieces(record, povm.xi)
    x0 = np.eye(d, dtype=complex) / d
    x, fx, it, ok = _apg(x0, value_grad, matcore.density_project, opts,
                         stop_value=1e-20, lipschitz=lip)
    flags = {} if ok else {"reason": "NotConverged", "last_obj": fx}
    if (opts.refine != "off" and fx > _CERT_MISFIT2
            and _ideal_records(record)):
        w = la.eigvalsh(x)
        r0 = int(np.sum(w > 1e-3 * max(w[-1], 1e-30)))
        if 1 <= r0 <= opts.refine_rank_cap:
            ops = np.concatenate([_hermitian_rows(povm.xi, d),
                                  np.eye(d, dtype=complex)[None]])
            t = np.append(np.asarray(record.f, dtype=float), 1.0)
            cand, val, r = _lowrank_refine(ops, t, opts.refine_rank_cap,
                                           x0=x, ranks=[r0])
            if val <= _CERT_MISFIT2:
                cand = cand / np.trace(cand).real
                f_cand, _ = value_grad(cand)
                if f_cand < fx:
                    x, fx, ok = cand, f_cand, True
                    flags = {"refined": True, "refine_rank": r}
    flags["certified"] = bool(fx <= _CERT_MISFIT2)
    resid = np.sqrt(max(fx, 0.0))
    return Estimate(x, resid, resid, it, ok, label="ls", flags=flags)


def _rrr_polish(x, fs, xis, barrier, gap_tol=1e-9, max_iter=5000):
    """Diluted R.rho.R ascent for the multinomial likelihood.

    R(rho) = sum_mu (f_mu / p_mu) E_mu is PSD, so rho' = A rho A / Tr(A rho A)
    with A = I + eps R stays on the density manifold without any projection;
    eps is halved until the step is monotone.  For s = sum(f), Jensen's
    inequality gives L(sigma) - L(rho) <= s log(lmax(R)/s) for every density
    sigma, so that quantity is a rigorous optimality gap and the stopping
    rule.  Returns (x, value, gap, iterations).
    """
    d = x.shape[0]
    s = float(fs.sum())

    def value_r(x):
        p = (xis.conj() @ vectorize(x)).real
        p = np.clip(p, barrier, None)
        val = float(-fs @ np.log(p))
        r_mat = devectorize(xis.T @ (fs / p), x.shape)
        return val, 0.5 * (r_mat + r_mat.conj().T)

    # A gradient step cannot leave a face of the PSD cone once the iterate is
    # exactly singular, so restore full support before the multiplicative
    # ascent; the likelihood cost of the blend is O(delta) and is re-earned.
    delta = 1e-3
    x = (1.0 - delta) * x + delta * np.eye(d, dtype=complex) / d
    fx, r_mat = value_r(x)
    gap = np.inf
    for it in range(1, max_iter + 1):
        eps = 1.0
        stepped = False
        for _ in range(30):
            a = np.eye(d, dtype=complex) + eps * r_mat
            cand = a @ x @ a.conj().T
            cand /= np.trace(cand).real
            f_cand, r_cand = value_r(cand)
            if f_cand <= fx:
                stepped = f_cand < fx - 1e-15 * max(1.0, abs(fx))
                x, fx, r_mat = cand, f_cand, r_cand
                break
            eps *= 0.5
        if it % 10 == 0 or not stepped:
            lmax = float(la.eigvalsh(r_mat)[-1])
            gap = s * np.log(max(lmax, barrier) / s)
            if gap <= gap_tol or not stepped:
                return x, fx, gap, it
    lmax = float(la.eigvalsh(r_mat)[-1])
    return x, fx, s * np.log(max(lmax, barrier) / s), max_iter


def ml_state(record, povm, opts=None, barrier=1e-12):
    """Maximize sum_mu f_mu log Tr(E_mu rho) over density matrices.

    Zero frequencies contribute nothing (0 log 0 = 0); negative frequencies
    (possible under Gaussian noise) are clipped to zero; probabilities are
    floored at the barrier inside the log.  On strictly-complete ideal data
    the optimum value equals the frequency entropy, which serves as the
    stopping floor.  Noisy records get a multiplicative R.rho.R polish after
    the gradient phase: the projected-gradient iteration can stall on the
    cone boundary where the log-likelihood curvature blows up, while the
    multiplicative ascent is monotone there and terminates on a duality-gap
    certificate (flags["ml_gap"]).
    """
    opts = opts or SolverOptions()
    d = povm.dim
    xi = povm.xi
    f = np.clip(np.asarray(record.f, dtype=float), 0.0, None)
    support = f > 0
    fs = f[support]
    xis = xi[support]
    entropy = float(-fs @ np.log(fs))
    lip = 2.0 * la.svdvals(xi)[0] ** 2

    def value_grad(x):
        p = (xis.conj() @ vectorize(x)).real
        p = np.clip(p, barrier, None)
        val = float(-fs @ np.log(p))
        grad = -devectorize(xis.T @ (fs / p), x.shape)
        return val, grad

    x0 = np.eye(d, dtype=complex) / d
    x, fx, it, ok = _apg(x0, value_grad, matcore.density_project, opts,
                         stop_value=entropy + 1e-13, lipschitz=lip)
    flags = {"entropy_floor": entropy}
    if fx > entropy + 1e-12 and _ideal_records(record):
        if opts.refine != "off":
            # On ideal data the likelihood is maximized exactly where p = f,
            # the zero-misfit point of the LS program; borrow it when
            # certified and keep whichever point scores the better objective.
            base = ls_state(record, povm, opts)
            if base.flags.get("certified"):
                f_cand, _ = value_grad(base.matrix)
                if f_cand < fx:
                    x, fx, ok = base.matrix, f_cand, True
                    flags["delegated"] = "ls-certified"
    elif fx > entropy + 1e-12:
        gap_tol = max(opts.tol_obj * max(1.0, abs(fx)), 1e-9)
        x, fx, gap, rr_it = _rrr_polish(x, fs, xis, barrier, gap_tol=gap_tol)
        it += rr_it
        flags["ml_gap"] = gap
        ok = ok or gap <= 10.0 * gap_tol
    flags["loglik"] = -fx
    p_hat = (xi.conj() @ vectorize(x)).real
    resid = la.norm(p_hat - np.asarray(record.f, dtype=float))
    if not ok:
        flags["reason"] = "NotConverged"
    return Estimate(x, fx, resid, it, ok, label="ml", flags=flags)


# --- rank-constrained projection ------------------------------------------------


def rankr_projection_state(record, povm, r, opts=None, seed=None,
                           collect_all=False):
    """Projected gradient onto rank-r PSD matrices with random restarts.

    Success means residual norm <= opts.target_obj; a restart that reaches a
    stationary point above that is trapped.  If every restart is trapped the
    flag all_restarts_trapped is set and converged is False.  With
    collect_all, every successful restart's matrix is kept in flags["hits"]
    (the probe for non-uniqueness of the program).
    """
    opts = opts or SolverOptions()
    d = povm.dim
    _, lip, value_grad = _ls_pieces(record, povm.xi)
    rng = np.random.default_rng(
        None if seed is None else np.random.SeedSequence([int(seed), 23]))
    target2 = opts.target_obj ** 2
    cap = max(2000, opts.max_iter // max(opts.restarts, 1))
    best = None
    hits = []
    trapped = 0
    for restart in range(opts.restarts):
        w = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
        x = w @ w.conj().T
        x /= np.trace(x).real
        L = lip
        fx, gx = value_grad(x)
        it = 0
        while it < cap:
            it += 1
            L *= 0.9
            while True:
                z = psd_project_rank(x - gx / L, r)
                dz = z - x
                fz, gz = value_grad(z)
                gap = np.vdot(gx, dz).real + 0.5 * L * la.norm(dz) ** 2
                if fz <= fx + gap + 1e-15 * max(1.0, abs(fx)) or L > 1e18:
                    break
                L *= 2.0
            moved = la.norm(z - x) * L
            x, fx, gx = z, fz, gz
            if fx <= target2:
                break
            if moved <= opts.tol_grad * max(1.0, la.norm(gx)):
                break
        if best is None or fx < best[0]:
            best = (fx, x, it, restart)
        if fx <= target2:
            hits.append(x)
            if not collect_all:
                break
        else:
            trapped += 1
    fx, x, it, restart = best
    resid = np.sqrt(max(fx, 0.0))
    ok = resid <= opts.target_obj
    flags = {"restarts_used": restart + 1, "trapped": trapped}
    if collect_all:
        flags["hits"] = hits
    if not ok:
        flags["all_restarts_trapped"] = True
        flags["reason"] = "AllRestartsTrapped"
    return Estimate(x, resid, resid, it, ok, label=f"rank{r}-projection",
                    flags=flags)


# --- certified low-rank refinement ------------------------------------------------
#
# On ideal data the convex programs here share an unbeatable floor: squared
# misfit zero.  Any PSD point that attains the floor is a global optimum, no
# matter how it was found.  Near such a point the feasible set touches the
# PSD cone tangentially (the solution is rank-deficient), which is exactly
# where projection and splitting methods slow to a sublinear crawl; a
# Gauss-Newton step on the factor Y with X = Y Y^dag has no such obstruction
# and converges quadratically.  The zero floor turns the nonconvex
# factorization into a certificate rather than a leap of faith: we only ever
# accept its output when the misfit actually lands on the floor.

_CERT_MISFIT2 = 1e-18


def _hermitian_rows(rows, n_side):
    """Hermitian H_a with Tr(H_a X) = Re(rows[a]* . vec X) on Hermitian X."""
    ops = np.empty((rows.shape[0], n_side, n_side), dtype=complex)
    for a in range(rows.shape[0]):
        e = devectorize(rows[a], (n_side, n_side))
        ops[a] = 0.5 * (e + e.conj().T)
    return ops


def _tp_hermitian_rows(d):
    """d^2 Hermitian functionals pinning trace preservation of a process matrix.

    The partial trace of chi (units basis) must equal the identity; the first
    d rows fix its diagonal to one, the remaining pairs fix the real and
    imaginary parts of each upper off-diagonal entry to zero.
    """
    q = d * d
    ops, targets = [], []
    for j in range(d):
        h = np.zeros((q, q), dtype=complex)
        for i in range(d):
            h[i + d * j, i + d * j] = 1.0
        ops.append(h)
        targets.append(1.0)
    for j in range(d):
        for jp in range(j + 1, d):
            b = np.zeros((q, q), dtype=complex)
            for i in range(d):
                b[i + d * j, i + d * jp] = 1.0
            ops.append(0.5 * (b + b.conj().T))
            targets.append(0.0)
            ops.append((b - b.conj().T) / 2j)
            targets.append(0.0)
    return np.array(ops), np.array(targets)


def _lowrank_refine(h_ops, targets, max_rank, x0=None, seeds=(), scale=1.0,
                    max_nfev=400, ranks=None):
    """Best Y Y^dag with Tr(H_a Y Y^dag) ~= targets_a over the given ranks.

    Returns (x, misfit2, rank).  Residuals r_a = Tr(H_a Y Y^dag) - t_a have
    the closed-form Jacobian [2 Re vec(H_a Y), 2 Im vec(H_a Y)] in the real
    parametrization of Y, handed to a trust-region least-squares solver.
    Initial factors: the top-r eigenfactor of x0 when given, else seeded
    random factors with Frobenius norm sqrt(scale); each rank also restarts
    from the previous rank's best factor padded with a small random column.
    `ranks` defaults to 1..max_rank; callers that must not bias the selected
    optimum toward low rank pass the single rank they already hold.  Stops as
    soon as the misfit certifies (<= _CERT_MISFIT2).
    """
    h_ops = np.asarray(h_ops)
    targets = np.asarray(targets, dtype=float)
    n = h_ops.shape[1]
    hmat = h_ops.reshape(-1, n)

    def solve(y0):
        r = y0.shape[1]

        def unpack(theta):
            half = n * r
            return (theta[:half] + 1j * theta[half:]).reshape(n, r)

        def residual(theta):
            y = unpack(theta)
            z = (hmat @ y).reshape(-1, n, r)
            return np.einsum("ir,air->a", y.conj(), z).real - targets

        def jacobian(theta):
            y = unpack(theta)
            z = (hmat @ y).reshape(len(targets), n * r)
            return np.concatenate([2.0 * z.real, 2.0 * z.imag], axis=1)

        theta0 = np.concatenate([y0.real.ravel(), y0.imag.ravel()])
        sol = least_squares(residual, theta0, jac=jacobian, method="trf",
                            ftol=1e-15, xtol=1e-15, gtol=1e-15,
                            max_nfev=max_nfev)
        return unpack(sol.x), float(2.0 * sol.cost)

    best = (None, np.inf, 0)
    prev = None
    for r in (ranks if ranks is not None else range(1, max_rank + 1)):
        inits = []
        if prev is not None and r == prev.shape[1] + 1:
            rng = np.random.default_rng(np.random.SeedSequence([331, r]))
            pad = (rng.standard_normal((n, 1)) +
                   1j * rng.standard_normal((n, 1)))
            pad *= 1e-3 * np.sqrt(scale) / la.norm(pad)
            inits.append(np.hstack([prev, pad]))
        if x0 is not None:
            w, v = la.eigh(0.5 * (x0 + x0.conj().T))
            inits.append(np.sqrt(np.clip(w[-r:], 1e-30, None)) * v[:, -r:])
        for s in seeds:
            rng = np.random.default_rng(np.random.SeedSequence([int(s), r]))
            y0 = (rng.standard_normal((n, r)) +
                  1j * rng.standard_normal((n, r)))
            inits.append(y0 * (np.sqrt(scale) / la.norm(y0)))
        rank_best = (None, np.inf)
        for y0 in inits:
            y, val = solve(y0)
            if val < rank_best[1]:
                rank_best = (y, val)
            if val < best[1]:
                best = (y, val, r)
            if val <= _CERT_MISFIT2:
                x = y @ y.conj().T
                return 0.5 * (x + x.conj().T), val, r
        prev = rank_best[0]
    y, val, r = best
    x = y @ y.conj().T
    return 0.5 * (x + x.conj().T), val, r


def _ideal_records(records):
    if hasattr(records, "noise_tag"):
        records = [records]
    return all(getattr(r, "noise_tag", "") == "ideal" for r in records)


def _identity_in_rowspan(xi, d):
    """True when some combination of the measurement rows is the identity."""
    target = vectorize(np.eye(d, dtype=complex))
    coeff, *_ = la.lstsq(xi.T, target)
    return la.norm(xi.T @ coeff - target) <= 1e-8 * np.sqrt(d)


# --- consensus ADMM -------------------------------------------------------------


def _ball_project(v, center, radius):
    dv = v - center
    n = la.norm(dv)
    if n <= radius:
        return v.copy()
    return center + dv * (radius / n) if radius > 0 else center.copy()


def _tp_project(chi, d, traceless=False):
    """Project onto the TP affine set (or, traceless=True, onto TP-up-to-scale."""
    chi4 = chi.reshape(d, d, d, d, order="F")
    k = np.einsum("ijik->jk", chi4)
    if traceless:
        k = k - (np.trace(k) / d) * np.eye(d)
    else:
        k = k - np.eye(d)
    return chi - np.kron(k, np.eye(d)) / d


def _admm(a_mat, f, n_side, blocks, opts, ball_eps=None, x_init=None):
    """Consensus ADMM: min sum_i g_i(X_i) + data(W) s.t. X_i = W.

    blocks: list of prox callables prox(v_matrix, inv_mu) -> matrix.  The data
    term is either the residual ball ||A w - f|| <= ball_eps (an extra
    projected variable z = A w) or, when ball_eps is None, the least squares
    1/2 ||A w - f||^2 folded into the W update.  A w is Re(conj(a_mat) @ w).
    Over-relaxation 1.7, residual-balanced penalty.
    """
    q = n_side * n_side
    k = len(blocks)
    f = np.asarray(f, dtype=float)
    w = vectorize(x_init) if x_init is not None else np.zeros(q, dtype=complex)
    xs = [devectorize(w, (n_side, n_side)) for _ in range(k)]
    us = [np.zeros(q, dtype=complex) for _ in range(k)]
    use_ball = ball_eps is not None
    if use_ball:
        z = f.copy()
        uz = np.zeros(len(f))
    mu = 1.0
    alpha = 1.7
    gram = a_mat.T @ a_mat.conj()          # A^dag A for A = conj(a_mat)
    atf = a_mat.T @ f

    def factor(mu_now):
        if use_ball:
            m = gram + k * np.eye(q)       # mu cancels throughout
        else:
            m = gram / mu_now + k * np.eye(q)
        return la.cho_factor(0.5 * (m + m.conj().T))

    cho = factor(mu)
    it_checked = 0
    wm = devectorize(w, (n_side, n_side))
    for it in range(1, opts.max_iter + 1):
        rhs = sum(vectorize(x) + u for x, u in zip(xs, us))
        if use_ball:
            rhs = rhs + a_mat.T @ (z + uz)
        else:
            rhs = rhs + atf / mu
        w_new = la.cho_solve(cho, rhs)
        wm = devectorize(w_new, (n_side, n_side))
        wm = 0.5 * (wm + wm.conj().T)
        w_new = vectorize(wm)
        prim2 = 0.0
        for i, prox in enumerate(blocks):
            w_hat = alpha * w_new + (1 - alpha) * vectorize(xs[i])
            v = devectorize(w_hat - us[i], (n_side, n_side))
            x_new = prox(0.5 * (v + v.conj().T), 1.0 / mu)
            us[i] = us[i] + vectorize(x_new) - w_hat
            prim2 += la.norm(vectorize(x_new) - w_new) ** 2
            xs[i] = x_new
        if use_ball:
            aw = (a_mat.conj() @ w_new).real
            aw_hat = alpha * aw + (1 - alpha) * z
            z_new = _ball_project(aw_hat - uz, f, ball_eps)
            uz = uz + z_new - aw_hat
            prim2 += la.norm(z_new - aw) ** 2
            z = z_new
        dual = np.sqrt(k) * mu * la.norm(w_new - w)
        w = w_new
        prim = np.sqrt(prim2)
        scale = max(1.0, la.norm(w))
        if prim <= 1e-12 + opts.tol_obj * scale and \
           dual <= 1e-12 + opts.tol_obj * scale:
            return wm, it, True, mu
        if it - it_checked >= 50:
            it_checked = it
            if prim > 10 * dual and mu < 1e6:
                mu *= 2.0
                us = [u / 2.0 for u in us]
                if use_ball:
                    uz = uz / 2.0
                else:
                    cho = factor(mu)
            elif dual > 10 * prim and mu > 1e-6:
                mu /= 2.0
                us = [u * 2.0 for u in us]
                if use_ball:
                    uz = uz * 2.0
                else:
                    cho = factor(mu)
    return wm, opts.max_iter, False, mu


def trmin_state(record, povm, opts=None):
    """min Tr X  s.t.  ||Xi x - f|| <= eps, X >= 0 (no trace constraint).

    The program itself carries no trace constraint; the returned matrix is
    the renormalized state X / Tr X (the quantum-state estimate), with the
    minimized trace kept as the objective and in flags["trace"].

    eps defaults from the record's noise tag (0 for ideal).  If the returned
    point still violates the ball the program was infeasible at this eps and
    Infeasible is raised.

    At eps = 0 on an ideal record the ball is the affine slice Xi x = f, so
    zero misfit pins every Born value; when the identity sits in the row span
    the trace of every feasible point is then the same number, and a certified
    zero-misfit point (from the LS path) is already trace-optimal.
    """
    opts = opts or SolverOptions()
    eps = _epsilon_for(record, opts)
    d = povm.dim
    f = np.asarray(record.f, dtype=float)
    if (opts.refine != "off" and eps == 0.0 and _ideal_records(record)
            and _identity_in_rowspan(povm.xi, d)):
        base = ls_state(record, povm, opts)
        if base.flags.get("certified"):
            tr = float(np.trace(base.matrix).real)
            return Estimate(base.matrix, tr, base.residual, base.iterations,
                            True, label="trmin",
                            flags={"epsilon": 0.0, "trace": tr,
                                   "certified": True, "delegated": "ls"})

    def prox_trace_psd(v, inv_mu):
        return psd_project(v - inv_mu * np.eye(d))

    x0 = np.eye(d, dtype=complex) / d
    x, it, ok, _ = _admm(povm.xi, f, d, [prox_trace_psd], opts,
                         ball_eps=eps, x_init=x0)
    x = psd_project(x)
    resid = la.norm((povm.xi.conj() @ vectorize(x)).real - f)
    if resid - eps > 1e-6 + 100 * opts.tol_obj:
        raise Infeasible(
            f"residual {resid:.3e} exceeds eps={eps:.3e}: ball is empty")
    tr = float(np.trace(x).real)
    flags = {"epsilon": eps, "trace": tr}
    if tr < 1e-6:
        flags["degenerate"] = True
    else:
        x = x / tr
    if not ok:
        flags["reason"] = "NotConverged"
    return Estimate(x, tr, resid, it, ok, label="trmin", flags=flags)


# --- process estimators ---------------------------------------------------------


def _stack_records(records):
    if hasattr(records, "f"):
        return np.asarray(records.f, dtype=float)
    return np.concatenate([np.asarray(r.f, dtype=float) for r in records])


def ls_process(records, sensing, opts=None):
    """CPTP-constrained least squares for the process matrix (units basis).

    Ideal records go through the certified low-rank refinement first: data
    rows and trace-preservation rows enter one Gauss-Newton residual, so a
    zero-misfit factor is PSD by construction, trace-preserving, and exactly
    on this program's objective floor -- a global optimum.  The refinement is
    seeded deterministically, making repeated calls agree; noisy records, or
    a refinement that fails to certify (e.g. a high-rank channel), fall back
    to ADMM.
    """
    opts = opts or SolverOptions()
    f = _stack_records(records)
    d = sensing.dim
    q = d * d
    if opts.refine != "off" and _ideal_records(records):
        tp_ops, tp_targets = _tp_hermitian_rows(d)
        ops = np.concatenate([_hermitian_rows(sensing.matrix, q), tp_ops])
        t = np.concatenate([f, tp_targets])
        chi, val, r = _lowrank_refine(ops, t, opts.refine_rank_cap,
                                      seeds=(271, 828, 459), scale=float(d))
        if val <= _CERT_MISFIT2:
            resid = la.norm((sensing.matrix.conj() @ vectorize(chi)).real - f)
            return Estimate(chi, resid, resid, 0, True, label="ls-process",
                            flags={"refined": True, "refine_rank": r,
                                   "certified": True,
                                   "tp_defect": float(la.norm(
                                       tp_defect(chi, d)))})

    def prox_psd(v, inv_mu):
        return psd_project(v)

    def prox_tp(v, inv_mu):
        return _tp_project(v, d)

    x0 = np.eye(q, dtype=complex) / d
    chi, it, ok, _ = _admm(sensing.matrix, f, q, [prox_psd, prox_tp], opts,
                           x_init=x0)
    chi = _tp_project(psd_project(chi), d)
    resid = la.norm((sensing.matrix.conj() @ vectorize(chi)).real - f)
    flags = {} if ok else {"reason": "NotConverged"}
    return Estimate(chi, resid, resid, it, ok, label="ls-process", flags=flags)


def trmin_process(records, sensing, opts=None):
    """min Tr chi  s.t.  ball, chi >= 0, trace-preserving up to scale.

    The TP constraint is enforced on the traceless part only (the affine TP
    set fixes Tr chi = d, which would kill the objective); the returned chi is
    rescaled to Tr chi = d at the end.

    At eps = 0 on ideal records whose per-state frequencies sum to one, the
    data pin the scale of the partial trace (output POVM elements sum to the
    identity), so every feasible point has the same trace; a certified
    zero-misfit CPTP point from the LS path is then already optimal here.
    """
    opts = opts or SolverOptions()
    f = _stack_records(records)
    d = sensing.dim
    q = d * d
    eps = _epsilon_for(records, opts)
    sums = f.reshape(sensing.n_states, -1).sum(axis=1)
    if (opts.refine != "off" and eps == 0.0 and _ideal_records(records)
            and np.abs(sums - 1.0).max() <= 1e-10):
        base = ls_process(records, sensing, opts)
        if base.flags.get("certified"):
            tr = float(np.trace(base.matrix).real)
            return Estimate(base.matrix, tr, base.residual, base.iterations,
                            True, label="trmin-process",
                            flags={"epsilon": 0.0, "trace_raw": tr,
                                   "certified": True, "delegated": "ls"})

    def prox_trace_psd(v, inv_mu):
        return psd_project(v - inv_mu * np.eye(q))

    def prox_tp_traceless(v, inv_mu):
        return _tp_project(v, d, traceless=True)

    x0 = np.eye(q, dtype=complex) / d
    chi, it, ok, _ = _admm(sensing.matrix, f, q,
                           [prox_trace_psd, prox_tp_traceless], opts,
                           ball_eps=eps, x_init=x0)
    chi = psd_project(chi)
    tr = float(np.trace(chi).real)
    flags = {"epsilon": eps, "trace_raw": tr}
    if tr > 1e-9:
        chi = chi * (d / tr)
    else:
        flags["degenerate"] = True
    resid = la.norm((sensing.matrix.conj() @ vectorize(chi)).real - f)
    if not ok:
        flags["reason"] = "NotConverged"
    return Estimate(chi, tr, resid, it, ok, label="trmin-process",
                    flags=flags)


def l1_process(records, sensing, u_target, opts=None):
    """min ||C^dag chi C||_1  s.t.  ball, chi >= 0, TP; C = I kron U_target.

    The l1 norm is entrywise in the target-adapted operator basis, where the
    target unitary's process matrix is maximally sparse.
    """
    opts = opts or SolverOptions()
    f = _stack_records(records)
    d = sensing.dim
    q = d * d
    eps = _epsilon_for(records, opts)
    c = np.kron(np.eye(d), as_matrix(u_target))

    def prox_psd(v, inv_mu):
        return psd_project(v)

    def prox_tp(v, inv_mu):
        return _tp_project(v, d)

    def prox_l1(v, inv_mu):
        vb = c.conj().T @ v @ c
        shrunk = np.exp(1j * np.angle(vb)) * np.maximum(np.abs(vb) - inv_mu,
                                                        0.0)
        return c @ shrunk @ c.conj().T

    x0 = np.eye(q, dtype=complex) / d
    chi, it, ok, _ = _admm(sensing.matrix, f, q,
                           [prox_psd, prox_tp, prox_l1], opts,
                           ball_eps=eps, x_init=x0)
    chi = _tp_project(psd_project(chi), d)
    resid = la.norm((sensing.matrix.conj() @ vectorize(chi)).real - f)
    obj = float(np.abs(c.conj().T @ chi @ c).sum())
    flags = {"epsilon": eps}
    if not ok:
        flags["reason"] = "NotConverged"
    return Estimate(chi, obj, resid, it, ok, label="l1-process", flags=flags)


def cptp_project(chi, d, tol=1e-10, max_iter=2000):
    """Dykstra alternating projections onto PSD intersect TP."""
    x = chi.copy()
    p_inc = np.zeros_like(chi)
    q_inc = np.zeros_like(chi)
    for _ in range(max_iter):
        y = psd_project(x + p_inc)
        p_inc = x + p_inc - y
        x_new = _tp_project(y + q_inc, d)
        q_inc = y + q_inc - x_new
        if la.norm(x_new - x) <= tol and la.norm(y - x_new) <= tol:
            return x_new
        x = x_new
    return x


def l1_cyclic_average(per_state_records, states, povm, k, u_target,
                      opts=None):
    """Average the l1 estimate over all cyclic rotations of the state list.

    per_state_records: one record per probing state, in state order.  Each
    rotation keeps the first k states of the rotated list, solves l1_process,
    and the resulting process matrices are averaged and re-projected to CPTP.
    """
    from .simkit import qpt_sensing
    opts = opts or SolverOptions()
    n = len(states)
    if len(per_state_records) != n:
        raise ValueError("need one record per probing state")
    d = as_matrix(states[0]).shape[0]
    chis = []
    objs = []
    for s in range(n):
        order = [(s + i) % n for i in range(k)]
        sub_states = [states[i] for i in order]
        sub_records = [per_state_records[i] for i in order]
        sensing = qpt_sensing(sub_states, povm)
        est = l1_process(sub_records, sensing, u_target, opts)
        chis.append(est.matrix)
        objs.append(est.objective)
    chi = cptp_project(np.mean(chis, axis=0), d)
    return Estimate(chi, float(np.mean(objs)), 0.0, n, True,
                    label=f"l1-cyclic(k={k})",
                    flags={"rotation_objectives": objs})


# --- detector element -----------------------------------------------------------


def qdt_element_ls(record, theta, opts=None):
    """min ||Theta^T vec(E) - f|| over E >= 0 (no closure constraint)."""
    opts = opts or SolverOptions()
    f = np.asarray(record.f, dtype=float)
    q = theta.shape[0]
    d = int(round(np.sqrt(q)))
    lip = 2.0 * la.svdvals(theta)[0] ** 2

    def value_grad(x):
        p = (theta.conj().T @ vectorize(x)).real
        r = p - f
        g = devectorize(theta @ r, (d, d))
        return float(r @ r), g + g.conj().T

    x0 = np.eye(d, dtype=complex) / d
    x, fx, it, ok = _apg(x0, value_grad, psd_project, opts,
                         stop_value=1e-22, lipschitz=lip)
    resid = np.sqrt(max(fx, 0.0))
    flags = {} if ok else {"reason": "NotConverged"}
    return Estimate(x, resid, resid, it, ok, label="qdt-ls", flags=flags)
