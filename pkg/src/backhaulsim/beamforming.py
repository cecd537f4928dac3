"""Receive and transmit beamformer updates.

Receive side: the MMSE filter against the current interference-plus-noise
covariance. Transmit side, in rising order of required channel knowledge:

* matched filter  - aims at the direct channel seen through the Rx filter;
* local MSE       - minimizes the link's own MSE under a transmit-power cap
                    (single-stream, so it lands on the matched direction);
* coordinated MSE - local MSE plus per-victim interference-leakage caps,
                    needs cross channels and all Rx filters (full CSI);
* zero forcing    - alternating null-space projections on both ends.

Transmit vectors are unit norm and phase-canonicalized (largest-magnitude
entry real positive); receive vectors are the raw MMSE formula output, whose
phase is meaningful for the MSE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization

TX_SCHEME_KINDS = ("matched_filter", "local_mse", "coordinated_mse",
                   "zero_forcing", "coordinated_txbf", "fixed")
_FULL_CSI_KINDS = ("coordinated_mse", "zero_forcing", "coordinated_txbf")


@dataclass(frozen=True)
class TxScheme:
    """Transmit-beamforming scheme selector for the two-stage loop."""

    kind: str

    def __post_init__(self):
        if self.kind not in TX_SCHEME_KINDS:
            raise ValueError(f"unknown tx scheme: {self.kind}")

    @property
    def full_csi(self) -> bool:
        return self.kind in _FULL_CSI_KINDS


class CoordinationError(RuntimeError):
    """Leakage-constrained solver ran out of iterations."""

    def __init__(self, message, last_w=None, residuals=None):
        super().__init__(message)
        self.last_w = last_w
        self.residuals = residuals


def canonical_phase(v: np.ndarray) -> np.ndarray:
    """Rotate a vector's global phase so its largest entry is real positive.

    The pivot is the first entry within rounding distance of the maximum
    magnitude; constant-modulus beams (steering vectors) would otherwise
    pivot on floating-point noise and flip phase between calls.
    """
    mags = np.abs(v)
    top = mags.max()
    if top == 0:
        return v.copy()
    idx = int(np.argmax(mags >= top * (1.0 - 1e-9)))
    pivot = v[idx]
    return v * (np.abs(pivot) / pivot)


def random_unit_beamformers(n_links: int, k_tx: int, l_rx: int,
                            rng: np.random.Generator):
    """Random unit-norm (w, u) pairs; w phase-canonicalized."""
    def draw(m):
        z = rng.standard_normal((n_links, m)) + 1j * rng.standard_normal((n_links, m))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        return z

    w = draw(k_tx)
    u = draw(l_rx)
    for i in range(n_links):
        w[i] = canonical_phase(w[i])
    return w, u


def rx_covariance(n: int, p: np.ndarray, w_all: np.ndarray,
                  ch: ChannelRealization) -> np.ndarray:
    """Signal-plus-interference-plus-noise covariance at DS n."""
    l_rx = ch.l_rx
    cov = ch.noise_variance[n] * np.eye(l_rx, dtype=complex)
    for i in range(ch.n_links):
        h_w = ch.h[i, n] @ w_all[i]
        cov += p[i] * np.outer(h_w, h_w.conj())
    return cov


def mse_of_filter(n: int, u: np.ndarray, p: np.ndarray, w_all: np.ndarray,
                  ch: ChannelRealization) -> float:
    """Symbol MSE of link n under receive filter u (unit-variance symbols)."""
    cov = rx_covariance(n, p, w_all, ch)
    h_dir = ch.h[n, n] @ w_all[n]
    cross = np.sqrt(p[n]) * np.vdot(u, h_dir)
    return float(np.real(np.vdot(u, cov @ u) - cross - np.conj(cross) + 1.0))


def mmse_rx(n: int, p: np.ndarray, w_all: np.ndarray,
            ch: ChannelRealization) -> np.ndarray:
    """MMSE receive filter for link n at the given powers and Tx vectors."""
    if p[n] <= 0:
        raise ValueError("mmse_rx needs a positive transmit power")
    if ch.noise_variance[n] <= 0:
        raise ValueError("mmse_rx needs positive noise variance for invertibility")
    cov = rx_covariance(n, p, w_all, ch)
    h_dir = ch.h[n, n] @ w_all[n]
    return np.sqrt(p[n]) * np.linalg.solve(cov, h_dir)


def matched_tx(n: int, u_n: np.ndarray, ch: ChannelRealization) -> np.ndarray:
    """Unit transmit vector maximizing |u^H H w| for the direct channel."""
    b = ch.h[n, n].conj().T @ u_n
    norm = np.linalg.norm(b)
    if norm == 0:
        raise ValueError("matched_tx: receive filter orthogonal to the channel")
    return canonical_phase(b / norm)


def local_mse_tx(n: int, p: np.ndarray, u_n: np.ndarray,
                 ch: ChannelRealization) -> np.ndarray:
    """Own-MSE-optimal transmit vector under a power cap, then normalized.

    The MSE quadratic in w is rank one (single stream), so the power-cap
    multiplier equation sum_i g_i/(m_i + lam)^2 = 1 collapses to
    lam = a - P*a^2 with a = ||H^H u||. A negative multiplier means the cap
    is slack; the constrained optimum on the unit sphere is then the matched
    direction, which we fall back to.
    """
    if p[n] <= 0:
        raise ValueError("local_mse_tx needs a positive transmit power")
    b = ch.h[n, n].conj().T @ u_n
    a = np.linalg.norm(b)
    if a == 0:
        raise ValueError("local_mse_tx: receive filter orthogonal to the channel")
    lam = a - p[n] * a * a
    if lam < 0:
        return matched_tx(n, u_n, ch)
    # w = sqrt(P) (P b b^H + lam I)^{-1} b = sqrt(P) b / (P a^2 + lam)
    w = np.sqrt(p[n]) * b / (p[n] * a * a + lam)
    return canonical_phase(w / np.linalg.norm(w))


def local_mse_multiplier(n: int, p: np.ndarray, u_n: np.ndarray,
                         ch: ChannelRealization) -> float:
    """The power-cap multiplier used by local_mse_tx (may be negative)."""
    b = ch.h[n, n].conj().T @ u_n
    a = np.linalg.norm(b)
    return float(a - p[n] * a * a)


def tx_leakage(n: int, p: np.ndarray, w_n: np.ndarray, u_all: np.ndarray,
               ch: ChannelRealization) -> np.ndarray:
    """Interference power link n deposits at every other receiver.

    Entry i is P_n |u_i^H H_{n,i} w_n|^2; entry n is set to 0.
    """
    out = np.zeros(ch.n_links)
    for i in range(ch.n_links):
        if i == n:
            continue
        out[i] = p[n] * np.abs(np.vdot(u_all[i], ch.h[n, i] @ w_n)) ** 2
    return out


_socp_cache = {}


def _mask_socp(dim: int, n_caps: int):
    """Cached parametric cone program: gain maximization under leakage masks.

    Variable x is the unit-ball transmit direction; the objective pushes its
    projection on the direct-channel direction while each cap bounds
    |c_i^H x|. Solved in the span of the constraint vectors, so dim is at
    most 1 + n_caps.
    """
    import cvxpy as cp

    key = (dim, n_caps)
    if key not in _socp_cache:
        x = cp.Variable(dim, complex=True)
        b_par = cp.Parameter(dim, complex=True)
        cons = [cp.norm(x) <= 1.0]
        c_pars, r_pars = [], []
        for _ in range(n_caps):
            c_par = cp.Parameter(dim, complex=True)
            r_par = cp.Parameter(nonneg=True)
            cons.append(cp.abs(cp.conj(c_par) @ x) <= r_par)
            c_pars.append(c_par)
            r_pars.append(r_par)
        objective = cp.Maximize(cp.real(cp.conj(b_par) @ x))
        _socp_cache[key] = (cp.Problem(objective, cons), x, b_par, c_pars,
                            r_pars)
    return _socp_cache[key]


def _recover_multipliers(power, b, cvecs, w):
    """Nonnegative least-squares fit of the Lagrangian-form multipliers.

    Checks that a unit beam w lies in the family
    w ~ (P b b^H + sum_i kap_i P c_i c_i^H + lam I)^{-1} b: the stationarity
    condition is linear in the scaled unknowns (sigma, sigma*kap_i,
    sigma*lam), all nonnegative. Returns (lam, {i: kap_i}, residual) with
    the residual relative to ||sqrt(P) b||.
    """
    from scipy.optimize import nnls

    rhs = np.sqrt(power) * b
    cols = [power * b * (b.conj() @ w)]
    cols += [power * c * (c.conj() @ w) for c in cvecs.values()]
    cols.append(w)
    a = np.stack([np.concatenate([col.real, col.imag]) for col in cols],
                 axis=1)
    y = np.concatenate([rhs.real, rhs.imag])
    coef, resid = nnls(a, y)
    sigma = coef[0]
    if sigma <= 0:
        return 0.0, {i: np.inf for i in cvecs}, float(resid)
    kappa = {i: c / sigma for i, c in zip(cvecs.keys(), coef[1:-1])}
    return float(coef[-1] / sigma), kappa, \
        float(resid / np.linalg.norm(y))


def _solve_mask_socp(problem):
    """Solve with the interior-point solver, falling back to SCS.

    Solver caches are cleared first: the warm-update path requires an
    unchanged sparsity pattern, which parameter values with incidental
    exact zeros do not guarantee.
    """
    import warnings

    problem._solver_cache.clear()
    with warnings.catch_warnings():
        # Inaccurate-solution warnings are redundant: the status check below
        # and the caller's realized-leakage check decide.
        warnings.simplefilter("ignore")
        try:
            problem.solve(solver="CLARABEL", tol_feas=1e-11,
                          tol_gap_abs=1e-11, tol_gap_rel=1e-11)
        except Exception:
            problem._solver_cache.clear()
            try:
                problem.solve(solver="SCS", eps_abs=1e-9, eps_rel=1e-9)
            except Exception as exc:
                raise CoordinationError(f"cone solver failed: {exc}")
    if problem.status not in ("optimal", "optimal_inaccurate"):
        raise CoordinationError(f"cone solver status {problem.status}")


def coordinated_mse_tx(n: int, p: np.ndarray, u_all: np.ndarray,
                       ch: ChannelRealization, budget_row: np.ndarray,
                       feas_tol: float = 1e-8,
                       w_current: np.ndarray = None) -> np.ndarray:
    """Best transmit direction for link n under per-victim leakage caps.

    budget_row[i] caps the realized leakage P_n |u_i^H H_{n,i} w|^2 of the
    returned unit-norm w (np.inf disables a cap; with every cap disabled the
    output reduces to local_mse_tx; a zero budget hard-nulls that victim).

    Because the output is renormalized and the power game re-selects the
    transmit power afterward, the link-MSE criterion reduces to maximizing
    the direct beamforming gain over the unit ball intersected with the
    leakage masks, a small cone program handed to an interior-point solver
    (budgets get 1e-6 relative headroom so solver noise stays inside the
    caps). The solution lies in the Lagrangian family
    w ~ (P b b^H + sum_i kap_i P c_i c_i^H + lam I)^{-1} b with nonnegative
    multipliers satisfying the solver's KKT tolerances; the multipliers are
    recoverable via _recover_multipliers.

    With more victims than spatial dimensions the unit-ball relaxation can
    go interior, and no unit-norm beam improves on the caps; the previous
    beam (w_current, which defined the budgets and therefore meets them) is
    then kept unchanged.

    Raises CoordinationError when the cone solver fails or the caps cannot
    be certified on the output.
    """
    power = float(p[n])
    if power <= 0:
        raise ValueError("coordinated_mse_tx needs a positive transmit power")
    budget_row = np.asarray(budget_row, dtype=float)

    b = ch.h[n, n].conj().T @ u_all[n]
    cvecs = {}
    hard_null = []
    for i in range(ch.n_links):
        if i == n:
            continue
        c = ch.h[n, i].conj().T @ u_all[i]
        if np.linalg.norm(c) == 0.0:
            continue
        if budget_row[i] == 0.0:
            hard_null.append(c)
        elif np.isfinite(budget_row[i]):
            cvecs[i] = c
    if hard_null:
        nullbasis = np.linalg.qr(np.stack(hard_null, axis=1))[0]
        b = b - nullbasis @ (nullbasis.conj().T @ b)
        cvecs = {i: c - nullbasis @ (nullbasis.conj().T @ c)
                 for i, c in cvecs.items()}
    if np.linalg.norm(b) == 0.0:
        raise ValueError("coordinated_mse_tx: no usable direct-channel direction")
    if not cvecs:
        if hard_null:
            return canonical_phase(b / np.linalg.norm(b))
        return local_mse_tx(n, p, u_all[n], ch)

    # If the unconstrained beam already meets every cap, the caps are
    # inactive (kappa = 0) and it is the exact optimum.
    w_free = canonical_phase(b / np.linalg.norm(b))
    realized = tx_leakage(n, p, w_free, u_all, ch)
    if all(realized[i] <= budget_row[i] * (1.0 + feas_tol) for i in cvecs):
        return w_free

    # Work in the span of the constraint vectors with unit-normalized cap
    # directions; raw budgets inherit arbitrarily small Rx-filter norms and
    # would otherwise wreck the problem scaling.
    capped = list(cvecs)
    span = np.stack([b] + [cvecs[i] for i in capped], axis=1)
    basis = np.linalg.qr(span)[0]
    bt = basis.conj().T @ b
    bt_unit = bt / np.linalg.norm(bt)
    cnorm = {i: np.linalg.norm(cvecs[i]) for i in capped}

    problem, var, b_par, c_pars, r_pars = _mask_socp(basis.shape[1],
                                                     len(capped))
    b_par.value = bt_unit
    for c_par, r_par, i in zip(c_pars, r_pars, capped):
        c_par.value = (basis.conj().T @ cvecs[i]) / cnorm[i]
        r_par.value = (np.sqrt(budget_row[i] * (1.0 - 1e-6) / power)
                       / cnorm[i])
    _solve_mask_socp(problem)
    y = np.asarray(var.value)
    ynorm = np.linalg.norm(y)
    if ynorm == 0.0:
        raise CoordinationError("cone solver returned a zero beam")

    v = basis @ y
    if ynorm < 1.0 - 1e-9:
        # Degenerate corner: the direct direction is exhausted by the caps.
        # Top the norm up with a direction orthogonal to every constraint
        # and to the direct channel, which changes no gain and no leakage.
        full = np.concatenate([[b], [cvecs[i] for i in capped]], axis=0)
        _, sing, vh = np.linalg.svd(full)
        null = vh[np.sum(sing > sing.max() * 1e-12):].conj()
        if len(null):
            v = v + null[0] * np.sqrt(max(1.0 - ynorm ** 2, 0.0))
        # else: accept the shorter vector; normalization below rescales it
        # and the realized-cap check decides.

    w = canonical_phase(v / np.linalg.norm(v))
    realized = tx_leakage(n, p, w, u_all, ch)
    bad = {i: realized[i] / budget_row[i] for i in capped
           if realized[i] > budget_row[i] * (1.0 + feas_tol)}
    if not bad:
        return w
    if w_current is not None:
        w_keep = canonical_phase(np.asarray(w_current, dtype=complex))
        realized = tx_leakage(n, p, w_keep, u_all, ch)
        if all(realized[i] <= budget_row[i] * (1.0 + feas_tol)
               for i in capped):
            return w_keep
    raise CoordinationError("leakage caps violated after normalization",
                            last_w=w, residuals=bad)


class DimensionError(ValueError):
    """Not enough antennas to null the required interferers."""


def zf_tx_rx(p: np.ndarray, ch: ChannelRealization, w_init: np.ndarray,
             u_init: np.ndarray, residual_tol: float = 1e-6,
             max_iters: int = 500):
    """Alternating null-space projection for joint Tx/Rx zero forcing.

    Each transmit vector is matched to its direct channel inside the null
    space of the channels toward all other receivers; each receive vector is
    matched inside the null space of all incoming interference. Iterates
    until every cross gain |u_i^H H_{n,i} w_n| falls below residual_tol
    (receive vectors are unit norm). Simplified stand-in baseline, not a
    reproduction of any published ZF scheme.
    """
    n_links = ch.n_links
    k_tx, l_rx = ch.k_tx, ch.l_rx
    if n_links > 1:
        for n in range(n_links):
            if k_tx <= n_links - 1:
                raise DimensionError(
                    f"link {n}: {k_tx} Tx antennas cannot null "
                    f"{n_links - 1} interferers")
            if l_rx <= n_links - 1:
                raise DimensionError(
                    f"link {n}: {l_rx} Rx antennas cannot null "
                    f"{n_links - 1} interferers")

    w = np.array([canonical_phase(v) for v in np.asarray(w_init, dtype=complex)])
    u = np.asarray(u_init, dtype=complex).copy()
    u /= np.linalg.norm(u, axis=1, keepdims=True)

    if n_links == 1:
        # Nothing to null: dominant singular pair of the direct channel.
        left, _, right = np.linalg.svd(ch.h[0, 0])
        w[0] = canonical_phase(right[0].conj())
        u[0] = canonical_phase(left[:, 0])
        return w, u

    def project_out(vec, constraints):
        basis = np.linalg.qr(np.stack(constraints, axis=1))[0]
        return vec - basis @ (basis.conj().T @ vec)

    for _ in range(max_iters):
        for n in range(n_links):
            cons = [ch.h[n, i].conj().T @ u[i] for i in range(n_links) if i != n]
            target = project_out(ch.h[n, n].conj().T @ u[n], cons)
            norm = np.linalg.norm(target)
            if norm < 1e-300:
                raise DimensionError(
                    f"link {n}: direct channel lies in the nulled subspace")
            w[n] = canonical_phase(target / norm)
        for n in range(n_links):
            cons = [ch.h[i, n] @ w[i] for i in range(n_links) if i != n]
            target = project_out(ch.h[n, n] @ w[n], cons)
            norm = np.linalg.norm(target)
            if norm < 1e-300:
                raise DimensionError(
                    f"link {n}: receive space fully consumed by nulling")
            u[n] = canonical_phase(target / norm)
        worst = 0.0
        for n in range(n_links):
            for i in range(n_links):
                if i != n:
                    worst = max(worst, abs(np.vdot(u[i], ch.h[n, i] @ w[n])))
        if worst < residual_tol:
            return w, u

    raise RuntimeError(f"zero forcing did not converge (residual {worst:.2e})")
