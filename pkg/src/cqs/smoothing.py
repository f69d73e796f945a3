"""Local linear conditional quantile estimation on low-dimensional projections.

Fits the intercept/slope pair minimizing a kernel-weighted check loss
around each query point; the intercept estimates the conditional quantile
there.  Also provides the Nadaraya-Watson conditional mean used for
mean-subspace estimation.

The check-loss minimization replaces |u| with sqrt(u^2 + eps^2) and runs
safeguarded Newton steps on the smoothed objective, annealing eps down to
1e-4 * MAD(Y) and then halving it until the exact check-loss objective
stabilizes to 1e-6 relative.  The solver contract is optimality of the
returned minimizer against the exact check-loss objective within 1e-4 *
(1 + |objective|), verifiable with a grid or LP oracle; the particular
algorithm is incidental.  Univariate fits exploit the compact numerical
support of the Gaussian kernel via banded windows over the sorted
projection.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .exceptions import ConfigError, DataError, EstimationError

_SQRT_2PI = np.sqrt(2.0 * np.pi)

# (eps multiple of MAD(Y), Newton iteration cap) from coarse to fine
_EPS_SCHEDULE = ((3e-2, 4), (1e-3, 4), (1e-4, 8))
_POLISH_LEVELS = 1
_POLISH_CAP = 6
_OBJ_TOL_REL = 1e-6
_BACKTRACK_MAX = 16
# kernel weights below exp(-0.5 * _SUPPORT_RADIUS^2) ~ 5e-15 of the peak are
# dropped from univariate windows; irrelevant at the solver tolerance
_SUPPORT_RADIUS = 8.2


def _validate_tau(tau):
    if not 0.0 < float(tau) < 1.0:
        raise ConfigError(f"quantile level must lie in (0, 1), got {tau}")
    return float(tau)


def check_loss(u, tau):
    """Asymmetric absolute loss {tau - I(u < 0)} * u.

    Nonnegative, convex, zero only at u = 0.  Accepts scalars or arrays.
    """
    tau = _validate_tau(tau)
    u = np.asarray(u, dtype=float)
    out = (tau - (u < 0.0)) * u
    return float(out) if out.ndim == 0 else out


def gaussian_kernel_weight(z):
    """Product of standard normal densities over the coordinates of z."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if not np.all(np.isfinite(z)):
        raise DataError("kernel argument must be finite")
    return float(np.prod(np.exp(-0.5 * z * z) / _SQRT_2PI))


def quantile_bandwidth_factor(tau):
    """Multiplier turning a mean-regression bandwidth into a tau-quantile one:
    [tau(1-tau) / phi(Phi^{-1}(tau))^2]^{1/5}."""
    tau = _validate_tau(tau)
    q = norm.ppf(tau)
    return float((tau * (1.0 - tau) / norm.pdf(q) ** 2) ** 0.2)


@dataclass(frozen=True)
class Bandwidth:
    """Kernel bandwidth for a d-dimensional projection.

    ``h`` applies to coordinates pre-scaled by ``scales``; the effective
    per-coordinate width is ``h * scales[j]``.  For d = 1 the sample
    standard deviation is folded into ``h_m`` and ``scales`` stays 1.
    """

    h: float
    h_m: float
    scales: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        if not (self.h > 0.0 and self.h_m > 0.0):
            raise ConfigError(f"bandwidths must be positive, got h={self.h}, h_m={self.h_m}")
        object.__setattr__(self, "scales", np.atleast_1d(np.asarray(self.scales, dtype=float)))

    def widths(self, d):
        """Effective per-coordinate kernel widths for a d-dim projection."""
        scales = self.scales
        if scales.shape[0] == 1 and d > 1:
            scales = np.full(d, scales[0])
        elif scales.shape[0] != d:
            raise ConfigError(
                f"bandwidth carries {scales.shape[0]} coordinate scales, projection has {d}"
            )
        return self.h * scales


@dataclass(frozen=True)
class QuantileFit:
    """Fitted conditional quantiles at every sample point for one tau."""

    fitted: np.ndarray   # (n,)
    slopes: np.ndarray   # (n, d)
    tau: float
    bandwidth: Bandwidth


def _as_matrix(arr):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DataError("projected predictors must form an n x d matrix")
    return arr


def _projected_scales(projected):
    n, d = projected.shape
    if n < 2:
        raise DataError("need at least 2 samples to compute a bandwidth")
    stds = projected.std(axis=0, ddof=1)
    bad = np.flatnonzero(stds <= 0)
    if bad.size:
        raise DataError(f"projected column(s) {bad.tolist()} are constant; bandwidth undefined")
    return stds


def mean_regression_bandwidth(projected):
    """Scott-type base bandwidth for local mean regression on the projection:
    sigma_hat * n^{-1/(4+d)} per coordinate (isotropic after scaling for d > 1)."""
    projected = _as_matrix(projected)
    n, d = projected.shape
    stds = _projected_scales(projected)
    if d == 1:
        h_m = float(stds[0] * n ** (-1.0 / 5.0))
        return Bandwidth(h=h_m, h_m=h_m, scales=np.ones(1))
    base = float(n ** (-1.0 / (4.0 + d)))
    return Bandwidth(h=base, h_m=base, scales=stds)


def rule_of_thumb_bandwidth(projected, tau):
    """Quantile-regression bandwidth: the mean-regression base bandwidth
    times the tau-dependent factor.  Symmetric in tau about 0.5."""
    tau = _validate_tau(tau)
    base = mean_regression_bandwidth(_as_matrix(projected))
    return Bandwidth(h=base.h_m * quantile_bandwidth_factor(tau), h_m=base.h_m,
                     scales=base.scales)


def _as_bandwidth(h, d):
    if isinstance(h, Bandwidth):
        return h
    h = float(h)
    return Bandwidth(h=h, h_m=h, scales=np.ones(d))


def _residual_scale(y):
    med = np.median(y)
    mad = np.median(np.abs(y - med))
    return mad if mad > 0 else 1e-6 * (1.0 + abs(med))


def _smoothed_objective(w, u, tau, e2):
    return np.einsum("mk->m", w * ((tau - 0.5) * u + 0.5 * np.sqrt(u * u + e2)))


def _exact_objective(w, u, tau):
    return np.sum(w * (tau - (u < 0.0)) * u, axis=1)


class _NewtonCore:
    """Safeguarded Newton on the smoothed check loss, batched over query rows.

    Subclasses supply residuals, gradients, Hessian solves and state
    bookkeeping for the univariate (banded) and multivariate layouts.
    """

    def __init__(self, y_scale, y_range, tau):
        self.scale = y_scale
        self.tau = tau
        self.clip = max(y_range, 1.0 + y_scale)

    @staticmethod
    def get_rows(theta, idx):
        return theta.copy() if idx is None else theta[idx]

    @staticmethod
    def set_rows(theta, idx, values):
        if idx is None:
            theta[:] = values
        else:
            theta[idx] = values

    def run(self):
        theta = self.init_theta()
        for lev, cap in _EPS_SCHEDULE:
            eps = lev * self.scale
            theta = self._level(theta, eps, cap)
        prev = self.exact_objective(theta)
        for _ in range(_POLISH_LEVELS):
            eps *= 0.5
            theta = self._level(theta, eps, _POLISH_CAP)
            obj = self.exact_objective(theta)
            if np.max(np.abs(obj - prev) / (1.0 + np.abs(obj))) < _OBJ_TOL_REL:
                break
            prev = obj
        return theta

    def _level(self, theta, eps, cap):
        e2 = eps * eps
        idx = None                       # None means all rows active
        state = self.make_state(theta, idx)
        f = self.smoothed_objective(state, theta, idx, e2)
        for _ in range(cap):
            m = len(f)
            d_step, g_t_d = self.newton_step(state, theta, idx, e2)
            dmax = np.max(np.abs(d_step), axis=1)
            alpha = np.minimum(1.0, self.clip / np.maximum(dmax, 1e-300))
            fn = f.copy()
            pend = np.arange(m)
            accepted_theta = self.get_rows(theta, idx)
            for _ in range(_BACKTRACK_MAX):
                trial = accepted_theta[pend] + alpha[pend, None] * d_step[pend]
                ft = self.smoothed_objective_rows(state, trial, idx, pend, e2)
                ok = ft <= f[pend] + 1e-4 * alpha[pend] * g_t_d[pend]
                okrows = pend[ok]
                accepted_theta[okrows] = trial[ok]
                fn[okrows] = ft[ok]
                alpha[pend[~ok]] *= 0.5
                pend = pend[~ok]
                if pend.size == 0:
                    break
            if pend.size:
                alpha[pend] = 0.0        # no descent; keep previous iterate
            self.set_rows(theta, idx, accepted_theta)
            f = fn
            active = alpha * dmax >= 1e-9 * (1.0 + self.scale)
            nact = int(active.sum())
            if nact == 0:
                break
            if nact < 0.9 * m:
                keep = np.flatnonzero(active)
                idx = keep if idx is None else idx[keep]
                state = self.make_state(theta, idx)
                f = f[keep]
        return theta


class _Newton1D(_NewtonCore):
    """Univariate layout: per-row windows tw/yw around each query point."""

    def __init__(self, dt, w, yw, y_scale, y_range, tau):
        super().__init__(y_scale, y_range, tau)
        self.dt, self.w, self.yw = dt, w, yw
        self.dt2 = dt * dt
        self.c = None

    def init_theta(self):
        w, dt, dt2, yw = self.w, self.dt, self.dt2, self.yw
        s0 = w.sum(1)
        s1 = np.einsum("mk,mk->m", w, dt)
        s2 = np.einsum("mk,mk->m", w, dt2)
        wy = w * yw
        b0 = wy.sum(1)
        b1 = np.einsum("mk,mk->m", wy, dt)
        det = s0 * s2 - s1 * s1
        bad = ~(np.abs(det) > 0)
        if np.any(bad):
            raise EstimationError(
                f"degenerate local design at query point(s) {np.flatnonzero(bad).tolist()}"
            )
        return np.column_stack([(s2 * b0 - s1 * b1) / det, (s0 * b1 - s1 * b0) / det])

    def make_state(self, theta, idx):
        if idx is None:
            return self.dt, self.dt2, self.w, self.yw
        return self.dt[idx], self.dt2[idx], self.w[idx], self.yw[idx]

    def _residual(self, state, th):
        dt, _, _, yw = state
        return yw - th[:, 0][:, None] - th[:, 1][:, None] * dt

    def smoothed_objective(self, state, theta, idx, e2):
        u = self._residual(state, self.get_rows(theta, idx))
        return _smoothed_objective(state[2], u, self.tau, e2)

    def smoothed_objective_rows(self, state, trial, idx, pend, e2):
        dt, _, w, yw = state
        u = yw[pend] - trial[:, 0][:, None] - trial[:, 1][:, None] * dt[pend]
        return _smoothed_objective(w[pend], u, self.tau, e2)

    def newton_step(self, state, theta, idx, e2):
        dt, dt2, w, _ = state
        th = self.get_rows(theta, idx)
        u = self._residual(state, th)
        r = np.sqrt(u * u + e2)
        wpsi = w * ((self.tau - 0.5) + u / (2.0 * r))
        g0 = -wpsi.sum(1)
        g1 = -np.einsum("mk,mk->m", wpsi, dt)
        np.multiply(r, r * r, out=r)
        hh = w * (e2 / (2.0 * r))
        h00 = hh.sum(1)
        h01 = np.einsum("mk,mk->m", hh, dt)
        h11 = np.einsum("mk,mk->m", hh, dt2)
        det = np.maximum(h00 * h11 - h01 * h01, 1e-300)
        d0 = -(h11 * g0 - h01 * g1) / det
        d1 = -(-h01 * g0 + h00 * g1) / det
        return np.column_stack([d0, d1]), g0 * d0 + g1 * d1

    def exact_objective(self, theta):
        u = self._residual((self.dt, self.dt2, self.w, self.yw), theta)
        return _exact_objective(self.w, u, self.tau)


class _NewtonND(_NewtonCore):
    """Multivariate layout: full design tensor x = [1, diffs] per row."""

    def __init__(self, diffs, w, y, y_scale, y_range, tau):
        super().__init__(y_scale, y_range, tau)
        m, n, d = diffs.shape
        self.x = np.concatenate([np.ones((m, n, 1)), diffs], axis=2)
        self.w, self.y = w, y

    def init_theta(self):
        a = np.einsum("mk,mki,mkj->mij", self.w, self.x, self.x)
        b = np.einsum("mk,k,mki->mi", self.w, self.y, self.x)
        try:
            return np.linalg.solve(a, b[..., None])[..., 0]
        except np.linalg.LinAlgError:
            raise EstimationError("degenerate local design in multivariate quantile fit")

    def make_state(self, theta, idx):
        if idx is None:
            return self.x, self.w
        return self.x[idx], self.w[idx]

    def _residual(self, state, th):
        return self.y[None, :] - np.einsum("mki,mi->mk", state[0], th)

    def smoothed_objective(self, state, theta, idx, e2):
        u = self._residual(state, self.get_rows(theta, idx))
        return _smoothed_objective(state[1], u, self.tau, e2)

    def smoothed_objective_rows(self, state, trial, idx, pend, e2):
        x, w = state
        u = self.y[None, :] - np.einsum("mki,mi->mk", x[pend], trial)
        return _smoothed_objective(w[pend], u, self.tau, e2)

    def newton_step(self, state, theta, idx, e2):
        x, w = state
        th = self.get_rows(theta, idx)
        u = self._residual(state, th)
        r = np.sqrt(u * u + e2)
        wpsi = w * ((self.tau - 0.5) + u / (2.0 * r))
        g = -np.einsum("mk,mki->mi", wpsi, x)
        hh = w * (e2 / (2.0 * r * r * r))
        hess = np.einsum("mk,mki,mkj->mij", hh, x, x)
        p1 = hess.shape[1]
        hess[:, np.arange(p1), np.arange(p1)] += 1e-300
        try:
            d_step = np.linalg.solve(hess, -g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            raise EstimationError("singular Hessian in multivariate quantile fit")
        return d_step, np.einsum("mi,mi->m", g, d_step)

    def exact_objective(self, theta):
        u = self._residual((self.x, self.w), theta)
        return _exact_objective(self.w, u, self.tau)


def _gaussian_w(z):
    return np.exp(-0.5 * z * z) / _SQRT_2PI


def _effective_sample_guard(w, d):
    """Row indices whose effective sample size falls below d + 2."""
    wmax = w.max(axis=1)
    with np.errstate(invalid="ignore"):
        ess = np.where(wmax > 0, w.sum(axis=1) / np.where(wmax > 0, wmax, 1.0), 0.0)
    return np.flatnonzero(ess < d + 2)


def _solve_1d(t, y, queries, tau, width):
    """Banded univariate solve: window each query over the sorted projection."""
    n = t.shape[0]
    m = queries.shape[0]
    order = np.argsort(t, kind="stable")
    ts, ys = t[order], y[order]
    widths = np.full(m, width)
    radius = _SUPPORT_RADIUS * width

    def window(rows_q, rows_width):
        lo = np.searchsorted(ts, rows_q - _SUPPORT_RADIUS * rows_width, side="left")
        hi = np.searchsorted(ts, rows_q + _SUPPORT_RADIUS * rows_width, side="right")
        b = min(max(int(np.max(hi - lo)), 2), n)
        lo = np.clip(lo, 0, n - b)
        cols = lo[:, None] + np.arange(b)
        tw = ts[cols]
        dt = tw - rows_q[:, None]
        w = _gaussian_w(dt / rows_width[:, None])
        return dt, w, ys[cols]

    dt, w, yw = window(queries, widths)
    # double starved rows' bandwidths (up to 5 times) before giving up
    for _ in range(5):
        starved = _effective_sample_guard(w, 1)
        if starved.size == 0:
            break
        widths[starved] *= 2.0
        dts, wss, yws = window(queries[starved], widths[starved])
        if dts.shape[1] > dt.shape[1]:     # widen all windows to the new band
            dt, w, yw = window(queries, widths)
        else:
            pad = dt.shape[1] - dts.shape[1]
            if pad:
                dts = np.pad(dts, ((0, 0), (0, pad)), constant_values=radius * 100)
                wss = np.pad(wss, ((0, 0), (0, pad)))
                yws = np.pad(yws, ((0, 0), (0, pad)))
            dt[starved], w[starved], yw[starved] = dts, wss, yws
    starved = _effective_sample_guard(w, 1)
    if starved.size:
        raise EstimationError(
            "bandwidth too small: no effective sample at query point(s) "
            f"{starved.tolist()} after 5 bandwidth doublings"
        )
    core = _Newton1D(dt, w, yw, _residual_scale(y), float(np.ptp(y)), tau)
    theta = core.run()
    return theta[:, 0], theta[:, 1:]


def _solve_nd(projected, y, queries, tau, widths, d):
    diffs = projected[None, :, :] - queries[:, None, :]
    z = diffs / widths
    w = np.exp(-0.5 * np.einsum("mnd,mnd->mn", z, z)) / _SQRT_2PI ** d
    for _ in range(5):
        starved = _effective_sample_guard(w, d)
        if starved.size == 0:
            break
        widths = 2.0 * widths
        z = diffs[starved] / widths
        w[starved] = np.exp(-0.5 * np.einsum("mnd,mnd->mn", z, z)) / _SQRT_2PI ** d
    starved = _effective_sample_guard(w, d)
    if starved.size:
        raise EstimationError(
            "bandwidth too small: no effective sample at query point(s) "
            f"{starved.tolist()} after 5 bandwidth doublings"
        )
    core = _NewtonND(diffs, w, y, _residual_scale(y), float(np.ptp(y)), tau)
    theta = core.run()
    return theta[:, 0], theta[:, 1:]


def _prepare(projected, y, queries, h):
    projected = _as_matrix(projected)
    y = np.asarray(y, dtype=float).ravel()
    n, d = projected.shape
    if y.shape[0] != n:
        raise DataError(f"response length {y.shape[0]} != sample size {n}")
    if not (np.all(np.isfinite(projected)) and np.all(np.isfinite(y))):
        raise DataError("projected predictors and response must be finite")
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if queries.shape[1] != d:
        raise DataError(f"query dimension {queries.shape[1]} != projection dimension {d}")
    bw = _as_bandwidth(h, d)
    return projected, y, queries, bw.widths(d), d, bw


def _fit_batch(projected, y, queries, tau, h):
    projected, y, queries, widths, d, bw = _prepare(projected, y, queries, h)
    if d == 1:
        q, s = _solve_1d(projected[:, 0], y, queries[:, 0], tau, float(widths[0]))
    else:
        q, s = _solve_nd(projected, y, queries, tau, widths, d)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(s))):
        raise EstimationError(
            f"non-finite quantile fit at query point(s) {np.flatnonzero(~np.isfinite(q)).tolist()}"
        )
    return q, s, bw


def local_linear_quantile(projected, y, at, tau, h):
    """Minimize the kernel-weighted check loss in (q, s) around ``at``.

    Parameters
    ----------
    projected : (n, d) array of projected predictors.
    y : (n,) response.
    at : length-d query point.
    tau : quantile level in (0, 1).
    h : Bandwidth or positive float.

    Returns
    -------
    (q, s) : fitted conditional tau-quantile at ``at`` and the local slope.
    """
    tau = _validate_tau(tau)
    at = np.atleast_1d(np.asarray(at, dtype=float))
    q, s, _ = _fit_batch(projected, y, at[None, :], tau, h)
    return float(q[0]), s[0]


def fit_all_quantiles(projected, y, tau, h=None):
    """Local linear tau-quantile fit at every sample point (leave-self-in).

    ``h=None`` selects the rule-of-thumb bandwidth from the projection.
    """
    tau = _validate_tau(tau)
    projected = _as_matrix(projected)
    if h is None:
        h = rule_of_thumb_bandwidth(projected, tau)
    q, s, bw = _fit_batch(projected, y, projected, tau, h)
    return QuantileFit(fitted=q, slopes=s, tau=tau, bandwidth=bw)


def nadaraya_watson_mean(projected, y, at, h):
    """Kernel-weighted average sum_k Y_k K_k / sum_k K_k at ``at``."""
    at = np.atleast_1d(np.asarray(at, dtype=float))
    projected, y, queries, widths, d, _ = _prepare(projected, y, at[None, :], h)
    z = (projected[None, :, :] - queries[:, None, :]) / widths
    w = np.exp(-0.5 * np.einsum("mnd,mnd->mn", z, z))[0]
    total = w.sum()
    if total <= 0.0:
        raise EstimationError("bandwidth too small: all kernel weights vanish at the query point")
    return float(w @ y / total)


def fit_all_means(projected, y, h=None):
    """Nadaraya-Watson conditional mean at every sample point."""
    projected = _as_matrix(projected)
    if h is None:
        h = mean_regression_bandwidth(projected)
    projected, y, queries, widths, d, _ = _prepare(projected, y, projected, h)
    diffs = projected[None, :, :] - queries[:, None, :]
    z = diffs / widths
    w = np.exp(-0.5 * np.einsum("mnd,mnd->mn", z, z))
    for _ in range(5):
        starved = _effective_sample_guard(w, 0)
        if starved.size == 0:
            break
        widths = 2.0 * widths
        z = diffs[starved] / widths
        w[starved] = np.exp(-0.5 * np.einsum("mnd,mnd->mn", z, z))
    return w @ y / w.sum(axis=1)
