"""VAR(p) model utilities: panel containers, companion-form stationarity
checks, data generation for synthetic experiments, lag-matrix construction,
and one-step forecasting.

A stacked coefficient matrix A is (d, p*d): horizontally concatenated lag
blocks [A_1 | A_2 | ... | A_p], so y_t = A_1 y_{t-1} + ... + A_p y_{t-p} + e_t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .matops import check_matrix, svd_truncate


@dataclass(frozen=True)
class TimeSeriesPanel:
    """One client's observed series.

    presample : (p, d) rows used only to form lagged regressors
    observations : (t_len, d) rows entering the loss / evaluation
    """

    presample: np.ndarray
    observations: np.ndarray
    client_id: str = ""

    def __post_init__(self):
        pre = check_matrix(self.presample, "presample")
        obs = check_matrix(self.observations, "observations")
        if pre.shape[1] != obs.shape[1]:
            raise ValueError(
                f"presample has {pre.shape[1]} columns, observations "
                f"{obs.shape[1]}"
            )
        if obs.shape[0] < 1:
            raise ValueError("panel needs at least one observation")
        object.__setattr__(self, "presample", pre)
        object.__setattr__(self, "observations", obs)

    @property
    def d(self):
        return self.observations.shape[1]

    @property
    def p(self):
        return self.presample.shape[0]

    @property
    def t_len(self):
        return self.observations.shape[0]

    def prefix(self, t_len):
        """Panel truncated to its first ``t_len`` observations."""
        if not 1 <= t_len <= self.t_len:
            raise ValueError(f"prefix length {t_len} outside [1, {self.t_len}]")
        return TimeSeriesPanel(
            presample=self.presample,
            observations=self.observations[:t_len],
            client_id=self.client_id,
        )


@dataclass(frozen=True)
class CoefDecomposition:
    """Fitted pair (shared part a0, client deviation delta), both (d, p*d)."""

    a0: np.ndarray
    delta: np.ndarray
    rank: int

    def __post_init__(self):
        a0 = check_matrix(self.a0, "a0")
        delta = check_matrix(self.delta, "delta")
        if a0.shape != delta.shape:
            raise ValueError(f"a0 shape {a0.shape} != delta shape {delta.shape}")
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "delta", delta)

    @property
    def a(self):
        return self.a0 + self.delta


@dataclass(frozen=True)
class LagDesign:
    """Regression view of a panel: y rows are observations, x rows are
    the stacked lags [y_{t-1}, ..., y_{t-p}]."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = check_matrix(self.x, "x")
        y = check_matrix(self.y, "y")
        if x.shape[0] != y.shape[0]:
            raise ValueError("x and y must have equal row counts")
        if x.shape[1] % y.shape[1] != 0:
            raise ValueError("x width must be a multiple of y width")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def t_len(self):
        return self.y.shape[0]

    @property
    def d(self):
        return self.y.shape[1]

    @property
    def pd(self):
        return self.x.shape[1]


def _check_stacked(a, p):
    a = check_matrix(a, "coefficients")
    d = a.shape[0]
    if p < 1 or a.shape[1] != p * d:
        raise ValueError(
            f"stacked coefficients must be (d, p*d); got {a.shape} with p={p}"
        )
    return a, d


def lag_blocks(a, p):
    """Split a stacked (d, p*d) matrix into its p lag blocks."""
    a, d = _check_stacked(a, p)
    return [a[:, j * d : (j + 1) * d] for j in range(p)]


def companion_matrix(a, p):
    """The (p*d, p*d) companion form of a stacked coefficient matrix."""
    a, d = _check_stacked(a, p)
    comp = np.zeros((p * d, p * d))
    comp[:d, :] = a
    if p > 1:
        comp[d:, : (p - 1) * d] = np.eye((p - 1) * d)
    return comp


def companion_spectral_radius(a, p):
    """Spectral radius of the companion matrix; < 1 means stationary."""
    comp = companion_matrix(a, p)
    try:
        eig = np.linalg.eigvals(comp)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            f"eigenvalue computation failed on companion matrix: {exc}"
        ) from exc
    return float(np.max(np.abs(eig)))


def scale_lag_blocks(a, p, c):
    """Scale lag block j by c**j.  Under this scaling the companion
    spectral radius scales exactly linearly in c."""
    blocks = lag_blocks(a, p)
    return np.hstack([(c ** (j + 1)) * blk for j, blk in enumerate(blocks)])


def enforce_stationarity(a, p, target_radius=0.9):
    """Rescale lag blocks so the companion spectral radius equals the target.

    Scaling block j by c**j is a similarity transform of c times the
    companion matrix, so the radius after scaling is exactly c * radius.
    The required c = target_radius / radius is therefore closed form.
    A zero coefficient matrix (radius 0) is returned unchanged.
    """
    if target_radius <= 0 or target_radius >= 1:
        raise ValueError("target_radius must lie in (0, 1)")
    radius = companion_spectral_radius(a, p)
    if radius == 0.0:
        return check_matrix(a).copy()
    return scale_lag_blocks(a, p, target_radius / radius)


def gen_low_rank(d, p, r, rng):
    """Rank-r truncation of a (d, p*d) standard Gaussian draw."""
    if not 1 <= r <= min(d, p * d):
        raise ValueError(f"rank r={r} outside [1, {min(d, p * d)}]")
    g = rng.standard_normal((d, p * d))
    out, _ = svd_truncate(g, r)
    return out


def gen_weak_sparse(d, p, q, s_q, rng):
    """Gaussian (d, p*d) draw rescaled into the lq ball sum |x|^q <= s_q."""
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    if s_q <= 0:
        raise ValueError("s_q must be positive")
    g = rng.standard_normal((d, p * d))
    total = float(np.sum(np.abs(g) ** q))
    if total > s_q:
        g = g * (s_q / total) ** (1.0 / q)
    return g


def assemble_dgp(
    d,
    p,
    r,
    k_clients,
    rng,
    q=0.1,
    s_q=10.0,
    ratio=5.0,
    target_radius=0.9,
):
    """Draw a shared low-rank matrix and client deviations, jointly rescaled.

    Steps: a0 is a rank-r Gaussian truncation; each delta_k is a weak-sparse
    Gaussian draw rescaled so that ||a0||_F : ||delta_k||_F = ratio : 1
    (ratio None means all deltas are exactly zero); finally one common
    factor is applied to every lag block so the largest client spectral
    radius equals target_radius.  A common factor keeps a0 shared across
    clients after the rescale.

    Returns (a0, [delta_1, ..., delta_K]).
    """
    if k_clients < 1:
        raise ValueError("k_clients must be >= 1")
    a0 = gen_low_rank(d, p, r, rng)
    if ratio is None:
        deltas = [np.zeros((d, p * d)) for _ in range(k_clients)]
    else:
        if ratio <= 0:
            raise ValueError("ratio must be positive (or None for no deltas)")
        a0_fro = np.linalg.norm(a0)
        deltas = []
        for _ in range(k_clients):
            dk = gen_weak_sparse(d, p, q, s_q, rng)
            dk_fro = np.linalg.norm(dk)
            if dk_fro == 0.0:
                raise ValueError("degenerate zero deviation draw")
            deltas.append(dk * (a0_fro / ratio / dk_fro))
    radii = [companion_spectral_radius(a0 + dk, p) for dk in deltas]
    max_radius = max(radii)
    if max_radius == 0.0:
        return a0, deltas
    c = target_radius / max_radius
    a0 = scale_lag_blocks(a0, p, c)
    deltas = [scale_lag_blocks(dk, p, c) for dk in deltas]
    return a0, deltas


def simulate(a, p, t_len, rng, burn_in=200, noise_chol=None, client_id=""):
    """Simulate a stationary VAR(p) path started from a zero state.

    Parameters
    ----------
    a : (d, p*d) stacked coefficients, companion radius must be < 1
    t_len : number of retained observations after the presample
    rng : numpy Generator; exactly (burn_in + p + t_len) innovation rows
        are drawn, so equal seeds replay the identical path
    burn_in : discarded initial steps before the presample
    noise_chol : optional (d, d) factor L; innovations are L @ z with z
        standard normal (identity covariance when omitted)
    """
    a, d = _check_stacked(a, p)
    if t_len < 1:
        raise ValueError("t_len must be >= 1")
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    radius = companion_spectral_radius(a, p)
    if radius >= 1.0:
        raise ValueError(
            f"non-stationary coefficients (companion radius {radius:.4f})"
        )
    total = burn_in + p + t_len
    eps = rng.standard_normal((total, d))
    if noise_chol is not None:
        noise_chol = check_matrix(noise_chol, "noise_chol")
        if noise_chol.shape != (d, d):
            raise ValueError(f"noise_chol must be ({d}, {d})")
        eps = eps @ noise_chol.T
    blocks = lag_blocks(a, p)
    y = np.zeros((total, d))
    for t in range(total):
        acc = eps[t].copy()
        for j, blk in enumerate(blocks):
            s = t - j - 1
            if s >= 0:
                acc += blk @ y[s]
        y[t] = acc
    return TimeSeriesPanel(
        presample=y[burn_in : burn_in + p],
        observations=y[burn_in + p :],
        client_id=client_id,
    )


def lag_design(panel):
    """Stack lagged regressors: row t of x is [y_{t-1}, ..., y_{t-p}]."""
    p, t_len = panel.p, panel.t_len
    if p < 1:
        raise ValueError("panel needs a presample of at least one row")
    full = np.vstack([panel.presample, panel.observations])
    cols = [full[p - j : p - j + t_len] for j in range(1, p + 1)]
    return LagDesign(x=np.hstack(cols), y=panel.observations.copy())


def forecast_one_step(a, recent):
    """One-step-ahead point forecast from the last p observations.

    ``recent`` rows are ordered oldest to newest, matching panel layout;
    the most recent observation is recent[-1].
    """
    recent = check_matrix(recent, "recent")
    p = recent.shape[0]
    a, d = _check_stacked(a, p)
    if recent.shape[1] != d:
        raise ValueError(f"recent must have {d} columns")
    x = np.concatenate([recent[p - j] for j in range(1, p + 1)])
    return a @ x
