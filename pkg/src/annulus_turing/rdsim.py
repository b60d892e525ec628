"""Time integration of the deviation system on a polar grid.

Fields live on ``r_i = 1 + i dr`` (``i = 0..N_r-1``, walls included) times a
uniform periodic ``theta`` grid. The Laplacian is diagonal in the angular
Fourier index ``m``; radially it is the usual second-order central stencil
with mirror ghost points at the walls (zero normal derivative).

Three time steppers are available:

``"euler"``
    backward Euler on diffusion, forward Euler on the whole reaction;
``"cnab2"``
    Crank-Nicolson on diffusion, second-order Adams-Bashforth on the reaction;
``"linear-implicit"``
    backward Euler on the full linear operator (diffusion plus linearised
    reaction), forward Euler on the nonlinear remainder only. Its fixed points
    are those of the spatially discrete system and it stays stable for the
    oscillatory uniform mode, so it is the default for growth and amplitude
    measurements.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import linstab
from .errors import BlowUp, NonlinearContamination, SolveFailed

BLOWUP = 1e6
SCHEMES = ("euler", "cnab2", "linear-implicit")
EXPLICIT_LIMIT = 0.5


@dataclass(frozen=True, eq=False)
class Grid:
    N_r: int
    N_theta: int
    delta: float

    def __post_init__(self):
        if int(self.N_r) != self.N_r or self.N_r < 16:
            raise ValueError(f"N_r must be an integer >= 16, got {self.N_r}")
        if int(self.N_theta) != self.N_theta or self.N_theta < 32 or self.N_theta % 2:
            raise ValueError(f"N_theta must be an even integer >= 32, got {self.N_theta}")
        if not self.delta > 1:
            raise ValueError("delta must exceed 1")

    @property
    def dr(self):
        return (self.delta - 1.0) / (self.N_r - 1)

    @property
    def r(self):
        return 1.0 + self.dr * np.arange(self.N_r)

    @property
    def theta(self):
        return 2.0 * np.pi * np.arange(self.N_theta) / self.N_theta

    @property
    def n_modes(self):
        return self.N_theta // 2 + 1

    @property
    def key(self):
        return (self.N_r, self.N_theta, float(self.delta))

    def area_weights(self):
        """Trapezoid weights for ``int f r dr dtheta`` on the grid, shape ``(N_r, 1)``."""
        w = np.full(self.N_r, self.dr)
        w[0] = w[-1] = 0.5 * self.dr
        return (w * self.r * (2.0 * np.pi / self.N_theta))[:, None]


@dataclass
class Field:
    """Deviation fields ``u, v`` of shape ``(N_r, N_theta)``."""

    u: np.ndarray
    v: np.ndarray
    params: linstab.ModelParams
    grid: Grid
    time: float = 0.0

    def copy(self):
        return replace(self, u=self.u.copy(), v=self.v.copy())

    def is_finite(self):
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v)))

    def max_abs(self):
        return float(max(np.max(np.abs(self.u)), np.max(np.abs(self.v))))

    def l2_norm(self):
        w = self.grid.area_weights()
        return float(math.sqrt(np.sum(w * (self.u ** 2 + self.v ** 2))))


def make_grid(params, N_r=33, N_theta=64):
    """Zero field on an ``N_r x N_theta`` polar grid; ``params.lam`` must be set."""
    params.require_lambda()
    if not math.isclose(params.delta, float(params.delta)):
        raise ValueError("bad delta")
    grid = Grid(int(N_r), int(N_theta), float(params.delta))
    z = np.zeros((grid.N_r, grid.N_theta))
    return Field(u=z, v=z.copy(), params=params, grid=grid)


# -- spatial operators ---------------------------------------------------------

def radial_stencil(grid, m):
    """Sub-, main- and super-diagonals of the radial operator for angular index ``m``.

    ``m`` may be an array; the result then has shape ``(len(m), N_r)``.
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    r, h = grid.r, grid.dr
    lo = np.broadcast_to(1.0 / h ** 2 - 1.0 / (2.0 * r * h), (len(m), grid.N_r)).copy()
    up = np.broadcast_to(1.0 / h ** 2 + 1.0 / (2.0 * r * h), (len(m), grid.N_r)).copy()
    main = -2.0 / h ** 2 - (m[:, None] ** 2) / r[None, :] ** 2
    # mirror ghosts f[-1] = f[1], f[N] = f[N-2]
    up[:, 0] = 2.0 / h ** 2
    lo[:, -1] = 2.0 / h ** 2
    lo[:, 0] = 0.0
    up[:, -1] = 0.0
    return lo, main, up


def radial_operator(grid, m):
    """Dense ``N_r x N_r`` matrix of the radial Laplacian at angular index ``m``."""
    lo, main, up = (x[0] for x in radial_stencil(grid, m))
    return np.diag(main) + np.diag(lo[1:], -1) + np.diag(up[:-1], 1)


def _apply_stencil(stencil, X):
    lo, main, up = stencil
    Y = main * X
    Y[:, 1:] += lo[:, 1:] * X[:, :-1]
    Y[:, :-1] += up[:, :-1] * X[:, 1:]
    return Y


def laplacian(grid, f):
    """Polar Laplacian of a real grid function ``f`` of shape ``(N_r, N_theta)``."""
    fh = np.fft.rfft(f, axis=1).T
    st = radial_stencil(grid, np.arange(grid.n_modes))
    return np.fft.irfft(_apply_stencil(st, fh).T, n=grid.N_theta, axis=1)


def nonlinear_terms(params, u, v):
    g2, g12, g3 = linstab.gamma_coeffs(params)
    return g2 * u * u + g12 * u * v + g3 * u * u * v


def reaction(params, u, v):
    """Linearised reaction plus ``(+g, -g)``."""
    J = linstab.reaction_jacobian(params)
    g = nonlinear_terms(params, u, v)
    return J[0, 0] * u + J[0, 1] * v + g, J[1, 0] * u + J[1, 1] * v - g


def apply_operator(field):
    """Full right-hand side ``(du/dt, dv/dt)`` of the deviation system."""
    p, grid = field.params, field.grid
    fu, fv = reaction(p, field.u, field.v)
    return laplacian(grid, field.u) + fu, p.d * laplacian(grid, field.v) + fv


def wall_residual(field):
    """Largest one-sided second-order normal derivative at either wall."""
    h = field.grid.dr
    out = 0.0
    for f in (field.u, field.v):
        inner = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
        outer = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
        out = max(out, float(np.max(np.abs(inner))), float(np.max(np.abs(outer))))
    return out


# -- discrete spectrum ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteModes:
    """Spectrum of ``-L_m``: ascending eigenvalues, right and left eigenvectors (columns)."""

    m: int
    eigs: np.ndarray
    right: np.ndarray
    left: np.ndarray


def discrete_modes(grid, m):
    L = radial_operator(grid, m)
    w, vl, vr = scipy.linalg.eig(-L, left=True, right=True)
    order = np.argsort(w.real)
    w, vl, vr = w.real[order], vl.real[:, order], vr.real[:, order]
    for k in range(len(w)):
        vr[:, k] /= np.max(np.abs(vr[:, k]))
        if vr[0, k] < 0:
            vr[:, k] = -vr[:, k]
        vl[:, k] /= vl[:, k] @ vr[:, k]
    if m == 0:
        w[0] = 0.0
    return DiscreteModes(m=int(m), eigs=w, right=vr, left=vl)


def discrete_eig(grid, n, j):
    """``j``-th smallest eigenvalue of ``-L_n`` on the grid (``j`` from 1)."""
    return float(discrete_modes(grid, n).eigs[j - 1])


def discrete_beta(params, grid, n, j, branch=2):
    """Growth rate of the discrete operator for mode ``(n, j)``."""
    return linstab.dispersion(params, discrete_eig(grid, n, j)).beta(branch)


def eigenfield(params, grid, n, j, branch=2, amplitude=1.0, phase=0.0):
    """Eigenfield of the discrete linear operator with angular factor ``cos(n(theta - phase))``.

    For a complex growth rate the real part of the complex eigenvector is
    seeded. Returns ``(Field, projector)``; ``projector(field)`` is the complex
    modal coefficient, whose modulus evolves as ``exp(Re(beta) t)``.
    """
    dm = discrete_modes(grid, n)
    mu = dm.eigs[j - 1]
    pair = linstab.dispersion(params, mu, branch=branch)
    beta = pair.beta(branch)
    xi = np.array(pair.amps(branch))
    phi = dm.right[:, j - 1]
    shape = np.outer(phi, np.cos(n * (grid.theta - phase)))
    f = Field(u=amplitude * xi[0].real * shape, v=amplitude * xi[1].real * shape,
              params=params, grid=grid)
    M = linstab.linear_matrix(params, mu)
    eta = np.array([M[1, 0], beta - M[0, 0]])
    eta = eta / (eta @ xi)
    ell = dm.left[:, j - 1]
    ang_norm = 1.0 if n == 0 else 0.5
    rot = np.exp(1j * n * phase)

    def project(fld):
        uh = (np.fft.rfft(fld.u, axis=1)[:, n] * rot).real / (grid.N_theta * ang_norm)
        vh = (np.fft.rfft(fld.v, axis=1)[:, n] * rot).real / (grid.N_theta * ang_norm)
        c = eta[0] * (ell @ uh) + eta[1] * (ell @ vh)
        return complex(c) if np.iscomplexobj(c) else complex(c, 0.0)

    return f, project


# -- time stepping -------------------------------------------------------------

def _thomas_factor(lo, main, up):
    M, N = main.shape
    cp = np.empty((M, N))
    den = np.empty((M, N))
    den[:, 0] = main[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        cp[:, 0] = up[:, 0] / den[:, 0]
        for i in range(1, N):
            den[:, i] = main[:, i] - lo[:, i] * cp[:, i - 1]
            cp[:, i] = up[:, i] / den[:, i]
    if not np.all(np.isfinite(den)) or np.any(den == 0):
        raise SolveFailed("tridiagonal factorisation broke down")
    return lo, cp, den


def _thomas_solve(fac, rhs):
    lo, cp, den = fac
    M, N = den.shape
    x = np.empty_like(rhs)
    x[:, 0] = rhs[:, 0] / den[:, 0]
    for i in range(1, N):
        x[:, i] = (rhs[:, i] - lo[:, i] * x[:, i - 1]) / den[:, i]
    for i in range(N - 2, -1, -1):
        x[:, i] -= cp[:, i] * x[:, i + 1]
    return x


def explicit_rate(params):
    """Largest modulus of the reaction Jacobian's eigenvalues."""
    return float(np.max(np.abs(np.linalg.eigvals(linstab.reaction_jacobian(params)))))


class Stepper:
    """Pre-factored time stepper for fixed ``(params, grid, dt, scheme)``."""

    def __init__(self, params, grid, dt, scheme="euler", reaction=True):
        if scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not dt > 0:
            raise ValueError("dt must be positive")
        if reaction and scheme != "linear-implicit":
            rate = dt * explicit_rate(params)
            if rate >= EXPLICIT_LIMIT:
                raise ValueError(
                    f"dt * max|reaction eigenvalue| = {rate:.3g} >= {EXPLICIT_LIMIT}; "
                    "reduce dt or use scheme='linear-implicit'")
        self.params, self.grid, self.dt = params, grid, float(dt)
        self.scheme, self.reaction = scheme, bool(reaction)
        self.J = linstab.reaction_jacobian(params)
        ms = np.arange(grid.n_modes)
        self.stencil = radial_stencil(grid, ms)
        lo, main, up = self.stencil
        theta = 1.0 if scheme == "euler" else 0.5
        self._theta = theta
        self._prev = None
        if scheme == "linear-implicit":
            self._inv = self._block_inverses()
        else:
            self._fac = {D: _thomas_factor(-dt * theta * D * lo, 1.0 - dt * theta * D * main,
                                           -dt * theta * D * up)
                         for D in (1.0, params.d)}

    def _block_inverses(self):
        N = self.grid.N_r
        J = self.J if self.reaction else np.zeros((2, 2))
        out = np.empty((self.grid.n_modes, 2 * N, 2 * N))
        eye = np.eye(N)
        for m in range(self.grid.n_modes):
            L = radial_operator(self.grid, m)
            A = np.block([[L + J[0, 0] * eye, J[0, 1] * eye],
                          [J[1, 0] * eye, self.params.d * L + J[1, 1] * eye]])
            try:
                out[m] = scipy.linalg.inv(np.eye(2 * N) - self.dt * A)
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise SolveFailed(f"implicit block for m={m} is singular") from exc
        return out

    def _reaction(self, u, v):
        if not self.reaction:
            return np.zeros_like(u), np.zeros_like(v)
        return reaction(self.params, u, v)

    def step(self, fld):
        dt, N_theta = self.dt, self.grid.N_theta
        if self.scheme == "linear-implicit":
            if self.reaction:
                g = nonlinear_terms(self.params, fld.u, fld.v)
                ru, rv = fld.u + dt * g, fld.v - dt * g
            else:
                ru, rv = fld.u, fld.v
            w = np.concatenate([np.fft.rfft(ru, axis=1).T, np.fft.rfft(rv, axis=1).T], axis=1)
            new = np.einsum("mij,mj->mi", self._inv, w)
            N = self.grid.N_r
            u = np.fft.irfft(new[:, :N].T, n=N_theta, axis=1)
            v = np.fft.irfft(new[:, N:].T, n=N_theta, axis=1)
        else:
            fu, fv = self._reaction(fld.u, fld.v)
            if self.scheme == "cnab2" and self._prev is not None:
                pu, pv = self._prev
                eu, ev = 1.5 * fu - 0.5 * pu, 1.5 * fv - 0.5 * pv
            else:
                eu, ev = fu, fv
            self._prev = (fu, fv)
            out = []
            for f, e, D in ((fld.u, eu, 1.0), (fld.v, ev, self.params.d)):
                fh = np.fft.rfft(f, axis=1).T
                rhs = fh + dt * np.fft.rfft(e, axis=1).T
                if self._theta < 1.0:
                    rhs = rhs + dt * (1.0 - self._theta) * D * _apply_stencil(self.stencil, fh)
                out.append(np.fft.irfft(_thomas_solve(self._fac[D], rhs).T, n=N_theta, axis=1))
            u, v = out
        new_field = Field(u=u, v=v, params=fld.params, grid=fld.grid, time=fld.time + dt)
        if not new_field.is_finite():
            raise BlowUp(f"non-finite values at t={new_field.time:g}", time=fld.time, field=fld)
        if new_field.max_abs() > BLOWUP:
            raise BlowUp(f"max|field| exceeded {BLOWUP:g} at t={new_field.time:g}",
                         time=new_field.time, field=new_field)
        return new_field

    def reset(self):
        self._prev = None


_STEPPERS = {}


def get_stepper(params, grid, dt, scheme="euler", reaction=True):
    key = (params, grid.key, float(dt), scheme, bool(reaction))
    st = _STEPPERS.get(key)
    if st is None:
        if len(_STEPPERS) > 32:
            _STEPPERS.clear()
        st = _STEPPERS[key] = Stepper(params, grid, dt, scheme, reaction)
    return st


def step_imex(fld, dt, scheme="euler", reaction=True):
    """Advance ``fld`` by one step of size ``dt``.

    The two-step ``"cnab2"`` scheme falls back to its first-order start when
    called through this function; use :class:`Stepper` for multi-step runs.
    """
    st = get_stepper(fld.params, fld.grid, dt, scheme, reaction)
    st.reset()
    return st.step(fld)


# -- experiments ---------------------------------------------------------------

def default_n_theta(n):
    return max(32, 2 * ((8 * n + 8 + 1) // 2))


@dataclass
class GrowthMeasurement:
    rate: float
    discrete_beta: float
    times: np.ndarray
    amplitudes: np.ndarray


def measure_growth(params, mode, amplitude0=1e-5, horizon=10.0, N_r=65, N_theta=None,
                   dt=0.01, scheme="linear-implicit", branch=2, correct=True, details=False):
    """Growth rate of mode ``(n, j)`` from the nonlinear simulator.

    Seeds the discrete eigenfield at ``amplitude0``, projects onto it with the
    left eigenvector after each step and fits the slope of the log amplitude.
    With ``correct`` and the linear-implicit scheme the known one-step
    amplification ``1/(1 - dt beta)`` is inverted, removing the time error.

    Raises
    ------
    NonlinearContamination
        If the modal amplitude exceeds ``1e-2`` before ``horizon``.
    """
    if amplitude0 > 1e-4:
        raise ValueError("amplitude0 must be <= 1e-4 to stay linear")
    if N_r < 32:
        raise ValueError("N_r must be at least 32")
    n, j = mode
    N_theta = N_theta or default_n_theta(n)
    if N_theta < 8 * n:
        raise ValueError(f"N_theta must be at least 8 n = {8 * n}")
    fld = make_grid(params, N_r, N_theta)
    seed, project = eigenfield(params, fld.grid, n, j, branch, amplitude0)
    st = Stepper(params, fld.grid, dt, scheme)
    steps = int(round(horizon / dt))
    ts, amps = [0.0], [project(seed)]
    cur = seed
    for _ in range(steps):
        cur = st.step(cur)
        a = project(cur)
        if abs(a) > 1e-2:
            raise NonlinearContamination(f"amplitude {abs(a):.3g} at t={cur.time:g}")
        ts.append(cur.time)
        amps.append(a)
        if abs(a) < 1e-12 * amplitude0:
            break
    ts, amps = np.array(ts), np.array(amps)
    slope = np.polyfit(ts, np.log(np.abs(amps)), 1)[0]
    if correct and scheme == "linear-implicit":
        # per-step factor is exactly 1/(1 - dt beta) on an eigenfield
        omega = np.polyfit(ts, np.unwrap(np.angle(amps)), 1)[0]
        rate = float(((1.0 - np.exp(-dt * complex(slope, omega))) / dt).real)
    else:
        rate = float(slope)
    beta_d = discrete_beta(params, fld.grid, n, j, branch).real
    if details:
        return GrowthMeasurement(rate, beta_d, ts, amps)
    return rate


def random_field(params, grid, amplitude, seed):
    """Smooth random perturbation with RMS ``amplitude`` built from low modes."""
    rng = np.random.default_rng(seed)
    k_max = min(8, grid.n_modes - 1)
    out = []
    for _ in range(2):
        coef = np.zeros((grid.N_r, grid.n_modes), dtype=complex)
        for m in range(k_max + 1):
            radial = sum(rng.standard_normal() * np.cos(p * np.pi * (grid.r - 1.0) / (grid.delta - 1.0))
                         for p in range(4))
            phase = rng.standard_normal() + 1j * rng.standard_normal()
            coef[:, m] = radial * (phase if m else phase.real)
        out.append(np.fft.irfft(coef, n=grid.N_theta, axis=1))
    f = Field(u=out[0], v=out[1], params=params, grid=grid)
    area = math.pi * (grid.delta ** 2 - 1.0)
    scale = amplitude * math.sqrt(area) / max(f.l2_norm(), 1e-300)
    f.u *= scale
    f.v *= scale
    return f


def rms(fld):
    area = math.pi * (fld.grid.delta ** 2 - 1.0)
    return fld.l2_norm() / math.sqrt(area)


@dataclass
class RunResult:
    amplitude: float
    time: float
    converged: bool
    field: Field
    history: list = field(default_factory=list)
    blew_up: bool = False


def run_to_steady(fld, dt=0.1, t_max=5000.0, rtol=1e-5, window=50.0, scheme="linear-implicit",
                  escape=None, record_every=None):
    """Integrate until the RMS amplitude settles (relative change over ``window`` below ``rtol``).

    Stops early if the RMS amplitude exceeds ``escape``. ``BlowUp`` propagates.
    """
    st = Stepper(fld.params, fld.grid, dt, scheme)
    per_window = max(1, int(round(window / dt)))
    record_every = record_every or per_window
    history = [(fld.time, rms(fld))]
    last = rms(fld)
    cur = fld
    steps = 0
    max_steps = int(round(t_max / dt))
    while steps < max_steps:
        cur = st.step(cur)
        steps += 1
        if steps % record_every == 0:
            history.append((cur.time, rms(cur)))
        if escape is not None and steps % 10 == 0 and rms(cur) > escape:
            return RunResult(rms(cur), cur.time, False, cur, history)
        if steps % per_window == 0:
            now = rms(cur)
            if abs(now - last) <= rtol * max(now, 1e-300) and now > 0:
                return RunResult(now, cur.time, True, cur, history)
            last = now
    return RunResult(rms(cur), cur.time, False, cur, history)


def bifurcation_amplitude(params, lambda_offsets, seed=0, crit=None, N_r=33, N_theta=None,
                          dt=0.1, t_max=20000.0, noise=1e-3, rtol=1e-6,
                          scheme="linear-implicit", details=False):
    """Saturated RMS amplitude of the deviation at ``lam_c + offset`` for each offset.

    Each run starts from a smooth random perturbation (RMS ``noise``, seed
    ``seed``) and integrates until the amplitude stops changing.
    """
    crit = crit or linstab.critical_lambda(params)
    N_theta = N_theta or default_n_theta(crit.n_c)
    out = []
    for off in lambda_offsets:
        p = params.with_lambda(crit.lambda_c + off)
        grid = make_grid(p, N_r, N_theta).grid
        start = random_field(p, grid, noise, seed)
        res = run_to_steady(start, dt=dt, t_max=t_max, rtol=rtol, scheme=scheme)
        out.append((off, res) if details else (off, res.amplitude))
    return out


@dataclass
class CensusEntry:
    seed: int
    escaped: bool
    reason: str
    amplitude: float
    time: float


def escape_census(params, offset=1e-3, seeds=range(10), crit=None, escape=0.1, N_r=33,
                  N_theta=None, dt=0.05, t_max=5000.0, noise=1e-3, rtol=1e-6,
                  scheme="linear-implicit"):
    """Start from small random perturbations and record whether each run leaves the
    neighbourhood of zero (RMS amplitude above ``escape`` or blow-up)."""
    crit = crit or linstab.critical_lambda(params)
    N_theta = N_theta or default_n_theta(crit.n_c)
    p = params.with_lambda(crit.lambda_c + offset)
    grid = make_grid(p, N_r, N_theta).grid
    out = []
    for s in seeds:
        start = random_field(p, grid, noise, s)
        try:
            res = run_to_steady(start, dt=dt, t_max=t_max, rtol=rtol, scheme=scheme,
                                escape=escape)
        except BlowUp as exc:
            out.append(CensusEntry(int(s), True, "blowup", float("inf"), exc.time or 0.0))
            continue
        esc = res.amplitude > escape
        reason = "left-neighbourhood" if esc else ("saturated" if res.converged else "timeout")
        out.append(CensusEntry(int(s), esc, reason, res.amplitude, res.time))
    return out


# -- output ----------------------------------------------------------------------

def snapshot_rows(fld):
    R, T = np.meshgrid(fld.grid.r, fld.grid.theta, indexing="ij")
    return np.column_stack([R.ravel(), T.ravel(), fld.u.ravel(), fld.v.ravel()])


def write_snapshot(fld, path, header):
    """CSV of ``r, theta, u, v`` preceded by a one-line JSON header (``# {...}``)."""
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write("r,theta,u,v\n")
        for row in snapshot_rows(fld):
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
