"""Linear stability of the homogeneous state and the onset of Turing patterns.

Deviation system about ``(u0, v0) = (a + lam, lam / (a + lam)^2)``::

    u_t =   Lap u + R^2 [ (lam-a)/(a+lam) u + (a+lam)^2 v ] + g(u, v)
    v_t = d Lap v - R^2 [ 2 lam/(a+lam) u + (a+lam)^2 v ] - g(u, v)
    g   = gamma2 u^2 + gamma12 u v + gamma3 u^2 v

A Laplacian eigenvalue ``lap_eig`` turns the linear part into a 2x2 matrix whose
eigenvalues are the growth rates ``beta``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import specfun
from .errors import EndpointEntry, NoOnset, SimultaneousEntry

A_MIN = 1.0 / (3.0 * math.sqrt(3.0))
SIMULTANEOUS_TOL = 1e-9
PES_EPS = 1e-4
MODE_MARGIN = 1.5


@dataclass(frozen=True)
class ModelParams:
    """Nondimensional parameters; ``lam`` (calcium influx) may be left unset."""

    a: float
    d: float
    R: float
    delta: float
    lam: float | None = None

    def __post_init__(self):
        for name in ("a", "d", "R"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be positive and finite, got {val!r}")
        if not (self.delta > 1 and math.isfinite(self.delta)):
            raise ValueError(f"delta must exceed 1, got {self.delta!r}")
        if self.lam is not None and not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lam must be positive, got {self.lam!r}")

    def with_lambda(self, lam):
        return replace(self, lam=float(lam))

    def require_lambda(self):
        if self.lam is None:
            raise ValueError("this operation needs a value for lam")
        return self.lam

    def as_dict(self):
        return {"a": self.a, "d": self.d, "R": self.R, "delta": self.delta, "lam": self.lam}


def steady_state(a, lam):
    """Homogeneous equilibrium ``(u0, v0)`` of the full system."""
    if not (a > 0 and lam > 0):
        raise ValueError("a and lam must be positive")
    u0 = a + lam
    return u0, lam / (u0 * u0)


def gamma_coeffs(params):
    """Coefficients of ``g = gamma2 u^2 + gamma12 u v + gamma3 u^2 v``."""
    lam = params.require_lambda()
    s = params.a + lam
    R2 = params.R * params.R
    return R2 * lam / (s * s), 2.0 * R2 * s, R2


def reaction_jacobian(params):
    """Linearised reaction matrix ``[[b11, b12], [b21, b22]]``."""
    lam = params.require_lambda()
    a, R2 = params.a, params.R * params.R
    s = a + lam
    return np.array([[R2 * (lam - a) / s, R2 * s * s],
                     [-2.0 * R2 * lam / s, -R2 * s * s]])


def linear_matrix(params, lap_eig):
    """2x2 linear operator acting on the amplitude of a Laplacian eigenmode."""
    J = reaction_jacobian(params)
    J[0, 0] -= lap_eig
    J[1, 1] -= params.d * lap_eig
    return J


def quadratic_coeffs(params, lap_eig):
    """``(B, C)`` in ``beta^2 + B beta + C = 0``."""
    lam = params.require_lambda()
    a, d, R2 = params.a, params.d, params.R ** 2
    s = a + lam
    ratio = (lam - a) / s
    B = lap_eig * (d + 1.0) - R2 * (ratio - s * s)
    C = d * lap_eig ** 2 + R2 * (s * s - d * ratio) * lap_eig + R2 * R2 * s * s
    return B, C


@dataclass(frozen=True)
class DispersionPair:
    """Growth rates for one Laplacian eigenvalue plus standardised amplitudes.

    ``u_amps[l-1], v_amps[l-1]`` belong to branch ``l``; amplitudes satisfy
    ``u > 0`` and ``|u|^2 + |v|^2 = 1``.
    """

    beta1: complex
    beta2: complex
    u_amp: complex
    v_amp: complex
    branch: int
    lap_eig: float
    u_amps: tuple = ()
    v_amps: tuple = ()

    def beta(self, branch=None):
        branch = self.branch if branch is None else branch
        return self.beta1 if branch == 1 else self.beta2

    def amps(self, branch=None):
        branch = self.branch if branch is None else branch
        return self.u_amps[branch - 1], self.v_amps[branch - 1]

    @property
    def is_complex(self):
        return self.beta1.imag != 0.0


def _roots(B, C):
    disc = B * B - 4.0 * C
    if disc >= 0.0:
        sq = math.sqrt(disc)
        q = -0.5 * (B + math.copysign(sq, B)) if B != 0.0 else -0.5 * sq
        r1 = q
        r2 = C / q if q != 0.0 else -B - q
        lo, hi = sorted((r1, r2))
        return complex(lo), complex(hi)
    im = 0.5 * math.sqrt(-disc)
    return complex(-0.5 * B, -im), complex(-0.5 * B, im)


def standardized_amplitudes(params, lap_eig, beta):
    """``(u, v)`` with ``u > 0`` real and ``|u|^2 + |v|^2 = 1``."""
    J = reaction_jacobian(params)
    p = (beta + lap_eig - J[0, 0]) / J[0, 1]
    u = 1.0 / math.sqrt(1.0 + abs(p) ** 2)
    return complex(u), complex(p * u)


def dispersion(params, lap_eig, branch=2):
    """Both growth rates for Laplacian eigenvalue ``lap_eig`` (``Re beta1 <= Re beta2``)."""
    if lap_eig < 0:
        raise ValueError("lap_eig must be non-negative")
    B, C = quadratic_coeffs(params, lap_eig)
    b1, b2 = _roots(B, C)
    a1 = standardized_amplitudes(params, lap_eig, b1)
    a2 = standardized_amplitudes(params, lap_eig, b2)
    chosen = a1 if branch == 1 else a2
    return DispersionPair(beta1=b1, beta2=b2, u_amp=chosen[0], v_amp=chosen[1],
                          branch=branch, lap_eig=float(lap_eig),
                          u_amps=(a1[0], a2[0]), v_amps=(a1[1], a2[1]))


def max_growth(params, lap_eigs):
    """Vectorised ``Re beta2`` over an array of Laplacian eigenvalues."""
    B, C = quadratic_coeffs(params, np.asarray(lap_eigs, dtype=float))
    disc = B * B - 4.0 * C
    re = np.where(disc >= 0, 0.5 * (-B + np.sqrt(np.abs(disc))), -0.5 * B)
    return re


# -- regime classification --------------------------------------------------

class Regime(str, enum.Enum):
    CONSTANT_UNSTABLE = "ConstantUnstable"
    TURING_WINDOW = "TuringWindow"
    STABLE = "Stable"


@dataclass(frozen=True)
class RegimeClass:
    tag: Regime
    window: tuple | None = None
    boundary: bool = False


def window_bounds(params):
    """Endpoints of the instability window in Laplacian-eigenvalue space, or ``None``."""
    lam = params.require_lambda()
    a, d, R2 = params.a, params.d, params.R ** 2
    s = a + lam
    A = d * (lam - a) / s - s * s
    disc = A * A - 4.0 * d * s * s
    if A <= 0 or disc <= 0:
        return None
    sq = math.sqrt(disc)
    scale = R2 / (2.0 * d)
    return scale * (A - sq), scale * (A + sq)


def classify_regime(params, rtol=1e-12):
    """Three-way classification of the homogeneous state.

    Equalities (to ``rtol``) are reported as ``Stable`` with ``boundary=True``.
    """
    lam = params.require_lambda()
    a, d = params.a, params.d
    s = a + lam
    lhs1, rhs1 = lam - a, s ** 3
    if abs(lhs1 - rhs1) <= rtol * max(abs(lhs1), abs(rhs1), 1e-300):
        return RegimeClass(Regime.STABLE, boundary=True)
    if lhs1 > rhs1:
        return RegimeClass(Regime.CONSTANT_UNSTABLE)
    lhs2 = d * (lam - a)
    rhs2 = s ** 3 + 2.0 * math.sqrt(d) * s * s
    if abs(lhs2 - rhs2) <= rtol * max(abs(lhs2), abs(rhs2), 1e-300):
        return RegimeClass(Regime.STABLE, boundary=True)
    if lhs2 > rhs2:
        win = window_bounds(params)
        if win is None:  # rounding right at the boundary
            return RegimeClass(Regime.STABLE, boundary=True)
        return RegimeClass(Regime.TURING_WINDOW, window=win)
    return RegimeClass(Regime.STABLE)


def turing_band(a, d):
    """``(lam_min, lam_max)`` between which the Turing window exists, or ``None``.

    Roots of ``d (lam - a) = (a + lam)^3 + 2 sqrt(d) (a + lam)^2``.
    """
    sd = math.sqrt(d)

    def h(s):
        return d * (s - 2.0 * a) - s ** 3 - 2.0 * sd * s * s

    s_peak = sd * (math.sqrt(28.0) - 4.0) / 6.0
    # h(2a) < 0 always, so a band needs the concave peak above zero and past 2a
    if s_peak <= 2.0 * a or h(s_peak) <= 0.0:
        return None
    s_min = brentq(h, 2.0 * a, s_peak, xtol=1e-15, rtol=1e-15)
    hi = s_peak * 2.0 + 1.0
    while h(hi) > 0.0:
        hi *= 2.0
    s_max = brentq(h, s_peak, hi, xtol=1e-15, rtol=1e-15)
    return s_min - a, s_max - a


def max_window_top(a, d, R, band=None):
    """Largest upper window endpoint over the Turing band."""
    band = band or turing_band(a, d)
    if band is None:
        return 0.0
    R2 = R * R

    def top(lam):
        s = a + lam
        A = d * (lam - a) / s - s * s
        disc = max(A * A - 4.0 * d * s * s, 0.0)
        return R2 / (2.0 * d) * (A + math.sqrt(disc))

    grid = np.linspace(band[0], band[1], 257)
    vals = [top(x) for x in grid]
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(lambda x: -top(x), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return max(max(vals), -res.fun)


def entry_lambdas(lap_eigs, a, d, R):
    """For each Laplacian eigenvalue, the smallest ``lam`` at which it enters the window.

    Solves ``R^2 (k + R^2) s^3 + d k (k - R^2) s + 2 a d R^2 k = 0`` with
    ``s = a + lam`` (the window condition multiplied by ``s``); ``nan`` where
    the mode never destabilises.
    """
    k = np.asarray(lap_eigs, dtype=float)
    R2 = R * R
    out = np.full(k.shape, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        A3 = R2 * (k + R2)
        B1 = d * k * (k - R2)
        C0 = 2.0 * a * d * R2 * k
        p = B1 / A3
        q = C0 / A3
        ok = (k > 0) & (p < 0) & (4.0 * p ** 3 + 27.0 * q * q < 0)
        pp, qq = p[ok], q[ok]
        m = 2.0 * np.sqrt(-pp / 3.0)
        arg = np.clip(1.5 * qq / pp * np.sqrt(-3.0 / pp), -1.0, 1.0)
        s = m * np.cos(np.arccos(arg) / 3.0 - 2.0 * np.pi / 3.0)
        for _ in range(3):
            f = s ** 3 + pp * s + qq
            fp = 3.0 * s * s + pp
            step = np.where(np.abs(fp) > 0, f / np.where(fp == 0, 1, fp), 0.0)
            s = s - step
    out[ok] = s - a
    return out


@dataclass(frozen=True)
class CriticalPoint:
    """First destabilisation as ``lam`` increases."""

    lambda_c: float
    n_c: int
    j_c: int
    eig_c: float
    multiplicity: int
    mode: specfun.RadialMode
    band: tuple
    lambda_next: float | None = None
    next_mode: tuple | None = None
    pes_eps: float = PES_EPS
    pes_verified: bool = False
    degenerate: tuple = ()
    table_size: int = 0

    @property
    def key(self):
        return self.n_c, self.j_c


def default_mode_table(params, band=None, n_max=None, j_max=None):
    band = band or turing_band(params.a, params.d)
    if band is None:
        raise NoOnset("parameters lie outside the Turing band for every lam")
    top = max_window_top(params.a, params.d, params.R, band)
    return specfun.mode_table(params.delta, MODE_MARGIN * top, n_max=n_max, j_max=j_max)


def critical_lambda(params, lambda_search=None, modes=None, n_max=None, j_max=None,
                    check_pes=True):
    """Smallest ``lam`` at which some annular Laplacian eigenvalue enters the window.

    ``params.lam`` is ignored. ``modes`` defaults to every mode with eigenvalue
    up to 1.5 times the largest window endpoint over the band; ``n_max`` and
    ``j_max`` truncate that default table.

    Raises
    ------
    NoOnset
        No mode ever enters within ``lambda_search``.
    SimultaneousEntry
        Two distinct ``(n, j)`` enter within ``1e-9`` of each other.
    EndpointEntry
        The winning mode enters exactly where the window opens.
    """
    a, d, R = params.a, params.d, params.R
    if a <= A_MIN:
        raise ValueError(f"a must exceed 1/(3 sqrt 3) = {A_MIN:.6f}, got {a}")
    band = turing_band(a, d)
    if band is None:
        raise NoOnset(f"no Turing band for a={a}, d={d}")
    if lambda_search is None:
        lambda_search = (a + 1e-6, band[1])
    lo, hi = lambda_search
    if modes is None:
        modes = default_mode_table(params, band, n_max=n_max, j_max=j_max)
    table = list(modes)
    eigs = np.array([m.eig for m in table])
    entries = entry_lambdas(eigs, a, d, R)
    valid = np.isfinite(entries) & (entries > lo) & (entries <= hi)
    if not np.any(valid):
        raise NoOnset(f"no mode enters the instability window for lam in ({lo:g}, {hi:g}]")
    idx = np.nonzero(valid)[0]
    order = idx[np.argsort(entries[idx], kind="stable")]
    win = order[0]
    lam_c = float(entries[win])
    crit_mode = table[win]
    lam_next, next_mode = None, None
    if len(order) > 1:
        lam_next = float(entries[order[1]])
        nm = table[order[1]]
        next_mode = (nm.n, nm.j)
        if lam_next - lam_c <= SIMULTANEOUS_TOL * max(1.0, lam_c):
            raise SimultaneousEntry(
                f"modes {(crit_mode.n, crit_mode.j)} and {next_mode} enter together "
                f"at lam={lam_c:.12g}",
                modes=[(crit_mode.n, crit_mode.j), next_mode], lambda_c=lam_c)
    if lam_c - band[0] <= SIMULTANEOUS_TOL * max(1.0, lam_c):
        raise EndpointEntry(
            f"mode {(crit_mode.n, crit_mode.j)} enters where the window opens (lam={lam_c:.12g})")
    eps = PES_EPS
    if lam_next is not None:
        eps = min(eps, 0.5 * (lam_next - lam_c))
    verified = False
    if check_pes:
        verified = _verify_pes(params, eigs, win, lam_c, eps)
    degenerate = tuple(getattr(modes, "degenerate", ()))
    return CriticalPoint(
        lambda_c=lam_c, n_c=crit_mode.n, j_c=crit_mode.j, eig_c=crit_mode.eig,
        multiplicity=crit_mode.multiplicity, mode=crit_mode, band=band,
        lambda_next=lam_next, next_mode=next_mode, pes_eps=eps,
        pes_verified=verified, degenerate=degenerate, table_size=len(table))


def _verify_pes(params, eigs, win, lam_c, eps):
    below = max_growth(params.with_lambda(lam_c - eps), eigs)
    above = max_growth(params.with_lambda(lam_c + eps), eigs)
    others = np.ones(len(eigs), dtype=bool)
    others[win] = False
    return bool(np.all(below < 0) and above[win] > 0 and np.all(above[others] < 0))


def pes_sign_pattern(params, crit, modes, eps=None):
    """``(Re beta2 below, Re beta2 above)`` arrays for every mode at ``lam_c -/+ eps``."""
    eps = crit.pes_eps if eps is None else eps
    eigs = np.array([m.eig for m in modes])
    return (max_growth(params.with_lambda(crit.lambda_c - eps), eigs),
            max_growth(params.with_lambda(crit.lambda_c + eps), eigs))
