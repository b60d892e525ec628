"""Bessel functions and the Neumann Laplacian spectrum of the annulus.

The annulus is ``1 <= r <= delta``. Separable Neumann eigenfunctions are
``R_{n,j}(r) cos(n theta)`` / ``R_{n,j}(r) sin(n theta)`` with

    R(r) = J_n(k r) Y_n'(k) - J_n'(k) Y_n(k r),    lambda_{n,j} = k^2,

and ``k`` a positive root of the derivative cross product

    f(k) = J_n'(k delta) Y_n'(k) - J_n'(k) Y_n'(k delta).

Radial profiles are stored with a constant ``norm`` such that the full
two-dimensional eigenfunction has unit L2 norm on the annulus, i.e.
``pi * int norm^2 R^2 r dr = 1`` for ``n >= 1`` and ``2 pi * ...`` for
``n = 0``.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.optimize import brentq

from .errors import (
    BesselDomainError,
    BesselOverflow,
    BracketExhausted,
    LemmaViolation,
    QuadratureNotConverged,
)

log = logging.getLogger(__name__)

MAX_ORDER = 64
MAX_COUNT = 200
DEGENERATE_RTOL = 1e-9
QUAD_ORDER = 16
MAX_PANELS = 4096


def _check_order(n):
    if int(n) != n or n < 0:
        raise ValueError(f"Bessel order must be a non-negative integer, got {n!r}")
    if n > MAX_ORDER + 1:
        raise ValueError(f"Bessel order {n} exceeds supported maximum {MAX_ORDER}")


def _finish(val, what):
    if not np.all(np.isfinite(val)):
        raise BesselOverflow(f"{what} is not finite (order/argument ratio too extreme)")
    return float(val) if np.ndim(val) == 0 else val


def bessel(kind, n, x):
    """Bessel function of the first (``"J"``) or second (``"Y"``) kind.

    Vectorised over ``x``. Scalars in, float out.
    """
    _check_order(n)
    x = np.asarray(x, dtype=float)
    kind = kind.upper()
    if kind == "J":
        if np.any(x < 0):
            raise BesselDomainError("J_n requires x >= 0")
        val = special.jv(n, x)
    elif kind == "Y":
        if np.any(x <= 0):
            raise BesselDomainError("Y_n requires x > 0")
        val = special.yv(n, x)
    else:
        raise ValueError(f"unknown Bessel kind {kind!r}")
    return _finish(val, f"{kind}_{n}")


def bessel_deriv(kind, n, x):
    """Derivative with respect to the argument, via T_n' = (T_{n-1} - T_{n+1}) / 2."""
    _check_order(n)
    if n == 0:
        return -bessel(kind, 1, x)
    return 0.5 * (bessel(kind, n - 1, x) - bessel(kind, n + 1, x))


def cross_product(n, x, delta):
    """``J_n'(x delta) Y_n'(x) - J_n'(x) Y_n'(x delta)``; zeros give annular eigenvalues."""
    if delta <= 1:
        raise ValueError("delta must exceed 1")
    x = np.asarray(x, dtype=float)
    xd = x * delta
    return (bessel_deriv("J", n, xd) * bessel_deriv("Y", n, x)
            - bessel_deriv("J", n, x) * bessel_deriv("Y", n, xd))


@dataclass(frozen=True)
class RadialMode:
    """One separable Neumann eigenpair of the annulus."""

    n: int
    j: int
    eig: float
    norm: float
    delta: float

    @property
    def k(self):
        return math.sqrt(self.eig)

    @property
    def multiplicity(self):
        return 1 if self.n == 0 else 2

    def rescaled(self, factor):
        return RadialMode(self.n, self.j, self.eig, self.norm * factor, self.delta)


def _raw_profile(n, k, r):
    r = np.asarray(r, dtype=float)
    if k == 0.0:
        return np.ones_like(r)
    return (bessel("J", n, k * r) * bessel_deriv("Y", n, k)
            - bessel_deriv("J", n, k) * bessel("Y", n, k * r))


def _raw_profile_deriv(n, k, r):
    """d/dr of the raw profile."""
    r = np.asarray(r, dtype=float)
    if k == 0.0:
        return np.zeros_like(r)
    return k * (bessel_deriv("J", n, k * r) * bessel_deriv("Y", n, k)
                - bessel_deriv("J", n, k) * bessel_deriv("Y", n, k * r))


def _lommel_norm_sq(n, k, delta):
    """int_1^delta R^2 r dr in closed form (Lommel's integral)."""
    if k == 0.0:
        return 0.5 * (delta * delta - 1.0)

    def antideriv(r):
        z = _raw_profile(n, k, r)
        dz = _raw_profile_deriv(n, k, r) / k
        return 0.5 * r * r * (dz * dz + (1.0 - n * n / (k * k * r * r)) * z * z)

    return float(antideriv(delta) - antideriv(1.0))


def profile_norm_sq(mode):
    """``int_1^delta R^2 r dr`` for the normalised profile of ``mode``."""
    return mode.norm ** 2 * _lommel_norm_sq(mode.n, mode.k, mode.delta)


def _make_mode(n, j, k, delta):
    ang = 2.0 * math.pi if n == 0 else math.pi
    norm = 1.0 / math.sqrt(ang * _lommel_norm_sq(n, k, delta))
    return RadialMode(n=n, j=j, eig=k * k, norm=norm, delta=float(delta))


# -- root finding -----------------------------------------------------------

def _scan_step(delta):
    # the modulus-phase angle of (J_n', Y_n') advances at most ~1 rad per unit x,
    # so the phase difference in f moves < pi/2 per step of this size
    return 0.5 / (delta + 1.0)


def _scan_start(n, delta):
    if n == 0:
        return 1e-3 * _scan_step(delta)
    # well below n/delta so a lower-bound violation would be caught
    return 0.25 * n / delta


def _refine(n, delta, lo, hi):
    x = brentq(lambda t: float(cross_product(n, t, delta)), lo, hi,
               xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)
    return x


class _RootCache:
    """Per-(n, delta) record of roots found so far and how far the scan went."""

    def __init__(self):
        self._lock = threading.Lock()
        self._data = {}

    def get(self, n, delta, x_stop):
        key = (int(n), float(delta))
        entry = self._data.get(key)
        if entry is not None and entry[0] >= x_stop:
            return entry
        with self._lock:
            entry = self._data.get(key)
            if entry is None or entry[0] < x_stop:
                entry = self._extend(n, float(delta), x_stop, entry)
                self._data[key] = entry
        return entry

    @staticmethod
    def _extend(n, delta, x_stop, entry):
        h = _scan_step(delta)
        if entry is None:
            x_from = _scan_start(n, delta)
            roots = []
        else:
            x_from, roots = entry[0], list(entry[1])
        # scan in chunks to bound memory for very thin annuli
        x = x_from
        f_prev = float(cross_product(n, x, delta))
        while x < x_stop:
            chunk = int(min(20000, math.ceil((x_stop - x) / h) + 1))
            grid = x + h * np.arange(1, chunk + 1)
            vals = cross_product(n, grid, delta)
            xs = np.concatenate(([x], grid))
            fs = np.concatenate(([f_prev], vals))
            flips = np.nonzero(np.signbit(fs[:-1]) != np.signbit(fs[1:]))[0]
            for i in flips:
                if fs[i] == 0.0:
                    roots.append(xs[i])
                    continue
                roots.append(_refine(n, delta, xs[i], xs[i + 1]))
            x, f_prev = float(grid[-1]), float(vals[-1])
        return x, tuple(sorted(set(roots)))


_ROOTS = _RootCache()


def _x_max(n, delta):
    # MAX_COUNT roots spaced ~pi/(delta-1), plus room for the turning point near x ~ n
    return (MAX_COUNT + 5) * math.pi / (delta - 1.0) + 2.0 * n + 50.0


def _check_lemma(n, delta, eig):
    if n == 0:
        return
    lo, hi = n * n / (delta * delta), float(n * n)
    if not eig > lo:
        raise LemmaViolation(
            f"lambda_({n},1)={eig:.15g} not above n^2/delta^2={lo:.15g} (delta={delta})")
    if not eig < hi:
        if delta <= 2.0:
            raise LemmaViolation(
                f"lambda_({n},1)={eig:.15g} not below n^2={hi:g} (delta={delta})")
        log.info("upper bound lambda_(%d,1) < n^2 fails at delta=%g (thick annulus)", n, delta)


def radial_eigenvalues(n, delta, count):
    """The first ``count`` radial modes of angular index ``n``, eigenvalues increasing.

    For ``n = 0`` the first mode is the exact constant mode with eigenvalue 0.

    Raises
    ------
    BracketExhausted
        If the scan reaches ``(MAX_COUNT + 5) pi/(delta-1) + 2n + 50`` before ``count`` roots.
    LemmaViolation
        If ``lambda_{n,1}`` falls outside ``(n^2/delta^2, n^2)`` (upper bound
        enforced only for ``delta <= 2``).
    """
    _check_order(n)
    if not 1 <= count <= MAX_COUNT:
        raise ValueError(f"count must be in [1, {MAX_COUNT}]")
    if delta <= 1:
        raise ValueError("delta must exceed 1")
    need = count - 1 if n == 0 else count
    x_cap = _x_max(n, delta)
    # first guess: roots are spaced roughly pi/(delta-1) apart beyond x ~ n
    x_stop = min(x_cap, n + 2.0 + (need + 1) * math.pi / (delta - 1.0))
    while True:
        scanned, roots = _ROOTS.get(n, delta, x_stop)
        if len(roots) >= need or x_stop >= x_cap:
            break
        x_stop = min(x_cap, 2.0 * x_stop)
    if len(roots) < need:
        raise BracketExhausted(
            f"found {len(roots)} of {need} roots for n={n}, delta={delta} below x={x_cap:g}")
    modes = []
    if n == 0:
        modes.append(_make_mode(0, 1, 0.0, delta))
    offset = len(modes)
    for i, k in enumerate(roots[:need]):
        modes.append(_make_mode(n, i + 1 + offset, k, delta))
    if n >= 1:
        _check_lemma(n, delta, modes[0].eig)
    return modes


def radial_modes_below(n, delta, eig_max):
    """All modes of angular index ``n`` with eigenvalue ``<= eig_max``."""
    _check_order(n)
    x_stop = math.sqrt(max(eig_max, 0.0)) + _scan_step(delta)
    _, roots = _ROOTS.get(n, delta, x_stop)
    modes = [_make_mode(0, 1, 0.0, delta)] if n == 0 else []
    offset = len(modes)
    for i, k in enumerate(roots):
        if k * k > eig_max:
            break
        modes.append(_make_mode(n, i + 1 + offset, k, delta))
    if n >= 1 and modes:
        _check_lemma(n, delta, modes[0].eig)
    return modes


@dataclass
class ModeTable:
    """Every separable mode with eigenvalue at most ``eig_max``, sorted by eigenvalue."""

    delta: float
    eig_max: float
    modes: list
    degenerate: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.modes)

    def __len__(self):
        return len(self.modes)

    def lookup(self, n, j):
        for m in self.modes:
            if m.n == n and m.j == j:
                return m
        raise KeyError((n, j))


def mode_table(delta, eig_max, n_max=None, j_max=None):
    """Tabulate all modes with ``lambda_{n,j} <= eig_max``.

    The angular index is bounded using ``lambda_{n,1} > n^2/delta^2``, so
    ``n <= delta * sqrt(eig_max)`` is exhaustive. ``n_max``/``j_max`` truncate
    the table further (for comparing against truncated reference tables).

    Pairs of distinct ``(n, j)`` whose eigenvalues agree to ``1e-9`` relative are
    listed in ``degenerate``; they are not merged.
    """
    n_hi = min(MAX_ORDER, int(math.floor(delta * math.sqrt(max(eig_max, 0.0)))) + 1)
    if n_max is not None:
        n_hi = min(n_hi, n_max)
    modes = []
    for n in range(0, n_hi + 1):
        found = radial_modes_below(n, delta, eig_max)
        if j_max is not None:
            found = [m for m in found if m.j <= j_max]
        modes.extend(found)
    modes.sort(key=lambda m: (m.eig, m.n, m.j))
    degenerate = []
    for a, b in zip(modes, modes[1:]):
        if a.n != b.n and b.eig - a.eig <= DEGENERATE_RTOL * max(b.eig, 1e-300):
            degenerate.append(((a.n, a.j), (b.n, b.j)))
            log.warning("near-degenerate eigenvalues %s and %s at delta=%g",
                        (a.n, a.j), (b.n, b.j), delta)
    return ModeTable(delta=float(delta), eig_max=float(eig_max), modes=modes,
                     degenerate=degenerate)


def radial_eval(mode, delta, r):
    """Normalised radial profile ``norm * R_{n,j}(r)``."""
    if not math.isclose(mode.delta, delta, rel_tol=1e-12):
        raise ValueError(f"mode was computed for delta={mode.delta}, not {delta}")
    if mode.eig == 0.0:
        return mode.norm * np.ones_like(np.asarray(r, dtype=float))
    return mode.norm * _raw_profile(mode.n, mode.k, r)


def radial_eval_deriv(mode, delta, r):
    if not math.isclose(mode.delta, delta, rel_tol=1e-12):
        raise ValueError(f"mode was computed for delta={mode.delta}, not {delta}")
    return mode.norm * _raw_profile_deriv(mode.n, mode.k, r)


# -- quadrature -------------------------------------------------------------

def _gl_rule(order=QUAD_ORDER):
    return np.polynomial.legendre.leggauss(order)


def gauss_legendre_nodes(delta, panels, order=QUAD_ORDER):
    """Composite Gauss-Legendre nodes/weights on [1, delta] with ``panels`` equal panels."""
    t, w = _gl_rule(order)
    edges = np.linspace(1.0, delta, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _initial_panels(total_k, delta, order=QUAD_ORDER):
    # >= 8 nodes per oscillation period of the product
    per_unit = 8.0 * total_k / (2.0 * math.pi)
    return max(2, int(math.ceil(per_unit * (delta - 1.0) / order)) + 1)


def _adaptive(evaluate, total_k, delta, tol):
    panels = _initial_panels(total_k, delta)
    prev = evaluate(panels)
    while True:
        panels *= 2
        if panels > MAX_PANELS:
            raise QuadratureNotConverged(
                f"radial quadrature did not reach tol={tol:g} within {MAX_PANELS} panels")
        cur = evaluate(panels)
        err = np.max(np.abs(cur - prev))
        if err <= max(tol, 1e-14 * np.max(np.abs(cur))):
            return cur, float(err)
        prev = cur


def radial_integral(modes, delta, tol=1e-12, return_error=False):
    """``int_1^delta prod(R_m(r)) r dr`` for 1 to 4 normalised profiles."""
    modes = list(modes)
    if not 1 <= len(modes) <= 4:
        raise ValueError("radial_integral takes between 1 and 4 modes")
    total_k = sum(m.k for m in modes)

    def evaluate(panels):
        r, w = gauss_legendre_nodes(delta, panels)
        prod = np.ones_like(r)
        for m in modes:
            prod = prod * radial_eval(m, delta, r)
        return np.array(np.dot(w, prod * r))

    val, err = _adaptive(evaluate, total_k, delta, tol)
    return (float(val), err) if return_error else float(val)


def overlap_integrals(weight_modes, modes, delta, tol=1e-12):
    """Vector of ``int (prod weight_modes) R_m r dr`` over each ``m`` in ``modes``."""
    weight_modes = list(weight_modes)
    modes = list(modes)
    if not modes:
        return np.zeros(0)
    total_k = sum(m.k for m in weight_modes) + max(m.k for m in modes)

    def evaluate(panels):
        r, w = gauss_legendre_nodes(delta, panels)
        base = np.ones_like(r)
        for m in weight_modes:
            base = base * radial_eval(m, delta, r)
        mat = np.array([radial_eval(m, delta, r) for m in modes])
        return mat @ (w * base * r)

    val, _ = _adaptive(evaluate, total_k, delta, tol)
    return val
