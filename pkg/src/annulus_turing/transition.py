"""Transition number at the first Turing onset and the resulting transition type.

For a critical pair ``(n_c, j_c)`` with ``n_c >= 1`` the reduced equation on the
two-dimensional centre manifold is

    dy/dt = beta y + q (u_c - v_c) y |y|^2,

so the sign of ``q`` separates a continuous (``q < 0``) from a catastrophic
(``q > 0``) transition. ``q`` collects second-order feedback through the
angular families ``0`` and ``2 n_c`` (the coefficients ``B_{njl}``) plus the
cubic self-interaction. When ``n_c = 0`` the centre manifold is one-dimensional
and a quadratic term decides instead.

Conventions
-----------
``convention="table"`` (default) subtracts the mode sum from the cubic term;
``"printed"`` adds it, as the formula is usually written. Only the first
reproduces the reference table of coefficients, see the README.
``zero_mode_norm="pi"`` (default) scales angular-index-0 profiles so that
``pi * int R^2 r dr = 1`` like every other family; ``"2pi"`` uses unit
``L^2`` norm on the annulus.

A convention-free cross-check is :func:`normal_form_coefficient`, the cubic
Landau coefficient from projecting with the left eigenvector.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import linstab, specfun
from .errors import DegenerateQuadratic, NearResonance, TailNotConverged

RESONANCE_TOL = 1e-6
INDETERMINATE_RTOL = 1e-4
DEGENERATE_TOL = 1e-10
J_LIMIT = 200
J_MIN = 6
CHUNK = 12
CONVENTIONS = ("table", "printed")
ZERO_NORMS = ("pi", "2pi")


class TransitionType(str, enum.Enum):
    CONTINUOUS = "ContinuousI"
    CATASTROPHIC = "CatastrophicII"
    RANDOM = "RandomIII"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class CriticalData:
    """Everything about the critical mode that the B coefficients need."""

    lam: float
    mode: specfun.RadialMode
    u_c: float
    v_c: float
    u_c1: complex
    v_c1: complex
    beta_c: float
    gammas: tuple

    @property
    def n_c(self):
        return self.mode.n

    @property
    def amp_gap(self):
        return self.u_c - self.v_c

    @property
    def forcing(self):
        """``gamma2 u_c^2 + gamma12 u_c v_c``."""
        g2, g12, _ = self.gammas
        return g2 * self.u_c ** 2 + g12 * self.u_c * self.v_c


def critical_data(crit, params, zero_mode_norm="pi"):
    p = params.with_lambda(crit.lambda_c)
    pair = linstab.dispersion(p, crit.eig_c)
    mode = _scaled(crit.mode, zero_mode_norm)
    return CriticalData(lam=crit.lambda_c, mode=mode, u_c=pair.u_amp.real,
                        v_c=pair.v_amp.real, u_c1=pair.u_amps[0], v_c1=pair.v_amps[0],
                        beta_c=pair.beta2.real, gammas=linstab.gamma_coeffs(p))


def _scaled(mode, zero_mode_norm):
    if zero_mode_norm not in ZERO_NORMS:
        raise ValueError(f"zero_mode_norm must be one of {ZERO_NORMS}")
    if mode.n == 0 and zero_mode_norm == "pi":
        return mode.rescaled(math.sqrt(2.0))
    return mode


def _check_family(n, n_c):
    if n not in (0, 2 * n_c):
        raise ValueError(
            f"angular index {n} cannot couple to critical index {n_c}: "
            f"only 0 and {2 * n_c} survive the angular integration")


# -- angular factors ---------------------------------------------------------

def angular_factors(n_c, pivot="cos"):
    """Angular weights for pivot ``psi = cos(n_c t)`` or ``sin(n_c t)``.

    Returns ``({m: sum_phi (int psi^2 phi)^2}, int psi^4, int psi^2)`` where
    ``phi`` ranges over the real Fourier basis of index ``m``. Computed with
    the trapezoid rule, exact for these trigonometric polynomials.
    """
    if pivot not in ("cos", "sin"):
        raise ValueError("pivot must be 'cos' or 'sin'")
    N = 8 * n_c + 16
    t = 2.0 * np.pi * np.arange(N) / N
    w = 2.0 * np.pi / N
    psi = np.cos(n_c * t) if pivot == "cos" else np.sin(n_c * t)
    psi2 = psi * psi
    fam = {}
    for m in range(0, 3 * n_c + 1):
        basis = [np.ones(N)] if m == 0 else [np.cos(m * t), np.sin(m * t)]
        val = sum((w * np.dot(psi2, b)) ** 2 for b in basis)
        if val > 1e-12:
            fam[m] = val
    return fam, w * np.sum(psi2 * psi2), w * np.sum(psi2)


# -- coefficients ------------------------------------------------------------

def b_coefficient(nj, branch, crit, params, zero_mode_norm="pi", overlap=None):
    """One coefficient ``B_{njl}`` (branch ``l``) of the mode sum.

    ``-pi^2/beta (conj u - conj v)(2 g2 u_c u + g12 u_c v + g12 v_c u)
    (g2 u_c^2 + g12 u_c v_c)(int R_c^2 R_nj r dr)^2`` with the critical
    factors taken on branch 2. ``crit`` is a :class:`~.linstab.CriticalPoint`
    or a prepared :class:`CriticalData`.
    """
    cd = crit if isinstance(crit, CriticalData) else critical_data(crit, params, zero_mode_norm)
    _check_family(nj.n, cd.n_c)
    if branch not in (1, 2):
        raise ValueError("branch must be 1 or 2")
    mode = _scaled(nj, zero_mode_norm)
    if overlap is None:
        overlap = specfun.radial_integral([cd.mode, cd.mode, mode], mode.delta)
    pair = linstab.dispersion(params.with_lambda(cd.lam), mode.eig, branch=branch)
    return _b_value(cd, pair, branch, overlap, nj)


def _b_value(cd, pair, branch, overlap, nj):
    beta = pair.beta(branch)
    if abs(beta) < RESONANCE_TOL:
        raise NearResonance(
            f"mode {(nj.n, nj.j)} branch {branch} has |beta|={abs(beta):.3g} at lam={cd.lam}")
    u, v = pair.amps(branch)
    g2, g12, _ = cd.gammas
    mix = 2.0 * g2 * cd.u_c * u + g12 * cd.u_c * v + g12 * cd.v_c * u
    return (-math.pi ** 2 / beta * (u.conjugate() - v.conjugate()) * mix
            * cd.forcing * overlap * overlap)


def cubic_term(cd, delta):
    """``(3 pi/4) gamma3 u_c^2 v_c int R_c^4 r dr`` (angular factor for the cos pivot)."""
    r4 = specfun.radial_integral([cd.mode] * 4, delta)
    return 0.75 * math.pi * cd.gammas[2] * cd.u_c ** 2 * cd.v_c * r4


@dataclass
class FamilySum:
    n: int
    total: complex = 0j
    terms: list = field(default_factory=list)
    max_term: float = 0.0
    tail: float = math.inf
    j_used: int = 0
    modes: list = field(default_factory=list)
    overlaps: list = field(default_factory=list)


def _tail_estimate(terms):
    a = [abs(t) for t in terms[-3:]]
    if len(a) < 3:
        return math.inf
    ratios = [a[i + 1] / a[i] if a[i] > 0 else (0.0 if a[i + 1] == 0 else math.inf)
              for i in range(2)]
    rho = max(ratios)
    if rho >= 1.0:
        return math.inf
    return a[-1] * rho / (1.0 - rho)


def family_sum(n, cd, params, tail_tol=1e-8, j_min=J_MIN, j_limit=J_LIMIT,
               zero_mode_norm="pi"):
    """Sum ``B_{njl}`` over ``j`` and both branches for angular index ``n``."""
    _check_family(n, cd.n_c)
    delta = params.delta
    p = params.with_lambda(cd.lam)
    out = FamilySum(n=n)
    count = 0
    while True:
        count = min(count + CHUNK, j_limit)
        modes = specfun.radial_eigenvalues(n, delta, count)
        fresh = [_scaled(m, zero_mode_norm) for m in modes[len(out.modes):]]
        ov = specfun.overlap_integrals([cd.mode, cd.mode], fresh, delta, tol=1e-14)
        for m, o in zip(fresh, ov):
            pair = linstab.dispersion(p, m.eig)
            term = sum(_b_value(cd, pair, l, o, m) for l in (1, 2))
            out.modes.append(m)
            out.overlaps.append(float(o))
            out.terms.append(term)
            out.total += term
            out.max_term = max(out.max_term, max(abs(_b_value(cd, pair, l, o, m))
                                                 for l in (1, 2)))
            out.j_used = m.j
            if len(out.terms) < j_min:
                continue
            floor = 1e-15 * out.max_term
            if all(abs(t) <= floor for t in out.terms[-3:]):
                out.tail = 0.0
                return out
            tail = _tail_estimate(out.terms)
            if tail < tail_tol * max(abs(out.total), floor):
                out.tail = tail
                return out
        if count >= j_limit:
            raise TailNotConverged(
                f"family n={n} not converged after j={out.j_used} terms "
                f"(partial sum {out.total.real:.6g}, last term {abs(out.terms[-1]):.3g})")


# -- reports -----------------------------------------------------------------

@dataclass(frozen=True)
class TransitionReport:
    critical: linstab.CriticalPoint
    q_value: float | None
    coeff_scaled: float | None
    type: TransitionType
    j_max_used: int
    tail_estimate: float
    vlambda_coeff: float | None = None
    quad_coeff: float | None = None
    u_c: float = 0.0
    v_c: float = 0.0
    family_sums: dict = field(default_factory=dict)
    cubic: float = 0.0
    imag_residue: float = 0.0
    max_term: float = 0.0
    convention: str = "table"
    zero_mode_norm: str = "pi"
    pivot: str = "cos"
    normal_form: float | None = None
    normal_form_type: TransitionType | None = None

    def to_dict(self):
        crit = asdict(self.critical)
        crit["mode"] = {"n": self.critical.mode.n, "j": self.critical.mode.j,
                        "eig": self.critical.mode.eig, "norm": self.critical.mode.norm}
        crit["band"] = list(self.critical.band)
        crit["next_mode"] = list(self.critical.next_mode) if self.critical.next_mode else None
        crit["degenerate"] = [list(map(list, pair)) for pair in self.critical.degenerate]
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "critical"}
        out["type"] = self.type.value
        out["normal_form_type"] = (self.normal_form_type.value
                                   if self.normal_form_type is not None else None)
        out["family_sums"] = {str(k): v for k, v in self.family_sums.items()}
        out["critical"] = crit
        return out


def _classify(n_c, value, scale):
    if not math.isfinite(value) or abs(value) < INDETERMINATE_RTOL * scale:
        return TransitionType.INDETERMINATE
    if n_c == 0:
        return TransitionType.RANDOM
    return TransitionType.CONTINUOUS if value < 0 else TransitionType.CATASTROPHIC


def transition_number(crit, params, tail_tol=1e-8, convention="table",
                      zero_mode_norm="pi", pivot="cos", j_min=J_MIN, j_limit=J_LIMIT,
                      with_normal_form=True):
    """Transition number ``q(lam_c)`` and the transition type.

    Parameters
    ----------
    crit : CriticalPoint
        Output of :func:`~.linstab.critical_lambda`.
    params : ModelParams
        ``lam`` is ignored; ``crit.lambda_c`` is used.
    tail_tol : float
        Relative tolerance for the geometric tail estimate of each family sum.
    convention : {"table", "printed"}
        Sign with which the mode sum enters, see the module docstring.
    pivot : {"cos", "sin"}
        Which member of the critical pair carries the angular integrals.
    j_min : int
        Minimum number of radial terms per family.

    Returns
    -------
    TransitionReport
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    if crit.n_c == 0:
        return _type3_report(crit, params, zero_mode_norm)
    cd = critical_data(crit, params, zero_mode_norm)
    fam_w, psi4, _ = angular_factors(crit.n_c, pivot)
    if set(fam_w) != {0, 2 * crit.n_c}:
        raise AssertionError(f"unexpected angular families {sorted(fam_w)}")
    sums = {n: family_sum(n, cd, params, tail_tol, j_min, j_limit, zero_mode_norm)
            for n in sorted(fam_w)}
    sign = -1.0 if convention == "table" else 1.0
    mode_sum = sum(fam_w[n] / math.pi ** 2 * s.total for n, s in sums.items())
    cubic = cubic_term(cd, params.delta) * psi4 / (0.75 * math.pi)
    q_complex = sign * mode_sum + cubic
    q = q_complex.real
    max_term = max([s.max_term * fam_w[n] / math.pi ** 2 for n, s in sums.items()]
                   + [abs(cubic)])
    tail = sum(s.tail * fam_w[n] / math.pi ** 2 for n, s in sums.items())
    coeff = q * cd.amp_gap
    nf = nf_type = None
    if with_normal_form:
        nf = normal_form_coefficient(crit, params, families=sums, pivot=pivot)
        nf_type = _classify(crit.n_c, nf, 0.0)
    return TransitionReport(
        critical=crit, q_value=q, coeff_scaled=coeff,
        type=_classify(crit.n_c, coeff, max_term * abs(cd.amp_gap)),
        j_max_used=max(s.j_used for s in sums.values()), tail_estimate=tail,
        u_c=cd.u_c, v_c=cd.v_c,
        family_sums={n: s.total.real for n, s in sums.items()}, cubic=cubic,
        imag_residue=abs(q_complex.imag), max_term=max_term, convention=convention,
        zero_mode_norm=zero_mode_norm, pivot=pivot, normal_form=nf, normal_form_type=nf_type)


def _type3_report(crit, params, zero_mode_norm):
    cd = critical_data(crit, params, zero_mode_norm)
    try:
        quad, vcoef = type3_coefficients(crit, params, zero_mode_norm)
        ttype = TransitionType.RANDOM
    except DegenerateQuadratic:
        quad = vcoef = None
        ttype = TransitionType.INDETERMINATE
    nf = normal_form_quadratic(crit, params)
    return TransitionReport(
        critical=crit, q_value=None, coeff_scaled=None, type=ttype, j_max_used=0,
        tail_estimate=0.0, vlambda_coeff=vcoef, quad_coeff=quad, u_c=cd.u_c, v_c=cd.v_c,
        zero_mode_norm=zero_mode_norm, normal_form=nf,
        normal_form_type=_classify(0, nf, 0.0))


def type3_coefficients(crit, params, zero_mode_norm="pi"):
    """Quadratic coefficient of the one-dimensional reduced equation when ``n_c = 0``.

    Returns ``(quad_coeff, vlambda_coeff)`` with
    ``quad_coeff = 2 pi (u_c - v_c) u_c (g2 u_c + g12 v_c) int R_c^3 r dr`` and
    ``vlambda_coeff = -1/quad_coeff``; the bifurcated fixed point is
    ``v^lam ~ vlambda_coeff * beta(lam) * e``.
    """
    if crit.n_c != 0:
        raise ValueError("type3_coefficients needs a critical mode with n_c = 0")
    cd = critical_data(crit, params, zero_mode_norm)
    g2, g12, _ = cd.gammas
    r3 = specfun.radial_integral([cd.mode] * 3, params.delta)
    core = (g2 * cd.u_c + g12 * cd.v_c) * r3
    if abs(core) < DEGENERATE_TOL:
        raise DegenerateQuadratic(f"(g2 u_c + g12 v_c) int R_c^3 r dr = {core:.3g}")
    quad = 2.0 * math.pi * cd.amp_gap * cd.u_c * core
    return quad, -1.0 / quad


def reduced_rhs(y_c, y_s, beta, q, amp_gap):
    """Right-hand side of the cubic reduced equations on the critical pair."""
    cub = q * amp_gap * (y_c * y_c + y_s * y_s)
    return beta * y_c + cub * y_c, beta * y_s + cub * y_s


# -- adjoint cross-check -----------------------------------------------------

def _left_right(params, lam, eig):
    p = params.with_lambda(lam)
    M = linstab.linear_matrix(p, eig)
    beta = linstab.dispersion(p, eig).beta2.real
    xi = np.array([M[0, 1], beta - M[0, 0]])
    xi = xi / math.copysign(np.linalg.norm(xi), xi[0])
    eta = np.array([M[1, 0], beta - M[0, 0]])
    return M, xi, eta


def normal_form_coefficient(crit, params, families=None, pivot="cos", tail_tol=1e-8):
    """Cubic Landau coefficient ``K`` in ``dy/dt = beta y + K y^3`` for ``n_c >= 1``.

    Uses the left eigenvector of the critical 2x2 block for the projection and
    unit radial normalisation ``int R^2 r dr = 1``; the right eigenvector is a
    unit vector with positive ``u`` component. ``K < 0`` means a continuous
    transition. Independent of the sign and normalisation conventions of
    :func:`transition_number`.
    """
    if crit.n_c == 0:
        raise ValueError("use normal_form_quadratic when n_c = 0")
    lam = crit.lambda_c
    p = params.with_lambda(lam)
    g2, g12, g3 = linstab.gamma_coeffs(p)
    _, xi, eta = _left_right(params, lam, crit.eig_c)
    uc, vc = xi
    gam = g2 * uc * uc + g12 * uc * vc
    fam_w, psi4, psi2 = angular_factors(crit.n_c, pivot)
    c_native = math.sqrt(math.pi)  # native profiles have pi int R^2 r dr = 1
    if families is None:
        cd = critical_data(crit, params, "2pi")
        families = {n: family_sum(n, cd, params, tail_tol, zero_mode_norm="2pi")
                    for n in fam_w}
    total = 0.0
    for n, fs in families.items():
        basis_norm = 2.0 * math.pi if n == 0 else math.pi
        for m, ov in zip(fs.modes, fs.overlaps):
            c_m = 1.0 / math.sqrt(specfun.profile_norm_sq(m))
            a_k = c_native ** 2 * c_m * ov
            phi = -np.linalg.solve(linstab.linear_matrix(p, m.eig), np.array([1.0, -1.0])) * gam * a_k
            h = 2.0 * g2 * uc * phi[0] + g12 * (uc * phi[1] + vc * phi[0])
            total += fam_w[n] / basis_norm * h * a_k
    r4 = specfun.radial_integral([crit.mode] * 4, params.delta) * c_native ** 4
    total += psi4 * g3 * uc * uc * vc * r4
    return float((eta[0] - eta[1]) / (psi2 * float(eta @ xi)) * total)


def normal_form_quadratic(crit, params):
    """Quadratic coefficient of ``dy/dt = beta y + K y^2`` for ``n_c = 0`` (left-eigenvector projection)."""
    if crit.n_c != 0:
        raise ValueError("normal_form_quadratic needs n_c = 0")
    lam = crit.lambda_c
    p = params.with_lambda(lam)
    g2, g12, _ = linstab.gamma_coeffs(p)
    _, xi, eta = _left_right(params, lam, crit.eig_c)
    gam = g2 * xi[0] ** 2 + g12 * xi[0] * xi[1]
    c = math.sqrt(2.0 * math.pi)
    r3 = specfun.radial_integral([crit.mode] * 3, params.delta) * c ** 3
    # angular factor int 1 dt / int 1 dt = 1 for the constant pivot
    return float((eta[0] - eta[1]) / float(eta @ xi) * gam * r3)
