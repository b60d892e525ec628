import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from annulus_turing import linstab, specfun, transition
from annulus_turing.errors import NearResonance, TailNotConverged
from annulus_turing.linstab import ModelParams
from annulus_turing.transition import TransitionType

from conftest import REFERENCE_ROWS, row_params

# rows where the table convention and the physical normal form agree in sign
AGREEING_ROWS = [0, 1, 2, 4, 5, 6, 7, 8, 10, 11, 12]


def setup(row):
    p = row_params(row)
    crit = linstab.critical_lambda(p)
    return p, crit


@pytest.fixture(scope="module")
def row1_report():
    p, crit = setup(0)
    return p, crit, transition.transition_number(crit, p)


# -- angular factors -------------------------------------------------------

@pytest.mark.parametrize("n_c", [1, 2, 5, 10])
def test_angular_factors(n_c):
    for pivot in ("cos", "sin"):
        fam, psi4, psi2 = transition.angular_factors(n_c, pivot)
        assert set(fam) == {0, 2 * n_c}
        assert fam[0] == pytest.approx(math.pi ** 2, rel=1e-13)
        assert fam[2 * n_c] == pytest.approx(math.pi ** 2 / 4, rel=1e-13)
        assert psi4 == pytest.approx(0.75 * math.pi, rel=1e-13)
        assert psi2 == pytest.approx(math.pi, rel=1e-13)


# -- B coefficients --------------------------------------------------------

def test_conjugate_branches(row1_report):
    p, crit, _ = row1_report
    cd = transition.critical_data(crit, p)
    pc = p.with_lambda(crit.lambda_c)
    found = 0
    for m in specfun.radial_eigenvalues(0, p.delta, 6):
        if not linstab.dispersion(pc, m.eig).is_complex:
            continue
        b1 = transition.b_coefficient(m, 1, cd, p)
        b2 = transition.b_coefficient(m, 2, cd, p)
        assert b1 == pytest.approx(b2.conjugate(), rel=1e-12)
        found += 1
    assert found > 0


def test_zero_overlap_gives_zero(row1_report):
    p, crit, _ = row1_report
    m = specfun.radial_eigenvalues(4, p.delta, 2)[1]
    assert transition.b_coefficient(m, 2, crit, p, overlap=0.0) == 0


def test_coefficients_decay(row1_report):
    p, crit, _ = row1_report
    cd = transition.critical_data(crit, p)
    modes = specfun.radial_eigenvalues(0, p.delta, 8)
    b = [abs(sum(transition.b_coefficient(m, l, cd, p) for l in (1, 2))) for m in modes]
    assert b[7] < 1e-3 * b[0]


@pytest.mark.parametrize("n", [1, 3])
def test_family_structure_rejected(row1_report, n):
    p, crit, _ = row1_report
    m = specfun.radial_eigenvalues(n, p.delta, 1)[0]
    with pytest.raises(ValueError):
        transition.b_coefficient(m, 2, crit, p)
    with pytest.raises(ValueError):
        transition.family_sum(n, transition.critical_data(crit, p), p)


def test_bad_branch(row1_report):
    p, crit, _ = row1_report
    m = specfun.radial_eigenvalues(0, p.delta, 1)[0]
    with pytest.raises(ValueError):
        transition.b_coefficient(m, 3, crit, p)


def test_near_resonance():
    # evaluate row 4 (n_c = 1) where (2, 1) from the 2 n_c family is marginal
    p, crit = setup(3)
    m21 = specfun.radial_eigenvalues(2, p.delta, 1)[0]
    lam = linstab.entry_lambdas(np.array([m21.eig]), p.a, p.d, p.R)[0]
    fake = dataclasses.replace(crit, lambda_c=float(lam))
    with pytest.raises(NearResonance):
        transition.transition_number(fake, p, with_normal_form=False)


def test_tail_not_converged():
    # row 12 needs ~29 radial terms per family
    p, crit = setup(11)
    with pytest.raises(TailNotConverged):
        transition.transition_number(crit, p, j_limit=8, with_normal_form=False)


# -- transition number -----------------------------------------------------

def test_frozen_row1(row1_report):
    _, crit, rep = row1_report
    assert rep.coeff_scaled == pytest.approx(73.5752310816928, rel=1e-8)
    assert rep.type == TransitionType.CATASTROPHIC
    assert rep.normal_form == pytest.approx(-162.39383815634292, rel=1e-6)
    assert rep.normal_form_type == TransitionType.CONTINUOUS


def test_printed_convention_flips_mode_sum(row1_report):
    p, crit, rep = row1_report
    alt = transition.transition_number(crit, p, convention="printed", with_normal_form=False)
    assert alt.coeff_scaled == pytest.approx(-135.62524333294468, rel=1e-8)
    fs = sum(w / math.pi ** 2 * rep.family_sums[n]
             for n, w in transition.angular_factors(crit.n_c)[0].items())
    assert alt.q_value - rep.q_value == pytest.approx(2 * fs, rel=1e-10)
    with pytest.raises(ValueError):
        transition.transition_number(crit, p, convention="other")


@pytest.mark.parametrize("row", [0, 8, 9, 11])
def test_doubling_radial_truncation(row):
    p, crit = setup(row)
    base = transition.transition_number(crit, p, with_normal_form=False)
    more = transition.transition_number(crit, p, j_min=2 * base.j_max_used,
                                        with_normal_form=False)
    assert more.q_value == pytest.approx(base.q_value, rel=1e-6)


@pytest.mark.parametrize("row", range(14))
def test_realness_and_pivot_invariance(row):
    p, crit = setup(row)
    cos = transition.transition_number(crit, p, with_normal_form=False)
    sin = transition.transition_number(crit, p, pivot="sin", with_normal_form=False)
    assert cos.imag_residue <= 1e-10 * cos.max_term
    assert sin.q_value == pytest.approx(cos.q_value, rel=1e-12, abs=1e-12 * cos.max_term)


@pytest.mark.parametrize("row", range(14))
def test_amplitude_gap_positive(row):
    p, crit = setup(row)
    cd = transition.critical_data(crit, p)
    assert cd.amp_gap > 0
    assert abs(cd.beta_c) < 1e-8


@pytest.mark.parametrize("row", range(13))
def test_sign_stable_near_lambda_c(row):
    p, crit = setup(row)
    base = transition.transition_number(crit, p, with_normal_form=False).q_value
    for shift in (-1e-6, 1e-6):
        moved = dataclasses.replace(crit, lambda_c=crit.lambda_c + shift)
        q = transition.transition_number(moved, p, with_normal_form=False).q_value
        assert np.sign(q) == np.sign(base)


@pytest.mark.parametrize("row", AGREEING_ROWS)
def test_coefficients_close_to_table(row):
    p, crit = setup(row)
    rep = transition.transition_number(crit, p, with_normal_form=False)
    assert rep.coeff_scaled == pytest.approx(REFERENCE_ROWS[row][5], rel=0.05)


def test_row10_sign_and_normal_form():
    p, crit = setup(9)
    rep = transition.transition_number(crit, p)
    assert rep.coeff_scaled < 0
    assert rep.normal_form > 0


def test_normal_form_independent_of_zero_norm(row1_report):
    p, crit, rep = row1_report
    alt = transition.normal_form_coefficient(crit, p)
    assert alt == pytest.approx(rep.normal_form, rel=1e-6)


def test_report_json_roundtrip(row1_report):
    _, _, rep = row1_report
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["type"] == "CatastrophicII"
    assert d["critical"]["n_c"] == 2


# -- n_c = 0 ---------------------------------------------------------------

@pytest.fixture(scope="module")
def type3_case():
    p = ModelParams(a=0.4625, d=80, R=16, delta=2)
    crit = linstab.critical_lambda(p)
    return p, crit


def test_type3_report(type3_case):
    p, crit = type3_case
    assert crit.n_c == 0
    rep = transition.transition_number(crit, p)
    assert rep.type == TransitionType.RANDOM
    assert rep.q_value is None
    assert rep.vlambda_coeff == pytest.approx(-1.0 / rep.quad_coeff, rel=1e-14)
    assert rep.quad_coeff == pytest.approx(2.547, rel=1e-3)
    assert rep.normal_form > 0


def test_type3_rejects_nonzero_index(row1_report):
    p, crit, _ = row1_report
    with pytest.raises(ValueError):
        transition.type3_coefficients(crit, p)
    with pytest.raises(ValueError):
        transition.normal_form_quadratic(crit, p)


def test_type3_fixed_point(type3_case):
    p, crit = type3_case
    quad, vcoef = transition.type3_coefficients(crit, p)
    beta = 1e-3
    y = vcoef * beta
    # dy/dt = beta y + quad y^2 vanishes at the bifurcated point
    assert beta * y + quad * y * y == pytest.approx(0.0, abs=1e-18)


# -- reduced equations -----------------------------------------------------

def test_reduced_rhs_origin_fixed():
    assert transition.reduced_rhs(0.0, 0.0, 0.3, -2.0, 0.5) == (0.0, 0.0)


@settings(max_examples=100, deadline=None)
@given(beta=st.floats(1e-4, 1.0), q=st.floats(-100, -1e-3), gap=st.floats(0.1, 1.5),
       theta=st.floats(0, 2 * math.pi))
def test_reduced_rhs_invariant_circle(beta, q, gap, theta):
    r = math.sqrt(-beta / (q * gap))
    fc, fs = transition.reduced_rhs(r * math.cos(theta), r * math.sin(theta), beta, q, gap)
    assert abs(fc) <= 1e-12 * max(beta * r, 1e-300) * 10
    assert abs(fs) <= 1e-12 * max(beta * r, 1e-300) * 10


@settings(max_examples=100, deadline=None)
@given(y=st.tuples(st.floats(-2, 2), st.floats(-2, 2)), theta=st.floats(0, 2 * math.pi),
       beta=st.floats(-1, 1), q=st.floats(-10, 10))
def test_reduced_rhs_rotation_equivariant(y, theta, beta, q):
    c, s = math.cos(theta), math.sin(theta)
    rot = lambda a, b: (c * a - s * b, s * a + c * b)
    lhs = transition.reduced_rhs(*rot(*y), beta, q, 0.7)
    rhs = rot(*transition.reduced_rhs(*y, beta, q, 0.7))
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)
