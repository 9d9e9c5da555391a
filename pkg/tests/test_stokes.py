from __future__ import annotations

import cmath
import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import exact_solution, system
from stokeslab.odesys import DirectionEntry, eigenvalues, linear_part
from stokeslab.resum import gevrey_estimate, resummation
from stokeslab.stokes import (FitDiverged, InconsistentSamples, MissingDirection, all_reports,
                              check_SD, conjugate_pair_error, decay_rate_fit, default_grid,
                              dumps, multiplier_estimate, reports_csv_rows, stokes_jump,
                              stokes_report)


def reports(name):
    res = resummation(system(name))
    return res, all_reports(res, threads=1)


# -- jumps


@pytest.mark.parametrize("x", [0.05, 0.1, 0.2])
def test_euler_jump_magnitude(x):
    res = resummation(system("euler"))
    (s,) = stokes_jump(res, -1, [x], threads=1)
    exact = 2 * math.pi * math.exp(-1 / x)
    assert abs(abs(s.delta[0]) - exact) <= 1e-6 * exact


def test_euler_jump_at_one_tenth():
    res = resummation(system("euler"))
    (s,) = stokes_jump(res, -1, [0.1], threads=1)
    # agreement to 5 significant digits: within half a unit of the fifth digit
    assert abs(abs(s.delta[0]) - 2.85255e-4) <= 0.5e-8


def test_jump_vanishes_off_singular_rays():
    res = resummation(system("euler2d"))
    entry = DirectionEntry(math.pi / 2, 0, 0, 0)
    for rho in (0.05, 0.1, 0.2):
        m, p = res.lateral(entry, rho * 1j)
        assert np.max(np.abs(p - m)) < 1e-10


def test_convergent_jump_below_tolerance():
    res = resummation(system("convergent"))
    for s in stokes_jump(res, -1, default_grid(0.0, 1.0, 1), threads=1):
        assert np.max(np.abs(s.delta)) <= max(1e-10, 10 * s.error)


# -- decay fits


def test_euler_rate_and_multiplier():
    _, (rep,) = reports("euler")
    assert 0.95 <= rep.rate <= 1.05 and rep.fit.power == 1
    # plus side is the larger angle, so the jump is +2 pi i e^(-1/x)
    assert abs(rep.gamma - 2j * math.pi) <= 1e-3 * 2 * math.pi
    assert abs(rep.fit.alpha) < 1e-3


def test_euler2d_rates_and_conjugate_pairing():
    _, reps = reports("euler2d")
    assert len(reps) == 2
    for rep in reps:
        assert math.sqrt(2) * 0.95 <= rep.rate <= math.sqrt(2) * 1.05
        assert rep.genuine
    assert conjugate_pair_error(reps[0], reps[1]) < 0.05


def test_odd_pump_rate():
    _, reps = reports("odd_pump")
    for rep in reps:
        assert rep.rate == pytest.approx(0.5, rel=0.05) and rep.fit.power == 2


@pytest.mark.parametrize("name", ["euler", "euler2d", "odd_pump"])
def test_exponential_smallness(name):
    s = system(name)
    spec = eigenvalues(linear_part(s))
    _, reps = reports(name)
    for rep in reps:
        lam = spec.eigenvalues[rep.direction[1]]
        assert rep.rate == pytest.approx(abs(lam) / s.p, rel=0.10)


def test_synthetic_rate_three():
    zs = np.geomspace(0.2, 1.0, 10)
    fit = decay_rate_fit([(z, 0.7 * math.exp(-3 / z)) for z in zs], 1)
    assert fit.rate == pytest.approx(3, rel=1e-10) and fit.power == 1


@given(st.floats(0.3, 4.0), st.sampled_from([1.0, 2.0]), st.floats(-1.5, 1.5), st.floats(0.1, 10))
def test_fit_recovers_own_model(a, k, alpha, c):
    zs = np.geomspace(0.3, 1.5, 12)
    samples = [(z, c * math.exp(-a / z ** k) * z ** alpha) for z in zs]
    fit = decay_rate_fit(samples)
    assert fit.power == k
    assert fit.rate == pytest.approx(a, rel=1e-8)
    assert fit.alpha == pytest.approx(alpha, abs=1e-6)


def test_fit_preconditions():
    with pytest.raises(FitDiverged):
        decay_rate_fit([(z, math.exp(-1 / z)) for z in np.geomspace(0.1, 0.5, 7)])
    with pytest.raises(FitDiverged):
        decay_rate_fit([(z, math.exp(-1 / z)) for z in np.geomspace(0.1, 0.3, 12)])
    with pytest.raises(FitDiverged):
        # growing samples admit no decaying model
        decay_rate_fit([(z, math.exp(1 / z)) for z in np.geomspace(0.1, 0.5, 12)])


# -- multipliers


def test_synthetic_multiplier():
    zs = [0.1 * k * cmath.exp(0.1j) for k in range(1, 9)]
    samples = [(z, (3 + 4j) * cmath.exp(-1 / z)) for z in zs]
    m = multiplier_estimate(samples, 1.0, 1, 0.0)
    assert abs(m.gamma - (3 + 4j)) < 1e-12 and m.dispersion < 1e-12


def test_inconsistent_samples():
    rng = np.random.default_rng(0)
    samples = [(0.1 * k, rng.normal() * math.exp(-10 / k)) for k in range(1, 9)]
    with pytest.raises(InconsistentSamples):
        multiplier_estimate(samples, 1.0, 1, 0.0)


def test_convergent_multiplier_and_sd():
    res, reps = reports("convergent")
    assert all(abs(r.gamma) < 1e-8 for r in reps)
    assert not check_SD(reps, eigenvalues(linear_part(system("convergent"))))


def test_zero_jump_implies_gevrey_zero():
    _, reps = reports("convergent")
    assert all(abs(r.gamma) < 1e-8 for r in reps)
    assert abs(gevrey_estimate(exact_solution("convergent", 200)[0]).kappa) < 0.1


# -- SD check


@pytest.mark.parametrize("name", ["euler", "euler2d"])
def test_sd_true(name):
    res, reps = reports(name)
    sd = check_SD(reps, eigenvalues(linear_part(system(name))), len(res.table))
    assert sd and all(v is not None for v in sd.evidence.values())


def test_missing_direction():
    res, reps = reports("euler2d")
    with pytest.raises(MissingDirection):
        check_SD(reps[:1], eigenvalues(linear_part(system("euler2d"))), len(res.table))


def test_explicit_grid_report():
    res = resummation(system("euler"))
    grid = list(np.geomspace(0.05, 0.25, 10))
    rep = stokes_report(res, -1, grid, threads=1)
    assert len(rep.samples) == 10 and rep.genuine


def test_threads_do_not_change_reports():
    res = resummation(system("euler2d"))
    a = dumps(all_reports(res, threads=1))
    b = dumps(all_reports(res, threads=4))
    assert a == b


# -- serialization


def test_report_json_and_csv():
    res, reps = reports("euler2d")
    sd = check_SD(reps, eigenvalues(linear_part(system("euler2d"))))
    d = json.loads(dumps(reps, sd))
    assert d["sd"]["ok"] is True and len(d["reports"]) == 2
    first = d["reports"][0]
    assert {"direction", "samples", "fit", "gamma", "genuine"} <= set(first)
    assert first["fit"]["alpha_rounded"] == 0.0
    rows = reports_csv_rows(reps)
    buf = io.StringIO()
    csv.writer(buf).writerows(rows)
    assert buf.getvalue().splitlines()[0].startswith("index,theta,eigenvalue_index,rate")
    assert len(rows) == 3
