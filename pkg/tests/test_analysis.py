import csv
import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afsshlab.analysis import (
    METHOD_ORDER,
    FitError,
    MethodRates,
    boltzmann_population,
    bootstrap_fit,
    build_comparison,
    detailed_balance_deviation,
    early_slope,
    effective_temperature,
    fit_rates,
    hop_energies,
    hop_statistics,
    single_exponential_residual,
    surface_profiles,
    write_comparison_csv,
    write_comparison_json,
)
from afsshlab.model import STANDARD_PARAMS
from afsshlab.units import KB

P = STANDARD_PARAMS


def relaxation(t, p_inf, k, p0=1.0):
    return p_inf + (p0 - p_inf) * np.exp(-k * t)


# -- rate fits ---------------------------------------------------------------------


@given(st.floats(0.01, 0.45), st.floats(1e-6, 1e-4))
@settings(max_examples=30, deadline=None)
def test_noise_free_recovery(p_inf, k):
    t = np.linspace(0.0, 5.0 / k, 400)
    fit = fit_rates(t, relaxation(t, p_inf, k))
    assert fit.k_total == pytest.approx(k, rel=1e-8)
    assert fit.P_inf == pytest.approx(p_inf, rel=1e-8)
    assert fit.k_b == pytest.approx(k * p_inf, rel=1e-8)
    assert fit.k_f + fit.k_b == pytest.approx(fit.k_total, rel=1e-14)


def test_noisy_recovery_across_seeds():
    k, p_inf = 1.55e-5, 0.16
    t = np.linspace(0.0, 150_000.0, 151)
    ks = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        y = relaxation(t, p_inf, k) + rng.normal(scale=0.005, size=t.size)
        ks.append(fit_rates(t, y).k_total)
    ks = np.array(ks)
    assert np.mean(np.abs(ks / k - 1) < 0.03) >= 0.95


def test_refit_of_model_is_idempotent():
    t = np.linspace(0.0, 150_000.0, 151)
    rng = np.random.default_rng(1)
    y = relaxation(t, 0.2, 2e-5) + rng.normal(scale=0.01, size=t.size)
    first = fit_rates(t, y)
    again = fit_rates(t, first.model(t))
    assert again.k_total == pytest.approx(first.k_total, rel=1e-10)
    assert again.P_inf == pytest.approx(first.P_inf, rel=1e-10)


def test_intercept_free_by_default_and_fixable():
    t = np.linspace(0.0, 2e5, 201)
    y = relaxation(t, 0.15, 2e-5, p0=0.9)
    free = fit_rates(t, y)
    assert free.P_start == pytest.approx(0.9, rel=1e-8)
    pinned = fit_rates(t, y, fixed_start=0.9)
    assert pinned.k_total == pytest.approx(2e-5, rel=1e-8)


def test_window_and_coverage_warning():
    t = np.linspace(0.0, 1000.0, 101)
    y = relaxation(t, 0.1, 1e-5)
    with pytest.warns(RuntimeWarning, match="relaxation times"):
        fit = fit_rates(t, y)
    assert fit.covers < 1
    assert fit.window == (50.0, 1000.0)


@pytest.mark.parametrize(
    "t,y",
    [
        (np.arange(3.0), np.ones(3)),
        (np.array([0.0, 2.0, 1.0, 3.0]), np.ones(4)),
        (np.arange(5.0), np.ones(4)),
    ],
)
def test_fit_input_validation(t, y):
    with pytest.raises(ValueError):
        fit_rates(t, y)


def test_fit_error_carries_best_parameters():
    t = np.linspace(0.0, 1e5, 50)
    y = relaxation(t, 0.2, 3e-5)
    with pytest.raises(FitError) as err, warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit_rates(t, y, max_nfev=1)
    assert len(err.value.best) == 3


def test_nonexponential_trace_has_larger_residual():
    t = np.linspace(0.0, 1e5, 201)
    clean = relaxation(t, 0.15, 3e-5)
    stretched = 0.15 + 0.85 * np.exp(-np.sqrt(3e-5 * t))
    assert single_exponential_residual(t, clean) < 1e-10
    assert single_exponential_residual(t, stretched) > 1e-3


def test_bootstrap_spread_reflects_noise():
    t = np.linspace(0.0, 1.5e5, 76)
    rng = np.random.default_rng(2)
    blocks = relaxation(t, 0.16, 1.5e-5)[None, :] + rng.normal(scale=0.03, size=(20, t.size))
    boot = bootstrap_fit(t, blocks, n_boot=100)
    assert boot["n"] == 100
    direct = [fit_rates(t, b).k_total for b in blocks]
    # the bootstrap error of the mean is the block spread over sqrt(blocks)
    assert boot["k_total_std"] == pytest.approx(np.std(direct, ddof=1) / math.sqrt(20), rel=0.5)
    with pytest.raises(ValueError):
        bootstrap_fit(t, blocks[:1])


# -- equilibrium references ----------------------------------------------------------


def test_boltzmann_population_standard_point():
    assert boltzmann_population(P) == pytest.approx(1.0 / (1.0 + math.exp(350.0 / (0.695035 * 300.0))), rel=1e-6)


@given(st.floats(10.0, 2000.0), st.floats(10.0, 1000.0))
@settings(max_examples=50, deadline=None)
def test_effective_temperature_inverts_boltzmann(temperature, dg):
    params = P.with_(temperature=temperature, delta_g=-dg)
    p = boltzmann_population(params)
    if 1e-300 < p < 0.5:
        assert effective_temperature(p, dg) == pytest.approx(temperature, rel=1e-8)


@pytest.mark.parametrize("p", [0.0, 0.5, 0.7, 1.0, -0.1])
def test_effective_temperature_undefined_outside_range(p):
    assert math.isnan(effective_temperature(p, 350.0))


def test_detailed_balance_deviation_of_exact_equilibrium():
    t = np.linspace(0.0, 2e5, 101)
    p_eq = boltzmann_population(P)
    fit = fit_rates(t, relaxation(t, p_eq, 2e-5))
    dev = detailed_balance_deviation(fit, P)
    assert dev["pop_error"] == pytest.approx(0.0, abs=1e-9)
    assert dev["temperature_ratio"] == pytest.approx(1.0, rel=1e-6)
    assert dev["defined"]


# -- hop locations -------------------------------------------------------------------


def test_surface_profiles_bracket_diabats():
    x = np.linspace(-600.0, 600.0, 12001)
    lower, upper = surface_profiles(P, x)
    g_d = x**2 / 40.0
    g_a = -350.0 + (x + 20.0) ** 2 / 40.0
    assert np.all(lower <= np.minimum(g_d, g_a) + 1e-12)
    assert np.all(upper >= np.maximum(g_d, g_a) - 1e-12)
    assert np.min(upper - lower) == pytest.approx(60.0, rel=1e-9)  # at the crossing X = 340


def _synthetic_log(coords, source):
    n = len(coords)
    log = np.zeros((n, 8))
    log[:, 2] = coords
    log[:, 3] = source
    log[:, 4] = 1 - source
    return log


def test_hops_at_the_minimum_have_zero_energy():
    # the upper adiabat bottoms out near the donor minimum X = 0
    log = _synthetic_log([0.0], 1)
    assert hop_energies(log, P)[0] == pytest.approx(0.0, abs=0.05)


def test_hop_statistics_counts():
    kT = P.kT
    energies = np.array([0.5, 1.0, 3.9, 4.1, 10.0]) * kT
    stats_ = hop_statistics(params=P, energies=energies)
    assert stats_["n_hops"] == 5
    assert stats_["fraction_within"] == pytest.approx(0.6)
    assert stats_["binomial_error"] == pytest.approx(math.sqrt(0.24 / 5))
    with pytest.raises(ValueError, match="no hops"):
        hop_statistics(params=P, energies=np.zeros(0))


def test_failed_hops_are_excluded():
    log = _synthetic_log([0.0, 300.0], 1)
    log[1, 5] = 1  # frustrated
    assert hop_energies(log, P).size == 1
    assert hop_energies(log, P, successful_only=False).size == 2
    out = hop_statistics(log, P)
    assert out["n_hops"] == 1 and "position_hist" in out


def test_early_slope():
    t = np.linspace(0, 100, 101)
    assert early_slope(t, 3e-4 * t + 0.2, 0, 50) == pytest.approx(3e-4, rel=1e-10)
    with pytest.raises(ValueError):
        early_slope(t, t, 200, 300)


# -- comparison tables ---------------------------------------------------------------


def test_identical_methods_give_unit_ratios():
    same = MethodRates(2e-5, 4e-6)
    rows = build_comparison([(P, {"afssh": same, "heom": (2e-5, 4e-6), "fgr": same, "marcus": same,
                                  "afssh_analytic": {"k_f": 2e-5, "k_b": 4e-6}})])
    r = rows[0].ratios
    assert r["afssh_over_heom"] == pytest.approx(1.0)
    assert r["fgr_over_marcus"] == pytest.approx(1.0)
    assert r["analytic_over_afssh"] == pytest.approx(1.0)
    assert rows[0].methods["heom"].P_inf == pytest.approx(4e-6 / 2.4e-5)


def test_missing_methods_leave_blank_cells(tmp_path):
    rows = build_comparison([(P, {"heom": (1e-5, 2e-6)}), (P.with_(lam=5.0), {"marcus": (3e-6, 1e-7)})])
    path = write_comparison_csv(rows, tmp_path / "cmp.csv")
    with path.open() as fh:
        table = list(csv.DictReader(fh))
    assert len(table) == 2
    assert table[0]["afssh_k_f"] == "" and table[0]["heom_k_f"] != ""
    assert table[0]["afssh_over_heom"] == ""
    header = list(table[0].keys())
    assert header.index("afssh_k_f") < header.index("heom_k_f")
    assert [h for h in header if h.endswith("_k_f")] == [f"{m}_k_f" for m in METHOD_ORDER]


def test_json_export_round_trip(tmp_path):
    rows = build_comparison([(P, {"heom": (1e-5, 2e-6)})])
    path = tmp_path / "cmp.json"
    write_comparison_json(rows, path, provenance={"seed": 3})
    data = json.loads(path.read_text())
    assert data["provenance"] == {"seed": 3}
    assert data["rows"][0]["methods"]["heom"]["k_f"] == 1e-5


def test_coerce_rate_fit():
    t = np.linspace(0.0, 2e5, 101)
    fit = fit_rates(t, relaxation(t, 0.2, 2e-5))
    mr = MethodRates.coerce(fit)
    assert mr.k == pytest.approx(fit.k_total)
    assert mr.P_inf == pytest.approx(fit.P_inf)


def test_kb_constant_used_consistently():
    assert P.kT == pytest.approx(KB * 300.0)
