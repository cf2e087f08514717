import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvonline.errors import (
    ConfigurationError,
    DataError,
    GenerationError,
    InvalidReturnError,
    InvariantViolationError,
    MisconfiguredBoundsError,
)
from mvonline.markets import (
    CsvSource,
    IidSpec,
    MarkovChainSpec,
    conditional_moments,
    discrete_expected_log,
    iid_path,
    iid_sample,
    load_csv,
    make_reversible_chain,
    markov_path,
    markov_step,
    stationary_moments,
    write_csv,
)

T2 = np.array([[0.7, 0.3], [0.3, 0.7]])
X2 = np.array([[1.1, 0.9], [0.9, 1.1]])


def lognormal_spec():
    S = np.array([[0.01, 0.004], [0.004, 0.02]])
    return IidSpec.truncated_lognormal([0.02, 0.0], S, bounds=(0.3, 3.0))


# ---------------------------------------------------------------- i.i.d.

def test_single_point_law_is_constant():
    spec = IidSpec.discrete([[1.2, 0.8]])
    path = iid_path(spec, np.random.default_rng(0), 50)
    assert np.all(path == [1.2, 0.8])


def test_seeded_paths_repeat():
    for spec in (IidSpec.discrete([[1.2, 0.8], [0.9, 1.1]], [0.3, 0.7]), lognormal_spec()):
        a = iid_path(spec, np.random.default_rng(42), 500)
        b = iid_path(spec, np.random.default_rng(42), 500)
        np.testing.assert_array_equal(a, b)


def test_path_equals_repeated_samples():
    for spec in (IidSpec.discrete([[1.2, 0.8], [0.9, 1.1]], [0.3, 0.7]), lognormal_spec()):
        r1, r2 = np.random.default_rng(5), np.random.default_rng(5)
        path = iid_path(spec, r1, 200)
        one = np.array([iid_sample(spec, r2) for _ in range(200)])
        np.testing.assert_array_equal(path, one)


def test_lognormal_mean_within_four_standard_errors():
    spec = lognormal_spec()
    X = iid_path(spec, np.random.default_rng(2024), 100_000)
    mom = spec.moments()
    se = np.sqrt(np.diag(mom.sigma) / X.shape[0])
    assert np.all(np.abs(X.mean(axis=0) - mom.mu) <= 4 * se)
    assert np.all(X >= 0.3) and np.all(X <= 3.0)


def test_discrete_frequencies():
    spec = IidSpec.discrete([[1.2, 0.8], [0.9, 1.1], [1.0, 1.0]], [0.2, 0.5, 0.3])
    X = iid_path(spec, np.random.default_rng(1), 100_000)
    freq = np.array([(X[:, 0] == v).mean() for v in (1.2, 0.9, 1.0)])
    se = np.sqrt(spec.probs * (1 - spec.probs) / X.shape[0])
    assert np.all(np.abs(freq - spec.probs) <= 4 * se)


def test_discrete_moments_and_log():
    spec = IidSpec.discrete(X2, [0.7, 0.3])
    mom = spec.moments()
    np.testing.assert_allclose(mom.mu, [1.04, 0.96])
    np.testing.assert_allclose(mom.sigma, [[0.0084, -0.0084], [-0.0084, 0.0084]], atol=1e-15)
    b = np.array([0.5, 0.5])
    assert discrete_expected_log(X2, [0.7, 0.3], b) == 0.0


def test_rejection_mass_guard():
    with pytest.raises(MisconfiguredBoundsError):
        IidSpec.truncated_lognormal([0.0, 0.0], 0.25 * np.eye(2), bounds=(0.9, 1.1))
    spec = IidSpec.truncated_lognormal([0.0, 0.0], 0.25 * np.eye(2), bounds=(0.9, 1.1),
                                       max_rejection_mass=2.0)
    assert spec.rejection_mass() > 1e-6


def test_consecutive_rejections_raise():
    # Both coordinates sit far outside the bounds, so every draw is rejected.
    spec = IidSpec.truncated_lognormal([3.0, 3.0], 1e-4 * np.eye(2), bounds=(0.5, 2.0),
                                       max_rejection_mass=2.0)
    with pytest.raises(MisconfiguredBoundsError):
        iid_path(spec, np.random.default_rng(0), 5)


@pytest.mark.parametrize("kwargs", [
    dict(points=[[1.0, 1.0]], probs=[0.5]),
    dict(points=[[1.0, 1.0], [1.1, 0.9]], probs=[0.6, 0.6]),
    dict(points=[[1.0, -1.0]], probs=[1.0]),
])
def test_discrete_validation(kwargs):
    with pytest.raises((ConfigurationError, InvalidReturnError)):
        IidSpec.discrete(**kwargs)


def test_lognormal_validation():
    with pytest.raises(ConfigurationError):
        IidSpec.truncated_lognormal([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ConfigurationError):
        IidSpec.truncated_lognormal([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ConfigurationError):
        IidSpec.truncated_lognormal([0.0, 0.0], 0.01 * np.eye(2), bounds=(2.0, 1.0))


# ---------------------------------------------------------------- Markov

def test_single_state_chain_is_constant():
    spec = MarkovChainSpec([[1.05, 0.95]], [[1.0]])
    path, states = markov_path(spec, np.random.default_rng(0), 20)
    assert np.all(path == [1.05, 0.95]) and np.all(states == 0)
    mom = conditional_moments(spec, 0)
    np.testing.assert_array_equal(mom.sigma, np.zeros((2, 2)))
    np.testing.assert_array_equal(stationary_moments(spec).mu, [1.05, 0.95])


def test_two_state_conditional_moments():
    spec = MarkovChainSpec(X2, T2)
    mom = conditional_moments(spec, 0)
    np.testing.assert_allclose(mom.mu, [1.04, 0.96], atol=1e-15)
    np.testing.assert_allclose(mom.sigma, [[0.0084, -0.0084], [-0.0084, 0.0084]], atol=1e-15)
    st_mom = stationary_moments(spec)
    np.testing.assert_allclose(spec.stationary, [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(st_mom.mu, [1.0, 1.0], atol=1e-15)


def test_uniform_row_gives_average():
    X = np.array([[1.1, 0.9], [0.9, 1.1], [1.0, 1.2]])
    spec = MarkovChainSpec(X, np.full((3, 3), 1 / 3))
    np.testing.assert_allclose(conditional_moments(spec, 1).mu, X.mean(axis=0))


def test_detailed_balance_by_monte_carlo():
    spec = MarkovChainSpec(X2, T2)
    n = 1_000_000
    _, s = markov_path(spec, np.random.default_rng(99), n)
    for i in range(2):
        for j in range(2):
            f = np.mean((s[:-1] == i) & (s[1:] == j))
            p = spec.stationary[i] * T2[i, j]
            assert abs(f - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_empirical_moments_approach_stationary():
    spec = make_reversible_chain(6, 3, seed=4)
    n = 1_000_000
    path, _ = markov_path(spec, np.random.default_rng(3), n)
    mom = stationary_moments(spec)
    # Chain correlation inflates the variance; bound it with the spectral gap.
    lam = np.sort(np.abs(np.linalg.eigvals(spec.transition)))[-2]
    inflate = (1 + lam) / (1 - lam)
    se = np.sqrt(np.diag(mom.sigma) * inflate / n)
    assert np.all(np.abs(path.mean(axis=0) - mom.mu) <= 3 * se)


def test_step_and_path_agree():
    spec = make_reversible_chain(5, 2, seed=1)
    r1, r2 = np.random.default_rng(8), np.random.default_rng(8)
    path, states = markov_path(spec, r1, 300, initial_state=2)
    s = 2
    for t in range(300):
        x, s = markov_step(spec, s, r2)
        assert s == states[t]
        np.testing.assert_array_equal(x, path[t])


def test_seeded_chain_paths_repeat():
    spec = make_reversible_chain(5, 2, seed=1)
    a, _ = markov_path(spec, np.random.default_rng(8), 1000)
    b, _ = markov_path(spec, np.random.default_rng(8), 1000)
    np.testing.assert_array_equal(a, b)


def test_chain_invariants_enforced():
    with pytest.raises(InvariantViolationError):
        MarkovChainSpec(X2, [[1.0, 0.0], [0.3, 0.7]])
    with pytest.raises(InvariantViolationError):
        MarkovChainSpec(X2, [[0.7, 0.2], [0.3, 0.7]])
    with pytest.raises(InvariantViolationError):
        MarkovChainSpec(X2, T2, stationary=[0.9, 0.1])
    X3 = np.array([[1.1, 0.9], [0.9, 1.1], [1.0, 1.0]])
    T = np.array([[0.1, 0.8, 0.1], [0.1, 0.1, 0.8], [0.8, 0.1, 0.1]])
    with pytest.raises(InvariantViolationError):
        MarkovChainSpec(X3, T)
    with pytest.raises(InvariantViolationError):
        markov_step(MarkovChainSpec(X2, T2), 2, np.random.default_rng(0))


def test_state_lookup():
    spec = MarkovChainSpec(X2, T2)
    assert spec.state_of([0.9, 1.1]) == 1
    assert spec.state_of([1.0, 1.0]) == -1


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.integers(2, 4), st.integers(0, 3))
def test_generated_chains_are_valid(seed, m, extra):
    K = m + 1 + extra
    spec = make_reversible_chain(K, m, seed)
    T = spec.transition
    np.testing.assert_array_equal(T, T.T)
    np.testing.assert_allclose(spec.stationary, np.full(K, 1 / K))
    flow = spec.stationary[:, None] * T
    assert np.abs(flow - flow.T).max() <= 1e-12
    assert np.all(T > 0)
    for s in range(K):
        assert np.linalg.eigvalsh(conditional_moments(spec, s).sigma)[0] > 1e-8
    again = make_reversible_chain(K, m, seed)
    np.testing.assert_array_equal(again.state_returns, spec.state_returns)
    np.testing.assert_array_equal(again.transition, spec.transition)


def test_generator_errors():
    with pytest.raises(ConfigurationError):
        make_reversible_chain(2, 2, seed=0)
    # A norm bound below every emitted vector can never be met.
    with pytest.raises(GenerationError):
        make_reversible_chain(4, 2, seed=0, m_bound=1e-3, max_retries=3)


# ------------------------------------------------------------------- CSV

def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_prices_become_ratios(tmp_path):
    p = write(tmp_path, "a,b\n100,100\n110,90\n")
    X = load_csv(CsvSource(p, kind="prices"))
    np.testing.assert_allclose(X, [[1.1, 0.9]], rtol=1e-15)


def test_returns_pass_through(tmp_path):
    p = write(tmp_path, "a,b\n1.1,0.9\n\n0.95,1.05\n")
    X = load_csv(CsvSource(p, asset_names=("a", "b")))
    np.testing.assert_array_equal(X, [[1.1, 0.9], [0.95, 1.05]])


def test_round_trip(tmp_path):
    X = iid_path(lognormal_spec(), np.random.default_rng(3), 300)
    p = str(tmp_path / "rt.csv")
    write_csv(p, X, ["u", "v"])
    Y = load_csv(CsvSource(p))
    assert np.abs(Y - X).max() <= 1e-12
    np.testing.assert_array_equal(Y, X)


@pytest.mark.parametrize("text,line,column", [
    ("a,b\n1.0,1.0\n1.0\n", 3, None),
    ("a,b\n1.0,abc\n", 2, 2),
    ("a,b\n1.0,1.0\n-1.0,1.0\n", 3, 1),
    ("a,b\n0,1.0\n", 2, 1),
    ("a,b\n1.0,nan\n", 2, 2),
])
def test_bad_rows_report_location(tmp_path, text, line, column):
    with pytest.raises(DataError) as info:
        load_csv(CsvSource(write(tmp_path, text)))
    assert info.value.line == line and info.value.column == column
    assert f"line {line}" in str(info.value)


def test_header_and_size_checks(tmp_path):
    with pytest.raises(DataError):
        load_csv(CsvSource(write(tmp_path, "a,b\n1,1\n"), asset_names=("x", "y")))
    with pytest.raises(DataError):
        load_csv(CsvSource(write(tmp_path, "a,b\n100,100\n"), kind="prices"))
    with pytest.raises(DataError):
        load_csv(CsvSource(write(tmp_path, "")))
    with pytest.raises(ConfigurationError):
        CsvSource("x.csv", kind="levels")


def test_bound_violation_reject_or_clamp(tmp_path):
    p = write(tmp_path, "a,b\n1.0,1.0\n12.0,1.0\n")
    with pytest.warns(RuntimeWarning, match="line 3"):
        with pytest.raises(DataError):
            load_csv(CsvSource(p))
    with pytest.warns(RuntimeWarning):
        X = load_csv(CsvSource(p, on_bound_violation="clamp"))
    assert np.linalg.norm(X[1]) == pytest.approx(10.0)
    np.testing.assert_allclose(X[1] / X[1, 1], [12.0, 1.0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        load_csv(CsvSource(write(tmp_path, "a,b\n1,1\n", "ok.csv")))
