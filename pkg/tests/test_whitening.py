import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import conditional_cdf_shifted
from scipy import stats

from regulab.dgp import conditional_law
from regulab.errors import ConfigError, DataError, FitError
from regulab.metrics import binned_tv
from regulab.sampling import SeedSpec
from regulab.scenarios import coupled_noise, shifted_noise, white_noise
from regulab.whitening import (
    BinningConfig,
    ConditionalCdfChain,
    WhitenedFactorization,
    fit_chain,
    unwhiten,
    verify_whiteness,
    whiten,
)


@pytest.fixture(scope="module")
def shifted():
    gen = shifted_noise()
    x, r = gen.joint(100_000, SeedSpec(0))
    return gen, fit_chain(x, r, 1)


@pytest.fixture(scope="module")
def coupled():
    gen = coupled_noise()
    x, r = gen.joint(200_000, SeedSpec(0))
    return gen, fit_chain(x, r, 2)


def test_white_noise_chain_is_near_identity():
    gen = white_noise()
    x, r = gen.joint(100_000, SeedSpec(1))
    chain = fit_chain(x, r, 1)
    t = np.linspace(0, 1, 101)
    for xv in (0.05, 0.5, 0.95):
        assert np.max(np.abs(chain.cdf(0, [[xv]], None, t) - t)) < 0.02


def test_shifted_chain_matches_closed_form(shifted):
    _, chain = shifted
    for xv in (0.1, 0.3, 0.5, 0.9):
        t = np.linspace(xv - 0.2, xv + 1.2, 141)
        dev = np.abs(chain.cdf(0, [[xv]], None, t) - conditional_cdf_shifted(xv, t))
        assert dev.max() < 0.03


def test_gaussian_noise_matches_phi():
    from regulab.dgp import Box, LatentSpace
    from regulab.sampling import uniform
    from regulab.whitening import DependentFactorization

    gen = DependentFactorization(
        Box([0.0], [1.0]), uniform(), lambda x, rng: rng.standard_normal((x.shape[0], 1)),
        lambda x, r: r, LatentSpace.continuous(1), 1, "gauss",
    )
    x, r = gen.joint(100_000, SeedSpec(2))
    chain = fit_chain(x, r, 1)
    t = np.linspace(-3, 3, 121)
    for xv in (0.2, 0.7):
        assert np.max(np.abs(chain.cdf(0, [[xv]], None, t) - stats.norm.cdf(t))) < 0.02


def test_identity_chain_whitens_to_itself():
    chain = ConditionalCdfChain.identity_chain(2, 1)
    r = np.random.default_rng(0).random((50, 2))
    assert np.array_equal(whiten(chain, np.zeros((50, 1)), r), r)


def test_whiten_point_oracle(shifted):
    _, chain = shifted
    assert whiten(chain, [[0.3]], [[0.8]])[0, 0] == pytest.approx(0.5, abs=0.03)


def test_unwhiten_point_oracle(shifted):
    _, chain = shifted
    assert unwhiten(chain, [[0.3]], [[0.5]])[0, 0] == pytest.approx(0.8, abs=0.03)


def test_quantile_of_zero_is_left_edge(shifted):
    _, chain = shifted
    assert unwhiten(chain, [[0.3]], [[0.0]])[0, 0] == pytest.approx(0.3, abs=0.03)


@given(st.floats(0.0, 1.0), st.floats(-0.5, 2.5), st.floats(-0.5, 2.5))
def test_whiten_monotone_in_r(x, r1, r2):
    chain = _SHIFTED_CHAIN
    lo, hi = sorted((r1, r2))
    c = whiten(chain, [[x], [x]], [[lo], [hi]])
    assert c[0, 0] <= c[1, 0]


@given(st.floats(0.0, 1.0), st.floats(-1, 3), st.floats(-1, 3), st.floats(-1, 5), st.floats(-1, 5))
def test_coupled_whiten_monotone_given_prefix(x, a, b, s, t):
    chain = _COUPLED_CHAIN
    lo, hi = sorted((s, t))
    c = whiten(chain, [[x], [x]], [[a, lo], [a, hi]])
    assert c[0, 1] <= c[1, 1]
    lo, hi = sorted((a, b))
    c = whiten(chain, [[x], [x]], [[lo, s], [hi, s]])
    assert c[0, 0] <= c[1, 0]


def test_round_trip_held_out(shifted, coupled):
    for gen, chain in (shifted, coupled):
        x, r = gen.joint(1000, SeedSpec(99))
        c, flags = chain.whiten(x, r, with_flags=True)
        back = chain.unwhiten(x[~flags], c[~flags])
        assert np.max(np.abs(back - r[~flags])) < 1e-3
        assert flags.mean() < 0.01


def test_cdf_of_quantile(shifted):
    _, chain = shifted
    c = np.linspace(0.0, 1.0, 201)
    for xv in (0.2, 0.6):
        q = chain.quantile(0, [[xv]], None, c)
        assert np.max(np.abs(chain.cdf(0, [[xv]], None, q) - c)) < 1e-6


def test_whiteness_shifted_passes(shifted):
    gen, chain = shifted
    x, r = gen.joint(100_000, SeedSpec(7))
    rep = verify_whiteness(chain, x, r)
    assert rep.passed, rep.to_dict()
    assert max(rep.ks) < 0.02 and rep.max_abs_corr < 0.05


def test_whiteness_coupled_passes(coupled):
    gen, chain = coupled
    x, r = gen.joint(100_000, SeedSpec(7))
    rep = verify_whiteness(chain, x, r)
    assert rep.passed, rep.to_dict()


def test_whiteness_white_noise_with_identity_chain():
    gen = white_noise()
    x, r = gen.joint(100_000, SeedSpec(3))
    rep = verify_whiteness(ConditionalCdfChain.identity_chain(1, 1), x, r)
    assert rep.passed
    assert rep.clamped_fraction == 0.0


def test_corrupted_chain_fails():
    gen = shifted_noise()
    x, r = gen.joint(100_000, SeedSpec(3))
    rep = verify_whiteness(ConditionalCdfChain.identity_chain(1, 1), x, r)
    assert not rep.passed
    # regression baseline for the negative control: the clip map leaves R = X + U
    # correlated with X and far from uniform
    assert rep.ks[0] > 0.4
    assert rep.max_abs_corr > 0.5


def test_composition_identity(shifted, coupled):
    for gen, chain in (shifted, coupled):
        x, r = gen.joint(10_000, SeedSpec(5))
        c, flags = chain.whiten(x, r, with_flags=True)
        wf = WhitenedFactorization(gen, chain)
        keep = ~flags
        err = np.abs(wf.t_prime(x[keep], c[keep]) - gen.t_map(x[keep], r[keep]))
        assert err.max() < 1e-6


@pytest.mark.parametrize("xv", [0.1, 0.5, 0.9])
def test_whitened_factorization_preserves_conditional_law(shifted, xv):
    gen, chain = shifted
    fact = WhitenedFactorization(gen, chain).factorization()
    law = conditional_law(fact, xv, 100_000, SeedSpec(8))
    ref = gen.conditional_law_samples(xv, 100_000, SeedSpec(9))
    tv, _ = binned_tv(law.samples, ref)
    assert tv < 0.05


def test_save_load_round_trip(shifted, tmp_path):
    _, chain = shifted
    path = chain.save(tmp_path / "c.npz")
    again = ConditionalCdfChain.load(path)
    x = np.random.default_rng(0).random((100, 1))
    r = x + np.random.default_rng(1).random((100, 1))
    assert np.array_equal(chain.whiten(x, r), again.whiten(x, r))
    chain.save(tmp_path / "d.npz")
    assert (tmp_path / "c.npz").read_bytes() == (tmp_path / "d.npz").read_bytes()


def test_load_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.npz"
    np.savez(p, a=np.zeros(3))
    with pytest.raises(DataError):
        ConditionalCdfChain.load(p)


def test_fit_needs_enough_pairs():
    with pytest.raises(DataError):
        fit_chain(np.zeros((10, 1)), np.zeros((10, 1)))


def test_fit_rejects_non_finite():
    x = np.random.default_rng(0).random((2000, 1))
    r = x.copy()
    r[5] = np.nan
    with pytest.raises(DataError):
        fit_chain(x, r)


def test_fit_error_names_bin():
    x = np.random.default_rng(0).random((2000, 1))
    with pytest.raises(FitError, match="bin"):
        fit_chain(x, x, bins=BinningConfig(x_bins=512, r_bins=16, min_leaf=8))


def test_binning_config_validation():
    with pytest.raises(ConfigError):
        BinningConfig(x_bins=0)


def test_shape_mismatch_is_data_error(shifted):
    _, chain = shifted
    with pytest.raises(DataError):
        chain.whiten(np.zeros((3, 1)), np.zeros((3, 2)))


def test_out_of_support_is_flagged(shifted):
    _, chain = shifted
    c, flags = chain.whiten([[0.5], [0.5], [1.5]], [[0.7], [5.0], [1.7]], with_flags=True)
    assert flags.tolist() == [False, True, True]
    assert c[1, 0] == 1.0


_SHIFTED_CHAIN = fit_chain(*shifted_noise().joint(20_000, SeedSpec(11)), 1)
_COUPLED_CHAIN = fit_chain(*coupled_noise().joint(50_000, SeedSpec(11)), 2)
