from dataclasses import replace

import numpy as np
import pytest

from otfsidet.channel import DDChannel, Path, sample_dd_channel, tf_from_dd
from otfsidet.designer import DesignVariables, SystemParams, run
from otfsidet.grids import GridDims
from otfsidet.linksim import McConfig
from otfsidet.ofdmbaseline import (
    averaged_channel,
    budget_params,
    demodulate,
    design_ofdm,
    effective_matrices,
    evaluate_under_mobility,
    modulate,
    apply_channel,
)
from otfsidet.ratemodel import rate

N = M = 12
CP = 6
P = SystemParams()


def without_doppler(dd):
    return DDChannel(tuple(Path(p.gain_est, p.delay_tap, 0) for p in dd.paths), dd.err_var)


def flat_design(a=0.3, rho_bar=0.5):
    return DesignVariables(np.full((N, M), a), np.full((N, M), a), 1 - rho_bar, rho_bar)


def test_modulate_layout(rng):
    X = rng.standard_normal((N, M)) + 0j
    x = modulate(X, CP)
    assert x.shape == (N * (M + CP),)
    blocks = x.reshape(N, M + CP)
    np.testing.assert_allclose(blocks[:, :CP], blocks[:, -CP:])
    np.testing.assert_allclose(demodulate(x, N, M, CP), X, atol=1e-12)


def test_simulation_matches_effective_matrices(rng):
    dd = sample_dd_channel(rng, 3, 6, 6)
    X = rng.standard_normal((N, M)) + 1j * rng.standard_normal((N, M))
    Y = demodulate(apply_channel(modulate(X, CP), dd, N, M), N, M, CP)
    G = effective_matrices(dd, N, M, CP)
    assert np.max(np.abs(Y - np.einsum("nab,nb->na", G, X))) < 1e-12


def test_zero_doppler_has_no_ici(rng):
    dd = without_doppler(sample_dd_channel(rng, 3, 6, 6))
    G = effective_matrices(dd, N, M, CP)
    diag = np.einsum("nmm->nm", G)
    off = np.sum(np.abs(G) ** 2) - np.sum(np.abs(diag) ** 2)
    assert off <= 1e-10 * np.sum(np.abs(diag) ** 2)
    np.testing.assert_allclose(diag, tf_from_dd(dd, GridDims(N, M)).h_est, atol=1e-12)


def test_dirichlet_leakage_oracle():
    k = 6
    G = effective_matrices(DDChannel((Path(1.0, 0, k),)), N, M, CP)
    tau = np.arange(M)
    for n in (0, 3, 11):
        t = n * (M + CP) + CP + tau
        ramp = np.exp(2j * np.pi * k * t / (N * M))
        for dm in range(M):
            # DFT of the Doppler ramp over one useful block
            oracle = np.sum(ramp * np.exp(-2j * np.pi * dm * tau / M)) / M
            for m in range(M):
                assert abs(G[n, (m + dm) % M, m] - oracle) < 1e-9
    # flat unit design: ICI power per subcarrier is the off-peak kernel mass
    kernel = np.abs(np.fft.fft(np.exp(2j * np.pi * k * tau / (N * M)))) ** 2 / M**2
    ici = np.sum(np.abs(G[0]) ** 2, axis=1) - np.abs(np.diag(G[0])) ** 2
    np.testing.assert_allclose(ici, kernel.sum() - kernel[0], atol=1e-9)


def test_energy_conservation_per_block(rng):
    dd = sample_dd_channel(rng, 3, 6, 6)
    y = apply_channel(modulate(rng.standard_normal((N, M)) + 0j, CP), dd, N, M)
    Y = demodulate(y, N, M, CP)
    blocks = y.reshape(N, M + CP)[:, CP:]
    np.testing.assert_allclose(np.sum(np.abs(blocks) ** 2, axis=1), np.sum(np.abs(Y) ** 2, axis=1), rtol=1e-9)


def test_cp_too_short(rng):
    dd = DDChannel((Path(1.0, 0, 0), Path(0.5, 6, 1)))
    with pytest.raises(ValueError):
        effective_matrices(dd, N, M, 5)
    with pytest.raises(ValueError):
        evaluate_under_mobility(flat_design(), dd, P, McConfig(trials=10), 3)


def test_averaged_channel():
    dd = DDChannel((Path(1.0, 0, 0), Path(1.0, 2, 6)))
    ch = tf_from_dd(dd, GridDims(N, M))
    coh = averaged_channel(ch, "coherent")
    rms = averaged_channel(ch, "rms")
    # the Doppler path averages out coherently but keeps its power in rms
    np.testing.assert_allclose(coh.hmag, 1.0, atol=1e-12)
    np.testing.assert_allclose(rms.hmag, np.sqrt(2.0), atol=1e-12)
    assert np.ptp(rms.h_est, axis=0).max() == 0
    with pytest.raises(ValueError):
        averaged_channel(ch, "median")


def test_budget_scaling():
    b = budget_params(P, CP)
    assert b.p_o == pytest.approx(P.p_o * M / (M + CP))
    assert b.p_peak == pytest.approx(P.p_peak * M / (M + CP))


def test_zero_doppler_rate_matches_closed_form(rng):
    dd = without_doppler(sample_dd_channel(rng, 3, 6, 6)).scaled(P.channel_amplitude)
    ch = tf_from_dd(dd, P.dims)
    v = flat_design(0.2, 0.6)
    ev = evaluate_under_mobility(v, dd, P, McConfig(trials=2_000, seed=1), CP)
    closed = rate(v.a_d, v.a_e, ch.hmag, 0.0, v.rho_bar, P.lam, P.p_noise).average
    assert ev.rate.mean == pytest.approx(closed, rel=1e-9)
    assert np.sum(ev.ici_power) <= 1e-10 * np.sum(ev.signal_power)
    assert ev.to_json()["waveform"] == "ofdm"


def test_mobility_lowers_rate():
    rng = np.random.default_rng(21)
    dd_fast = sample_dd_channel(rng, 3, 6, 6).scaled(P.channel_amplitude)
    dd_still = without_doppler(dd_fast)
    v = flat_design(0.2, 0.6)
    cfg = McConfig(trials=2_000, seed=2)
    fast = evaluate_under_mobility(v, dd_fast, P, cfg, CP, ch_design=tf_from_dd(dd_still, P.dims))
    still = evaluate_under_mobility(v, dd_still, P, cfg, CP)
    assert fast.rate.mean < still.rate.mean


@pytest.fixture(scope="module")
def static_pair():
    dd = without_doppler(sample_dd_channel(np.random.default_rng(3), 3, 6, 6)).scaled(P.channel_amplitude)
    ch = tf_from_dd(dd, P.dims)
    return dd, ch, run(ch, P), design_ofdm(ch, P, cp_len=CP, cp_in_budget=False)


def test_ofdm_design_is_slot_constant(static_pair):
    _, _, _, od = static_pair
    assert od.waveform == "ofdm"
    assert np.ptp(od.vars.a_d, axis=0).max() == 0
    assert np.ptp(od.vars.a_e, axis=0).max() == 0
    assert np.ptp(od.vars.slot_power) == 0


def test_static_channel_ordering(static_pair):
    # n-constant designs are feasible for the OTFS designer, so it cannot do worse
    # beyond the stopping tolerance
    dd, ch, otfs, od = static_pair
    assert od.i_out <= otfs.i_out * (1 + 2e-3)
    ev = evaluate_under_mobility(od.vars, dd, P, McConfig(trials=4_000, seed=3), CP)
    assert abs(ev.i_out / od.i_out - 1) < 0.05


def test_design_rejects_negative_cp():
    with pytest.raises(ValueError):
        design_ofdm(tf_from_dd(sample_dd_channel(np.random.default_rng(0), 3, 6, 6), P.dims), P, cp_len=-1)
