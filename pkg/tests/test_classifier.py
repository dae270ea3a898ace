import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal

from linphone.classifier import (DB, LINEAR, SECTORS, CombinationSchedule, FrameCountSet,
                                 ScoreTable, alpha_schedule, anchor_points, assemble,
                                 combine_logliks, combined_T, f_average_loglik,
                                 fit_alpha, predict, read_score_dump, schedule_argument,
                                 score_instances, sector_sum_loglik, write_score_dump)
from linphone.corpus import PhonemeInstance, PhonemeInterval
from linphone.density import ConfigurationError, ModelBank
from linphone.frontend import MFCC_DELTAS, QUIET, FeatureMatrix, waveform_features
from linphone.synth import random_zero_mean_gmm

D = 2
FRAMES = (1, 3)
COMPONENTS = (1, 2)


def toy_bank(seed=0, sectors=SECTORS, frames=FRAMES):
    rng = np.random.default_rng(seed)
    models = {(k, s, f, c): random_zero_mean_gmm(D * f, c, rng)
              for k in ("aa", "iy") for s in sectors for f in frames for c in COMPONENTS}
    return ModelBank("WAVE_DCT", COMPONENTS, models)


def direct_M(bank, cls, s, f, x):
    # log of the uniform mixture over component counts, each GMM summed as densities
    total = 0.0
    for c in bank.components:
        m = bank.models[(cls, s, f, c)]
        total += sum(w * multivariate_normal(mu, np.diag(v)).pdf(x)
                     for w, mu, v in zip(m.weights, m.means, m.variances)) / len(bank.components)
    return math.log(total)


def random_vectors(rng, frames=FRAMES, sectors=SECTORS):
    return {s: {f: rng.standard_normal(D * f) for f in frames} for s in sectors}


def test_anchor_examples():
    assert anchor_points(PhonemeInterval("aa", 0, 1200)) == {"A": 0, "B": 200, "C": 600, "D": 1000, "E": 1200}
    assert anchor_points(PhonemeInterval("aa", 160, 760))["C"] == 460
    assert anchor_points(PhonemeInterval("aa", 0, 3))["C"] == 2  # 1.5 rounds half up
    assert anchor_points(PhonemeInterval("aa", 0, 1200), shift=-25)["A"] == -25


def test_assembly_dimensions():
    x = np.random.default_rng(0).standard_normal(16000)
    wave = waveform_features(x)
    assert assemble(wave, 8000, 7).vector.shape == (1120,)
    cep = FeatureMatrix(np.zeros((100, 39)), MFCC_DELTAS, 0.01, 0.025)
    assert assemble(cep, 8000, 5).vector.shape == (195,)


def test_assembly_nearest_frames():
    # frame j of the waveform basis covers samples [160j, 160j+160), centre 160j+80
    frames = np.arange(10.0)[:, None] * np.ones((1, 2))
    fm = FeatureMatrix(frames, "WAVE_DCT", 0.01, 0.01)
    assert assemble(fm, 335, 1).vector.tolist() == [2.0, 2.0]
    assert assemble(fm, 400, 1).vector.tolist() == [2.0, 2.0]  # tie between frames 2 and 3 goes earlier
    assert assemble(fm, 500, 3).vector.tolist() == [2.0, 2.0, 3.0, 3.0, 4.0, 4.0]


def test_assembly_padding():
    frames = np.arange(1.0, 5.0)[:, None]
    wave = FeatureMatrix(frames, "WAVE_DCT", 0.01, 0.01)
    assert assemble(wave, 80, 5).vector.tolist() == [0.0, 0.0, 1.0, 2.0, 3.0]
    assert assemble(wave, 0, 5).vector.tolist() == [0.0, 0.0, 0.0, 1.0, 2.0]  # tie goes earlier
    assert assemble(wave, 720, 3).vector.tolist() == [4.0, 0.0, 0.0]
    cep = FeatureMatrix(frames, "MFCC", 0.01, 0.01)
    assert assemble(cep, 80, 5).vector.tolist() == [1.0, 1.0, 1.0, 2.0, 3.0]


def test_frame_count_set():
    assert list(FrameCountSet((7, 9))) == [7, 9]
    with pytest.raises(ValueError):
        FrameCountSet((7, 8))
    with pytest.raises(ValueError):
        FrameCountSet(())


def test_f_average_matches_direct():
    bank = toy_bank()
    x = random_vectors(np.random.default_rng(1))["C"]
    R = f_average_loglik(bank, "aa", x, "C")
    assert R == pytest.approx(sum(direct_M(bank, "aa", "C", f, x[f]) for f in FRAMES), abs=1e-10)
    assert f_average_loglik(bank, "aa", {3: x[3]}, "C") == pytest.approx(
        bank.average_loglik("aa", "C", 3, x[3]), abs=0)
    rev = dict(reversed(list(x.items())))
    assert f_average_loglik(bank, "aa", rev, "C") == R
    with pytest.raises(ConfigurationError):
        f_average_loglik(bank, "aa", {5: np.zeros(10)}, "C")


def test_sector_sum_matches_direct():
    bank = toy_bank()
    vec = {s: v[1] for s, v in random_vectors(np.random.default_rng(2)).items()}
    for cls in ("aa", "iy"):
        S = sector_sum_loglik(bank, cls, vec, 1)
        assert S == pytest.approx(sum(direct_M(bank, cls, s, 1, vec[s]) for s in SECTORS), abs=1e-10)
    with pytest.raises(ConfigurationError):
        sector_sum_loglik(bank, "aa", {s: vec[s] for s in "ABCD"}, 1)


def test_sector_sum_identical_models():
    m = random_zero_mean_gmm(D, 1, np.random.default_rng(0))
    bank = ModelBank("WAVE_DCT", (1,), {("aa", s, 1, 1): m for s in SECTORS})
    x = np.array([0.3, -0.2])
    S = sector_sum_loglik(bank, "aa", {s: x for s in SECTORS}, 1)
    assert S == pytest.approx(5 * bank.average_loglik("aa", "C", 1, x), abs=1e-12)


def test_combined_T_reductions():
    bank = toy_bank()
    v = random_vectors(np.random.default_rng(3))
    T = combined_T(bank, "iy", v)
    direct = sum(direct_M(bank, "iy", s, f, v[s][f]) for s in SECTORS for f in FRAMES)
    assert T == pytest.approx(direct, abs=1e-10)
    one_f = {s: {1: v[s][1]} for s in SECTORS}
    assert combined_T(bank, "iy", one_f) == pytest.approx(
        sector_sum_loglik(bank, "iy", {s: v[s][1] for s in SECTORS}, 1), abs=1e-12)
    assert combined_T(bank, "iy", {"C": v["C"]}) == f_average_loglik(bank, "iy", v["C"], "C")


def _table(rng, n=4, K=3, S=5, F=2):
    return ScoreTable(list("abc")[:K], list(SECTORS)[:S], [1, 3][:F], rng.normal(-50, 10, (n, K, S, F)))


def test_score_table_rules():
    t = _table(np.random.default_rng(0))
    v = t.values
    assert np.array_equal(t.rule("M", 3, "C"), v[:, :, 2, 1])
    assert np.allclose(t.rule("R", sector="C"), v[:, :, 2, 0] + v[:, :, 2, 1])
    assert np.allclose(t.rule("S", 1), v[:, :, :, 0].sum(axis=2))
    assert np.allclose(t.rule("T"), v.sum(axis=(2, 3)))
    with pytest.raises(ValueError):
        t.rule("X")


def test_score_instances_matches_direct():
    rng = np.random.default_rng(4)
    bank = toy_bank(5)
    fm = FeatureMatrix(rng.standard_normal((40, D)), "WAVE_DCT", 0.01, 0.01)
    inst = [PhonemeInstance("s", PhonemeInterval("aa", 800, 2000), "aa"),
            PhonemeInstance("s", PhonemeInterval("iy", 2000, 2900), "iy", shift=50)]
    table = score_instances(bank, {"s": fm}, inst)
    for i, ins in enumerate(inst):
        anchors = anchor_points(ins.interval, ins.shift)
        for si, s in enumerate(table.sectors):
            for fi, f in enumerate(table.frames):
                x = assemble(fm, anchors[s], f).vector
                assert table.values[i, 0, si, fi] == pytest.approx(direct_M(bank, "aa", s, f, x), abs=1e-10)


def test_predict_examples():
    assert predict([-5.0, -3.0, -9.0], [1 / 3] * 3).cls == 1
    assert predict([0.0, 0.0, 0.0], [0.2, 0.5, 0.3]).cls == 1
    assert predict([1.0, 1.0], [0.5, 0.5]).cls == 0
    p = predict([-1.0, -2.0], [0.5, 0.5])
    assert np.allclose(p.scores, [-1 + math.log(0.5), -2 + math.log(0.5)])
    assert predict(np.array([[0.0, 1.0], [2.0, 1.0]]), [0.5, 0.5]).tolist() == [1, 0]
    with pytest.raises(ConfigurationError):
        predict([], [])
    with pytest.raises(ValueError):
        predict([1.0, 2.0], [0.7, 0.7])


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.floats(-1e4, 1e4))
def test_predict_shift_invariance(seed, c):
    rng = np.random.default_rng(seed)
    s = rng.normal(0, 5, 6)
    pri = rng.dirichlet(np.ones(6))
    assert predict(s, pri).cls == predict(s + c, pri).cls


def test_reduction_single_model_is_generative_rule():
    rng = np.random.default_rng(6)
    models = {(k, "C", 1, 1): random_zero_mean_gmm(D, 3, rng) for k in ("aa", "iy", "uw")}
    bank = ModelBank("WAVE_DCT", (1,), models)
    fm = FeatureMatrix(rng.standard_normal((30, D)), "WAVE_DCT", 0.01, 0.01)
    inst = [PhonemeInstance("s", PhonemeInterval("aa", 160 * j, 160 * j + 480), "aa") for j in range(20)]
    table = score_instances(bank, {"s": fm}, inst)
    pri = np.array([0.2, 0.3, 0.5])
    from linphone.density import log_likelihood
    for i, ins in enumerate(inst):
        x = assemble(fm, anchor_points(ins.interval)["C"], 1).vector
        direct = np.array([log_likelihood(models[(k, "C", 1, 1)], x) for k in bank.classes])
        assert np.allclose(table.rule("T")[i], direct, rtol=0, atol=1e-12)
        assert predict(table.rule("T")[i], pri).cls == int(np.argmax(direct + np.log(pri)))


def test_alpha_schedule():
    sch = CombinationSchedule(11.0, 0.3)
    assert alpha_schedule(sch, 11.0) == 0.5
    assert alpha_schedule(sch, -math.inf) == 0.0
    assert alpha_schedule(sch, math.inf) == 1.0
    xs = np.linspace(-30, 30, 61)
    a = [alpha_schedule(sch, x) for x in xs]
    assert np.all(np.diff(a) > 0)
    with pytest.raises(ValueError):
        CombinationSchedule(0.0, 0.0)


def test_schedule_argument_units():
    assert schedule_argument(QUIET, DB) == -math.inf
    assert schedule_argument(6, DB) == -6.0
    assert schedule_argument(QUIET, LINEAR) == 0.0
    assert schedule_argument(10, LINEAR) == pytest.approx(0.1, abs=1e-15)


def test_combine_endpoints_exact():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b = rng.normal(-100, 30, (2, 5, 7))
        pri = rng.dirichlet(np.ones(7))
        assert np.array_equal(predict(combine_logliks(a, b, 0.0), pri), predict(a, pri))
        assert np.array_equal(predict(combine_logliks(a, b, 1.0), pri), predict(b, pri))


def test_combine_modes_and_errors():
    a, b = np.array([-52.0, -104.0]), np.array([-1024.0, -2048.0])
    assert np.allclose(combine_logliks(a, b, 0.5), [-538.0, -1076.0])
    assert np.allclose(combine_logliks(a, b, 0.5, "dim", 52, 1024), [-1.0, -2.0])
    with pytest.raises(ConfigurationError):
        combine_logliks(a, b, 0.5, classes_cep=["x", "y"], classes_wave=["y", "x"])
    with pytest.raises(ConfigurationError):
        combine_logliks(a, b, 0.5, "dim")
    with pytest.raises(ValueError):
        combine_logliks(a, b, 1.5)


def test_combined_prediction_piecewise_constant():
    rng = np.random.default_rng(1)
    a, b = rng.normal(0, 1, (2, 4))
    grid = np.linspace(0, 1, 2001)
    preds = [predict(combine_logliks(a, b, float(x)), np.full(4, 0.25)).cls for x in grid]
    # each class is optimal on a single interval of alpha (argmax of lines), so no class returns
    seen, prev = set(), None
    for p in preds:
        if p != prev:
            assert p not in seen
            seen.add(p)
            prev = p


def _two_streams(rng, n, K, cep_slope, wave_quality):
    truth = rng.integers(K, size=n)
    onehot = np.eye(K)[truth]
    conds = [QUIET, 18, 12, 6, 0, -6]
    cep = {c: (3.0 - cep_slope * i) * onehot + rng.standard_normal((n, K)) for i, c in enumerate(conds)}
    wave = {c: wave_quality * onehot + rng.standard_normal((n, K)) for c in conds}
    return cep, wave, truth, conds


@pytest.mark.parametrize("units", [DB, LINEAR])
def test_fit_alpha_within_bands(units):
    # cepstral stream degrades steadily with noise, waveform stream does not
    cep, wave, truth, conds = _two_streams(np.random.default_rng(0), 2000, 4, 0.5, 1.0)
    fit = fit_alpha(cep, wave, truth, np.full(4, 0.25), units=units)
    assert fit.schedule.units == units
    assert fit.errors.shape == (len(conds), 101)
    for (lo, hi), err in zip(fit.bands, fit.errors):
        assert lo <= hi
        inside = (fit.grid >= lo) & (fit.grid <= hi)
        assert np.all(err[inside] <= err.min() + 0.02)
    assert all(fit.band_ok())


def test_fit_alpha_reports_infeasible_band():
    # an abrupt swap between streams cannot be tracked by a smooth sigmoid
    rng = np.random.default_rng(7)
    cep, wave, truth, conds = _two_streams(rng, 400, 4, 0.6, 1.0)
    fit = fit_alpha(cep, wave, truth, np.full(4, 0.25), units=DB)
    assert not all(fit.band_ok())


def test_score_dump_roundtrip(tmp_path):
    scores = np.random.default_rng(0).normal(-40, 5, (3, 2))
    write_score_dump(tmp_path / "d.txt", ["aa", "iy"], scores, ["aa", "iy", "aa"], ["s:0:0", "s:9:0", "t:1:25"],
                     {"seed": 4, "basis": "WAVE_DCT"})
    classes, back, truths, ids, meta = read_score_dump(tmp_path / "d.txt")
    assert classes == ["aa", "iy"] and truths == ["aa", "iy", "aa"]
    assert np.array_equal(back, scores)
    assert ids[2] == "t:1:25" and meta["seed"] == "4"
