import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from linphone.frontend import (MFCC_DELTAS, QUIET, SENTENCE, TRAINSET, DegenerateSignalError,
                               EstimationError, FeatureMatrix, NoiseSource, NoiseSpec,
                               StandardizationStats, append_deltas, block_dct, cmvn,
                               compute_mfcc, compute_stats, estimate_noise_cov, frame_signal,
                               inverse_block_dct, mfcc_features, mix_noise, normalize_energy,
                               read_external_features, scaled_noise, sentence_seed,
                               waveform_features, write_external_features)


def dct_matrix(n):
    # explicit orthonormal DCT-II matrix, row k = basis function k
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    m[0] /= np.sqrt(2.0)
    return m


def test_normalize_energy_pair():
    y = normalize_energy([3.0, 4.0])
    assert np.allclose(y, np.array([3.0, 4.0]) * np.sqrt(2 / 25), atol=1e-15)
    assert np.sum(y ** 2) == pytest.approx(2.0, abs=1e-12)


def test_normalize_energy_idempotent():
    x = normalize_energy(np.random.default_rng(0).standard_normal(1000))
    assert np.max(np.abs(normalize_energy(x) - x)) < 1e-12


def test_normalize_energy_zero():
    with pytest.raises(DegenerateSignalError):
        normalize_energy([0.0, 0.0, 0.0])


def test_frame_counts():
    assert frame_signal(np.ones(480), 160, 160).shape == (3, 160)
    fr = frame_signal(np.ones(400), 160, 160)
    assert fr.shape == (3, 160)
    assert np.all(fr[2, :80] == 1) and np.all(fr[2, 80:] == 0)


def test_overlapping_cepstral_framing():
    x = np.arange(16000.0)
    fr = frame_signal(x, 400, 160)
    assert fr.shape[1] == 400
    assert fr[1, 0] == 160 and fr[1, 399] == 559
    assert np.array_equal(fr[0, 160:], fr[1, :240])


def test_dct_constant_block():
    c = block_dct(np.full(160, 2.5))
    assert c[0] == pytest.approx(2.5 * np.sqrt(160), abs=1e-9)
    assert np.max(np.abs(c[1:])) < 1e-9


def test_dct_impulse_matches_explicit_matrix():
    e0 = np.zeros(4)
    e0[0] = 1.0
    assert np.allclose(block_dct(e0, 4), dct_matrix(4)[:, 0], atol=1e-12)


def test_dct_all_impulses_match_matrix():
    C = np.column_stack([block_dct(np.eye(160)[i]) for i in range(160)])
    assert np.max(np.abs(C - dct_matrix(160))) < 1e-12


def test_dct_block_diagonal():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(160), rng.standard_normal(160)
    both = block_dct(np.concatenate([a, b]))
    assert np.array_equal(both[:160], block_dct(a))
    assert np.array_equal(both[160:], block_dct(b))


def test_dct_shape_error():
    with pytest.raises(ValueError):
        block_dct(np.ones(170))


@settings(max_examples=50)
@given(arrays(np.float64, 320, elements=st.floats(-1e3, 1e3)))
def test_dct_isometry_and_inverse(x):
    c = block_dct(x)
    assert abs(np.linalg.norm(c) - np.linalg.norm(x)) < 1e-9
    assert np.max(np.abs(inverse_block_dct(c) - x)) < 1e-9


def test_mix_noise_quiet_is_identity():
    x = normalize_energy(np.random.default_rng(0).standard_normal(500))
    assert np.array_equal(mix_noise(x, None, QUIET, 0), x)


def test_mix_noise_zero_db_power():
    x = normalize_energy(np.random.default_rng(0).standard_normal(5000))
    n = scaled_noise(x, None, 0, 1)
    assert np.mean(n * n) == pytest.approx(np.mean(x * x), rel=1e-12)


def test_mix_noise_6db_measured_ratio():
    rng = np.random.default_rng(2)
    x = normalize_energy(rng.standard_normal(100_000))
    n = scaled_noise(x, NoiseSource(), 6, 7)
    ratio = np.mean(n * n) / np.mean(x * x)
    assert abs(ratio / 10 ** -0.6 - 1) < 0.02


def test_mix_noise_renormalized_and_reproducible():
    x = normalize_energy(np.random.default_rng(0).standard_normal(3000))
    a = mix_noise(x, None, 3, sentence_seed(5, "s1"))
    b = mix_noise(x, None, 3, sentence_seed(5, "s1"))
    c = mix_noise(x, None, 3, sentence_seed(5, "s2"))
    assert np.mean(a * a) == pytest.approx(1.0, abs=1e-9)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_noise_file_source():
    src = NoiseSource(np.arange(1, 1001, dtype=float))
    seg = src.draw(100, np.random.default_rng(0))
    assert len(seg) == 100 and np.all(np.diff(seg) == 1)
    with pytest.raises(DegenerateSignalError):
        NoiseSource(np.zeros(100))


def test_noise_cov_white():
    N = estimate_noise_cov(np.random.default_rng(0).standard_normal(10 ** 6)).N
    assert np.max(np.abs(N - 1)) < 0.05


def test_noise_cov_trace_and_errors():
    rng = np.random.default_rng(1)
    pink = np.cumsum(rng.standard_normal(40_000)) * 0.01 + rng.standard_normal(40_000)
    spec = estimate_noise_cov(pink)
    assert abs(spec.N.sum() - 160) < 1e-6
    assert spec.N[0] > spec.N[-1]  # low-frequency heavy
    with pytest.raises(EstimationError):
        estimate_noise_cov(rng.standard_normal(1000))
    with pytest.raises(DegenerateSignalError):
        estimate_noise_cov(np.zeros(20_000))


def test_noise_spec_tiling():
    s = NoiseSpec(0.5, np.ones(160)).for_dim(320)
    assert len(s.N) == 320 and s.trace_d == 320
    with pytest.raises(ValueError):
        NoiseSpec(0.5, np.full(4, 2.0))


def test_mfcc_dimension_and_silence():
    rng = np.random.default_rng(0)
    assert compute_mfcc(rng.standard_normal(400)).shape == (13,)
    z = compute_mfcc(np.zeros(400))
    assert np.all(np.isfinite(z))


@settings(max_examples=25)
@given(st.floats(0.01, 100.0))
def test_mfcc_positive_scaling(g):
    frame = np.random.default_rng(3).standard_normal(400)
    a, b = compute_mfcc(frame), compute_mfcc(g * frame)
    assert np.max(np.abs(a[1:] - b[1:])) < 1e-9
    # c0 shift depends on g only: log(g) on each of 26 filters through the DC basis
    assert b[0] - a[0] == pytest.approx(np.log(g) * np.sqrt(26), abs=1e-9)


def test_deltas_constant_and_ramp():
    const = np.tile(np.arange(13.0), (10, 1))
    out = append_deltas(const)
    assert out.shape == (10, 39)
    assert np.all(out[:, 13:] == 0)
    ramp = np.zeros((12, 13))
    ramp[:, 4] = 3.0 * np.arange(12)
    out = append_deltas(ramp)
    assert np.allclose(out[2:-2, 13 + 4], 3.0, atol=1e-12)
    assert np.allclose(out[4:-4, 26 + 4], 0.0, atol=1e-12)


def test_feature_streams():
    x = normalize_energy(np.random.default_rng(0).standard_normal(16000))
    w = waveform_features(x)
    assert w.frames.shape == (100, 160)
    assert np.sum(w.frames ** 2) == pytest.approx(np.sum(x ** 2), rel=1e-12)
    m = mfcc_features(x)
    assert m.basis == MFCC_DELTAS and m.dim == 39
    assert m.frame_centers()[0] == 200 and m.frame_centers()[1] == 360


def test_cmvn_at_mean_is_zero():
    fm = FeatureMatrix(np.tile([1.0, 2.0], (3, 1)), "MFCC", 0.01, 0.025)
    stats = StandardizationStats(np.array([1.0, 2.0]), np.array([4.0, 9.0]))
    assert np.array_equal(cmvn(fm, stats).frames, np.zeros((3, 2)))


def test_cmvn_trainset_self():
    rng = np.random.default_rng(0)
    fms = [FeatureMatrix(rng.normal(3, 2, (50, 5)), "MFCC", 0.01, 0.025) for _ in range(4)]
    stats = compute_stats(fms, TRAINSET)
    z = np.vstack([cmvn(f, stats).frames for f in fms])
    assert np.max(np.abs(z.mean(0))) < 1e-9
    assert np.max(np.abs(z.var(0) - 1)) < 1e-9


def test_cmvn_sentence_two_frames():
    fm = FeatureMatrix(np.array([[1.0, 10.0], [3.0, 20.0]]), "MFCC", 0.01, 0.025)
    z = cmvn(fm, source=SENTENCE).frames
    # oracle: each column standardised by its own two-sample mean and (population) variance
    expected = np.array([[(1 - 2) / 1.0, (10 - 15) / 5.0], [(3 - 2) / 1.0, (20 - 15) / 5.0]])
    assert np.allclose(z, expected, atol=1e-12)


def test_cmvn_floor_flagged():
    fm = FeatureMatrix(np.tile([1.0, 2.0], (4, 1)), "MFCC", 0.01, 0.025)
    stats = compute_stats(fm)
    assert stats.floored.all()
    assert np.all(np.isfinite(cmvn(fm, stats).frames))


def test_cmvn_dimension_check():
    fm = FeatureMatrix(np.ones((2, 3)), "MFCC", 0.01, 0.025)
    with pytest.raises(ValueError):
        cmvn(fm, StandardizationStats(np.zeros(2), np.ones(2)))


def test_external_roundtrip(tmp_path):
    fm = FeatureMatrix(np.random.default_rng(0).standard_normal((7, 13)), "EXTERNAL", 0.01, 0.025)
    write_external_features(tmp_path / "s.feat", fm)
    back = read_external_features(tmp_path / "s.feat")
    assert np.array_equal(back.frames, fm.frames) and back.hop == 0.01 and back.width == 0.025
    (tmp_path / "bad.feat").write_text("3 0.01 0.025\n1 2\n")
    with pytest.raises(ValueError):
        read_external_features(tmp_path / "bad.feat")
