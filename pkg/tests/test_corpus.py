import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

from linphone.corpus import (REMOVED, CorpusManifest, LabeledSentence, LabelParseError,
                             LabelValidationError, PhonemeInstance, PhonemeInterval,
                             UnknownLabelError, augment_small_classes, default_class_map,
                             duration_stats, extract_instances, load_phn_labels, map_label,
                             read_waveform, scan_corpus, write_phn_labels, write_wav)

CMAP = default_class_map()


def test_load_phn(tmp_path):
    p = tmp_path / "a.phn"
    p.write_text("0 2400 h#\n2400 3100 sh\n")
    assert load_phn_labels(p) == [PhonemeInterval("h#", 0, 2400), PhonemeInterval("sh", 2400, 3100)]


def test_load_phn_empty(tmp_path):
    p = tmp_path / "a.phn"
    p.write_text("")
    assert load_phn_labels(p) == []


def test_load_phn_zero_length_interval(tmp_path):
    p = tmp_path / "a.phn"
    p.write_text("2400 2400 sh\n")
    with pytest.raises(LabelValidationError):
        load_phn_labels(p)


def test_load_phn_malformed_reports_line(tmp_path):
    p = tmp_path / "a.phn"
    p.write_text("0 10 h#\n10 x sh\n")
    with pytest.raises(LabelParseError, match=":2:"):
        load_phn_labels(p)


def test_load_phn_overlap(tmp_path):
    p = tmp_path / "a.phn"
    p.write_text("0 100 h#\n50 200 sh\n")
    with pytest.raises(LabelValidationError, match="overlaps"):
        load_phn_labels(p)


def test_phn_roundtrip(tmp_path):
    ivs = [PhonemeInterval("h#", 0, 10), PhonemeInterval("aa", 10, 999)]
    write_phn_labels(tmp_path / "x.phn", ivs)
    assert load_phn_labels(tmp_path / "x.phn") == ivs


def test_glottal_closure_removed():
    assert map_label("q", CMAP, 48) is REMOVED
    assert map_label("q", CMAP, 39) is REMOVED


def test_identity_and_folds():
    assert map_label("aa", CMAP, 48) == "aa"
    assert map_label("zh", CMAP, 39) == map_label("sh", CMAP, 39)
    assert map_label("ao", CMAP, 39) == "aa"
    assert map_label("bcl", CMAP, 48) == "vcl"


def test_unknown_label():
    with pytest.raises(UnknownLabelError, match="xx"):
        map_label("xx", CMAP)


def test_group_counts():
    raw = [k for k in CMAP.fold48]
    assert len(raw) == 61
    g48 = {map_label(r, CMAP, 48) for r in raw} - {REMOVED}
    g39 = {map_label(r, CMAP, 39) for r in raw} - {REMOVED}
    assert len(g48) == 48
    assert len(g39) == 39
    assert set(CMAP.groups48) == g48


@given(st.sampled_from(sorted(CMAP.fold48)))
def test_fold_idempotent(raw):
    g = map_label(raw, CMAP, 48)
    if g is not REMOVED:
        assert map_label(g, CMAP, 48) == g
        assert map_label(map_label(raw, CMAP, 39), CMAP, 39) == map_label(raw, CMAP, 39)


def _sent(sid, labels, step=400):
    ivs = tuple(PhonemeInterval(lab, i * step, (i + 1) * step) for i, lab in enumerate(labels))
    return LabeledSentence(sid, ivs, len(labels) * step)


def test_extract_drops_removed():
    m = extract_instances([_sent("s1", ["sh", "q", "aa"]), _sent("s2", ["q", "aa"])], CMAP)
    assert sorted(i.group48 for i in m.instances) == ["aa", "aa", "sh"]
    assert sum(m.priors.values()) == pytest.approx(1.0, abs=1e-12)


def test_single_class_priors():
    m = extract_instances([_sent("s", ["aa", "aa", "aa"])], CMAP)
    assert m.priors == {"aa": 1.0}


def test_empty_sentence_warns(caplog):
    with caplog.at_level(logging.WARNING):
        m = extract_instances([_sent("s", ["q"])], CMAP)
    assert m.instances == []
    assert "no retained phones" in caplog.text


def test_extract_count_matches_scan(tmp_path):
    rng = np.random.default_rng(3)
    labels = sorted(CMAP.fold48)
    sents = []
    for s in range(10):
        seq = list(rng.choice(labels, size=rng.integers(3, 12)))
        write_phn_labels(tmp_path / f"s{s}.phn",
                         [PhonemeInterval(lab, i * 160, (i + 1) * 160) for i, lab in enumerate(seq)])
        write_wav(tmp_path / f"s{s}.wav", rng.normal(0, 1000, 160 * len(seq)))
    sents = scan_corpus(tmp_path)
    # oracle: count non-q lines directly from the files
    expected = sum(1 for p in tmp_path.glob("*.phn")
                   for line in p.read_text().splitlines() if line.split()[2] != "q")
    assert len(extract_instances(sents, CMAP).instances) == expected


def _manifest(counts):
    inst = []
    for g, n in counts.items():
        for i in range(n):
            inst.append(PhonemeInstance(f"s{g}{i}", PhonemeInterval(g, 2000, 3000), g))
    m = CorpusManifest("train", inst, {g: n / sum(counts.values()) for g, n in counts.items()},
                       {i.sentence_id: 6000 for i in inst})
    return m


def test_augment_small_class():
    m = _manifest({"aa": 1400, "s": 1600})
    out = augment_small_classes(m, 1500)
    c = out.counts()
    assert c["aa"] == 1400 * 9
    assert c["s"] == 1600
    assert out.priors == m.priors


def test_augment_empty_shifts_unchanged():
    m = _manifest({"aa": 10})
    assert augment_small_classes(m, 1500, shifts=()).instances == m.instances


def test_augment_rejects_test_split_and_zero_shift():
    m = _manifest({"aa": 10})
    with pytest.raises(ValueError):
        augment_small_classes(m, 1500, shifts=(0, 25))
    m.split = "test"
    with pytest.raises(ValueError):
        augment_small_classes(m, 1500)


def test_augment_skips_out_of_sentence(caplog):
    inst = [PhonemeInstance("s", PhonemeInterval("aa", 0, 20), "aa")]
    m = CorpusManifest("train", inst, {"aa": 1.0}, {"s": 20})
    with caplog.at_level(logging.WARNING):
        out = augment_small_classes(m, 1500, shifts=(-1000, 5), window=100)
    assert [i.shift for i in out.instances] == [0, 5]
    assert "skipped" in caplog.text


def test_instance_center():
    inst = PhonemeInstance("s", PhonemeInterval("aa", 101, 200), "aa", shift=-25)
    assert inst.center == 150 - 25


def test_manifest_json_roundtrip():
    m = _manifest({"aa": 3, "s": 2})
    m2 = CorpusManifest.from_json(m.to_json())
    assert m2.instances == m.instances and m2.priors == m.priors


def test_read_wav_and_raw(tmp_path):
    x = np.array([0, 1000, -1000, 32767, -32768], dtype=float)
    write_wav(tmp_path / "a.wav", x)
    y, rate = read_waveform(tmp_path / "a.wav")
    assert rate == 16000 and np.array_equal(x, y)
    x.astype("<i2").tofile(tmp_path / "a.raw")
    with pytest.raises(ValueError, match="sample rate"):
        read_waveform(tmp_path / "a.raw")
    (tmp_path / "a.raw.rate").write_text("16000\n")
    y, rate = read_waveform(tmp_path / "a.raw")
    assert rate == 16000 and np.array_equal(x, y)


def test_read_sphere(tmp_path):
    x = np.array([1, -2, 3], dtype="<i2")
    hdr = b"NIST_1A\n   1024\nsample_rate -i 16000\nchannel_count -i 1\nsample_n_bytes -i 2\n" \
          b"sample_byte_format -s2 01\nend_head\n"
    (tmp_path / "a.wav").write_bytes(hdr.ljust(1024, b" ") + x.tobytes())
    y, rate = read_waveform(tmp_path / "a.wav")
    assert rate == 16000 and list(y) == [1, -2, 3]


def test_duration_stats():
    inst = [PhonemeInstance("s", PhonemeInterval("aa", 0, 1600), "aa"),
            PhonemeInstance("s", PhonemeInterval("iy", 1600, 4800), "iy"),
            PhonemeInstance("s", PhonemeInterval("s", 4800, 5600), "s")]
    st_ = duration_stats(CorpusManifest("train", inst, {}))
    assert st_["Vowels"]["min"] == 100.0 and st_["Vowels"]["max"] == 200.0
    assert st_["Vowels"]["mean"] == 150.0
    assert st_["All"]["min"] == 50.0
