import numpy as np
import pytest

from dcloss import datagen
from dcloss.errors import DomainError, FormatError


@pytest.fixture
def small():
    doms = datagen.make_domains(2, 6, severity=0.5, seed=3)
    return datagen.generate(doms, 12, 3, 20, 6, seed=3)


def test_zero_noise_features_are_function_of_age():
    dom = datagen.make_domains(1, 4, noise_std=0.0, noise_step=0.0, seed=1)
    data = datagen.generate(dom, 30, 4, 15, 4, seed=2)
    expected = datagen.age_basis(data.ages, 15) @ dom[0].mixing.T + dom[0].offset
    np.testing.assert_allclose(data.features, expected, rtol=0, atol=1e-14)
    by_age = {}
    for a, x in zip(data.ages, data.features):
        by_age.setdefault(int(a), []).append(x)
    for xs in by_age.values():
        assert np.ptp(np.array(xs), axis=0).max() < 1e-14


def test_same_seed_same_set(small):
    doms = datagen.make_domains(2, 6, severity=0.5, seed=3)
    assert datagen.generate(doms, 12, 3, 20, 6, seed=3) == small


def test_domain_shift_moves_feature_means():
    doms = datagen.make_domains(2, 8, severity=0.5, seed=0)
    data = datagen.generate(doms, 200, 2, 30, 8, seed=0)
    m0 = data.features[data.domain_ids == 0].mean(axis=0)
    m1 = data.features[data.domain_ids == 1].mean(axis=0)
    assert np.linalg.norm(m0 - m1) > 0.1


def test_jitter_and_shape(small):
    assert small.features.shape == (2 * 12 * 3, 6)
    assert small.ages.min() >= 1 and small.ages.max() <= 20
    for s in small.subjects():
        ages = small.ages[small.subject_ids == s]
        assert ages.max() - ages.min() <= 2


def test_every_decile_covered():
    L = 100
    doms = datagen.make_domains(1, 4, seed=5)
    data = datagen.generate(doms, 10 * L // 10 * 10, 1, L, 4, seed=5)
    deciles = set(((data.ages - 1) * 10 // L).tolist())
    assert deciles == set(range(10))


@pytest.mark.parametrize("kw", [dict(L=1), dict(D=1), dict(subjects_per_domain=0)])
def test_generate_rejects(kw):
    args = dict(domains=datagen.make_domains(1, 4), subjects_per_domain=2, images_per_subject=1, L=5, D=4)
    args.update(kw)
    if "D" in kw:
        args["domains"] = datagen.make_domains(1, max(kw["D"], 1))
    with pytest.raises(DomainError):
        datagen.generate(**args)


def test_split_filters_domains(small):
    tr, te = datagen.split_sc(small, {0}, {1})
    assert tr.domains() == {0} and te.domains() == {1}
    assert len(tr) + len(te) == len(small) and te.dropped == 0


def _plant_shared_subject(data, rng):
    sids = data.subject_ids.copy()
    d0 = np.unique(sids[data.domain_ids == 0])
    d1 = np.unique(sids[data.domain_ids == 1])
    victim = rng.choice(d1)
    sids[sids == victim] = rng.choice(d0)
    return datagen.SampleSet(sids, data.domain_ids, data.ages, data.features, data.L), int(
        (data.subject_ids == victim).sum()
    )


def test_planted_duplicate_subject_dropped_from_test(small, rng):
    planted, n_victim = _plant_shared_subject(small, rng)
    tr, te = datagen.split_sc(planted, {0}, {1})
    assert te.dropped == n_victim
    assert not tr.subjects() & te.subjects()
    assert len(tr) + len(te) + te.dropped == len(planted)


def test_split_errors(small):
    with pytest.raises(DomainError):
        datagen.split_sc(small, {0, 1}, {1})
    with pytest.raises(DomainError):
        datagen.split_sc(small, {0}, {7})


def test_split_subjects_disjoint(small):
    a, b = datagen.split_subjects(small, 0.25, seed=1)
    assert not a.subjects() & b.subjects()
    assert len(a) + len(b) == len(small)


def test_roundtrip(small, tmp_path):
    path = tmp_path / "s.csv"
    datagen.save(path, small, meta={"seed": 3})
    assert datagen.load(path) == small


def test_truncated_file_names_line(small, tmp_path):
    path = tmp_path / "s.csv"
    datagen.save(path, small)
    text = path.read_text()
    cut = text[: text.index("\n", len(text) // 2) - 5]
    path.write_text(cut)
    with pytest.raises(FormatError) as err:
        datagen.load(path)
    assert err.value.line == cut.count("\n") + 1


def test_header_dimension_mismatch(small, tmp_path):
    path = tmp_path / "s.csv"
    datagen.save(path, small)
    lines = path.read_text().split("\n")
    lines[0] = lines[0].replace("D=6", "D=7")
    path.write_text("\n".join(lines))
    with pytest.raises(FormatError) as err:
        datagen.load(path)
    assert err.value.line == 3


def test_version_mismatch(small, tmp_path):
    path = tmp_path / "s.csv"
    datagen.save(path, small)
    path.write_text(path.read_text().replace(" v1 ", " v9 ", 1))
    with pytest.raises(FormatError, match="version"):
        datagen.load(path)


def test_bad_cell(small, tmp_path):
    path = tmp_path / "s.csv"
    datagen.save(path, small)
    lines = path.read_text().split("\n")
    lines[4] = "x" + lines[4]
    path.write_text("\n".join(lines))
    with pytest.raises(FormatError) as err:
        datagen.load(path)
    assert err.value.line == 5
