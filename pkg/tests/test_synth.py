import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from nci_lab.data import eval_mask, read_csv, write_csv
from nci_lab.synth import (
    ConfigError,
    DatasetConfig,
    DomainSpec,
    assign_supports,
    cross_block_products,
    generate,
    interpolate_domains,
    probe_label_information,
    verify_orthogonality,
)

TARGET = DomainSpec(name="target", label_leak=2.0)
SOURCE = DomainSpec(name="source", concept_noise=1.5)


def cfg(**kw):
    base = dict(seed=0, num_supports=300, domains=[TARGET, SOURCE])
    base.update(kw)
    return DatasetConfig(**base)


def test_full_sharing_puts_every_support_everywhere():
    ds = generate(cfg())
    for d in ds.domains:
        assert set(ds.support_ids[ds.domain_mask(d)]) == set(range(300))


def test_sharing_accounting_floor_with_remainder_to_shared():
    c = cfg(num_supports=101, shared_fraction=0.4, unique_fraction=0.3)
    a = assign_supports(c)
    q = int(np.floor(0.3 * 101))
    shared = set(a["target"]) & set(a["source"])
    assert len(shared) == 101 - 2 * q
    assert len(set(a["target"]) - shared) == q == len(set(a["source"]) - shared)
    assert set(a["target"]) | set(a["source"]) == set(range(101))


def test_exact_fractions_when_divisible():
    a = assign_supports(cfg(num_supports=1000, shared_fraction=0.4, unique_fraction=0.3))
    assert len(set(a["target"]) & set(a["source"])) == 400
    assert len(a["target"]) == 700


@pytest.mark.parametrize("rho,u", [(0.6, 0.3), (0.2, 0.3)])
def test_infeasible_or_orphaning_fractions_rejected(rho, u):
    with pytest.raises(ConfigError):
        assign_supports(cfg(shared_fraction=rho, unique_fraction=u))


def test_duplicate_names_rejected():
    with pytest.raises(ValueError):
        cfg(domains=[TARGET, TARGET])


def test_many_classes_warns(caplog):
    generate(cfg(concept_dim=1, num_classes=3, num_supports=50))
    assert "exceeds" in caplog.text


def test_assignment_ignores_listing_order():
    a = assign_supports(cfg(shared_fraction=0.4, unique_fraction=0.3))
    b = assign_supports(cfg(shared_fraction=0.4, unique_fraction=0.3, domains=[SOURCE, TARGET]))
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])


def test_blocks_are_disjoint_and_zero_elsewhere():
    ds = generate(cfg(domains=[TARGET, SOURCE, DomainSpec(name="third", block_dim=3)]))
    assert verify_orthogonality(ds)
    g = cross_block_products(ds)
    assert g[~np.eye(3, dtype=bool)].tolist() == [0.0] * 6
    for d in ds.domains:
        rows = ds.features[ds.domain_mask(d)]
        other = np.ones(ds.dim, dtype=bool)
        other[: ds.concept_dim] = False
        other[ds.block_slices[d]] = False
        assert (rows[:, other] == 0).all()


def test_copied_feature_breaks_orthogonality():
    ds = generate(cfg())
    src = ds.domain_mask("source")
    ds.features[np.flatnonzero(src)[0], ds.block_slices["target"].start] = 1.0
    assert not verify_orthogonality(ds)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(2, 5))
def test_any_generated_dataset_is_orthogonal_and_label_consistent(seed, k, classes):
    doms = [DomainSpec(name=f"d{i}", concept_noise=0.5 * i, label_leak=float(i), block_dim=1 + i) for i in range(k)]
    ds = generate(DatasetConfig(seed=seed, num_supports=40, num_classes=classes, domains=doms))
    assert verify_orthogonality(ds)
    label = {}
    for s, y in zip(ds.support_ids, ds.labels):
        assert label.setdefault(int(s), int(y)) == y


def test_generation_is_deterministic_and_csv_round_trips(tmp_path):
    c = cfg(shared_fraction=0.4, unique_fraction=0.3)
    a, b = generate(c), generate(c)
    np.testing.assert_array_equal(a.features, b.features)
    p1, p2 = write_csv(a, tmp_path / "a.csv"), write_csv(b, tmp_path / "b.csv")
    assert p1.read_bytes() == p2.read_bytes()
    back = read_csv(p1)
    assert back.domains == a.domains and back.block_slices == a.block_slices
    assert back.meta["config"] == c.model_dump(mode="json")
    header = p1.read_text().splitlines()[0].split(",")
    assert header[:3] == ["support_id", "domain", "label"] and header[3] == "f0"


def test_csv_rows_sorted_by_domain_then_support(tmp_path):
    text = write_csv(generate(cfg(num_supports=30)), tmp_path / "d.csv").read_text().splitlines()[1:]
    keys = [(r.split(",")[1], int(r.split(",")[0])) for r in text]
    assert keys == sorted(keys)


def test_eval_split_is_about_twenty_percent_and_shared_across_domains():
    m = eval_mask(np.arange(20000))
    assert abs(m.mean() - 0.2) < 0.01
    ds = generate(cfg())
    held = ds.eval_mask()
    for d in ds.domains:
        assert set(ds.support_ids[held & ds.domain_mask(d)]) == set(np.flatnonzero(eval_mask(np.arange(300))))


def test_samples_per_domain_cycles_supports():
    ds = generate(cfg(num_supports=100, samples_per_domain=250))
    assert ds.counts() == {"target": 250, "source": 250}


# ---------------------------------------------------------------- probes


def test_probe_needs_enough_samples():
    with pytest.raises(ValueError, match="200"):
        probe_label_information(generate(cfg(num_supports=150)), "target")


def test_probe_chance_on_noise_labels():
    ds = generate(cfg(num_supports=1000))
    ds.labels = np.random.default_rng(0).integers(0, 4, size=len(ds))
    assert abs(probe_label_information(ds, "target") - 0.25) <= 0.05 + 0.03


def test_probe_recovers_strong_leak():
    spec = DomainSpec(name="leaky", label_leak=5.0, block_noise=0.0, concept_noise=0.0)
    ds = generate(cfg(num_supports=1000, domains=[spec]))
    assert probe_label_information(ds, "leaky") >= 0.98


def test_target_probe_beats_source_every_seed():
    for seed in range(5):
        ds = generate(cfg(seed=seed, num_supports=1000))
        assert probe_label_information(ds, "target") > probe_label_information(ds, "source")


def test_identical_specs_probe_alike():
    a, b = DomainSpec(name="a"), DomainSpec(name="b")
    diffs = []
    for seed in range(5):
        ds = generate(cfg(seed=seed, num_supports=1000, domains=[a, b]))
        diffs.append(probe_label_information(ds, "a") - probe_label_information(ds, "b"))
    assert abs(np.mean(diffs)) <= 0.02


@pytest.mark.parametrize("knob,sign", [("concept_noise", -1), ("label_leak", 1)])
def test_probe_monotone_in_knobs(knob, sign):
    grid = [0.0, 0.5, 1.0, 1.5, 2.0]
    means = []
    for v in grid:
        spec = DomainSpec(name="d", **{knob: v})
        accs = [probe_label_information(generate(cfg(seed=s, num_supports=600, domains=[spec])), "d") for s in range(5)]
        means.append(np.mean(accs))
    rho = spearmanr(grid, means).statistic
    assert sign * rho >= 0.8


# ---------------------------------------------------------------- interpolation


def test_interpolation_endpoints_and_midpoint():
    a = DomainSpec(name="a", concept_noise=0.0)
    b = DomainSpec(name="b", concept_noise=1.0)
    assert interpolate_domains(a, b, 2) == [a, b]
    mid = interpolate_domains(a, b, 3)[1]
    assert mid.concept_noise == 0.5


def test_interpolation_needs_two_points():
    with pytest.raises(ValueError):
        interpolate_domains(TARGET, SOURCE, 1)


def test_probe_falls_along_leak_decreasing_path():
    path = interpolate_domains(TARGET, DomainSpec(name="end", label_leak=0.0), 5)
    means = []
    for spec in path:
        accs = [probe_label_information(generate(cfg(seed=s, num_supports=600, domains=[spec])), spec.name) for s in range(5)]
        means.append(np.mean(accs))
    assert spearmanr(range(5), means).statistic <= 0
