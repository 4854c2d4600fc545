from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from infraclust.hazard import (HazardConfig, Scenario, component_failure_probability, distance_to_polyline,
                               eligible_components, failure_probability, generate_scenarios, load_scenarios,
                               save_scenarios)


def test_failure_probability_examples():
    assert failure_probability(0.0, 0.7, 250.0) == 0.7
    assert failure_probability(250.0, 0.8, 250.0) == pytest.approx(0.8 * math.exp(-1))
    assert failure_probability(250.0, 0.8, 250.0) == pytest.approx(0.2943, abs=5e-5)
    assert failure_probability(1e9, 0.7, 250.0) < 1e-300


def test_distance_to_polyline():
    line = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0)]
    assert distance_to_polyline((5.0, 3.0), line) == pytest.approx(3.0)
    assert distance_to_polyline((13.0, 5.0), line) == pytest.approx(3.0)
    assert distance_to_polyline((-3.0, -4.0), line) == pytest.approx(5.0)


def test_config_validation():
    with pytest.raises(ValueError):
        HazardConfig(p0=1.5)
    with pytest.raises(ValueError):
        HazardConfig(decay_length=0)
    with pytest.raises(ValueError):
        HazardConfig(max_failures=0)


def test_default_scenarios(default_testbed):
    scen = generate_scenarios(default_testbed, HazardConfig(), seed=0)
    assert len(scen) == 325
    assert all(1 <= s.failure_count <= 35 for s in scen)
    assert len({s.id for s in scen}) == 325
    # only links fail by default
    assert all(":link:" in c for s in scen for c in s.failed_components)


def test_determinism(small_testbed):
    cfg = HazardConfig(count=20)
    a = generate_scenarios(small_testbed, cfg, seed=3)
    b = generate_scenarios(small_testbed, cfg, seed=3)
    assert [s.to_dict() for s in a] == [s.to_dict() for s in b]


def test_cap_keeps_nearest_failures(small_testbed):
    cfg = HazardConfig(p0=1.0, decay_length=1e9, max_failures=5, count=3, intensity_range=(1.0, 1.0))
    comps = eligible_components(small_testbed, cfg)
    dist = {c: distance_to_polyline(small_testbed.component_midpoint(c), small_testbed.stream_polyline)
            for c in comps}
    nearest = sorted(comps, key=lambda c: (dist[c], c))[:5]
    for s in generate_scenarios(small_testbed, cfg, seed=0):
        assert sorted(s.failed_components) == sorted(nearest)


def test_zero_p0_exhausts_retries(small_testbed):
    with pytest.raises(RuntimeError, match="retries"):
        generate_scenarios(small_testbed, HazardConfig(p0=0.0, count=1, max_retries=5), seed=0)


def test_no_eligible_components(small_testbed):
    with pytest.raises(ValueError):
        generate_scenarios(small_testbed, HazardConfig(eligible=("gas:link",)), seed=0)


def test_mean_failures_monotone_in_p0(small_testbed):
    means = []
    for p0 in (0.1, 0.3, 0.5, 0.7, 0.9):
        cfg = HazardConfig(p0=p0, count=400, max_failures=1000)
        means.append(np.mean([s.failure_count for s in generate_scenarios(small_testbed, cfg, seed=11)]))
    assert all(a <= b for a, b in zip(means, means[1:]))


def test_failure_frequency_matches_probability(small_testbed):
    # fixed intensity and no cap; p0 high enough that empty draws are negligible
    cfg = HazardConfig(p0=0.6, count=10_000, max_failures=10_000, intensity_range=(1.0, 1.0))
    scen = generate_scenarios(small_testbed, cfg, seed=0)
    comps = eligible_components(small_testbed, cfg)
    p = np.array([component_failure_probability(small_testbed, c, cfg) for c in comps])
    p_empty = float(np.prod(1 - p))
    assert p_empty < 1e-6
    counts = {c: 0 for c in comps}
    for s in scen:
        for c in s.failed_components:
            counts[c] += 1
    n = len(scen)
    z = []
    for c, pc in zip(comps, p):
        se = math.sqrt(pc * (1 - pc) / n)
        z.append((counts[c] / n - pc) / se)
        assert abs(z[-1]) <= 3, c
    # aggregate: sum of squared z-scores is chi-square with len(comps) dof
    assert stats.chi2.sf(np.sum(np.square(z)), len(comps)) > 1e-3


def test_round_trip(tmp_path, small_testbed):
    scen = generate_scenarios(small_testbed, HazardConfig(count=15), seed=1)
    path = tmp_path / "s.jsonl"
    save_scenarios(scen, path)
    back = load_scenarios(path)
    assert [s.to_dict() for s in back] == [s.to_dict() for s in scen]
    s = Scenario.from_components("x", ["water:link:a", "power:node:b"])
    assert Scenario.from_dict(s.to_dict()) == s
