import itertools
import json
import math
from collections import Counter

import numpy as np
import pytest

from plantedlab import (Block, ConfigurationError, Dimensions, Hypothesis, Placement,
                        PlacementConfig, PlantedInstance, TemplateFamily, coordinate_map,
                        generate, read_matrix, sample_placement, write_matrix)
from plantedlab.errors import BudgetExceededError
from plantedlab.model import candidate_blocks, count_blocks, stream_rng


def test_dimensions_validation():
    Dimensions(4, 2, 4)
    with pytest.raises(ConfigurationError):
        Dimensions(3, 4, 1)
    with pytest.raises(ConfigurationError):
        Dimensions(3, 2, 3)
    with pytest.raises(ConfigurationError):
        Dimensions(0, 1, 1)


def test_consecutive_needs_room_before_sampling():
    config = PlacementConfig.of(4, 2, 3, "con")
    with pytest.raises(ConfigurationError):
        config.check_samplable()
    PlacementConfig.of(4, 2, 3, "noncon").check_samplable()


def test_coordinate_map_sorted_lists():
    block = Block.arbitrary([5, 9, 2], [7, 1, 4])
    assert coordinate_map(block, 5, 7) == (1, 2)


def test_coordinate_map_consecutive_offset():
    assert coordinate_map(Block.consecutive(2, 2, 2), 3, 2) == (1, 0)


def test_coordinate_map_circular_wrap():
    block = Block.circular(9, 9, 3, 10)
    assert block.rows == (9, 0, 1)
    assert coordinate_map(block, 0, 0) == (1, 1)
    assert block.wraps(10)
    assert not Block.circular(2, 3, 3, 10).wraps(10)


def test_coordinate_map_outside_block():
    with pytest.raises(ValueError, match="entry outside block"):
        coordinate_map(Block.consecutive(0, 0, 2), 5, 5)


@pytest.mark.parametrize("placement", ["noncon", "con", "circ"])
def test_coordinate_map_is_bijection(placement):
    for block in itertools.islice(candidate_blocks(placement, 6, 3), 40):
        image = {coordinate_map(block, i, j) for i, j in block.entries()}
        assert image == set(itertools.product(range(3), repeat=2))


def test_block_counts():
    assert count_blocks("noncon", 5, 2) == 100 == len(list(candidate_blocks("noncon", 5, 2)))
    assert count_blocks("con", 5, 2) == 16 == len(list(candidate_blocks("con", 5, 2)))
    assert count_blocks("circ", 5, 2) == 25 == len(list(candidate_blocks("circ", 5, 2)))


def test_single_placement_trivial():
    for placement in Placement:
        inst = sample_placement(PlacementConfig.of(1, 1, 1, placement), 0)
        assert inst.blocks[0].entries() == {(0, 0)}


def test_consecutive_uniformity():
    config = PlacementConfig.of(4, 2, 1, "con")
    rng = np.random.default_rng(11)
    draws = 90_000
    counts = Counter(sample_placement(config, rng).blocks[0].origin for _ in range(draws))
    assert len(counts) == 9
    p = 1 / 9
    sd = math.sqrt(draws * p * (1 - p))
    for c in counts.values():
        assert abs(c - draws * p) <= 3 * sd


def test_circular_pairs_disjoint():
    config = PlacementConfig.of(4, 2, 2, "circ")
    rng = np.random.default_rng(5)
    for _ in range(10_000):
        a, b = sample_placement(config, rng).blocks
        assert not (a.entries() & b.entries())


def test_label_uniformity():
    config = PlacementConfig.of(12, 2, 3, "noncon")
    rng = np.random.default_rng(2)
    draws = 12_000
    counts = Counter(sample_placement(config, rng).labels for _ in range(draws))
    assert len(counts) == 6
    p = 1 / 6
    sd = math.sqrt(draws * p * (1 - p))
    assert all(abs(c - draws * p) <= 4 * sd for c in counts.values())


def test_noncon_rows_may_share():
    # entry-level disjointness only: some samples reuse a row across blocks
    config = PlacementConfig.of(5, 2, 2, "noncon")
    rng = np.random.default_rng(0)
    shared = 0
    for _ in range(500):
        a, b = sample_placement(config, rng).blocks
        assert not (a.entries() & b.entries())
        shared += bool(set(a.rows) & set(b.rows))
    assert shared > 0


def test_rejection_budget():
    # four 2x2 blocks must tile a 4x4 matrix, which random tuples almost never do
    config = PlacementConfig.of(4, 2, 4, "noncon")
    with pytest.raises(BudgetExceededError, match="density too high"):
        sample_placement(config, 0, max_attempts=20)


def test_h0_mean():
    obs = generate(PlacementConfig.of(50, 5, 1, "con"), None, "H0", 3)
    assert obs.instance is None
    assert abs(obs.data.mean()) <= 4 / 50


def test_single_cell_mean_plant():
    config = PlacementConfig.of(1, 1, 1, "con")
    family = TemplateFamily("mean", [[[3.0]]])
    rng = np.random.default_rng(1)
    vals = np.array([generate(config, family, "H1", rng).data[0, 0] for _ in range(100_000)])
    assert abs(vals.mean() - 3.0) <= 0.02


def test_single_cell_variance_plant():
    config = PlacementConfig.of(1, 1, 1, "con")
    family = TemplateFamily("variance", [[[0.5]]])
    rng = np.random.default_rng(2)
    vals = np.array([generate(config, family, "H1", rng).data[0, 0] for _ in range(100_000)])
    assert abs(vals.var() - 1.5) <= 0.02


def test_planted_entries_follow_template():
    n, k = 8, 3
    config = PlacementConfig.of(n, k, 1, "circ")
    template = np.arange(9.0).reshape(3, 3)
    family = TemplateFamily("mean", template[None])
    rng = np.random.default_rng(7)
    sums = np.zeros((k, k))
    reps = 3000
    for _ in range(reps):
        obs = generate(config, family, "H1", rng)
        block = obs.instance.blocks[0]
        for i, j in block.entries():
            sums[coordinate_map(block, i, j)] += obs.data[i, j]
    assert np.all(np.abs(sums / reps - template) < 4 / math.sqrt(reps))


def test_wrong_template_count():
    with pytest.raises(ConfigurationError):
        generate(PlacementConfig.of(6, 2, 2, "con"), TemplateFamily("mean", np.ones((1, 2, 2))),
                 "H1", 0)


def test_variance_family_bounds():
    with pytest.raises(ConfigurationError):
        TemplateFamily("variance", [[[1.0]]])
    with pytest.raises(ConfigurationError):
        TemplateFamily("variance", [[[0.6]]], theta0=0.5)
    assert TemplateFamily("variance", [[[0.4]]]).theta0 == 0.4


def test_family_json_roundtrip(tmp_path):
    fam = TemplateFamily("variance", np.full((2, 2, 2), 0.25), theta0=0.5)
    path = tmp_path / "f.json"
    path.write_text(fam.dumps())
    assert TemplateFamily.load(path) == fam
    assert json.loads(fam.dumps())["theta0"] == 0.5


def test_instance_json_roundtrip():
    rng = np.random.default_rng(4)
    for placement in Placement:
        inst = sample_placement(PlacementConfig.of(12, 3, 3, placement), rng)
        back = PlantedInstance.from_json(json.loads(json.dumps(inst.to_json())))
        assert back == inst


def test_instance_rejects_overlap():
    with pytest.raises(ConfigurationError):
        PlantedInstance("con", 4, 2, (Block.consecutive(0, 0, 2), Block.consecutive(1, 1, 2)),
                        (0, 1))


def test_matrix_dump_roundtrip(tmp_path):
    data = np.random.default_rng(0).standard_normal((5, 5))
    path = tmp_path / "x.bin"
    write_matrix(path, data)
    raw = path.read_bytes()
    assert len(raw) == 16 + 8 * 25
    assert np.array_equal(read_matrix(path), data)


def test_stream_rng_independent_of_creation_order():
    a = stream_rng(9, 1, 5).standard_normal(3)
    stream_rng(9, 0, 0).standard_normal(10)
    assert np.array_equal(a, stream_rng(9, 1, 5).standard_normal(3))
    assert not np.array_equal(a, stream_rng(9, 1, 6).standard_normal(3))


def test_observation_hypothesis_recorded():
    obs = generate(PlacementConfig.of(6, 2, 1, "con"), TemplateFamily("mean", np.ones((1, 2, 2))),
                   Hypothesis.H1, 0)
    assert obs.hypothesis is Hypothesis.H1 and obs.instance.m == 1
