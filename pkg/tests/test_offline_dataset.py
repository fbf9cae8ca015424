import numpy as np
import pytest

from distance_oracle import build_oracle
from errors import DatasetParseError, MissingArtifactError
from gc_core import GCTransition
from grid_env import GridSpec
from offline_dataset import (OfflineDataset, check_rewards, dumps_dataset, generate_dataset,
                             generate_expert, generate_random, load_dataset, loads_dataset,
                             save_dataset)

FIXTURE = (
    '{"env":{"width":2,"height":2,"variant":"open","walls":[]},"seed":5,"version":1}\n'
    '{"goal":3,"success":true,"tag":"expert","steps":[[0,3,-1,1,0],[1,1,0,3,1]]}\n'
)


def test_noiseless_expert_follows_shortest_path(open5, rng):
    oracle = build_oracle(open5)
    for traj in generate_expert(open5, 30, 0.0, rng, oracle):
        s0 = traj.transitions[0].state
        assert traj.success
        assert len(traj) == oracle.distance(s0, traj.commanded_goal)
        assert traj.episode_return == -len(traj)


def test_expert_success_rate_four_rooms(four_rooms):
    ds = generate_dataset(four_rooms, 100, 0, noise=0.2, seed=0)
    assert ds.success_rate("expert") >= 0.8


def test_random_trajectories_bounded(open5, rng):
    for traj in generate_random(open5, 40, rng):
        assert 1 <= len(traj) <= open5.H_max
        assert traj.transitions[-1].done


def test_mix_counts_exact(small_dataset):
    assert len(small_dataset) == 50
    assert small_dataset.count("expert") == 20
    assert small_dataset.count("random") == 30
    assert small_dataset.provenance[:20] == ["expert"] * 20


def test_rewards_consistent(small_dataset, open5):
    assert check_rewards(small_dataset, open5) == []


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_rewards_consistent_fuzz(four_rooms, seed):
    ds = generate_dataset(four_rooms, 10, 20, noise=0.3, seed=seed)
    assert check_rewards(ds, four_rooms) == []


def test_generation_is_deterministic(open5):
    a = generate_dataset(open5, 5, 5, 0.1, seed=42)
    b = generate_dataset(open5, 5, 5, 0.1, seed=42)
    c = generate_dataset(open5, 5, 5, 0.1, seed=43)
    assert dumps_dataset(a) == dumps_dataset(b)
    assert dumps_dataset(a) != dumps_dataset(c)


def test_expert_rejects_unreachable_pairs(islands, rng):
    oracle = build_oracle(islands)
    for traj in generate_expert(islands, 20, 0.0, rng, oracle):
        assert traj.success


def test_invalid_noise(open5, rng):
    with pytest.raises(ValueError):
        generate_expert(open5, 1, 1.5, rng)


def test_save_load_round_trip(tmp_path, small_dataset):
    path = save_dataset(small_dataset, tmp_path / "ds.jsonl")
    loaded = load_dataset(path)
    assert loaded == small_dataset


def test_fixture_loads_to_expected_value():
    ds = loads_dataset(FIXTURE)
    assert ds.env_spec == GridSpec(2, 2, "open", frozenset())
    assert ds.rng_seed == 5
    assert ds.provenance == ["expert"]
    traj = ds.trajectories[0]
    assert traj.commanded_goal == 3 and traj.success
    assert traj.transitions == (GCTransition(0, 3, 3, -1, 1, False), GCTransition(1, 3, 1, 0, 3, True))
    assert dumps_dataset(ds) == FIXTURE


def test_truncated_file_is_rejected(tmp_path, small_dataset):
    path = save_dataset(small_dataset, tmp_path / "ds.jsonl")
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(DatasetParseError):
        load_dataset(path)


def test_parse_error_names_line_and_field():
    bad = FIXTURE.replace('"tag":"expert"', '"tag":"oracle"')
    with pytest.raises(DatasetParseError) as info:
        loads_dataset(bad, "bad.jsonl")
    assert info.value.line == 2
    assert info.value.field == "tag"


def test_parse_error_on_bad_step():
    bad = FIXTURE.replace("[1,1,0,3,1]", "[1,1,0,3]")
    with pytest.raises(DatasetParseError) as info:
        loads_dataset(bad)
    assert info.value.field == "steps[1]"


def test_missing_file(tmp_path):
    with pytest.raises(MissingArtifactError):
        load_dataset(tmp_path / "nope.jsonl")


def test_provenance_must_match():
    with pytest.raises(ValueError):
        OfflineDataset([], GridSpec(2, 2), ["expert"], 0)


def test_transitions_flatten_in_order(small_dataset):
    batch = small_dataset.transitions()
    assert len(batch) == small_dataset.num_transitions
    first = small_dataset.trajectories[0].transitions[0]
    assert batch.transition(0) == first
    assert np.all(batch.rewards <= 0)


@pytest.mark.parametrize("step, why", [
    ("[99,7,0,3,1]", "state id"),
    ("[1,7,0,3,1]", "action 7"),
    ("[1,0,0,3,1]", "does not lead"),
    ("[1,1,-1,3,1]", "contradicts"),
])
def test_steps_checked_against_header_grid(step, why):
    bad = FIXTURE.replace("[1,1,0,3,1]", step)
    with pytest.raises(DatasetParseError, match=why) as info:
        loads_dataset(bad, "bad.jsonl")
    assert info.value.line == 2
    assert info.value.field == "steps[1]"


def test_goal_outside_grid_is_rejected():
    bad = FIXTURE.replace('"goal":3', '"goal":4')
    with pytest.raises(DatasetParseError) as info:
        loads_dataset(bad)
    assert info.value.field == "goal"


def test_invalid_utf8_names_line(tmp_path):
    path = tmp_path / "ds.jsonl"
    path.write_bytes(FIXTURE.encode("utf-8") + b'{"goal":\xff}\n')
    with pytest.raises(DatasetParseError) as info:
        load_dataset(path)
    assert info.value.line == 3
    assert info.value.field == "line"
