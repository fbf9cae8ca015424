import numpy as np

from distance_oracle import UNREACHABLE, build_oracle


def test_open_grid_manhattan(open5):
    oracle = build_oracle(open5)
    assert oracle.distance(open5.state_of(0, 0), open5.state_of(4, 4)) == 8
    assert oracle.distance(3, 3) == 0


def test_islands_cross_component_unreachable(islands):
    oracle = build_oracle(islands)
    left, right = islands.state_of(0, 0), islands.state_of(8, 8)
    assert oracle.distance(left, right) == UNREACHABLE
    assert not oracle.reachable(left, right)
    assert oracle.reachable(left, islands.state_of(3, 8))


def test_symmetric_dynamics(four_rooms):
    oracle = build_oracle(four_rooms)
    assert np.array_equal(oracle.dist, oracle.dist.T)


def test_single_step_triangle_property(four_rooms):
    oracle = build_oracle(four_rooms)
    d = oracle.dist
    nxt = four_rooms.next_state_table
    for a in range(four_rooms.num_actions):
        assert np.all(np.abs(d - d[nxt[:, a]]) <= 1)


def test_distance_bounded_in_connected_grid(four_rooms):
    oracle = build_oracle(four_rooms)
    assert oracle.reachable_mask().all()
    assert oracle.dist.max() <= four_rooms.num_states


def test_optimal_actions_reduce_distance(open5):
    oracle = build_oracle(open5)
    s, g = open5.state_of(0, 0), open5.state_of(2, 2)
    best = oracle.optimal_actions(open5, s, g)
    assert set(best.tolist()) == {1, 3}
    assert oracle.optimal_actions(open5, g, g).size == 0


def test_reachable_pairs_exclude_trivial(islands):
    oracle = build_oracle(islands)
    pairs = oracle.reachable_pairs()
    assert np.all(pairs[:, 0] != pairs[:, 1])
    assert len(pairs) == 2 * 36 * 35
