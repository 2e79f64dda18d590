import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hadrl.placement import (
    BW, CPU, FLOW_CONSERVATION, LINK_DIRECTION, NODE_MAPPING, RAM, IncrementalPlacement, InstanceTooLarge,
    Placement, PlacementError, StructuralError, check_constraints, commit, exact_solve, objective_bandwidth,
    objective_load_balance, release, shortest_feasible_path,
)
from hadrl.topology import PsnGraph, Vnf, Nspr, build_reference_psn, generate_embb_nspr

from helpers import chain_nspr, link, naive_feasible, random_instance, server, star_psn, switch


def one_server(cpu=50.0, ram=300.0):
    return PsnGraph([server(0, cpu, ram)], [])


def test_two_vnfs_fill_server_exactly():
    psn = one_server()
    p = Placement(0, {0: 0, 1: 0}, {(0, 1): []}, True)
    assert check_constraints(psn, chain_nspr(2), p).ok


def test_three_vnfs_overload_cpu():
    psn = one_server()
    p = Placement(0, {0: 0, 1: 0, 2: 0}, {(0, 1): [], (1, 2): []}, True)
    assert CPU in check_constraints(psn, chain_nspr(3), p).kinds()


def test_ram_violation():
    psn = one_server(cpu=100.0, ram=200.0)
    p = Placement(0, {0: 0, 1: 0}, {(0, 1): []}, True)
    assert RAM in check_constraints(psn, chain_nspr(2), p).kinds()


def test_path_not_starting_at_source_server():
    psn = star_psn(3)
    p = Placement(0, {0: 1, 1: 2}, {(0, 1): [(3, 0), (0, 2)]}, True)
    assert FLOW_CONSERVATION in check_constraints(psn, chain_nspr(2), p).kinds()


def test_missing_vnf_and_non_server_host():
    psn = star_psn(2)
    nspr = chain_nspr(2)
    assert NODE_MAPPING in check_constraints(psn, nspr, Placement(0, {0: 1}, {(0, 1): []}, True)).kinds()
    p = Placement(0, {0: 0, 1: 1}, {(0, 1): [(0, 1)]}, True)
    assert NODE_MAPPING in check_constraints(psn, nspr, p).kinds()


def test_bandwidth_and_direction_violations():
    psn = star_psn(2, bw=1.0)
    nspr = chain_nspr(2)
    p = Placement(0, {0: 1, 1: 2}, {(0, 1): [(1, 0), (0, 2)]}, True)
    assert check_constraints(psn, nspr, p).kinds() == {BW}
    psn = star_psn(2, bw=10.0)
    p = Placement(0, {0: 1, 1: 1}, {(0, 1): [(1, 0), (0, 1)]}, True)
    assert LINK_DIRECTION in check_constraints(psn, nspr, p).kinds()


def test_missing_path_is_flagged():
    psn = star_psn(2)
    p = Placement(0, {0: 1, 1: 2}, {}, True)
    assert FLOW_CONSERVATION in check_constraints(psn, chain_nspr(2), p).kinds()


def test_structural_errors():
    psn = star_psn(2)
    nspr = chain_nspr(2)
    with pytest.raises(StructuralError):
        check_constraints(psn, nspr, Placement(0, {0: 9, 1: 1}, {}, True))
    with pytest.raises(StructuralError):
        check_constraints(psn, nspr, Placement(0, {0: 1, 1: 2}, {(0, 1): [(1, 2)]}, True))
    with pytest.raises(StructuralError):
        check_constraints(psn, nspr, Placement(0, {0: 1, 1: 1}, {(1, 0): []}, True))


def test_rejected_placement_must_be_empty():
    psn = star_psn(2)
    assert check_constraints(psn, chain_nspr(2), Placement.rejected(0)).ok
    assert not check_constraints(psn, chain_nspr(2), Placement(0, {0: 1}, {}, False)).ok


def test_shortest_path_cases():
    line = PsnGraph([switch(0), switch(1), switch(2)], [link(0, 1, 5), link(1, 2, 5)])
    assert shortest_feasible_path(line, 0, 0, 2) == []
    assert shortest_feasible_path(line, 0, 2, 2) == [(0, 1), (1, 2)]
    assert shortest_feasible_path(line, 2, 0, 2) == [(2, 1), (1, 0)]
    assert shortest_feasible_path(line, 0, 2, 6) is None
    tri = PsnGraph([switch(0), switch(1), switch(2)], [link(0, 2, 1), link(0, 1, 5), link(1, 2, 5)])
    assert shortest_feasible_path(tri, 0, 2, 0.5) == [(0, 2)]
    assert shortest_feasible_path(tri, 0, 2, 2) == [(0, 1), (1, 2)]


def test_commit_release_arithmetic():
    line = PsnGraph([server(0), switch(1), server(2)], [link(0, 1, 10), link(1, 2, 10)])
    nspr = chain_nspr(2)
    p = Placement(0, {0: 0, 1: 2}, {(0, 1): [(0, 1), (1, 2)]}, True)
    before = line.availability()
    commit(line, nspr, p)
    assert line.nodes[0].avail_cpu == 25.0 and line.nodes[2].avail_cpu == 25.0
    assert [l.avail_bw for l in line.links] == [8.0, 8.0]
    release(line, nspr, p)
    assert line.availability() == before


def test_commit_guards():
    psn = one_server()
    nspr = chain_nspr(3)
    with pytest.raises(PlacementError):
        commit(psn, nspr, Placement.rejected(0))
    with pytest.raises(PlacementError):
        commit(psn, nspr, Placement(0, {0: 0, 1: 0, 2: 0}, {(0, 1): [], (1, 2): []}, True))
    with pytest.raises(PlacementError):
        release(psn, nspr)
    ok = chain_nspr(2)
    p = Placement(0, {0: 0, 1: 0}, {(0, 1): []}, True)
    commit(psn, ok, p)
    with pytest.raises(PlacementError):
        commit(psn, ok, p)


def test_objective_bandwidth():
    nspr = generate_embb_nspr(0, 0.0, 1.0)
    colocated = Placement(0, {v: 0 for v in range(5)}, {vl.key: [] for vl in nspr.vls}, True)
    assert objective_bandwidth(nspr, colocated) == 0
    hops = [0, 1, 2, 1]
    paths = {vl.key: [(i, i + 1) for i in range(h)] for vl, h in zip(nspr.vls, hops)}
    assert objective_bandwidth(nspr, Placement(0, {}, paths, True)) == 8
    one_hop = {vl.key: [(0, 1)] for vl in nspr.vls}
    assert objective_bandwidth(nspr, Placement(0, {}, one_hop, True)) == 8


def test_objective_load_balance():
    psn = star_psn(5)
    assert objective_load_balance(psn, Placement(0, {0: 1})) == 2.0
    psn.nodes[1].avail_cpu, psn.nodes[1].avail_ram = 25.0, 150.0
    assert objective_load_balance(psn, Placement(0, {0: 1})) == 1.0
    fresh = star_psn(5)
    assert objective_load_balance(fresh, Placement(0, {v: v + 1 for v in range(5)})) == 10.0


def test_exact_solve_examples():
    psn = one_server()
    p = exact_solve(psn, Nspr(0, [Vnf(25, 150)], []))
    assert p.accepted and p.vnf_assignment == {0: 0}
    assert not exact_solve(star_psn(3), Nspr(0, [Vnf(60, 10)], [])).accepted
    # 40-CPU and 60-CPU servers, link too thin for the VL
    psn = PsnGraph([server(0, 40.0), server(1, 60.0)], [link(0, 1, 1.0)])
    p = exact_solve(psn, chain_nspr(2, cpu=25.0, bw=2.0))
    assert p.accepted and p.vnf_assignment == {0: 1, 1: 1}


def test_exact_solve_prefers_fewer_hops_then_balance():
    psn = star_psn(3)
    psn.nodes[1].avail_cpu = 40.0
    p = exact_solve(psn, chain_nspr(2))
    assert p.vnf_assignment == {0: 2, 1: 2}
    p = exact_solve(psn, chain_nspr(2), objective_weights=(0.0, 1.0))
    # balance is read before the commit, so co-location ties with spreading
    # and the lowest assignment on a fully free server wins
    assert p.vnf_assignment == {0: 2, 1: 2}
    psn.nodes[2].avail_cpu = 45.0
    p = exact_solve(psn, chain_nspr(2), objective_weights=(0.0, 1.0))
    assert p.vnf_assignment == {0: 3, 1: 3}


def test_exact_solve_leaves_psn_untouched_and_bounded():
    psn, nspr = random_instance(np.random.default_rng(3))
    before = psn.availability()
    exact_solve(psn, nspr)
    assert psn.availability() == before
    with pytest.raises(InstanceTooLarge):
        exact_solve(build_reference_psn(), generate_embb_nspr(0, 0.0, 1.0))


def test_exact_solve_matches_naive_enumerator():
    rng = np.random.default_rng(11)
    for _ in range(200):
        psn, nspr = random_instance(rng)
        p = exact_solve(psn, nspr)
        assert p.accepted == naive_feasible(psn, nspr)
        if p.accepted:
            assert check_constraints(psn, nspr, p).ok


def test_incremental_rollback_restores_state():
    psn = build_reference_psn()
    before = psn.availability()
    partial = IncrementalPlacement(psn, generate_embb_nspr(0, 0.0, 1.0))
    for v, s in enumerate(psn.servers[:3]):
        assert partial.try_place(v, s) is not None
    assert sum(partial.chi) == 3
    partial.rollback()
    assert psn.availability() == before


def test_incremental_finish_commits():
    psn = build_reference_psn()
    nspr = generate_embb_nspr(0, 0.0, 1.0)
    partial = IncrementalPlacement(psn, nspr)
    for v in range(5):
        partial.try_place(v, psn.servers[v])
    p = partial.finish()
    assert p.accepted and nspr.id in psn.live
    assert psn.nodes[psn.servers[0]].avail_cpu == 25.0


def test_try_place_failure_changes_nothing():
    psn = PsnGraph([server(0), server(1)], [link(0, 1, 1.0)])
    partial = IncrementalPlacement(psn, chain_nspr(2))
    partial.try_place(0, 0)
    snap = psn.availability()
    assert partial.try_place(1, 1) is None
    assert psn.availability() == snap


def test_placement_json_round_trip():
    p = Placement(3, {0: 1, 1: 2}, {(0, 1): [(1, 0), (0, 2)]}, True)
    assert Placement.from_dict(p.to_dict()) == p


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_commit_release_round_trip_bit_identical(seed):
    psn, nspr = random_instance(np.random.default_rng(seed))
    p = exact_solve(psn, nspr)
    if not p.accepted:
        return
    before = psn.availability()
    commit(psn, nspr, p)
    release(psn, nspr, p)
    assert psn.availability() == before


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bandwidth_zero_iff_paths_empty(seed):
    psn, nspr = random_instance(np.random.default_rng(seed))
    p = exact_solve(psn, nspr)
    if p.accepted:
        assert (objective_bandwidth(nspr, p) == 0) == all(not path for path in p.vl_paths.values())
