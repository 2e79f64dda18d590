import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hadrl.topology import (
    SERVER, SWITCH, UAP, PsnGraph, PsnLink, PsnNode, TopologyError, build_reference_psn, generate_embb_nspr,
    normalized_features,
)

from helpers import server, star_psn


@pytest.fixture(scope="module")
def ref():
    return build_reference_psn()


def test_reference_server_count(ref):
    assert len(ref.servers) == 16 + 5 * 10 + 15 * 4 == 126
    by_kind = {}
    for dc in ref.dc_groups.values():
        by_kind.setdefault(dc.kind, []).append(len(dc.servers))
    assert by_kind == {"CCP": [16], "CDC": [10] * 5, "EDC": [4] * 15}


def test_reference_server_capacities(ref):
    for s in ref.servers:
        node = ref.nodes[s]
        assert (node.max_cpu, node.max_ram) == (50.0, 300.0)
        assert (node.avail_cpu, node.avail_ram) == (50.0, 300.0)
    assert ref.total_cpu() == 6300.0


def test_reference_link_capacities(ref):
    dcs = ref.dc_groups
    kind_of_switch = {dc.switch: dc.kind for dc in dcs.values()}
    for dc in dcs.values():
        for s in dc.servers:
            expected = 10.0 if dc.kind == "EDC" else 100.0
            assert ref.link_between(dc.switch, s).max_bw == expected
    edc_uplinks = 0
    for l in ref.links:
        kinds = {kind_of_switch.get(l.a), kind_of_switch.get(l.b)}
        if kinds == {"CDC", "EDC"}:
            assert l.max_bw == 10.0
            edc_uplinks += 1
        elif kinds == {"CDC"} or kinds == {"CCP", "CDC"}:
            assert l.max_bw == 100.0
    assert edc_uplinks == 15


def test_reference_shape(ref):
    kinds = [n.kind for n in ref.nodes]
    assert kinds.count(SERVER) == 126
    assert kinds.count(SWITCH) == 21
    assert kinds.count(UAP) == 15
    # 126 server links + 5 CCP-CDC + 10 CDC mesh + 15 EDC uplinks + 15 UAP links
    assert len(ref.links) == 171


def test_reference_is_deterministic():
    assert build_reference_psn().to_dict() == build_reference_psn().to_dict()


def test_server_scale_multiplies_dc_sizes():
    assert len(build_reference_psn(servers_scale=2.0).servers) == 252


def test_embb_request():
    nspr = generate_embb_nspr(1, 0.0, 100.0)
    assert len(nspr.vnfs) == 5 and len(nspr.vls) == 4
    assert all((v.req_cpu, v.req_ram) == (25.0, 150.0) for v in nspr.vnfs)
    assert all(vl.req_bw == 2.0 for vl in nspr.vls)
    assert [vl.key for vl in nspr.vls] == [(0, 1), (1, 2), (2, 3), (3, 4)]


@pytest.mark.parametrize("bad", [
    dict(cpu=-1.0),
    dict(bw=0.0),
    dict(lifetime=0.0),
])
def test_nspr_rejects_non_positive(bad):
    from hadrl.topology import Nspr, Vnf, VirtualLink
    with pytest.raises(ValueError):
        Nspr(0, [Vnf(bad.get("cpu", 1.0), 1.0), Vnf(1.0, 1.0)], [VirtualLink(0, 1, bad.get("bw", 1.0))],
             lifetime=bad.get("lifetime", 1.0))


def test_invalid_graphs_rejected():
    with pytest.raises(TopologyError):
        PsnGraph([server(0)], [PsnLink(0, 0, 1, 1)])
    with pytest.raises(TopologyError):
        PsnGraph([server(0)], [PsnLink(0, 3, 1, 1)])
    with pytest.raises(TopologyError):
        PsnGraph([server(0), server(1)], [PsnLink(0, 1, 1, 1), PsnLink(1, 0, 1, 1)])
    with pytest.raises(TopologyError):
        PsnGraph([server(0), server(1)], [PsnLink(0, 1, 1, 2)])
    with pytest.raises(TopologyError):
        PsnGraph([PsnNode(0, SERVER, 50, 60, 300, 300)], [])
    with pytest.raises(TopologyError):
        PsnGraph([PsnNode(0, SWITCH, 50, 50)], [])


def test_json_round_trip(tmp_path, ref):
    path = tmp_path / "psn.json"
    ref.save(path)
    again = PsnGraph.load(path)
    assert again.to_dict() == ref.to_dict()
    assert again.availability() == ref.availability()


def test_load_reports_format_problems(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"format": "other"}))
    with pytest.raises(TopologyError, match="format"):
        PsnGraph.load(path)
    path.write_text("{\n nope")
    with pytest.raises(TopologyError, match="line 2"):
        PsnGraph.load(path)


def test_features_extremes(ref):
    psn = ref.copy()
    nspr = generate_embb_nspr(0, 0.0, 1.0)
    s0 = psn.servers[0]
    psn.nodes[s0].avail_cpu = 0.0
    nodes, req = normalized_features(psn, nspr, 0)
    assert nodes[s0, 0] == 0.0
    assert nodes[psn.servers[1], 0] == 1.0
    assert req[3] == 5.0
    assert normalized_features(psn, nspr, 4)[1][3] == 1.0


def test_feature_vnf_index_checked(ref):
    with pytest.raises(IndexError):
        normalized_features(ref, generate_embb_nspr(0, 0.0, 1.0), 5)


def test_bandwidth_feature_sums_incident_links():
    psn = star_psn(3, bw=10.0)
    psn.links[0].avail_bw = 4.0
    nodes, _ = normalized_features(psn, generate_embb_nspr(0, 0.0, 1.0, 2), 0)
    # the switch has 30 units of incident capacity, the normalizer
    assert nodes[0, 2] == pytest.approx(24.0 / 30.0)
    assert nodes[1, 2] == pytest.approx(4.0 / 30.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=126, max_size=126),
       st.lists(st.floats(0, 1), min_size=171, max_size=171))
def test_features_in_unit_interval(fracs, bw_fracs):
    psn = build_reference_psn()
    for s, (fc, fr) in zip(psn.servers, fracs):
        psn.nodes[s].avail_cpu = fc * 50.0
        psn.nodes[s].avail_ram = fr * 300.0
    for l, f in zip(psn.links, bw_fracs):
        l.avail_bw = f * l.max_bw
    nodes, req = normalized_features(psn, generate_embb_nspr(0, 0.0, 1.0), 2)
    assert np.all((nodes[:, :3] >= 0) & (nodes[:, :3] <= 1))
    assert np.all((req[:3] >= 0) & (req[:3] <= 1))
