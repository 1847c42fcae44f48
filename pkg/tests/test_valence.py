import io

import pytest

from soslab.harness import build_protocol
from soslab.kernel import BudgetExceeded
from soslab.protocols import Constant
from soslab.sos import Sos
from soslab.valence import (
    INPUT,
    OUTPUT,
    AbstractEvent,
    StateGraph,
    StateGraphError,
    all_valences,
    analyze,
    check_asynchrony,
    check_axioms,
    check_resilience,
    compute_valence,
    extract_state_graph,
    find_critical_states,
    read_state_graph,
    valence_connected,
    write_state_graph,
)

E = AbstractEvent


def S(*events):
    return frozenset(events)


in1, in2 = E(1, 1, INPUT), E(2, 1, INPUT)
out0, out1 = E(1, 2, OUTPUT, 0), E(2, 2, OUTPUT, 1)


def two_way():
    """Root with two output children, one per value."""
    root = S()
    a, b = S(out0), S(out1)
    return StateGraph(frozenset({root, a, b}), frozenset({a, b})), root, a, b


def test_output_state_valence():
    g, _, a, _ = two_way()
    assert compute_valence(a, g) == {frozenset({0})}


def test_union_of_extensions_and_critical_root():
    g, root, a, b = two_way()
    assert compute_valence(root, g) == {frozenset({0}), frozenset({1})}
    assert find_critical_states(g) == [root]


def test_valence_is_literal_over_supersets():
    # the superset {in1, out0} is not a one-event extension of the root
    far = S(in1, out0)
    g = StateGraph(frozenset({S(), far}), frozenset({far}))
    assert compute_valence(S(), g) == {frozenset({0})}


def test_connected_graph_has_no_critical_states():
    top = S(out0, out1)
    g = StateGraph(frozenset({S(), S(out0), top}), frozenset({S(out0), top}))
    assert all(valence_connected(v) for v in all_valences(g).values())
    assert find_critical_states(g) == []


def test_state_outside_graph():
    g, *_ = two_way()
    with pytest.raises(StateGraphError):
        compute_valence(S(in1), g)


def test_diamond_violation_has_witness():
    root = S()
    states = frozenset({root, S(in1), S(in2)})
    res = check_asynchrony(StateGraph(states, frozenset({S(in1), S(in2)})))
    assert not res.holds and res.witness == root
    full = states | {S(in1, in2)}
    assert check_asynchrony(StateGraph(full, frozenset({S(in1, in2)}))).holds


def test_resilience_violation():
    g = StateGraph(frozenset({S(), S(in1)}), frozenset({S(in1)}))
    res = check_resilience(g)
    assert not res.holds and res.witness == S()


def test_termination_flags_maximal_non_output():
    g = StateGraph(frozenset({S(), S(in1)}), frozenset())
    assert not check_axioms(g)["termination"].holds


def test_duplicate_slot_rejected():
    with pytest.raises(StateGraphError):
        StateGraph(frozenset({S(E(1, 1), E(1, 1, INPUT))}), frozenset())


def test_file_roundtrip():
    g, *_ = two_way()
    buf = io.StringIO()
    write_state_graph(g, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == "state 0 events [] output false"
    assert read_state_graph(text.splitlines()) == g


@pytest.mark.parametrize("line", [
    "state 0 events [] output maybe",
    "node 0 events [] output true",
    "state 0 events [[1]] output true",
    "state 0 events {} output true",
    "state 0 events [[1,1,\"WEIRD\"]] output true",
])
def test_bad_files(line):
    with pytest.raises(StateGraphError):
        read_state_graph([line])


def test_alg3_single_process_graph():
    p = build_protocol("alg3", n=1, t=0, sos=Sos.parse("{{0},{1}}"))
    g = extract_state_graph(p)
    rep = analyze(g)
    inp = g.input_state()
    assert rep.valences[inp] == {frozenset({0}), frozenset({1})}
    assert inp in rep.critical
    assert rep.axioms["termination"].holds and rep.axioms["asynchrony"].holds
    # a single process drives everything, so resilience cannot hold
    assert not rep.axioms["resilience"].holds


def test_extraction_matches_literal_valence(right):
    p = build_protocol("alg3", n=2, t=0, sos=Sos.parse("{{0},{1},{0,1}}"))
    g = extract_state_graph(p)
    literal = StateGraph(g.states, g.outputs)
    fast = all_valences(g)
    assert all(compute_valence(s, literal) == fast[s] for s in g.states)


def test_constant_graph_valences():
    g = extract_state_graph(Constant(6, 2))
    assert set(all_valences(g).values()) == {frozenset({frozenset({6})})}


def test_extraction_budget():
    p = build_protocol("alg3", n=2, t=0, sos=Sos.parse("{{1},{1,2},{1,3},{2,3}}"))
    with pytest.raises(BudgetExceeded):
        extract_state_graph(p, max_states=100)
