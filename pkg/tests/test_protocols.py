import pytest
from hypothesis import given, strategies as st

from consrel.errors import StructureError
from consrel.protocols import (
    BUILTIN_NAMES,
    Component,
    GraphKind,
    N_MINUS_F,
    ProtocolStructure,
    Threshold,
    builtin_protocol,
    default_fault_threshold,
    dependence_tree,
    emit_json,
    explicit,
    first_order_paths,
    parse_json,
    protocol_family,
    validate_structure,
)


def test_raft_structure_and_thresholds():
    g = builtin_protocol("raft")
    assert [c.kind.value for c in g.components] == ["A", "B"]
    resolved = validate_structure(g, 4, 2)
    assert list(resolved.m[1:]) == [2, 2]


def test_pbft_structure_and_thresholds():
    g = builtin_protocol("pbft")
    assert [c.kind.value for c in g.components] == ["A", "C", "C", "B"]
    resolved = validate_structure(g, 6, 2)
    assert list(resolved.m[1:]) == [4, 4, 3, 3]


def test_hotstuff_r_sequences():
    assert [c.r for c in builtin_protocol("hotstuff").components] == [1, 1, 2, 1, 2, 1, 2, 1]
    assert [c.r for c in builtin_protocol("hotstuff_variant").components] == [1, 1, 3, 1, 5, 1, 7, 1]


def test_hotstuff_variant_one_to_many_phases_anchor_at_root():
    g = builtin_protocol("hotstuff_variant")
    for j, comp in enumerate(g.components, start=1):
        if comp.kind is GraphKind.ONE_TO_MANY and j > 1:
            assert j - comp.r == 0


def test_unknown_protocol():
    with pytest.raises(StructureError) as err:
        builtin_protocol("tendermint")
    assert err.value.code == "UNKNOWN_PROTOCOL"


def test_r_out_of_range():
    g = ProtocolStructure("bad", (Component(GraphKind.ONE_TO_MANY, 1, N_MINUS_F),
                                  Component(GraphKind.MANY_TO_ONE, 3, N_MINUS_F)))
    with pytest.raises(StructureError) as err:
        validate_structure(g, 4, 1)
    assert err.value.code == "R_OUT_OF_RANGE"


def test_m_out_of_range():
    g = ProtocolStructure("bad", (Component(GraphKind.ONE_TO_MANY, 1, explicit(9)),))
    with pytest.raises(StructureError) as err:
        validate_structure(g, 4, 1)
    assert err.value.code == "M_OUT_OF_RANGE"


def test_empty_structure():
    with pytest.raises(StructureError) as err:
        validate_structure(ProtocolStructure("empty", ()), 4, 1)
    assert err.value.code == "EMPTY_STRUCTURE"


def test_invalid_nf_combinations():
    g = builtin_protocol("raft")
    for n, f in ((0, 0), (4, 4), (4, -1)):
        with pytest.raises(StructureError):
            validate_structure(g, n, f)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
@pytest.mark.parametrize("n", range(2, 13))
def test_builtins_validate_across_sizes(name, n):
    f = default_fault_threshold(protocol_family(name), n)
    resolved = validate_structure(builtin_protocol(name), n, f)
    assert all(1 <= m <= n for m in resolved.m)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_tree_shape(name):
    g = builtin_protocol(name)
    tree = dependence_tree(g)
    n_nodes = sum(len(c) for c in tree.children.values()) + 1
    assert n_nodes == len(g.components) + 1
    assert len(tree.paths) == len(tree.leaves)
    for path in tree.paths:
        assert path[0] == 0
        assert all(a < b for a, b in zip(path, path[1:]))  # edges go up in index


def test_raft_tree_is_chain():
    tree = dependence_tree(builtin_protocol("raft"))
    assert tree.children[0] == (1,) and tree.children[1] == (2,)
    assert tree.leaves == (2,) and tree.paths == ((0, 1, 2),)


def test_hotstuff_tree_hand_trace():
    tree = dependence_tree(builtin_protocol("hotstuff"))
    assert tree.children[0] == (1,)
    assert tree.children[1] == (2, 3)
    assert tree.children[3] == (4, 5)
    assert tree.children[5] == (6, 7)
    assert tree.children[7] == (8,)
    assert set(tree.leaves) == {2, 4, 6, 8}


def test_paxos_tree_hand_trace():
    tree = dependence_tree(builtin_protocol("paxos"))
    assert tree.children[0] == (1, 3)
    assert tree.children[1] == (2,)
    assert tree.children[3] == (4,)
    assert set(tree.leaves) == {2, 4}


def test_first_order_paths_examples():
    assert first_order_paths(builtin_protocol("pbft"), 6, 2) == [(0, 1, 2)]
    assert first_order_paths(builtin_protocol("raft"), 4, 2) == [(0, 1, 2)]
    assert first_order_paths(builtin_protocol("hotstuff"), 7, 2) == [
        (0, 1, 2), (0, 1, 3, 4), (0, 1, 3, 5, 6), (0, 1, 3, 5, 7),
    ]


def test_first_order_paths_cut_is_by_declared_threshold():
    # n=3, f=1 makes n-f == f+1 numerically; the f+1 reply phase must still
    # be excluded for the first-order term to match the closed forms.
    paths = first_order_paths(builtin_protocol("hotstuff"), 3, 1)
    assert paths == [(0, 1, 2), (0, 1, 3, 4), (0, 1, 3, 5, 6), (0, 1, 3, 5, 7)]


def test_first_order_paths_keep_duplicates():
    paths = first_order_paths(builtin_protocol("hotstuff"), 7, 2)
    tails = [p[-1] for p in paths]
    assert len(tails) == len(set(tails))  # distinct leaves, one term each
    # paxos: two structurally identical two-hop paths are both kept
    assert len(first_order_paths(builtin_protocol("paxos"), 4, 2)) == 2


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_json_round_trip(name):
    g = builtin_protocol(name)
    text = emit_json(g)
    assert parse_json(text) == g
    assert emit_json(parse_json(text)) == text  # byte-stable


def test_json_shape():
    text = emit_json(builtin_protocol("raft"))
    assert text == (
        '{"name":"raft","components":['
        '{"kind":"A","r":1,"m":"n-f"},{"kind":"B","r":1,"m":"n-f"}]}'
    )


def test_explicit_threshold_json():
    g = ProtocolStructure("custom", (Component(GraphKind.ONE_TO_MANY, 1, explicit(3)),))
    assert parse_json(emit_json(g)) == g
    assert '"m":3' in emit_json(g)


_components = st.integers(min_value=1, max_value=6).flatmap(
    lambda size: st.tuples(
        *[
            st.tuples(
                st.sampled_from(list(GraphKind)),
                st.integers(min_value=1, max_value=j + 1),
                st.one_of(
                    st.just(Threshold("n-f")),
                    st.just(Threshold("f+1")),
                    st.integers(min_value=1, max_value=4).map(explicit),
                ),
            )
            for j in range(size)
        ]
    )
)


@given(_components, st.text(alphabet=st.characters(codec="utf-8", exclude_characters='"\\'), max_size=12))
def test_json_round_trip_random_structures(specs, name):
    g = ProtocolStructure(name, tuple(Component(k, r, m) for k, r, m in specs))
    assert parse_json(emit_json(g)) == g
