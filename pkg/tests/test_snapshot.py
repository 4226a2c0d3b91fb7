import pytest

from gtvm import corpus, snapshot
from gtvm.corpus.fixtures import BUILDERS, load_fixture
from gtvm.errors import SnapshotError

G1 = "nemf.packages.graph1."


@pytest.mark.parametrize("name", sorted(set(BUILDERS) - {"random"}))
def test_fixture_round_trip_exact(name):
    space = load_fixture(name)
    text = snapshot.save(space)
    reloaded = snapshot.load(text, corpus.metamodels())
    assert reloaded.state() == space.state()
    assert snapshot.save(reloaded) == text


def test_random_fixture_round_trip():
    space = load_fixture("random", n=12, e=20, seed=3)
    text = snapshot.save(space)
    reloaded = snapshot.load(text, corpus.metamodels())
    assert reloaded.state() == space.state()


def test_shipped_fixture_files_match_builders():
    for name in ("triangle", "chain4", "selfloop", "dangling", "isolated", "delete"):
        assert corpus.fixture_gms(name) == snapshot.save(load_fixture(name))


def test_type_directives_extend_registry():
    text = (
        "type my.Thing entity\n"
        "type my.Sub entity extends my.Thing\n"
        "type my.link relation\n"
        "entity 1 : my.Sub name=\"it\"\n"
        "entity 2 : my.Thing in 1 value=7\n"
        "relation 3 : my.link (1 -> 2)\n"
    )
    space = snapshot.load(text, corpus.metamodels())
    assert space.conforms(1, "my.Thing")
    assert space.value(2) == 7
    assert space.parent(2) == 1
    assert snapshot.save(space) == text


def test_value_escaping_round_trip():
    space = load_fixture("empty")
    e = space.new_entity("nemf.ecore.datatypes.EString")
    space.set_value(e, 'say "hi"\\n')
    space.rename(e, "line\nbreak")
    text = snapshot.save(space)
    reloaded = snapshot.load(text, corpus.metamodels())
    assert reloaded.value(e) == 'say "hi"\\n'
    assert reloaded.name(e) == "line\nbreak"


def test_untyped_relation_line():
    space = load_fixture("empty")
    a = space.new_entity(G1 + "Node")
    b = space.new_entity(G1 + "Node")
    space.new_relation(None, a, b)
    text = snapshot.save(space)
    assert f"relation 3 :  ({a} -> {b})" in text
    reloaded = snapshot.load(text, corpus.metamodels())
    assert reloaded.state() == space.state()


@pytest.mark.parametrize("bad, what", [
    ("entity x : a.B", "bad directive"),
    ("entity 1 :", "at least one type"),
    ("entity 1 : nemf.packages.graph1.Node in 99", "not live"),
    ("relation 1 : nemf.packages.graph1.Edge.src (7 -> 8)", "not live"),
    ("entity 1 : no.Such.Type", "unknown type"),
    ("type a.B thing", "bad type directive"),
])
def test_load_errors(bad, what):
    with pytest.raises(SnapshotError) as err:
        snapshot.load(bad + "\n", corpus.metamodels())
    assert what.split()[0] in str(err.value)


def test_duplicate_id_rejected():
    text = ("entity 1 : nemf.packages.graph1.Node\n"
            "entity 1 : nemf.packages.graph1.Node\n")
    with pytest.raises(SnapshotError):
        snapshot.load(text, corpus.metamodels())


def test_round_trip_property_over_random_edits():
    import random

    from hypothesis import given, settings
    from hypothesis import strategies as st

    from editscripts import random_edit

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**20), st.integers(0, 50))
    def prop(seed, steps):
        rng = random.Random(seed)
        space = load_fixture("random", n=rng.randrange(1, 8),
                             e=rng.randrange(0, 12), seed=seed)
        for _ in range(steps):
            random_edit(space, rng)
        text = snapshot.save(space)
        reloaded = snapshot.load(text, corpus.metamodels())
        assert reloaded.state() == space.state()
        assert snapshot.save(reloaded) == text

    prop()


def test_relation_value_round_trip():
    space = load_fixture("empty")
    a = space.new_entity(G1 + "Node")
    b = space.new_entity(G1 + "Node")
    r = space.new_relation(G1 + "Edge.src", a, b)
    space.set_value(r, 42)
    space.rename(r, "weighted")
    text = snapshot.save(space)
    reloaded = snapshot.load(text, corpus.metamodels())
    assert reloaded.value(r) == 42 and reloaded.name(r) == "weighted"
    assert reloaded.state() == space.state()
