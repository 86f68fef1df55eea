import random

import pytest
from hypothesis import given, settings, strategies as st

from dhpp.placement import (
    EmptyScenario,
    EntityUniverseMismatch,
    Placement,
    UncoveredVcp,
    count_reconfigurations,
    eval_avg_latency,
    evaluate,
    validate_placement,
    vcp_latency,
)
from dhpp.scenario import Scenario, Vcp, Vsdn

from conftest import path_topology, random_connected
from test_topo import brute_force_distances

A, B, C, D = range(4)
PATH = path_topology(4)


def scenario(*vsdns, k=1):
    return Scenario("t", k, tuple(vsdns), 0, (1, 4))


class TestLatency:
    def test_collocated(self):
        assert vcp_latency(PATH, Vcp(0, B, B), B) == 0.0

    def test_path_arithmetic(self):
        assert vcp_latency(PATH, Vcp(0, A, D), B) == 3.0

    def test_hv_on_shortest_path(self):
        for h in range(4):
            assert vcp_latency(PATH, Vcp(0, A, D), h) == PATH.dist[A, D]

    def test_all_on_one_node(self):
        s = scenario(Vsdn(0, C, (C,)), Vsdn(1, C, (C,)))
        pl = Placement((C,), {p: 0 for p in s.vcps()})
        assert eval_avg_latency(PATH, s, pl) == 0.0

    def test_average_on_path(self):
        s = scenario(Vsdn(0, A, (D, C)))
        pl = Placement((B,), {p: 0 for p in s.vcps()})
        assert eval_avg_latency(PATH, s, pl) == 2.5

    def test_empty_and_uncovered(self):
        with pytest.raises(EmptyScenario):
            eval_avg_latency(PATH, scenario(), Placement((A,), {}))
        s = scenario(Vsdn(0, A, (D,)))
        with pytest.raises(UncoveredVcp):
            eval_avg_latency(PATH, s, Placement((A,), {}))

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_path_enumeration(self, seed):
        rng = random.Random(seed)
        t = random_connected(rng, 7)
        oracle = brute_force_distances(t)
        k = rng.randint(1, 3)
        vs = tuple(Vsdn(i, rng.randrange(7), tuple(rng.sample(range(7), 3))) for i in range(3))
        s = Scenario("t", k, vs, 0, (3, 3))
        pl = Placement(tuple(rng.sample(range(7), k)), {p: rng.randrange(k) for p in s.vcps()})
        expected = sum(
            oracle[p.controller_node][pl.serving_node(p)] + oracle[pl.serving_node(p)][p.switch_node]
            for p in s.vcps()
        ) / len(s.vcps())
        assert eval_avg_latency(t, s, pl) == pytest.approx(expected, rel=1e-12)


class TestFigureOneCases:
    """One controller/switch pair, two hypervisor entities on a four-node substrate."""

    p = Vcp(0, A, D)
    initial = Placement((B, C), {p: 0})

    def flags(self, new):
        report = count_reconfigurations(self.initial, new, [self.p])
        return tuple(int(x) for x in report.flags[self.p]), (report.r_loc, report.r_hv)

    def test_unchanged(self):
        assert self.flags(self.initial) == ((0, 0), (0, 0))

    def test_migration_changes_location_only(self):
        # entity 0 moves from B to A and still serves the VCP
        assert self.flags(Placement((A, C), {self.p: 0})) == ((1, 0), (1, 0))

    def test_entity_change_same_node(self):
        # entities swap nodes; the VCP stays on B but is now served by entity 1
        assert self.flags(Placement((C, B), {self.p: 1})) == ((0, 1), (0, 1))

    def test_entity_and_location_change(self):
        assert self.flags(Placement((B, C), {self.p: 1})) == ((1, 1), (1, 1))


class TestCountErrors:
    def test_mismatched_k(self):
        p = Vcp(0, A, B)
        with pytest.raises(EntityUniverseMismatch):
            count_reconfigurations(Placement((A,), {p: 0}), Placement((A, B), {p: 0}), [p])

    def test_uncovered(self):
        p, q = Vcp(0, A, B), Vcp(0, A, C)
        with pytest.raises(UncoveredVcp):
            count_reconfigurations(Placement((A,), {p: 0}), Placement((A,), {p: 0, q: 0}), [p, q])

    def test_new_vcps_are_not_counted(self):
        p, q = Vcp(0, A, B), Vcp(1, C, D)
        s = scenario(Vsdn(0, A, (B,)), Vsdn(1, C, (D,)))
        prior = Placement((A,), {p: 0})
        obj = evaluate(PATH, s, Placement((D,), {p: 0, q: 0}), prior)
        assert (obj.r_loc, obj.r_hv) == (1, 0)


class TestValidate:
    s = scenario(Vsdn(0, A, (B, C)), k=2)

    def test_ok(self):
        pl = Placement((A, D), {p: 0 for p in self.s.vcps()})
        assert validate_placement(PATH, self.s, pl) == []

    def test_duplicate_location(self):
        pl = Placement((B, B), {p: 0 for p in self.s.vcps()})
        assert "duplicate location" in validate_placement(PATH, self.s, pl)

    def test_uncovered(self):
        first = self.s.vcps()[0]
        problems = validate_placement(PATH, self.s, Placement((A, D), {first: 1}))
        assert any(msg.startswith("uncovered VCP") for msg in problems)

    def test_bad_ids(self):
        pl = Placement((A, 9), {p: 2 for p in self.s.vcps()})
        problems = validate_placement(PATH, self.s, pl)
        assert any("invalid node" in m for m in problems)
        assert any("unknown entity" in m for m in problems)


def test_json_round_trip():
    s = scenario(Vsdn(0, A, (B, C)), Vsdn(4, D, (A,)), k=2)
    pl = Placement((C, A), {p: i % 2 for i, p in enumerate(s.vcps())})
    assert Placement.loads(pl.dumps()) == pl


def random_pair(rng, n=6, k=3, n_vcps=8):
    vcps = [Vcp(i, rng.randrange(n), rng.randrange(n)) for i in range(n_vcps)]
    make = lambda: Placement(tuple(rng.sample(range(n), k)), {p: rng.randrange(k) for p in vcps})
    return vcps, make(), make()


def check_relabeling(rng):
    vcps, old, new = random_pair(rng)
    base = count_reconfigurations(old, new, vcps)
    perm = dict(enumerate(rng.sample(range(3), 3)))
    both = count_reconfigurations(old.relabeled(perm), new.relabeled(perm), vcps)
    only_new = count_reconfigurations(old, new.relabeled(perm), vcps)
    same = count_reconfigurations(new, new, vcps)
    return (
        (both.r_loc, both.r_hv) == (base.r_loc, base.r_hv)
        and only_new.r_loc == base.r_loc
        and (same.r_loc, same.r_hv) == (0, 0)
        and base.r_loc == sum(f[0] for f in base.flags.values())
        and base.r_hv == sum(f[1] for f in base.flags.values())
        and all(new.assignment[p] == old.assignment[p] for p, f in base.flags.items() if not f[1])
    )


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_relabeling_symmetries(seed):
    assert check_relabeling(random.Random(seed))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32))
def test_latency_invariant_under_relabeling(seed):
    rng = random.Random(seed)
    t = random_connected(rng, 6)
    vs = (Vsdn(0, rng.randrange(6), (0, 1, 2)), Vsdn(1, rng.randrange(6), (3, 4)))
    s = Scenario("t", 3, vs, 0, (2, 3))
    pl = Placement(tuple(rng.sample(range(6), 3)), {p: rng.randrange(3) for p in s.vcps()})
    perm = dict(enumerate(rng.sample(range(3), 3)))
    assert eval_avg_latency(t, s, pl.relabeled(perm)) == eval_avg_latency(t, s, pl)
