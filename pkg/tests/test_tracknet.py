import json
import random
from itertools import product

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from teichmix import measurecone as mc
from teichmix import pipeline as pl
from teichmix import tracknet as tn

from conftest import random_walk, valid_random_track


# ---------------------------------------------------------------- oracles
def mirror_face_cusps(doc: dict) -> list[int]:
    """Cusp counts of the faces computed from the raw file data with the
    mirror-image walk (clockwise successor), independently of the library."""
    slot_of = {}
    large = {}
    for s in doc["switches"]:
        large[s["id"]] = s["large_slot"]
        for k, h in enumerate(s["slots"]):
            slot_of[tuple(h)] = (s["id"], k)
    by_slot = {v: k for k, v in slot_of.items()}
    seen, out = set(), []
    for h0 in sorted(slot_of):
        if h0 in seen:
            continue
        h, cusps = h0, 0
        while h not in seen:
            seen.add(h)
            arrive = (h[0], 1 - h[1])
            sid, k = slot_of[arrive]
            k2 = (k - 1) % 3
            if large[sid] not in (k, k2):
                cusps += 1
            h = by_slot[(sid, k2)]
        out.append(cusps)
    return out


def brute_orientations(track: tn.TrainTrack) -> list[dict]:
    """All consistent orientations by exhaustive search over 2^p assignments."""
    ids = [b.id for b in track.branches]
    sols = []
    for signs in product((1, -1), repeat=len(ids)):
        d = dict(zip(ids, signs))

        def inward(h):
            return d[h[0]] == (1 if h[1] == 1 else -1)

        if all(inward(s.large) != inward(h) for s in track.switches for h in s.small):
            sols.append(d)
    return sols


def track_doc(track: tn.TrainTrack) -> dict:
    return json.loads(track.dumps())


# -------------------------------------------------------------- validate
def test_theta_has_forbidden_face(theta):
    with pytest.raises(tn.ForbiddenFace):
        tn.validate(theta)
    assert max(mirror_face_cusps(track_doc(theta))) <= 2


def test_type22_validates(type22):
    rep = tn.validate(type22)
    assert rep.passed and not rep.problems
    assert sorted(rep.cusps) == sorted(mirror_face_cusps(track_doc(type22)))
    assert rep.genus_from_euler == 2


@pytest.mark.parametrize("name", pl.CORPUS)
def test_corpus_validates_and_euler_matches(name):
    t = pl.load_fixture(name)
    rep = tn.validate(t)
    assert rep.passed
    chi = len(t.switches) - t.num_branches + len(mirror_face_cusps(track_doc(t)))
    assert chi == 2 - 2 * t.genus


def test_switch_without_large_slot_is_malformed(type22):
    doc = track_doc(type22)
    doc["switches"][0]["large_slot"] = None
    with pytest.raises(tn.MalformedTrack):
        tn.from_dict(doc)


def test_dangling_slot_is_malformed(type22):
    doc = track_doc(type22)
    doc["switches"][0]["slots"][1] = [999, 0]
    with pytest.raises(tn.MalformedTrack):
        tn.from_dict(doc)


def test_exceptional_surface(type22):
    doc = track_doc(type22)
    doc["surface"] = {"genus": 1, "punctures": 1}
    with pytest.raises(tn.ExceptionalSurface):
        tn.validate(tn.from_dict(doc))


def test_serialization_round_trip_is_byte_stable(corpus):
    for t in corpus.values():
        text = t.dumps()
        again = tn.loads(text)
        assert again.dumps() == text
        assert tn.canonical_form(again) == tn.canonical_form(t)


# ------------------------------------------------------ topological type
def test_type22_topological_type(type22):
    tt = tn.topological_type(type22)
    assert tt.disc_degrees == (2, 2) and tt.punctures == 0
    oracle = sorted(c - 2 for c in mirror_face_cusps(track_doc(type22)))
    assert tuple(oracle) == tt.disc_degrees


@pytest.mark.parametrize("name,degrees,punctures", [
    ("genus2_type22", (2, 2), 0), ("genus2_type4", (4,), 0),
    ("genus1_type2_punct2", (2,), 2), ("genus2_type13", (1, 3), 0)])
def test_corpus_types(name, degrees, punctures):
    t = pl.load_fixture(name)
    tt = tn.topological_type(t)
    assert tt.disc_degrees == degrees and tt.punctures == punctures
    assert sum(tt.disc_degrees) == 4 * t.genus - 4 + t.punctures


def test_type_sum_mismatch(type13):
    doc = track_doc(type13)
    doc["surface"]["genus"] = 3
    with pytest.raises(tn.TypeSumMismatch):
        tn.topological_type(tn.from_dict(doc))


def test_type_sum_mismatch_with_undeclared_punctures(punct2):
    doc = track_doc(punct2)
    doc["surface"] = {"genus": 2, "punctures": 0}
    with pytest.raises(tn.TypeSumMismatch):
        tn.topological_type(tn.from_dict(doc))


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.filter_too_much])
@given(st.integers(0, 10_000))
def test_orientable_tracks_have_even_degrees(seed):
    t = valid_random_track(seed)
    assume(t is not None)
    tt = tn.topological_type(t)
    assert sum(tt.disc_degrees) == 4 * t.genus - 4 + t.punctures
    if tn.is_orientable(t):
        assert tt.punctures == 0
        assert all(m % 2 == 0 for m in tt.disc_degrees)


# ----------------------------------------------------------- orientation
def test_type22_orientation_is_explicit_and_consistent(type22):
    assert tn.is_orientable(type22)
    d = tn.orientation(type22)
    assert d in brute_orientations(type22)


def test_type13_is_not_orientable(type13):
    assert not tn.is_orientable(type13)
    assert brute_orientations(type13) == []


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.filter_too_much])
@given(st.integers(0, 10_000))
def test_orientability_matches_brute_force(seed):
    t = valid_random_track(seed, switches=6)
    assume(t is not None)
    assert tn.is_orientable(t) == bool(brute_orientations(t))


def test_single_branch_input_rejected():
    doc = {"surface": {"genus": 2, "punctures": 0},
           "switches": [{"id": 0, "slots": [[0, 0], [0, 1], [1, 0]], "large_slot": 0}],
           "branches": [{"id": 0, "number": 1}]}
    with pytest.raises(tn.MalformedTrack):
        tn.validate(tn.from_dict(doc))


# ---------------------------------------------------------- large branches
def test_type22_has_large_branches(type22):
    large = tn.large_branches(type22)
    assert large
    by_hand = [b.id for b in type22.branches
               if all(type22.switch(s).large_slot == k for s, k in b.ends)]
    assert sorted(large) == sorted(by_hand)


def test_all_mixed_track_has_no_large_branch():
    for seed in range(200):
        t = tn.random_track(6, 2, 0, random.Random(seed))
        if all(sum(t.is_large_half((b.id, e)) for e in (0, 1)) <= 1 for b in t.branches):
            assert tn.large_branches(t) == []
            return
    pytest.fail("no all-mixed track among the random tracks")


@settings(max_examples=30, deadline=None)
@given(st.permutations(list(range(1, 13))))
def test_large_branches_equivariant_under_renumbering(perm):
    t = pl.load_fixture("genus2_type22")
    p = {n: perm[n - 1] for n in range(1, 13)}
    t2 = tn.relabel_numbers(t, p)
    nums = {p[t.branch(b).number] for b in tn.large_branches(t)}
    assert {t2.branch(b).number for b in tn.large_branches(t2)} == nums


# ------------------------------------------------------------------ split
def test_split_matrix_is_linear_and_sends_zero_to_zero(type22):
    e = tn.large_branches(type22)[0]
    _, E = tn.split(type22, tn.SplitMove(e, tn.RIGHT))
    assert not np.any(E @ np.zeros(type22.num_branches))


def test_right_split_maps_cone_into_cone(type22):
    e = tn.large_branches(type22)[0]
    new, E = tn.split(type22, tn.SplitMove(e, tn.RIGHT))
    rng = np.random.default_rng(1)
    R = mc.vertex_cycle_matrix(new)
    mu = rng.dirichlet(np.ones(R.shape[1]), 1000) @ R.T
    assert np.abs(mu @ new.switch_matrix.T).max() < 1e-12
    img = mu @ E.T
    assert (img >= 0).all()
    assert np.abs(img @ type22.switch_matrix.T).max() < 1e-9
    assert (img.sum(axis=1) >= mu.sum(axis=1) - 1e-12).all()


def test_split_at_mixed_branch_rejected(type22):
    mixed = next(b.id for b in type22.branches if b.id not in tn.large_branches(type22))
    with pytest.raises(tn.NotLargeBranch):
        tn.split(type22, tn.SplitMove(mixed, tn.LEFT))


def test_full_split_choice_count(corpus):
    for t in corpus.values():
        assert len(tn.all_choices(t)) == 2 ** len(tn.large_branches(t))
        labels = {tn.choice_label(t, c) for c in tn.all_choices(t)}
        assert len(labels) == len(tn.all_choices(t))


def test_full_split_is_product_in_ascending_number_order(type4):
    for ch in tn.all_choices(type4):
        new, M = tn.full_numbered_split(type4, ch)
        cur, P = type4, np.eye(type4.num_branches, dtype=np.int64)
        for e in sorted(ch, key=lambda b: type4.branch(b).number):
            cur, E = tn.split(cur, tn.SplitMove(e, ch[e]))
            P = P @ E
        assert np.array_equal(M, P)
        assert tn.canonical_form(cur) == tn.canonical_form(new)


def test_full_split_all_right_is_admissible(type22):
    ch = {e: tn.RIGHT for e in tn.large_branches(type22)}
    new, _ = tn.full_numbered_split(type22, ch)
    assert mc.is_recurrent(new)
    assert mc.is_recurrent_exact(new)


def test_full_split_errors(type22):
    large = tn.large_branches(type22)
    with pytest.raises(tn.IncompleteChoices):
        tn.full_numbered_split(type22, {large[0]: tn.RIGHT})
    t = tn.random_track(6, 2, 0, random.Random(0))
    with pytest.raises(tn.NoLargeBranches):
        tn.full_numbered_split(t, {})


# ------------------------------------------------------------- invariants
@settings(max_examples=20, deadline=None)
@given(st.sampled_from(pl.CORPUS), st.integers(0, 2 ** 32 - 1))
def test_split_invariants_along_random_walks(name, seed):
    t = pl.load_fixture(name)
    tt, orient = tn.topological_type(t), tn.is_orientable(t)
    tracks, mats, _ = random_walk(t, 4, np.random.default_rng(seed))
    for prev, new, E in zip(tracks, tracks[1:], mats):
        rep = tn.validate(new)
        assert rep.passed
        assert tn.topological_type(new) == tt
        assert tn.is_orientable(new) == orient
        R = np.array(mc.extreme_rays(new.switch_matrix), dtype=np.int64).T
        img = E @ R
        assert (img >= 0).all() and not np.any(prev.switch_matrix @ img)


@settings(max_examples=20, deadline=None)
@given(st.permutations(list(range(1, 10))), st.integers(0, 7))
def test_relabeling_conjugates_split_matrices(perm, which):
    t = pl.load_fixture("genus2_type4")
    p = {n: perm[n - 1] for n in range(1, 10)}
    t2 = tn.relabel_numbers(t, p)
    ch = tn.all_choices(t)[which]
    P = np.zeros((9, 9), dtype=np.int64)
    for n in range(1, 10):
        P[p[n] - 1, n - 1] = 1
    # full splits compose in number order, so compare the elementary splits
    for e in tn.large_branches(t):
        _, F = tn.split(t, tn.SplitMove(e, ch[e]))
        _, F2 = tn.split(t2, tn.SplitMove(e, ch[e]))
        assert np.array_equal(F2, P @ F @ P.T)
