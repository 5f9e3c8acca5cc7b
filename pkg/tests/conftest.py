import random

import numpy as np
import pytest

from teichmix import pipeline as pl
from teichmix import tracknet as tn


@pytest.fixture(scope="session")
def theta():
    return pl.load_fixture("theta")


@pytest.fixture(scope="session")
def type22():
    return pl.load_fixture("genus2_type22")


@pytest.fixture(scope="session")
def type4():
    return pl.load_fixture("genus2_type4")


@pytest.fixture(scope="session")
def punct2():
    return pl.load_fixture("genus1_type2_punct2")


@pytest.fixture(scope="session")
def type13():
    return pl.load_fixture("genus2_type13")


@pytest.fixture(scope="session")
def corpus():
    return {name: pl.load_fixture(name) for name in pl.CORPUS}


@pytest.fixture(scope="session")
def flagship():
    """Coded alphabet of the flagship fixture (return length at most 3)."""
    return pl.coded_alphabet()


def valid_random_track(seed: int, switches: int = 8, genus: int = 2, punctures: int = 0):
    """A validated random track or ``None``."""
    t = tn.random_track(switches, genus, punctures, random.Random(seed))
    if t is None:
        return None
    try:
        tn.validate(t)
        tn.topological_type(t)
    except tn.TrackError:
        return None
    return t


def random_walk(track, steps: int, rng: np.random.Generator):
    """Random full numbered splits that stay recurrent; returns the tracks,
    the step matrices and the choice maps."""
    from teichmix import measurecone as mc

    tracks, mats, choices = [track], [], []
    cur = track
    for _ in range(steps):
        opts = tn.all_choices(cur)
        order = rng.permutation(len(opts))
        for i in order:
            new, E = tn.full_numbered_split(cur, opts[i])
            if mc.is_recurrent(new):
                break
        else:
            break
        tracks.append(new)
        mats.append(E)
        choices.append(opts[i])
        cur = new
    return tracks, mats, choices


GRAPH_FIXTURES = pl.CORPUS


@pytest.fixture(scope="session")
def depth6_graphs():
    """Depth-6 numbered splitting graphs of the corpus."""
    from teichmix import splitflow as sf

    return {name: sf.build_graph(pl.load_fixture(name), 6) for name in GRAPH_FIXTURES}


def positive_blocks(track, steps: int, seed: int):
    """Cut a random recurrent walk into consecutive minimal blocks whose
    carrying matrices are positive on vertex cycles.  Returns the composed
    matrices at block boundaries (starting with the identity) and the
    corresponding tracks."""
    from teichmix import splitflow as sf

    tracks, mats, _ = random_walk(track, steps, np.random.default_rng(seed))
    total = np.eye(track.num_branches, dtype=object)
    block = np.eye(track.num_branches, dtype=object)
    out_m, out_t = [total], [track]
    for E, t in zip(mats, tracks[1:]):
        block = block.dot(E.astype(object))
        if sf.positive_on_vertex_cycles(block, t):
            total = total.dot(block)
            out_m.append(total)
            out_t.append(t)
            block = np.eye(track.num_branches, dtype=object)
    return out_m, out_t


@pytest.fixture(scope="session")
def fixture_setup(flagship):
    return pl.fixture_flow(flagship, 0.25, 0)
