import numpy as np
import pytest

from fpembed import graphs as graphs_mod
from fpembed import vae as vae_mod
from fpembed import walks as walks_mod
from fpembed.floorplan import CorpusProfile, synth_corpus
from fpembed.simulate import SimConfig, simulate


@pytest.fixture(scope="session")
def tiny_corpus():
    profile = CorpusProfile(name="tiny", room_count=(3, 5))
    return synth_corpus(6, 3, profile)


@pytest.fixture(scope="session")
def tiny_behavior(tiny_corpus):
    cfg = SimConfig(seed=3)
    return {fp.id: simulate(fp, cfg) for fp in tiny_corpus}


@pytest.fixture(scope="session")
def tiny_stats(tiny_corpus, tiny_behavior):
    return graphs_mod.fit_norm_stats(
        [(fp, tiny_behavior[fp.id]) for fp in tiny_corpus])


@pytest.fixture(scope="session")
def tiny_graphs(tiny_corpus, tiny_behavior, tiny_stats):
    return [
        graphs_mod.build_graph(fp, tiny_behavior[fp.id], tiny_stats, "full")
        for fp in tiny_corpus
    ]


@pytest.fixture(scope="session")
def tiny_walk_cfg():
    return walks_mod.WalkConfig(kind="rw2", length=5, runs=4, seed=3)


@pytest.fixture(scope="session")
def tiny_walksets(tiny_graphs, tiny_walk_cfg):
    return walks_mod.generate_corpus_walks(tiny_graphs, tiny_walk_cfg)


@pytest.fixture(scope="session")
def tiny_model(tiny_stats, tiny_walk_cfg, tiny_walksets):
    m = vae_mod.init_model("full", tiny_stats, tiny_walk_cfg,
                           hidden=16, latent=4, seed=3)
    cfg = vae_mod.TrainConfig(epochs=2, batch_size=16, seed=3)
    return vae_mod.train(m, tiny_walksets, cfg).model


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(42)))
