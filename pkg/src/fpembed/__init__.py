"""Floorplan graph embeddings: evacuation-aware attributed graphs, random
walks, a two-branch sequence VAE, and retrieval/clustering tooling on top of
the learned vectors.
"""

from .errors import FpembedError
from .floorplan import (
    DIRECTIONS,
    ROOM_TYPES,
    CorpusProfile,
    Door,
    Floorplan,
    Room,
    parse_floorplan,
    read_corpus,
    serialize_floorplan,
    synth_corpus,
    validate_floorplan,
    write_corpus,
)
from .simulate import (
    BEHAVIOR_FEATURES,
    RoomBehavior,
    SimConfig,
    simulate,
)
from .graphs import (
    FEATURE_SETS,
    AttributedGraph,
    NormStats,
    build_graph,
    fit_norm_stats,
    read_graphs,
    write_graphs,
)
from .walks import (
    SequencePair,
    WalkConfig,
    WalkSet,
    generate_corpus_walks,
    generate_walkset,
    read_walks,
    write_walks,
)
from .vae import (
    ModelParams,
    TrainConfig,
    TrainResult,
    embed_graph,
    embed_sequence,
    init_model,
    load_model,
    save_model,
    train,
)
from .index import (
    EmbeddingRecord,
    EmbeddingStore,
    cluster_stats,
    dbscan,
    knn,
    project_2d,
    proxy_rank_eval,
    read_embeddings,
    write_embeddings,
)
from .generate import (
    DecodedSequence,
    GeneratedPlan,
    SpliceResult,
    decode_mean,
    generate_from_graph,
    homotopy,
    sample_posterior,
    splice_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "FpembedError",
    "ROOM_TYPES",
    "DIRECTIONS",
    "Room",
    "Door",
    "Floorplan",
    "CorpusProfile",
    "parse_floorplan",
    "serialize_floorplan",
    "validate_floorplan",
    "read_corpus",
    "write_corpus",
    "synth_corpus",
    "BEHAVIOR_FEATURES",
    "RoomBehavior",
    "SimConfig",
    "simulate",
    "FEATURE_SETS",
    "NormStats",
    "AttributedGraph",
    "build_graph",
    "fit_norm_stats",
    "read_graphs",
    "write_graphs",
    "WalkConfig",
    "SequencePair",
    "WalkSet",
    "generate_walkset",
    "generate_corpus_walks",
    "read_walks",
    "write_walks",
    "ModelParams",
    "TrainConfig",
    "TrainResult",
    "init_model",
    "train",
    "embed_graph",
    "embed_sequence",
    "save_model",
    "load_model",
    "EmbeddingRecord",
    "EmbeddingStore",
    "knn",
    "proxy_rank_eval",
    "dbscan",
    "cluster_stats",
    "project_2d",
    "read_embeddings",
    "write_embeddings",
    "DecodedSequence",
    "GeneratedPlan",
    "SpliceResult",
    "sample_posterior",
    "decode_mean",
    "homotopy",
    "generate_from_graph",
    "splice_sequence",
]
