"""Two-branch LSTM variational autoencoder over walk sequences.

One branch encodes node-feature sequences, an optional second branch the
edge-direction sequences ("semantic" models drop it).  Per branch: encoder
LSTM -> dense mu/logvar heads -> reparameterized z -> decoder LSTM fed the
latent repeated at every step -> per-step linear output head.  The two
branch losses (MSE + KL each) are summed and batch-averaged.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DimMismatch,
    EmptySelection,
    MalformedInput,
    NonFiniteGradient,
    NonFiniteInput,
    NonFiniteLoss,
)
from .graphs import NormStats, node_feature_dim, uses_edge_branch
from .neural import (
    AdamState,
    DenseParams,
    GradCheckReport,
    LstmParams,
    adam_init,
    adam_step,
    dense_backward,
    dense_forward,
    grad_check,
    init_dense,
    init_lstm,
    kl_backward,
    kl_loss,
    lstm_backward,
    lstm_forward,
    mse_backward,
    mse_loss,
)
from .walks import SequencePair, WalkConfig

CHECKPOINT_FORMAT = "fgvae-v1"
EDGE_INPUT_DIM = 4
DEFAULT_HIDDEN = 256
DEFAULT_LATENT = 16


@dataclass
class BranchParams:
    enc: LstmParams        # input_dim -> hidden
    mu_head: DenseParams   # hidden -> latent
    logvar_head: DenseParams
    dec: LstmParams        # latent -> hidden
    out_head: DenseParams  # hidden -> input_dim, applied per step

    @property
    def input_dim(self) -> int:
        return self.enc.input_dim

    @property
    def latent_dim(self) -> int:
        return self.mu_head.out_dim


def init_branch(input_dim: int, hidden: int, latent: int, rng) -> BranchParams:
    return BranchParams(
        enc=init_lstm(input_dim, hidden, rng),
        mu_head=init_dense(hidden, latent, rng),
        logvar_head=init_dense(hidden, latent, rng),
        dec=init_lstm(latent, hidden, rng),
        out_head=init_dense(hidden, input_dim, rng),
    )


@dataclass
class ModelParams:
    feature_set: str
    hidden: int
    latent: int
    node_branch: BranchParams
    edge_branch: BranchParams | None
    norm_stats: NormStats
    walk: WalkConfig
    init_seed: int
    train_seed: int | None = None
    trained_epochs: int = 0

    @property
    def node_dim(self) -> int:
        return node_feature_dim(self.feature_set)

    @property
    def embed_dim(self) -> int:
        return self.latent if self.edge_branch is None else 2 * self.latent


def init_model(feature_set: str, norm_stats: NormStats, walk: WalkConfig,
               hidden: int = DEFAULT_HIDDEN, latent: int = DEFAULT_LATENT,
               seed: int = 0) -> ModelParams:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    node_branch = init_branch(node_feature_dim(feature_set), hidden, latent, rng)
    edge_branch = None
    if uses_edge_branch(feature_set):
        if walk.length < 2:
            raise DimMismatch("edge branch needs walk length >= 2")
        edge_branch = init_branch(EDGE_INPUT_DIM, hidden, latent, rng)
    return ModelParams(
        feature_set=feature_set,
        hidden=hidden,
        latent=latent,
        node_branch=node_branch,
        edge_branch=edge_branch,
        norm_stats=norm_stats,
        walk=walk,
        init_seed=seed,
    )


_BRANCH_KEYS = (
    ("enc", ("wx", "wh", "b")),
    ("mu", ("w", "b")),
    ("logvar", ("w", "b")),
    ("dec", ("wx", "wh", "b")),
    ("out", ("w", "b")),
)


def _branch_to_dict(prefix: str, br: BranchParams) -> dict:
    parts = {"enc": br.enc, "mu": br.mu_head, "logvar": br.logvar_head,
             "dec": br.dec, "out": br.out_head}
    out = {}
    for comp, fields in _BRANCH_KEYS:
        obj = parts[comp]
        for f in fields:
            out[f"{prefix}.{comp}.{f}"] = getattr(obj, f)
    return out


def _branch_from_dict(prefix: str, d: dict) -> BranchParams:
    def get(comp, f):
        return d[f"{prefix}.{comp}.{f}"]

    return BranchParams(
        enc=LstmParams(wx=get("enc", "wx"), wh=get("enc", "wh"), b=get("enc", "b")),
        mu_head=DenseParams(w=get("mu", "w"), b=get("mu", "b")),
        logvar_head=DenseParams(w=get("logvar", "w"), b=get("logvar", "b")),
        dec=LstmParams(wx=get("dec", "wx"), wh=get("dec", "wh"), b=get("dec", "b")),
        out_head=DenseParams(w=get("out", "w"), b=get("out", "b")),
    )


def params_to_dict(m: ModelParams) -> dict:
    out = _branch_to_dict("node", m.node_branch)
    if m.edge_branch is not None:
        out.update(_branch_to_dict("edge", m.edge_branch))
    return out


def model_with_params(m: ModelParams, d: dict) -> ModelParams:
    node = _branch_from_dict("node", d)
    edge = _branch_from_dict("edge", d) if m.edge_branch is not None else None
    return replace(m, node_branch=node, edge_branch=edge)


def _check_pair_dims(m: ModelParams, node_seq, edge_seq) -> None:
    if node_seq.shape[-1] != m.node_dim:
        raise DimMismatch(
            f"model expects {m.node_dim}-dim node rows, got {node_seq.shape[-1]}")
    if m.edge_branch is not None and edge_seq is None:
        raise DimMismatch("model has an edge branch but no edge sequence given")


def _branch_encode(br: BranchParams, seq: np.ndarray):
    """seq (B, L, D) -> (mu, logvar, caches)."""
    h_seq, _, cache_enc = lstm_forward(br.enc, seq)
    h_last = h_seq[:, -1]
    mu, cache_mu = dense_forward(br.mu_head, h_last)
    logvar, cache_lv = dense_forward(br.logvar_head, h_last)
    caches = {"enc": cache_enc, "mu": cache_mu, "logvar": cache_lv,
              "steps": seq.shape[1]}
    return mu, logvar, caches


def _branch_decode(br: BranchParams, z: np.ndarray, steps: int):
    """z (B, latent) -> (y (B, steps, D), caches)."""
    z_rep = np.repeat(z[:, None, :], steps, axis=1)
    h_seq, _, cache_dec = lstm_forward(br.dec, z_rep)
    y, cache_out = dense_forward(br.out_head, h_seq)
    return y, {"dec": cache_dec, "out": cache_out}


def encode(m: ModelParams, pair: SequencePair):
    """-> (mu_n, logvar_n, mu_e, logvar_e); edge outputs None for node-only models."""
    _check_pair_dims(m, pair.node_seq, pair.edge_seq)
    mu_n, lv_n, _ = _branch_encode(m.node_branch, pair.node_seq[None])
    if m.edge_branch is None:
        return mu_n[0], lv_n[0], None, None
    mu_e, lv_e, _ = _branch_encode(m.edge_branch, pair.edge_seq[None])
    return mu_n[0], lv_n[0], mu_e[0], lv_e[0]


def decode(m: ModelParams, z_n: np.ndarray, z_e, steps: int):
    """-> (node outputs (steps, node_dim), edge outputs (steps-1, 4) or None)."""
    if z_n.shape[-1] != m.latent:
        raise DimMismatch(f"z_n must have {m.latent} dims, got {z_n.shape[-1]}")
    y_n, _ = _branch_decode(m.node_branch, z_n[None], steps)
    if m.edge_branch is None:
        return y_n[0], None
    if z_e is None or z_e.shape[-1] != m.latent:
        raise DimMismatch("edge latent missing or wrong size")
    y_e, _ = _branch_decode(m.edge_branch, z_e[None], steps - 1)
    return y_n[0], y_e[0]


def _branch_loss_grads(br: BranchParams, seq: np.ndarray, eps: np.ndarray):
    """Forward + backward of one branch on a batch.

    Returns (recon, kl, grads-by-component-name), both averaged over the
    batch.  Per pair, recon is the squared reconstruction error summed over
    every sequence element and kl is the prior divergence averaged over
    latent dims; the per-dim averaging keeps the prior penalty small against
    the summed reconstruction term, which is what lets the latent carry
    enough to reconstruct with (a heavier penalty empirically pins the
    decoder at the corpus marginal).
    """
    bsz = seq.shape[0]
    mu, logvar, enc_caches = _branch_encode(br, seq)
    sigma = np.exp(0.5 * logvar)
    z = mu + sigma * eps
    y, dec_caches = _branch_decode(br, z, seq.shape[1])

    elems = float(seq.shape[1] * seq.shape[2])
    kl_norm = float(bsz * mu.shape[1])
    recon = mse_loss(y, seq) * elems
    kl = kl_loss(mu, logvar) / kl_norm

    dy = mse_backward(y, seq) * elems
    g_out, dh_dec = dense_backward(dec_caches["out"], dy)
    g_dec, dz_rep, _, _ = lstm_backward(dec_caches["dec"], dh_dec)
    dz = dz_rep.sum(axis=1)

    dmu_kl, dlv_kl = kl_backward(mu, logvar)
    dmu = dz + dmu_kl / kl_norm
    dlogvar = dz * eps * 0.5 * sigma + dlv_kl / kl_norm

    g_mu, dh_mu = dense_backward(enc_caches["mu"], dmu)
    g_lv, dh_lv = dense_backward(enc_caches["logvar"], dlogvar)
    dh_seq = np.zeros((seq.shape[0], seq.shape[1], br.enc.hidden_dim))
    dh_seq[:, -1] = dh_mu + dh_lv
    g_enc, _, _, _ = lstm_backward(enc_caches["enc"], dh_seq)

    grads = {}
    for comp, g in (("enc", g_enc), ("mu", g_mu), ("logvar", g_lv),
                    ("dec", g_dec), ("out", g_out)):
        for f, arr in g.items():
            grads[f"{comp}.{f}"] = arr
    return recon, kl, grads


def loss_and_grads(m: ModelParams, s_n: np.ndarray, s_e, eps_n: np.ndarray, eps_e):
    """-> (total, components dict, grads dict keyed like params_to_dict)."""
    _check_pair_dims(m, s_n, s_e)
    rec_n, kl_n, g_node = _branch_loss_grads(m.node_branch, s_n, eps_n)
    comps = {"recon_node": rec_n, "kl_node": kl_n}
    grads = {f"node.{k}": v for k, v in g_node.items()}
    total = rec_n + kl_n
    if m.edge_branch is not None:
        rec_e, kl_e, g_edge = _branch_loss_grads(m.edge_branch, s_e, eps_e)
        comps["recon_edge"] = rec_e
        comps["kl_edge"] = kl_e
        grads.update({f"edge.{k}": v for k, v in g_edge.items()})
        total += rec_e + kl_e
    if not np.isfinite(total):
        raise NonFiniteLoss(f"loss diverged: {total}")
    return total, comps, grads


def _noise_rng(seed: int):
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(1,))
    return np.random.Generator(np.random.PCG64(seq))


def loss(m: ModelParams, pairs, noise_seed: int):
    """Batch loss on a list of SequencePairs.  -> (total, components)."""
    if not pairs:
        raise EmptySelection("loss needs a non-empty batch")
    s_n, s_e = stack_pairs(m, pairs)
    rng = _noise_rng(noise_seed)
    eps_n = rng.standard_normal((len(pairs), m.latent))
    eps_e = rng.standard_normal((len(pairs), m.latent)) if m.edge_branch is not None else None
    total, comps, _ = loss_and_grads(m, s_n, s_e, eps_n, eps_e)
    return total, comps


def stack_pairs(m: ModelParams, pairs):
    """SequencePairs -> (S_n (N, L, D), S_e (N, L-1, 4) or None)."""
    s_n = np.stack([p.node_seq for p in pairs])
    s_e = None
    if m.edge_branch is not None:
        if s_n.shape[1] < 2:
            raise DimMismatch("edge branch needs walk length >= 2")
        s_e = np.stack([p.edge_seq for p in pairs])
    _check_pair_dims(m, s_n, s_e)
    return s_n, s_e


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    lr: float = 0.001
    batch_size: int = 64
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")

    def to_json(self) -> dict:
        return {"epochs": self.epochs, "lr": self.lr,
                "batch_size": self.batch_size, "seed": self.seed,
                "shuffle": self.shuffle}

    @staticmethod
    def from_json(doc: dict) -> "TrainConfig":
        return TrainConfig(
            epochs=int(doc.get("epochs", 50)),
            lr=float(doc.get("lr", 0.001)),
            batch_size=int(doc.get("batch_size", 64)),
            seed=int(doc.get("seed", 0)),
            shuffle=bool(doc.get("shuffle", True)),
        )


@dataclass
class TrainResult:
    model: ModelParams
    history: list  # per-epoch dicts: total + per-component means


def training_pairs_of(walksets) -> list[SequencePair]:
    """All non-proxy pairs in canonical (graph, run, start) order."""
    pairs = []
    for ws in walksets:
        pairs.extend(ws.training_pairs())
    return pairs


def train(m: ModelParams, walksets, cfg: TrainConfig,
          progress=None) -> TrainResult:
    """Adam over shuffled minibatches; proxy runs are never trained on.

    Deterministic for a fixed cfg.seed.  On divergence raises NonFiniteLoss
    with .last_good set to the params at the previous epoch boundary.
    """
    pairs = training_pairs_of(walksets)
    if not pairs:
        raise EmptySelection("no training pairs")
    s_n_all, s_e_all = stack_pairs(m, pairs)
    n = len(pairs)

    params = {k: v.copy() for k, v in params_to_dict(m).items()}
    adam = adam_init(params)
    shuffle_rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0,))))
    noise_rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1,))))

    history = []
    model = replace(model_with_params(m, params), train_seed=cfg.seed)
    last_good = model
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n) if cfg.shuffle else np.arange(n)
        sums = {}
        total_sum = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            s_n = s_n_all[idx]
            s_e = s_e_all[idx] if s_e_all is not None else None
            eps_n = noise_rng.standard_normal((len(idx), m.latent))
            eps_e = (noise_rng.standard_normal((len(idx), m.latent))
                     if m.edge_branch is not None else None)
            model_now = model_with_params(m, params)
            try:
                total, comps, grads = loss_and_grads(model_now, s_n, s_e, eps_n, eps_e)
                params, adam = adam_step(params, grads, adam, lr=cfg.lr)
            except (NonFiniteLoss, NonFiniteInput, NonFiniteGradient) as err:
                # divergence can first surface in the forward pass, the loss,
                # or the optimizer; report all of them the same way
                diverged = NonFiniteLoss(
                    f"training diverged in epoch {epoch + 1}: {err}")
                diverged.last_good = last_good
                diverged.history = history
                raise diverged from err
            w = len(idx)
            total_sum += total * w
            for k, v in comps.items():
                sums[k] = sums.get(k, 0.0) + v * w
        entry = {"epoch": epoch + 1, "total": total_sum / n}
        entry.update({k: v / n for k, v in sums.items()})
        history.append(entry)
        last_good = replace(model_with_params(m, params),
                            train_seed=cfg.seed,
                            trained_epochs=m.trained_epochs + epoch + 1)
        if progress is not None:
            progress(entry)
    final = replace(model_with_params(m, params), train_seed=cfg.seed,
                    trained_epochs=m.trained_epochs + cfg.epochs)
    return TrainResult(model=final, history=history)


def embed_pairs(m: ModelParams, pairs) -> np.ndarray:
    """Deterministic embeddings, one row per pair: mu_n or [mu_n | mu_e]."""
    if not pairs:
        raise EmptySelection("no pairs to embed")
    s_n, s_e = stack_pairs(m, pairs)
    mu_n, _, _ = _branch_encode(m.node_branch, s_n)
    if m.edge_branch is None:
        return mu_n
    mu_e, _, _ = _branch_encode(m.edge_branch, s_e)
    return np.concatenate([mu_n, mu_e], axis=1)


def embed_sequence(m: ModelParams, pair: SequencePair) -> np.ndarray:
    return embed_pairs(m, [pair])[0]


def embed_graph(m: ModelParams, ws, runs=None) -> np.ndarray:
    """Mean of sequence embeddings over the selected runs (canonical
    (run, start) order fixes the summation order)."""
    if runs is None:
        runs = range(ws.proxy_run)
    pairs = []
    for r in runs:
        pairs.extend(ws.runs[r])
    if not pairs:
        raise EmptySelection(f"graph {ws.graph_id!r}: empty run selection")
    return embed_pairs(m, pairs).mean(axis=0)


def save_model(path, m: ModelParams, history=None) -> str:
    """Write the versioned checkpoint; returns its content hash."""
    params = params_to_dict(m)
    names = sorted(params)
    header = {
        "format": CHECKPOINT_FORMAT,
        "feature_set": m.feature_set,
        "hidden": m.hidden,
        "latent": m.latent,
        "walk": m.walk.to_json(),
        "norm_stats": m.norm_stats.to_json(),
        "seeds": {"init": m.init_seed, "train": m.train_seed},
        "training": {"epochs": m.trained_epochs,
                     "history": history if history is not None else []},
        "params": [{"name": k, "shape": list(params[k].shape)} for k in names],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [blob, b"\n"]
    for k in names:
        chunks.append(np.ascontiguousarray(params[k], dtype="<f8").tobytes())
    data = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def load_model(path, expect_feature_set=None):
    """-> (ModelParams, header dict, content hash)."""
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.find(b"\n")
    if nl < 0:
        raise MalformedInput("checkpoint has no header line")
    try:
        header = json.loads(data[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise MalformedInput(f"unreadable checkpoint header: {err}") from None
    if header.get("format") != CHECKPOINT_FORMAT:
        raise MalformedInput(f"unsupported checkpoint format {header.get('format')!r}")
    feature_set = header["feature_set"]
    if expect_feature_set is not None and feature_set != expect_feature_set:
        raise DimMismatch(
            f"checkpoint is {feature_set!r}, expected {expect_feature_set!r}")
    params = {}
    off = nl + 1
    for rec in header["params"]:
        shape = tuple(rec["shape"])
        count = int(np.prod(shape)) if shape else 1
        if off + count * 8 > len(data):
            raise MalformedInput("checkpoint parameter block is truncated")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off)
        params[rec["name"]] = arr.reshape(shape).copy()
        off += count * 8
    if off != len(data):
        raise MalformedInput("checkpoint has trailing or missing parameter bytes")

    model = ModelParams(
        feature_set=feature_set,
        hidden=int(header["hidden"]),
        latent=int(header["latent"]),
        node_branch=_branch_from_dict("node", params),
        edge_branch=(_branch_from_dict("edge", params)
                     if uses_edge_branch(feature_set) else None),
        norm_stats=NormStats.from_json(header["norm_stats"]),
        walk=WalkConfig.from_json(header["walk"]),
        init_seed=int(header["seeds"]["init"]),
        train_seed=header["seeds"]["train"],
        trained_epochs=int(header["training"]["epochs"]),
    )
    return model, header, hashlib.sha256(data).hexdigest()


def gradcheck_batch(m: ModelParams, s_n: np.ndarray, s_e,
                    noise_seed: int = 0, h: float = 1e-5,
                    tolerance: float = 1e-4, max_coords=None) -> GradCheckReport:
    """Finite-difference check of the full two-branch loss on one batch.

    The reparameterization noise is drawn once up front so the loss is a
    deterministic function of the parameters.
    """
    rng = _noise_rng(noise_seed)
    bsz = s_n.shape[0]
    eps_n = rng.standard_normal((bsz, m.latent))
    eps_e = (rng.standard_normal((bsz, m.latent))
             if m.edge_branch is not None else None)

    def closure(params):
        total, _, grads = loss_and_grads(model_with_params(m, params),
                                         s_n, s_e, eps_n, eps_e)
        return total, grads

    sub_rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=noise_seed, spawn_key=(2,))))
    return grad_check(closure, params_to_dict(m), h=h, tolerance=tolerance,
                      max_coords=max_coords, rng=sub_rng)


def gradcheck_toy(seed: int, tolerance: float = 1e-4, hidden: int = 6,
                  latent: int = 3, length: int = 5) -> GradCheckReport:
    """Small two-branch configuration on a random padded batch (3-6
    sequences); every parameter coordinate is checked."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    stats = NormStats(area_min=0.0, area_max=1.0,
                      behavior_min=(0.0,) * 9, behavior_max=(1.0,) * 9)
    m = init_model("full", stats, WalkConfig(length=length, seed=seed),
                   hidden=hidden, latent=latent, seed=seed)
    bsz = int(rng.integers(3, 7))
    s_n = rng.random((bsz, length, m.node_dim))
    s_e = rng.random((bsz, length - 1, EDGE_INPUT_DIM))
    for i in range(bsz):  # zero-pad some tails like short walks
        true_len = int(rng.integers(2, length + 1))
        s_n[i, true_len:] = 0.0
        s_e[i, max(true_len - 1, 0):] = 0.0
    return gradcheck_batch(m, s_n, s_e, noise_seed=seed, h=1e-5,
                           tolerance=tolerance)
