"""Finite-difference gradient suites for the CLI and the acceptance tests.

Each suite builds small random inputs, runs the analytic backward pass, and
compares against central differences. Suites are seeded and deterministic.
"""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from . import autodiff as ad
from .audio import AudioBottleneck
from .gradcheck import GradReport, check_gradients
from .gating import ClassifierHead, FusionHead, RelevanceNetwork, dual_loss, LossConfig
from .model import ActionModel, ModelConfig
from .nn import LayerNorm, Linear, Mlp, MultiHeadSelfAttention, Parameter
from .video import ClipSpec, EncoderConfig, SpatialBlock, SpatioTemporalBlock, StreamEncoder, StreamFusion

TINY_MODEL = ModelConfig(n_classes=3, t=2, h=16, w=16, p=8, d=8, heads=2,
                         blocks=2, num_st=1, mlp_ratio=2.0, d_audio=6, seed=7)


def _param(rng, shape, name) -> Parameter:
    p = Parameter(rng.normal(0.0, 0.7, size=shape))
    p.name = name
    return p


def _randomize(module, rng: np.random.Generator, scale: float = 0.35) -> None:
    """Jitter every parameter away from its init so no ReLU pre-activation
    sits on a kink where central differences are undefined."""
    for _, p in module.named_parameters():
        p.tensor.data = p.tensor.data + rng.normal(0.0, scale, size=p.tensor.data.shape)


def _op_suites(rng: np.random.Generator) -> Iterator[tuple[str, Callable, list[Parameter]]]:
    """(name, forward, params) triples covering every differentiable op."""
    a = _param(rng, (3, 4), "a")
    b = _param(rng, (3, 4), "b")
    yield "add", lambda: (a.tensor + b.tensor).sum(), [a, b]
    yield "mul", lambda: (a.tensor * b.tensor).sum(), [a, b]
    yield "mul_scalar", lambda: (a.tensor * 1.7).sum(), [a]
    yield "neg_sub", lambda: (a.tensor - b.tensor).mean(), [a, b]

    bias = _param(rng, (4,), "bias")
    yield "add_broadcast", lambda: (a.tensor + bias.tensor).sum(), [a, bias]

    m1 = _param(rng, (3, 4), "m1")
    m2 = _param(rng, (4, 2), "m2")
    yield "matmul", lambda: (m1.tensor @ m2.tensor).sum(), [m1, m2]
    mb = _param(rng, (2, 3, 4), "mb")
    yield "matmul_batched", lambda: (mb.tensor @ m2.tensor).sum(), [mb, m2]

    w = _param(rng, (4, 3), "w")
    c = _param(rng, (3,), "c")
    yield "linear", lambda: ad.linear(a.tensor, w.tensor, c.tensor).sum(), [a, w, c]

    x = _param(rng, (2, 5), "x")
    yield "relu", lambda: x.tensor.relu().sum(), [x]
    yield "sigmoid", lambda: x.tensor.sigmoid().sum(), [x]

    probe = _param(rng, (5,), "probe")
    yield "softmax", lambda: (x.tensor.softmax(-1) * probe.tensor).sum(), [x, probe]
    yield "layer_norm", lambda: (x.tensor.layer_norm(-1) * probe.tensor).sum(), [x, probe]
    yield "mean_axis", lambda: (x.tensor.mean(axis=0) * probe.tensor).sum(), [x, probe]
    yield "sum_axis", lambda: (x.tensor.sum(axis=1)).sigmoid().sum(), [x]

    c1 = _param(rng, (2, 3), "c1")
    c2 = _param(rng, (2, 2), "c2")
    yield "concat", lambda: ad.concat([c1.tensor, c2.tensor], axis=1).sigmoid().sum(), [c1, c2]
    s = _param(rng, (2, 5), "s")
    yield "split", lambda: ad.split(s.tensor, [2, 3], axis=1)[1].sigmoid().sum(), [s]
    yield "reshape_transpose", lambda: (
        s.tensor.reshape(5, 2).transpose((1, 0)).sigmoid().sum()), [s]
    e = _param(rng, (1, 4), "e")
    yield "expand", lambda: ad.expand(e.tensor, (3, 4)).sigmoid().sum(), [e]

    logits = _param(rng, (3, 4), "logits")
    labels = np.array([0, 3, 1])
    yield "cross_entropy", lambda: ad.cross_entropy(logits.tensor, labels).mean(), [logits]
    raw = _param(rng, (4,), "raw")
    targets = np.array([0.0, 0.25, 0.75, 1.0])
    yield "binary_cross_entropy", lambda: ad.binary_cross_entropy(
        raw.tensor.sigmoid(), targets).mean(), [raw]


def _video_suites(rng: np.random.Generator):
    spec = ClipSpec(t=2, c=3, h=16, w=16, p=8, d=8)
    clip = rng.normal(size=(1, 2, 3, 16, 16))
    probe = _param(rng, (8,), "probe")

    enc = StreamEncoder(spec, EncoderConfig(blocks=2, num_st=1, heads=2, mlp_ratio=2.0), rng)
    enc.assign_names("enc")
    _randomize(enc, rng, 0.15)
    yield "encode_stream", lambda: (enc(clip) * probe.tensor).sum(), enc.parameters() + [probe]

    fusion = StreamFusion(4, 4, rng)
    fusion.assign_names("fusion")
    _randomize(fusion, rng)
    left = _param(rng, (2, 4), "left")
    right = _param(rng, (2, 4), "right")
    yield "fuse_streams", lambda: (fusion(left.tensor, right.tensor)).sum(), \
        fusion.parameters() + [left, right]

    block = SpatialBlock(8, 2, 2.0, rng)
    block.assign_names("spatial")
    _randomize(block, rng, 0.2)
    tokens = _param(rng, (1, 2, 4, 8), "tokens")
    cls = _param(rng, (1, 8), "cls")

    def spatial_forward():
        t_out, c_out = block(tokens.tensor, cls.tensor)
        return (t_out.sum() + c_out.sum()).sigmoid()

    yield "spatial_block", spatial_forward, block.parameters() + [tokens, cls]

    st = SpatioTemporalBlock(8, 2, 2.0, rng)
    st.assign_names("st")
    _randomize(st, rng, 0.2)

    def st_forward():
        t_out, c_out = st(tokens.tensor, cls.tensor)
        return (t_out.sum() + c_out.sum()).sigmoid()

    yield "st_block", st_forward, st.parameters() + [tokens, cls]


def _audio_suites(rng: np.random.Generator):
    ab = AudioBottleneck(6, 4, rng)
    ab.assign_names("bottleneck")
    _randomize(ab, rng)
    emb = _param(rng, (3, 6), "emb")
    yield "bottleneck", lambda: ab(emb.tensor).sum(), ab.parameters() + [emb]


def _gating_suites(rng: np.random.Generator):
    relevance = RelevanceNetwork(4, rng)
    relevance.assign_names("relevance")
    _randomize(relevance, rng)
    a = _param(rng, (2, 4), "a")
    v = _param(rng, (2, 4), "v")
    yield "relevance_forward", lambda: relevance(a.tensor, v.tensor).sum(), \
        relevance.parameters() + [a, v]

    fuser = FusionHead(4, rng)
    fuser.assign_names("fuser")
    _randomize(fuser, rng)
    delta = np.array([0.3, 1.0])
    yield "fuse", lambda: fuser(a.tensor, v.tensor, delta).sigmoid().sum(), \
        fuser.parameters() + [a, v]

    clf = ClassifierHead(4, 3, rng)
    clf.assign_names("classifier")
    _randomize(clf, rng)
    labels = np.array([0, 2])
    yield "classify_ce", lambda: ad.cross_entropy(clf.logits(v.tensor), labels).mean(), \
        clf.parameters() + [v]

    raw = _param(rng, (2,), "raw")
    targets = np.array([0.4, 1.0])
    yield "dual_loss", lambda: dual_loss(clf.logits(v.tensor), labels,
                                         raw.tensor.sigmoid(), targets, LossConfig(0.7)), \
        clf.parameters() + [v, raw]


def _model_suite(rng: np.random.Generator):
    model = ActionModel(TINY_MODEL)
    _randomize(model, rng, 0.15)
    b = 2
    rgb = rng.normal(size=(b, 2, 3, 16, 16))
    flow = rng.normal(size=(b, 2, 2, 16, 16))
    feats = rng.normal(size=(b, TINY_MODEL.d_audio))
    labels = np.array([0, 2])
    targets = np.array([0.25, 0.8])
    # freeze the gate multiplier at its initial value: it is a constant in
    # the backward pass, so the probed function must hold it constant too
    delta = model.forward(rgb, flow, feats).delta

    def forward():
        result = model.forward(rgb, flow, feats, fixed_delta=delta)
        return dual_loss(result.logits, labels, result.rev, targets, LossConfig(1.0))

    yield "tiny_full_model", forward, model.trainable_parameters()


# (builder, coords probed per parameter, finite-difference step). Deep
# compositions use a finer step: central-difference truncation error at
# h=1e-4 can exceed the 1e-4 comparison tolerance even for exact gradients.
GRAD_CHECK_SUITES = {
    "ops": (_op_suites, None, 1e-4),
    "video": (_video_suites, 6, 1e-5),
    "audio": (_audio_suites, None, 1e-4),
    "gating": (_gating_suites, 6, 1e-5),
    "model": (_model_suite, 5, 1e-5),
}


def run_grad_suite(name: str, seed: int = 11) -> list[GradReport]:
    builder, max_coords, step = GRAD_CHECK_SUITES[name]
    rng = np.random.default_rng(seed)
    coord_rng = np.random.default_rng(seed + 1)
    reports = []
    for case_name, forward, params in builder(rng):
        reports.append(check_gradients(
            forward, params, f"{name}.{case_name}",
            max_coords_per_param=max_coords, rng=coord_rng, step=step))
    return reports
