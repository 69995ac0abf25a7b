"""Epoch loop: cluster, build memories, iterate P x K batches, evaluate."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import encoder as enc
from .clustering import ClusterAssignment, dbscan
from .config import RunConfig
from .data import FeatureSet, Modality, BatchSpec, generate_synthetic, load_features, pk_sample, save_xpcl
from .evaluation import ari_report, cross_modal_retrieval
from .losses import LossOutput, bimodal_loss, info_nce_batch, pclmp_loss
from .matching import CrossModalMatch, match_prototypes, unify_labels
from .memory import (
    CentroidMemory,
    DynamicMemory,
    HardMemory,
    init_centroid_memory,
    rebuild_dynamic_memory,
    select_dynamic_prototypes,
    select_hard_prototypes,
)

log = logging.getLogger(__name__)

V, R = Modality.VISIBLE, Modality.INFRARED
MODALITIES = (V, R)


@dataclass
class EpochReport:
    epoch: int
    loss_cpcl: Optional[float] = None
    loss_hpcl: Optional[float] = None
    loss_dpcl: Optional[float] = None
    loss_total: Optional[float] = None
    ari_rgb: Optional[float] = None
    ari_ir: Optional[float] = None
    ari_all: Optional[float] = None
    rank1: Optional[float] = None
    rank5: Optional[float] = None
    rank10: Optional[float] = None
    rank20: Optional[float] = None
    map: Optional[float] = None
    n_clusters_v: int = 0
    n_clusters_r: int = 0

    @classmethod
    def columns(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def csv_row(self) -> List[str]:
        return ["" if v is None else repr(v) for v in asdict(self).values()]


@dataclass
class Memories:
    assignment: ClusterAssignment
    centroid: CentroidMemory
    hard: HardMemory
    dynamic: DynamicMemory


@dataclass
class TrainState:
    phi_0: enc.EncoderParams
    phi_m: enc.EncoderParams
    optimizer: enc.OptimizerState
    epoch: int = 0
    step: int = 0
    memories: Dict[Modality, Memories] = field(default_factory=dict)
    match: Optional[CrossModalMatch] = None

    @classmethod
    def fresh(cls, cfg: RunConfig, d_in: int) -> "TrainState":
        phi_0 = enc.EncoderParams.init([d_in, *cfg.embed_dims], seed=cfg.seed)
        return cls(phi_0, phi_0.copy(), enc.OptimizerState.for_params(phi_0))

    def checkpoint(self) -> enc.Checkpoint:
        return enc.Checkpoint(self.phi_0, self.phi_m, self.optimizer, self.epoch, self.step)

    @classmethod
    def from_checkpoint(cls, ckpt: enc.Checkpoint) -> "TrainState":
        return cls(ckpt.phi_0, ckpt.phi_m, ckpt.optimizer, ckpt.epoch, ckpt.step)


def loss_weights(epoch: int, cfg: RunConfig):
    """(w_centroid, w_hard, w_dynamic) for the given 1-based epoch."""
    h, d, lam = cfg.enable_hpcl, cfg.enable_dpcl, cfg.hyper.lam
    if not (h or d):
        return 1.0, 0.0, 0.0
    wh, wd = (lam, 1.0 - lam) if h and d else (float(h), float(d))
    if not cfg.enable_pcl_schedule:
        return 1.0, wh, wd
    if epoch <= cfg.hyper.e_cpcl:
        return 1.0, 0.0, 0.0
    return (1.0 if cfg.keep_cpcl else 0.0), wh, wd


def _split(data: FeatureSet) -> Dict[Modality, np.ndarray]:
    return {m: data.indices(m) for m in MODALITIES}


def build_memories(state: TrainState, data: FeatureSet, cfg: RunConfig, epoch: int) -> Dict[Modality, Memories]:
    hp = cfg.hyper
    out = {}
    for m, idx in _split(data).items():
        raw = data.raw[idx]
        emb = enc.forward(state.phi_0, raw)
        assign = dbscan(emb, hp.eps, hp.min_pts)
        if assign.n_clusters == 0:
            out[m] = Memories(assign, CentroidMemory(np.zeros((0, emb.shape[1]))),
                              HardMemory(np.zeros((0, emb.shape[1])), hp.k, []),
                              DynamicMemory(np.zeros((0, hp.M, emb.shape[1])), np.zeros((0, hp.M), dtype=np.int64)))
            continue
        cent = init_centroid_memory(emb, assign)
        hard = select_hard_prototypes(emb, assign, cent, hp.k)
        dyn = rebuild_dynamic_memory(raw, assign, state.phi_m, hp.M, seed=[cfg.seed, epoch, int(m), 0xD7])
        out[m] = Memories(assign, cent, hard, dyn)
    return out


def _crossmodal_term(q, y, match_map: Dict[int, int], bank, tau):
    """Extra InfoNCE pulling each matched query towards its partner centroid."""
    partner = np.array([match_map.get(int(c), -1) for c in y], dtype=np.int64)
    use = partner >= 0
    grad = np.zeros_like(q)
    if not use.any():
        return 0.0, grad
    losses, g = info_nce_batch(q[use], bank, partner[use], tau)
    grad[use] = g / use.sum()
    return float(losses.mean()), grad


def train_step(state: TrainState, data: FeatureSet, cfg: RunConfig, epoch: int, step: int, hooks=None) -> dict:
    """One optimiser step over an independent P x K batch per modality."""
    hp = cfg.hyper
    split = _split(data)
    mem = state.memories
    batch = pk_sample({m: mem[m].assignment.labels for m in MODALITIES}, BatchSpec(hp.P, hp.K), cfg.seed, epoch, step)
    xs, ys, caches = {}, {}, {}
    for m in MODALITIES:
        local = batch[m]
        xs[m] = data.raw[split[m][local]]
        ys[m] = mem[m].assignment.labels[local]
        caches[m] = enc.forward_cached(state.phi_0, xs[m])
    qv, qr = caches[V].out, caches[R].out
    yv, yr = ys[V], ys[R]
    w_c, w_h, w_d = loss_weights(epoch, cfg)
    parts = {}

    def cpcl():
        parts["cpcl"] = bimodal_loss(qv, yv, qr, yr, mem[V].centroid.prototypes, mem[R].centroid.prototypes, hp.tau)
        return parts["cpcl"]

    def hpcl():
        parts["hpcl"] = bimodal_loss(qv, yv, qr, yr, mem[V].hard.prototypes, mem[R].hard.prototypes, hp.tau)
        return parts["hpcl"]

    def dpcl():
        bank_v, choice_v = select_dynamic_prototypes(qv, yv, mem[V].dynamic)
        bank_r, choice_r = select_dynamic_prototypes(qr, yr, mem[R].dynamic)
        parts["dpcl"] = bimodal_loss(qv, yv, qr, yr, bank_v, bank_r, hp.tau)
        if hooks and "dynamic" in hooks:
            hooks["dynamic"]({V: (qv, yv, choice_v), R: (qr, yr, choice_r)}, mem)
        return parts["dpcl"]

    pure_schedule = cfg.enable_pcl_schedule and cfg.enable_hpcl and cfg.enable_dpcl and not cfg.keep_cpcl
    if pure_schedule:
        total = pclmp_loss(epoch, hp, cpcl, hpcl, dpcl)
    else:
        total = None
        for w, fn in ((w_c, cpcl), (w_h, hpcl), (w_d, dpcl)):
            if w > 0:
                term = fn() if w == 1.0 else fn().scaled(w)
                total = term if total is None else total + term

    if cfg.enable_crossmodal_loss and state.match is not None and cfg.crossmodal_weight > 0:
        fwd = state.match.as_dict()
        back = {r: v for v, r in fwd.items()}
        lv, gv = _crossmodal_term(qv, yv, fwd, mem[R].centroid.prototypes, hp.tau)
        lr_, gr = _crossmodal_term(qr, yr, back, mem[V].centroid.prototypes, hp.tau)
        total = total + LossOutput(lv + lr_, gv, gr).scaled(cfg.crossmodal_weight)

    gv_params = enc.backward(state.phi_0, xs[V], total.grad_v, caches[V])
    gr_params = enc.backward(state.phi_0, xs[R], total.grad_r, caches[R])
    grads = enc.EncoderParams([a + b for a, b in zip(gv_params.weights, gr_params.weights)],
                              [a + b for a, b in zip(gv_params.biases, gr_params.biases)])
    lr = enc.lr_at(epoch - 1, hp.lr, hp.lr_decay, hp.lr_period)
    enc.adam_step(state.phi_0, grads, state.optimizer, lr)
    enc.ema_update(state.phi_m, state.phi_0, hp.beta)
    state.step += 1

    for m, q, y in ((V, qv, yv), (R, qr, yr)):
        mem[m].centroid.update_batch(y, q, hp.alpha)
        mem[m].hard.update_batch(y, q, hp.alpha)

    if hooks and "step" in hooks:
        hooks["step"](state, epoch, step)
    return {"total": total.value, **{k: v.value for k, v in parts.items()}}


def evaluate(state: TrainState, data: FeatureSet, cfg: RunConfig, epoch: int) -> tuple:
    """Cluster momentum-encoder embeddings, match modalities and score them."""
    hp = cfg.hyper
    split = _split(data)
    emb = {m: enc.forward(state.phi_m, data.raw[idx]) for m, idx in split.items()}
    assign = {m: dbscan(emb[m], hp.eps, hp.min_pts) for m in MODALITIES}
    report = EpochReport(epoch, n_clusters_v=assign[V].n_clusters, n_clusters_r=assign[R].n_clusters)
    match = None
    if assign[V].n_clusters and assign[R].n_clusters:
        match = match_prototypes(init_centroid_memory(emb[V], assign[V]), init_centroid_memory(emb[R], assign[R]))
    else:
        match = CrossModalMatch([], list(range(assign[V].n_clusters)), list(range(assign[R].n_clusters)))
    ids = {m: data.true_id[idx] for m, idx in split.items()}
    if data.has_ground_truth():
        unified = unify_labels(assign[V].labels, assign[R].labels, match)
        ari = ari_report(assign[V].labels, assign[R].labels, unified, ids[V], ids[R])
        report.ari_rgb, report.ari_ir, report.ari_all = ari["RGB"], ari["IR"], ari["ALL"]
        ret = cross_modal_retrieval(emb[V], ids[V], emb[R], ids[R])["mean"]
        report.rank1, report.rank5, report.rank10, report.rank20 = (ret[f"rank{k}"] for k in (1, 5, 10, 20))
        report.map = ret["map"]
    return report, match, emb


def run_epoch(state: TrainState, data: FeatureSet, cfg: RunConfig, hooks=None):
    epoch = state.epoch + 1
    hp = cfg.hyper
    state.memories = build_memories(state, data, cfg, epoch)
    state.match = None
    if cfg.enable_crossmodal_loss and all(state.memories[m].assignment.n_clusters for m in MODALITIES):
        state.match = match_prototypes(state.memories[V].centroid, state.memories[R].centroid)
    if hooks and "memories" in hooks:
        hooks["memories"](state, epoch)
    usable = max(int(np.sum(state.memories[m].assignment.labels >= 0)) for m in MODALITIES)
    n_steps = math.ceil(usable / (hp.P * hp.K))
    sums: Dict[str, float] = {}
    for step in range(n_steps):
        for k, v in train_step(state, data, cfg, epoch, step, hooks).items():
            sums[k] = sums.get(k, 0.0) + v
    state.epoch = epoch
    report, match, emb = evaluate(state, data, cfg, epoch)
    mean = {k: v / n_steps for k, v in sums.items()} if n_steps else {}
    report.loss_cpcl = mean.get("cpcl")
    report.loss_hpcl = mean.get("hpcl")
    report.loss_dpcl = mean.get("dpcl")
    report.loss_total = mean.get("total")
    log.info("epoch %d: loss=%s map=%s ari_all=%s clusters=%d/%d", epoch, report.loss_total,
             report.map, report.ari_all, report.n_clusters_v, report.n_clusters_r)
    return state, report, match, emb


@dataclass
class TrainResult:
    state: TrainState
    reports: List[EpochReport]
    final_match: Optional[CrossModalMatch]
    embeddings: Dict[Modality, np.ndarray]

    @property
    def final(self) -> EpochReport:
        return self.reports[-1]


def load_data(cfg: RunConfig) -> FeatureSet:
    if cfg.synth is not None:
        return generate_synthetic(cfg.synth)
    return load_features(cfg.input_path, cfg.input_format)


def train(cfg: RunConfig, out_dir=None, data: Optional[FeatureSet] = None,
          resume: Optional[enc.Checkpoint] = None, hooks=None) -> TrainResult:
    """Run epochs ``state.epoch + 1 .. cfg.epochs``; epoch 0 is an untrained evaluation."""
    cfg.validate()
    if data is None:
        data = load_data(cfg)
    state = TrainState.from_checkpoint(resume) if resume else TrainState.fresh(cfg, data.dim)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.resolved.json").write_text(cfg.to_json())
        metrics_fh = open(out / "metrics.csv", "w", newline="")
        writer = csv.writer(metrics_fh, lineterminator="\n")
        writer.writerow(EpochReport.columns())

    reports = []
    try:
        report, match, emb = evaluate(state, data, cfg, state.epoch)
        reports.append(report)
        if out is not None:
            writer.writerow(report.csv_row())
        while state.epoch < cfg.epochs:
            state, report, match, emb = run_epoch(state, data, cfg, hooks)
            reports.append(report)
            if out is not None:
                writer.writerow(report.csv_row())
                metrics_fh.flush()
                if cfg.verbose and match is not None:
                    match.write_csv(out / f"matches_epoch{state.epoch:03d}.csv")
    finally:
        if out is not None:
            metrics_fh.close()

    result = TrainResult(state, reports, match, emb)
    if out is not None:
        write_outputs(result, data, out)
    return result


def write_outputs(result: TrainResult, data: FeatureSet, out: Path) -> None:
    (out / "report.json").write_text(json.dumps(
        {"final": asdict(result.final), "epochs": [asdict(r) for r in result.reports]}, indent=2) + "\n")
    enc.save_checkpoint(out / "checkpoint.xpck", result.state.checkpoint())
    if result.final_match is not None:
        result.final_match.write_csv(out / "matches.csv")
    dump = np.zeros((len(data), result.state.phi_m.dims[-1]))
    for m, idx in _split(data).items():
        dump[idx] = result.embeddings[m]
    save_xpcl(out / "embeddings.xpcl", FeatureSet(dump, data.modality, data.true_id))
