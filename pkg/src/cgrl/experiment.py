"""Training, best-validation selection, multi-seed runs, ablations and sweeps."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .config import ExperimentConfig
from .encoders import ModelSpec, forward, init_params
from .metrics import accuracy, mi_stability, mutual_information
from .objectives import (LossWeights, combine_losses, inter_loss, intra_loss, reconstruction_loss,
                         sample_pairs, supervised_loss)
from .shift import Benchmark, SbmSpec, ShiftSpec, assemble_benchmark, load_benchmark

log = logging.getLogger(__name__)

NORM_EPS = 1e-8
COMPONENTS = ("total", "sup", "rec", "intra", "inter")


class NonFiniteLoss(RuntimeError):
    pass


class HygieneError(AssertionError):
    """A stochastic row or a non-negative loss left its allowed range."""


@dataclass
class RunRecord:
    seed: int
    config_hash: str
    model: str
    losses: dict[str, list[float]] = field(default_factory=lambda: {k: [] for k in COMPONENTS})
    val_acc: list[float] = field(default_factory=list)
    id_val_mi: list[float] = field(default_factory=list)
    ood_val_mi: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_acc: float = float("nan")
    id_test_acc: float = float("nan")
    ood_acc: dict[int, float] = field(default_factory=dict)
    train_confidence: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    failed: bool = False
    error: str = ""

    @property
    def epochs_done(self) -> int:
        return len(self.val_acc)

    @property
    def mean_ood_acc(self) -> float:
        return float(np.mean(list(self.ood_acc.values()))) if self.ood_acc else float("nan")


def model_spec(cfg: ExperimentConfig, bench: Benchmark) -> ModelSpec:
    g = bench.id_graph
    return ModelSpec(
        in_dim=g.features.shape[1], hidden=cfg.hidden, num_classes=g.num_classes,
        variant=cfg.variant, layers=cfg.layers,
        branches=1 if cfg.is_erm else cfg.K, dropout=cfg.dropout,
        reweight="uniform" if cfg.is_erm else cfg.reweight,
        gumbel=False if cfg.is_erm else cfg.gumbel,
        recompute_reweight=cfg.recompute_reweight,
    )


def get_benchmark(cfg: ExperimentConfig) -> Benchmark:
    if cfg.benchmark == "default":
        return assemble_benchmark(SbmSpec(seed=cfg.bench_seed), ShiftSpec(seed=cfg.bench_seed))
    return load_benchmark(cfg.benchmark)


def check_hygiene(out, losses: dict[str, float], tol: float = 1e-6) -> None:
    """Row sums of every softmax/Gumbel matrix and signs of the non-negative losses."""
    if out.q_node is not None:
        err = np.abs(out.q_node.value.sum(axis=1) - 1.0).max()
        if err > tol:
            raise HygieneError(f"Gumbel rows sum off by {err}")
    if out.h_r.shape == out.z.shape:
        err = np.abs(out.h_r.value.sum(axis=0) - 1.0).max()
        if err > tol:
            raise HygieneError(f"re-weight columns sum off by {err}")
    for key in ("rec", "intra", "inter"):
        if losses.get(key, 0.0) < 0:
            raise HygieneError(f"{key} loss is negative: {losses[key]}")
    for key, v in losses.items():
        if not np.isfinite(v):
            raise NonFiniteLoss(f"{key} loss is {v}")


def _rng(*key):
    return np.random.default_rng(list(key))


class Trainer:
    """One model instance trained on one benchmark with one seed."""

    def __init__(self, cfg: ExperimentConfig, bench: Benchmark, seed: int):
        self.cfg, self.bench, self.seed = cfg, bench, seed
        self.spec = model_spec(cfg, bench)
        self.params = init_params(self.spec, seed)
        self.weights = LossWeights(cfg.lambda1, cfg.lambda2, cfg.tau)
        self.opt = ad.AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay, dropout=cfg.dropout)
        self.enabled = set(cfg.losses)

    @property
    def param_list(self):
        return list(self.params.values())

    def loss_terms(self, out, epoch: int):
        g, split = self.bench.id_graph, self.bench.split
        terms = {}
        if "sup" in self.enabled:
            terms["sup"] = supervised_loss(out.logits, g.labels, split.train_ids)
        if "rec" in self.enabled:
            terms["rec"] = reconstruction_loss(out.z, out.q_node, out.h_c,
                                               self.params["energy.W"], g).total
        if self.enabled & {"intra", "inter"}:
            pairs = sample_pairs(g.labels, split.train_ids, self.cfg.pairs_per_epoch,
                                 _rng(self.seed, epoch, 2), self.cfg.margin)
            if "intra" in self.enabled:
                terms["intra"] = intra_loss(out.h_c, pairs, NORM_EPS)
            if "inter" in self.enabled:
                terms["inter"] = inter_loss(out.h_c, pairs, NORM_EPS)
        return terms

    def train_step(self, epoch: int) -> dict[str, float]:
        out = forward(self.bench.id_graph, self.params, self.spec, "train", self.cfg.tau,
                      seed=_rng(self.seed, epoch, 1))
        terms = self.loss_terms(out, epoch)
        total = combine_losses(terms.get("sup"), terms.get("rec"), terms.get("intra"),
                               terms.get("inter"), self.weights)
        values = {k: t.item() for k, t in terms.items()}
        values["total"] = total.item()
        check_hygiene(out, values)
        ad.zero_grad(self.param_list)
        ad.backward(total)
        ad.adam_step(self.opt, self.param_list)
        return values

    def predict(self, graph):
        return forward(graph, self.params, self.spec, "test")

    def snapshot(self):
        return {k: p.value.copy() for k, p in self.params.items()}

    def restore(self, snap):
        for k, v in snap.items():
            self.params[k].value[...] = v


def train_run(cfg: ExperimentConfig, bench: Benchmark, seed: int) -> RunRecord:
    """Train for ``cfg.epochs`` epochs; OOD metrics come from the best-val epoch."""
    t0 = time.perf_counter()
    rec = RunRecord(seed=seed, config_hash=cfg.hash(), model=cfg.model)
    split = bench.split
    labels = bench.id_graph.labels
    trainer = Trainer(cfg, bench, seed)
    best_score, best = -np.inf, None
    ood_graphs = [bench.ood_graphs[k] for k in sorted(bench.ood_graphs)]
    val_pool_true = np.concatenate([labels[split.val_ids]] * len(ood_graphs))
    try:
        for epoch in range(cfg.epochs):
            values = trainer.train_step(epoch)
            for k in COMPONENTS:
                rec.losses[k].append(values.get(k, 0.0))
            id_out = trainer.predict(bench.id_graph)
            pred = id_out.predictions()
            val_acc = accuracy(pred, labels, split.val_ids)
            rec.val_acc.append(val_acc)
            rec.id_val_mi.append(mutual_information(pred, labels, split.val_ids))
            ood_preds = [trainer.predict(og).predictions() for og in ood_graphs]
            pooled = np.concatenate([p[split.val_ids] for p in ood_preds])
            rec.ood_val_mi.append(mutual_information(pooled, val_pool_true))
            score = val_acc if cfg.select_on == "id-val" else float(np.mean(pooled == val_pool_true))
            if score > best_score:
                best_score, best = score, (epoch, trainer.snapshot())
    except (NonFiniteLoss, ad.DomainError, FloatingPointError) as exc:
        rec.failed, rec.error = True, f"{type(exc).__name__}: {exc}"
        log.warning("run seed=%s failed at epoch %d: %s", seed, rec.epochs_done, exc)
        if best is None:
            rec.wall_time = time.perf_counter() - t0
            return rec
    epoch, snap = best
    trainer.restore(snap)
    rec.best_epoch = epoch
    rec.best_val_acc = rec.val_acc[epoch]
    id_out = trainer.predict(bench.id_graph)
    rec.id_test_acc = accuracy(id_out.predictions(), labels, split.test_ids)
    rec.train_confidence = id_out.probabilities().max(axis=1)[split.train_ids].tolist()
    for k in sorted(bench.ood_graphs):
        pred = trainer.predict(bench.ood_graphs[k]).predictions()
        rec.ood_acc[k] = accuracy(pred, labels, split.test_ids)
    rec.wall_time = time.perf_counter() - t0
    return rec


@dataclass
class Aggregate:
    mean: dict[str, float]
    std: dict[str, float]
    runs_ok: int
    runs_failed: int


def aggregate(records: list[RunRecord], mi_window: int = 100) -> Aggregate:
    """Mean and sample std over successful runs of each reported metric."""
    ok = [r for r in records if r.ood_acc]
    rows: dict[str, list[float]] = {}
    for r in ok:
        rows.setdefault("id_test_acc", []).append(r.id_test_acc)
        rows.setdefault("best_val_acc", []).append(r.best_val_acc)
        for k, v in r.ood_acc.items():
            rows.setdefault(f"ood{k}_acc", []).append(v)
        rows.setdefault("ood_mean_acc", []).append(r.mean_ood_acc)
        w = min(mi_window, len(r.ood_val_mi))
        if w >= 2:
            rows.setdefault("ood_val_mi_stability", []).append(mi_stability(r.ood_val_mi, w))
    mean = {k: float(np.mean(v)) for k, v in rows.items()}
    std = {k: float(np.std(v, ddof=1)) if len(v) > 1 else 0.0 for k, v in rows.items()}
    return Aggregate(mean, std, len(ok), len(records) - len(ok))


def _run_one(args):
    cfg, bench, seed = args
    return train_run(cfg, bench, seed)


def run_experiment(cfg: ExperimentConfig, bench: Benchmark | None = None, jobs: int = 1,
                   seed_offset: int = 0) -> tuple[list[RunRecord], Aggregate]:
    """Fresh parameters per seed, then mean +- sample std across runs."""
    bench = bench or get_benchmark(cfg)
    seeds = [s + seed_offset for s in cfg.run_seeds]
    tasks = [(cfg, bench, s) for s in seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_one, tasks))
    else:
        records = [_run_one(t) for t in tasks]
    return records, aggregate(records, cfg.mi_window)


ABLATION_ROWS = (("full", None), ("w/o sup", "sup"), ("w/o rec", "rec"),
                 ("w/o intra", "intra"), ("w/o inter", "inter"))


def ablation_configs(cfg: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """The full model and the four single-loss-removed variants."""
    if cfg.is_erm:
        raise ValueError("ablation applies to CGRL models only")
    if not cfg.losses:
        raise ValueError("nothing to optimize")
    full = cfg.with_(losses=tuple(l for l in ("sup", "rec", "intra", "inter")))
    out = []
    for name, drop in ABLATION_ROWS:
        losses = tuple(l for l in full.losses if l != drop)
        out.append((name, full.with_(losses=losses)))
    return out


def run_ablation(cfg: ExperimentConfig, bench: Benchmark | None = None, jobs: int = 1,
                 seed_offset: int = 0):
    bench = bench or get_benchmark(cfg)
    table = []
    for name, variant in ablation_configs(cfg):
        records, agg = run_experiment(variant, bench, jobs, seed_offset)
        table.append((name, variant, records, agg))
    return table


SWEEP_AXES = {"K": "K", "lambda1": "lambda1", "lambda2": "lambda2", "tau": "tau",
              "margin": "margin"}


def run_sensitivity(cfg: ExperimentConfig, axis: str, values, bench: Benchmark | None = None,
                    jobs: int = 1, seed_offset: int = 0):
    """One aggregate per value along ``axis``; everything else fixed."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {sorted(SWEEP_AXES)}")
    bench = bench or get_benchmark(cfg)
    table = []
    for v in values:
        v = int(v) if axis == "K" else float(v)
        variant = cfg.with_(**{SWEEP_AXES[axis]: v, "custom": True})
        records, agg = run_experiment(variant, bench, jobs, seed_offset)
        table.append((v, variant, records, agg))
    return table
