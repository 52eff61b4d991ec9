"""Persisted run records, metric CSVs, summaries and SVG figures.

Every file is a function of the records alone, so re-emitting the same
records reproduces the same bytes. Wall time is logged, never written.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiment import COMPONENTS, RunRecord, aggregate  # noqa: E402

log = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "cgrl"
plt.rcParams["svg.fonttype"] = "none"
_SVG_META = {"Date": None, "Creator": None}

_RECORD_KEYS = ("seed", "config_hash", "model", "losses", "val_acc", "id_val_mi", "ood_val_mi",
                "best_epoch", "best_val_acc", "id_test_acc", "ood_acc", "train_confidence",
                "failed", "error")


def _num(v) -> str:
    return repr(float(v))


def _outdir(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _write_text(path: Path, text: str) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# -- record persistence -----------------------------------------------------

def record_to_dict(rec: RunRecord) -> dict:
    d = {k: getattr(rec, k) for k in _RECORD_KEYS}
    d["ood_acc"] = {str(k): v for k, v in rec.ood_acc.items()}
    return d


def record_from_dict(d: dict) -> RunRecord:
    d = dict(d)
    d["ood_acc"] = {int(k): v for k, v in d.get("ood_acc", {}).items()}
    return RunRecord(**{k: d[k] for k in _RECORD_KEYS if k in d})


def save_records(records, path) -> Path:
    path = Path(path)
    _outdir(path.parent)
    for r in records:
        for key, series in r.losses.items():
            if not all(np.isfinite(series)):
                raise ValueError(f"refusing to persist non-finite {key} loss (seed {r.seed})")
    text = json.dumps([record_to_dict(r) for r in records], indent=1, sort_keys=True)
    return _write_text(path, text + "\n")


def load_records(path) -> list[RunRecord]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no records file at {path}")
    return [record_from_dict(d) for d in json.loads(path.read_text())]


# -- per-run and aggregate files --------------------------------------------

def metrics_csv(rec: RunRecord) -> str:
    header = ["epoch", *(f"loss_{k}" for k in COMPONENTS), "val_acc", "id_val_mi", "ood_val_mi"]
    rows = []
    for e in range(rec.epochs_done):
        rows.append([e, *(_num(rec.losses[k][e]) for k in COMPONENTS), _num(rec.val_acc[e]),
                     _num(rec.id_val_mi[e]), _num(rec.ood_val_mi[e])])
    return _csv_text(header, rows)


def summary_rows(records, mi_window=100):
    agg = aggregate(records, mi_window)
    return agg, [[k, _num(agg.mean[k]), _num(agg.std[k]), agg.runs_ok] for k in sorted(agg.mean)]


def summary_text(records, mi_window=100) -> str:
    agg, rows = summary_rows(records, mi_window)
    r0 = records[0]
    lines = [f"model: {r0.model}", f"config_hash: {r0.config_hash}",
             f"runs: {agg.runs_ok} ok, {agg.runs_failed} failed",
             f"seeds: {','.join(str(r.seed) for r in records)}", ""]
    for k in sorted(agg.mean):
        lines.append(f"{k:24s} {agg.mean[k]:.4f} +- {agg.std[k]:.4f}")
    for r in records:
        if r.failed:
            lines.append(f"seed {r.seed} failed after {r.epochs_done} epochs: {r.error}")
    return "\n".join(lines) + "\n"


def _save_svg(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def plot_mi(rec: RunRecord, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(rec.id_val_mi, label="ID-val")
    ax.plot(rec.ood_val_mi, label="OOD-val")
    ax.set_xlabel("epoch")
    ax.set_ylabel("I(prediction; label) [nats]")
    ax.set_title(f"{rec.model} seed {rec.seed}")
    ax.legend()
    fig.tight_layout()
    return _save_svg(fig, path)


def plot_confidence(rec: RunRecord, path: Path, bins: int = 20) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.hist(rec.train_confidence, bins=bins, range=(0.0, 1.0), density=True)
    ax.set_xlabel("max class probability (train nodes)")
    ax.set_ylabel("density")
    ax.set_title(f"{rec.model} seed {rec.seed}")
    fig.tight_layout()
    return _save_svg(fig, path)


def emit_outputs(records, out_dir, mi_window: int = 100) -> list[Path]:
    """Metric CSV, MI curve and confidence histogram per run; summary text and CSV."""
    records = list(records)
    if not records:
        raise ValueError("no records to emit")
    out = _outdir(out_dir)
    h = records[0].config_hash
    written = [save_records(records, out / f"records_{h}.json")]
    for r in records:
        stem = f"{h}_seed{r.seed}"
        written.append(_write_text(out / f"metrics_{stem}.csv", metrics_csv(r)))
        if r.epochs_done:
            written.append(plot_mi(r, out / f"mi_{stem}.svg"))
        if r.train_confidence:
            written.append(plot_confidence(r, out / f"confidence_{stem}.svg"))
    if any(r.ood_acc for r in records):
        _, rows = summary_rows(records, mi_window)
        written.append(_write_text(out / f"summary_{h}.csv",
                                   _csv_text(["metric", "mean", "std", "runs"], rows)))
    written.append(_write_text(out / f"summary_{h}.txt", summary_text(records, mi_window)))
    for r in records:
        log.info("seed %s: %.1f s", r.seed, r.wall_time)
    return written


# -- ablation and sweep tables ----------------------------------------------

def ablation_csv(table, dataset: str) -> str:
    """Rows are the variants, columns the per-dataset mean and std OOD accuracy."""
    rows = []
    for name, cfg, _, agg in table:
        rows.append([name, cfg.hash(), _num(agg.mean.get("ood_mean_acc", float("nan"))),
                     _num(agg.std.get("ood_mean_acc", float("nan")))])
    return _csv_text(["variant", "config_hash", f"{dataset}_mean", f"{dataset}_std"], rows)


def emit_ablation(table, out_dir, dataset: str = "default") -> list[Path]:
    out = _outdir(out_dir)
    written = [_write_text(out / "ablation.csv", ablation_csv(table, dataset))]
    for _, _, records, _ in table:
        written += emit_outputs(records, out / records[0].config_hash)
    return written


def sweep_csv(table, axis: str) -> str:
    keys = sorted({k for *_, agg in table for k in agg.mean})
    header = [axis, "config_hash"] + [f"{k}_{s}" for k in keys for s in ("mean", "std")]
    rows = []
    for v, cfg, _, agg in table:
        row = [v, cfg.hash()]
        for k in keys:
            row += [_num(agg.mean.get(k, float("nan"))), _num(agg.std.get(k, float("nan")))]
        rows.append(row)
    return _csv_text(header, rows)


def plot_sweep(table, axis: str, path: Path, metric: str = "ood_mean_acc") -> Path:
    xs = [v for v, *_ in table]
    ys = np.array([agg.mean.get(metric, np.nan) for *_, agg in table])
    es = np.array([agg.std.get(metric, np.nan) for *_, agg in table])
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3)
    ax.set_xlabel(axis)
    ax.set_ylabel(metric)
    fig.tight_layout()
    return _save_svg(fig, path)


def emit_sweep(table, axis: str, out_dir) -> list[Path]:
    out = _outdir(out_dir)
    written = [_write_text(out / f"sweep_{axis}.csv", sweep_csv(table, axis)),
               plot_sweep(table, axis, out / f"sweep_{axis}.svg")]
    for _, _, records, _ in table:
        written += emit_outputs(records, out / records[0].config_hash)
    return written
