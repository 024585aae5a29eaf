"""Experiment orchestration: dataset assembly, single runs with artifact
persistence, sparsity sweeps, the random-mask correlation probe, and
reliability-diagram export."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .calibration import (
    CalibrationReport,
    ece_from_bins,
    fit_temperature,
    nll,
    reliability_bins,
    write_reliability_csv,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig, format_config, resolve_config
from .fileio import atomic_write_text
from .data import Dataset, load_csv, load_idx, inject_label_noise, split_dataset, standardize, synth_two_moons
from .masks import DeterministicMask, sample_random_mask
from .rng import substream
from .tensor import MlpModel, softmax
from .train import TrainResult, evaluate, predict_logits, predict_mc_dropout, train

log = logging.getLogger(__name__)

ARTIFACTS = ("model.ckpt", "metrics.jsonl", "calibration.csv", "report.json", "config.resolved")


def build_datasets(cfg: ExperimentConfig):
    """Source -> optional label noise -> train/test split -> optional
    standardization, all on streams derived from the training seed."""
    seed = cfg.train.seed
    d = cfg.data
    if d.source == "two_moons":
        ds = synth_two_moons(d.n, d.noise_sd, substream(seed, "data.synth"))
    elif d.source == "csv":
        ds = load_csv(d.csv_path, d.label_column)
    elif d.source == "idx":
        ds = load_idx(d.idx_images, d.idx_labels)
    else:
        raise ConfigError(f"data.source: unknown source {d.source!r}")
    if d.label_noise > 0:
        ds, _ = inject_label_noise(ds, d.label_noise, substream(seed, "data.noise"))
    train_ds, test_ds = split_dataset(ds, d.split, substream(seed, "data.split"))
    if d.standardize:
        train_ds, test_ds = standardize(train_ds, test_ds)
    return train_ds, test_ds


def _checkpoint_from_result(result: TrainResult) -> Checkpoint:
    tensors, masks = [], []
    for w, m, b in zip(result.model.weights, result.mask.layers, result.model.biases):
        tensors.append(w)
        masks.append(m)
        tensors.append(b)
        masks.append(np.ones_like(b, dtype=bool))
    return Checkpoint(result.config.method, result.config.seed, tensors, masks, result.n_models)


def model_from_checkpoint(ckpt: Checkpoint):
    """Rebuild (model, topology mask) from the interleaved weight/bias records."""
    if len(ckpt.tensors) % 2:
        raise ValueError("checkpoint does not hold (weight, bias) pairs")
    weights = ckpt.tensors[0::2]
    biases = ckpt.tensors[1::2]
    mask_layers = [m.copy() for m in ckpt.masks[0::2]]
    if any(w.ndim != 2 for w in weights) or any(b.ndim != 1 for b in biases):
        raise ValueError("checkpoint tensors are not rank-2 weights with rank-1 biases")
    mask = DeterministicMask(mask_layers, tuple(int(m.sum()) for m in mask_layers))
    return MlpModel(list(weights), list(biases)), mask


@dataclass
class RunOutputs:
    out_dir: Path
    report: CalibrationReport
    result: TrainResult


def run_experiment(cfg: ExperimentConfig, out_root=None, force: bool = False) -> RunOutputs:
    cfg = resolve_config(cfg)
    out_dir = Path(out_root if out_root is not None else cfg.out_dir) / cfg.run_id
    if not force and any((out_dir / name).exists() for name in ARTIFACTS):
        raise ConfigError(f"run.id: output {out_dir} already holds run artifacts (use --force)")
    out_dir.mkdir(parents=True, exist_ok=True)

    train_ds, test_ds = build_datasets(cfg)
    use_temperature = cfg.calib.temperature and cfg.train.method != "rigl_mcdp"
    if cfg.calib.temperature and cfg.train.method == "rigl_mcdp":
        log.warning("temperature scaling skipped: MC-dropout prediction has no single logit set")
    if use_temperature:
        fit_ds, val_ds = split_dataset(train_ds, (0.9, 0.1), substream(cfg.train.seed, "data.valsplit"))
    else:
        fit_ds, val_ds = train_ds, None

    result = train(cfg.train, fit_ds, test_ds)

    if use_temperature:
        temp = fit_temperature(predict_logits(result.model, val_ds.features), val_ds.labels)
        probs = softmax(predict_logits(result.model, test_ds.features) / temp)
    else:
        temp = None
        probs = result.final_probs

    bins = reliability_bins(probs, test_ds.labels, cfg.calib.n_bins)
    pred = probs.argmax(axis=1)
    report = CalibrationReport(
        ece=ece_from_bins(bins),
        nll=nll(probs, test_ds.labels),
        accuracy=float(np.mean(pred == test_ds.labels)),
        bins=bins,
        temperature=temp,
    )

    save_checkpoint(out_dir / "model.ckpt", _checkpoint_from_result(result))
    atomic_write_text(out_dir / "metrics.jsonl",
                      "".join(json.dumps(r.to_dict()) + "\n" for r in result.history))
    write_reliability_csv(bins, out_dir / "calibration.csv")
    atomic_write_text(out_dir / "report.json", json.dumps({
        "ece": report.ece,
        "nll": report.nll,
        "accuracy": report.accuracy,
        "temperature": report.temperature,
        "n_bins": cfg.calib.n_bins,
        "method": cfg.train.method,
        "seed": cfg.train.seed,
        "sparsity": cfg.train.sparsity,
    }, indent=2) + "\n")
    atomic_write_text(out_dir / "config.resolved", format_config(cfg))
    return RunOutputs(out_dir, report, result)


def run_sweep(cfg: ExperimentConfig, sparsities, seeds, out_root=None, force: bool = False) -> Path:
    """|sparsities| x |seeds| independent runs; rows sorted by (sparsity, seed)."""
    if not seeds:
        raise ConfigError("sweep: need at least one seed")
    for s in sparsities:
        if not 0.0 <= s < 1.0:
            raise ConfigError(f"sweep: sparsity {s} outside [0, 1)")
    cfg = resolve_config(cfg)
    out_root = Path(out_root if out_root is not None else cfg.out_dir)
    rows = []
    for s in sorted(sparsities):
        for seed in sorted(seeds):
            cell = replace(
                cfg,
                run_id=f"{cfg.run_id}_s{s:g}_seed{seed}",
                train=replace(cfg.train, sparsity=s, seed=seed),
            )
            out = run_experiment(cell, out_root=out_root / "sweep_runs", force=force)
            rows.append((s, out.report.accuracy, out.report.ece, out.report.nll, seed))

    path = out_root / "sweep.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["sparsity,test_accuracy,ece,nll,seed"]
    for s, acc, e, n, seed in rows:
        lines.append(f"{s:g},{repr(acc)},{repr(e)},{repr(n)},{seed}")
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path


def correlate(model: MlpModel, mask: DeterministicMask, data: Dataset, keep_prob: float,
              n_draws: int, rng: np.random.Generator) -> dict:
    """Accuracy of the bare masked weights vs the mean over random-mask draws.

    A larger drop indicates a stronger coupling between the random mask and
    the weights it was trained with.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    base = evaluate(model, data).accuracy
    # integer correct-counts so the keep_prob=1 drop is exactly zero
    correct = 0
    for _ in range(n_draws):
        z = sample_random_mask(mask, keep_prob, rng)
        masked = MlpModel([w * m * zz for w, m, zz in zip(model.weights, mask.layers, z)],
                          model.biases)
        pred = evaluate(masked, data).probs.argmax(axis=1)
        correct += int(np.sum(pred == data.labels))
    mean_masked = correct / (n_draws * len(data))
    return {
        "base_accuracy": base,
        "mean_masked_accuracy": mean_masked,
        "accuracy_drop": base - mean_masked,
        "keep_prob": keep_prob,
        "n_draws": n_draws,
    }


def run_correlate(cfg: ExperimentConfig, ckpt_path, keep_prob: float = 0.9,
                  n_draws: int = 5) -> dict:
    cfg = resolve_config(cfg)
    ckpt = load_checkpoint(ckpt_path)
    model, mask = model_from_checkpoint(ckpt)
    _, test_ds = build_datasets(cfg)
    rng = substream(cfg.train.seed, "correlate.z")
    return correlate(model, mask, test_ds, keep_prob, n_draws, rng)


def run_export_reliability(cfg: ExperimentConfig, ckpt_path, out_file, n_bins=None) -> Path:
    cfg = resolve_config(cfg)
    ckpt = load_checkpoint(ckpt_path)
    model, mask = model_from_checkpoint(ckpt)
    _, test_ds = build_datasets(cfg)
    if ckpt.method == "rigl_mcdp":
        probs = predict_mc_dropout(model, mask, cfg.train.keep_prob, cfg.train.mc_samples,
                                   test_ds.features, substream(cfg.train.seed, "mc.export"))
    else:
        probs = evaluate(model, test_ds).probs
    bins = reliability_bins(probs, test_ds.labels, n_bins or cfg.calib.n_bins)
    out_file = Path(out_file)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    write_reliability_csv(bins, out_file)
    return out_file
