"""Experiment runners behind the CLI: train, sweep, sizing, spectrum, equiv.

Each runner takes a parsed flat config (or plain arguments), writes
``records.jsonl`` plus flat CSV tables into its output directory, optionally
renders figures next to them, and returns a small summary dict. Sweep cells
run in separate processes; the parent serializes all record emission in cell
order, so reruns of the same config are byte-identical.
"""

from __future__ import annotations

import multiprocessing
import os
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import datasets, equiv, figures, models, perms, pk, records, sizing, spectrum, training


class HarnessError(RuntimeError):
    pass


def resolve_out_dir(explicit, command: str, fp: str) -> Path:
    if explicit:
        return Path(explicit)
    root = os.environ.get("PERMKRON_OUT", "permkron-out")
    return Path(root) / f"{command}-{fp}"


# ---------------------------------------------------------------------------
# model / data assembly from flat configs


def model_config_from(cfg: dict):
    kind = cfgmod.get(cfg, "model.type", "mixer")
    if kind == "mixer":
        mode = cfgmod.get(cfg, "model.permutation_mode", "normal")
        return models.MixerConfig(
            variant=cfgmod.get(cfg, "model.variant", "s_mixer"),
            in_tokens=cfgmod.get(cfg, "model.in_tokens", required=True),
            in_channels=cfgmod.get(cfg, "model.in_channels", required=True),
            tokens=cfgmod.get(cfg, "model.tokens", required=True),
            channels=cfgmod.get(cfg, "model.channels", required=True),
            expansion=cfgmod.get(cfg, "model.expansion", 1),
            depth=cfgmod.get(cfg, "model.depth", 2),
            num_classes=cfgmod.get(cfg, "model.num_classes", required=True),
            permutation_mode=mode,
            perm_seed=cfgmod.get(cfg, "model.perm_seed",
                                 cfgmod.get(cfg, "model.init_seed", 0) if mode == "random" else None),
        )
    if kind == "sw_mlp":
        return models.SWMLPConfig(
            width=cfgmod.get(cfg, "model.width", required=True),
            density=cfgmod.get(cfg, "model.density", required=True),
            expansion=cfgmod.get(cfg, "model.expansion", 1),
            depth=cfgmod.get(cfg, "model.depth", 2),
            mask_seed=cfgmod.get(cfg, "model.mask_seed", 0),
            num_classes=cfgmod.get(cfg, "model.num_classes", required=True),
            in_tokens=cfgmod.get(cfg, "model.in_tokens", required=True),
            in_channels=cfgmod.get(cfg, "model.in_channels", required=True),
        )
    raise cfgmod.ConfigError(f"unknown model.type {kind!r}")


def train_config_from(cfg: dict) -> training.TrainConfig:
    return training.TrainConfig(
        epochs=cfgmod.get(cfg, "train.epochs", 50),
        batch_size=cfgmod.get(cfg, "train.batch_size", 128),
        learning_rate=cfgmod.get(cfg, "train.learning_rate", 0.02),
        momentum=cfgmod.get(cfg, "train.momentum", 0.9),
        lr_floor=cfgmod.get(cfg, "train.lr_floor", 0.0),
        seed=cfgmod.get(cfg, "train.seed", 0),
    )


def prepare_data(cfg: dict, model_config) -> dict:
    source = cfgmod.get(cfg, "data.source", required=True)
    patch_size = cfgmod.get(cfg, "data.patch_size", 4)
    data = datasets.load_dataset(
        source,
        height=cfgmod.get(cfg, "data.height"),
        width=cfgmod.get(cfg, "data.width"),
    )
    if data.num_classes != model_config.num_classes:
        raise HarnessError(
            f"dataset has {data.num_classes} classes, model expects {model_config.num_classes}"
        )
    patched = models.patchify_batch(data.images, patch_size)
    s0, c0 = patched.shape[1], patched.shape[2]
    if (s0, c0) != (model_config.in_tokens, model_config.in_channels):
        raise HarnessError(
            f"patchified shape {(s0, c0)} does not match model input "
            f"{(model_config.in_tokens, model_config.in_channels)}"
        )
    train_part, test_part = datasets.train_test_split(
        datasets.LabeledImages(data.images, data.labels, data.num_classes),
        cfgmod.get(cfg, "data.test_fraction", 0.2),
    )
    return {
        "train_x": models.patchify_batch(train_part.images, patch_size),
        "train_y": train_part.labels,
        "test_x": models.patchify_batch(test_part.images, patch_size),
        "test_y": test_part.labels,
    }


# ---------------------------------------------------------------------------
# train


def run_train(cfg: dict, out_dir: Path, make_figures: bool = True) -> dict:
    out_dir = Path(out_dir)
    fp = cfgmod.fingerprint(cfg)
    model_config = model_config_from(cfg)
    train_config = train_config_from(cfg)
    data = prepare_data(cfg, model_config)
    params = models.init_params(model_config, cfgmod.get(cfg, "model.init_seed", 0))

    records.write_run_meta(out_dir, fp, cfgmod.dump_config(cfg), note="train")
    params, history = training.train(model_config, params, data, train_config)

    with records.RecordWriter(out_dir / "records.jsonl", fp) as writer:
        for row in history:
            writer.write("epoch", row)
    records.write_table(
        out_dir / "metrics.csv",
        ["epoch", "lr", "train_loss", "train_acc", "test_loss", "test_acc"],
        [[row[k] for k in ("epoch", "lr", "train_loss", "train_acc", "test_loss", "test_acc")]
         for row in history],
    )
    models.save_checkpoint(out_dir / "checkpoint.npz", model_config, params)
    if make_figures:
        figures.training_curves_figure(history, out_dir / "training_curves.png")
    final = history[-1]
    return {
        "fingerprint": fp,
        "final_test_acc": final["test_acc"],
        "best_test_acc": max(row["test_acc"] for row in history),
        "epochs": len(history),
        "out_dir": str(out_dir),
    }


# ---------------------------------------------------------------------------
# sweep


def expand_sweep(cfg: dict) -> list[dict]:
    """Cross the sweep axes into per-cell train configs.

    Axes: ``sweep.pairs`` (``tokens:channels`` strings), ``sweep.modes``,
    ``sweep.seeds``, ``sweep.gammas``. A seed drives the init, shuffle and
    permutation seeds of its cell. Base keys live under ``base.``.
    """
    base = {k[len("base."):]: v for k, v in cfg.items() if k.startswith("base.")}
    pairs = cfgmod.get(cfg, "sweep.pairs", None)
    modes = cfgmod.get(cfg, "sweep.modes", ["normal"])
    seeds = cfgmod.get(cfg, "sweep.seeds", [0])
    gammas = cfgmod.get(cfg, "sweep.gammas", [None])
    if pairs is None:
        pairs = [f"{base.get('model.tokens')}:{base.get('model.channels')}"]
    cells = []
    for pair in pairs:
        tokens, _, channels = str(pair).partition(":")
        for gamma in gammas:
            for mode in modes:
                for seed in seeds:
                    cell = dict(base)
                    cell["model.tokens"] = int(tokens)
                    cell["model.channels"] = int(channels)
                    cell["model.permutation_mode"] = str(mode)
                    if gamma is not None:
                        cell["model.expansion"] = int(gamma)
                    cell["model.init_seed"] = int(seed)
                    cell["train.seed"] = int(seed)
                    if str(mode) == "random":
                        cell["model.perm_seed"] = int(seed)
                    cells.append(cell)
    if not cells:
        raise cfgmod.ConfigError("sweep expands to no cells")
    return cells


def _sweep_worker(task):
    index, cell_cfg, cell_dir = task
    try:
        summary = run_train(cell_cfg, Path(cell_dir), make_figures=False)
        summary["failed"] = False
        return index, summary
    except Exception as exc:  # cell failures are recorded, the sweep continues
        return index, {"failed": True, "error": f"{type(exc).__name__}: {exc}"}


def run_sweep(cfg: dict, out_dir: Path, workers: int | None = None,
              make_figures: bool = True) -> dict:
    out_dir = Path(out_dir)
    fp = cfgmod.fingerprint(cfg)
    cells = expand_sweep(cfg)
    records.write_run_meta(out_dir, fp, cfgmod.dump_config(cfg), note="sweep")

    tasks = []
    for i, cell in enumerate(cells):
        name = (f"cell{i:03d}_S{cell['model.tokens']}xC{cell['model.channels']}"
                f"_{cell['model.permutation_mode']}_seed{cell['model.init_seed']}")
        tasks.append((i, cell, str(out_dir / name)))

    if workers is None:
        workers = min(len(tasks), os.cpu_count() or 1)
    workers = max(1, min(workers, len(tasks)))
    if workers == 1:
        results = [_sweep_worker(t) for t in tasks]
    else:
        with multiprocessing.Pool(workers) as pool:
            results = pool.map(_sweep_worker, tasks)
    results.sort(key=lambda pair: pair[0])

    rows = []
    failures = 0
    with records.RecordWriter(out_dir / "records.jsonl", fp) as writer:
        for (i, summary), (_, cell, cell_dir) in zip(results, tasks):
            gamma = cell.get("model.expansion", 1)
            tokens, channels = cell["model.tokens"], cell["model.channels"]
            payload = {
                "cell": i,
                "tokens": tokens,
                "channels": channels,
                "gamma": gamma,
                "m": tokens * channels,
                "omega": float(sizing.omega(tokens, channels, gamma)),
                "mode": cell["model.permutation_mode"],
                "seed": cell["model.init_seed"],
                "dir": str(Path(cell_dir).name),
            }
            payload.update(summary)
            payload.pop("out_dir", None)
            writer.write("sweep_cell", payload)
            rows.append(payload)
            failures += int(summary.get("failed", False))

    records.write_table(
        out_dir / "sweep_cells.csv",
        ["cell", "tokens", "channels", "gamma", "m", "omega", "mode", "seed",
         "best_test_acc", "final_test_acc", "failed"],
        [[r["cell"], r["tokens"], r["channels"], r["gamma"], r["m"], r["omega"],
          r["mode"], r["seed"], r.get("best_test_acc", ""), r.get("final_test_acc", ""),
          r["failed"]] for r in rows],
    )
    _write_sweep_summary(out_dir, rows)
    if make_figures and any(not r["failed"] for r in rows):
        figures.sweep_figure(rows, out_dir / "sweep_accuracy.png")
    return {"fingerprint": fp, "cells": len(rows), "failures": failures,
            "out_dir": str(out_dir)}


def _median(values):
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return ordered[mid]
    return 0.5 * (ordered[mid - 1] + ordered[mid])


def _write_sweep_summary(out_dir: Path, rows):
    """Aggregate over seeds only; the group key pins (S, C, gamma, mode) and
    therefore the budget, so numbers from different budgets never mix."""
    groups: dict = {}
    for row in rows:
        if row["failed"]:
            continue
        key = (row["tokens"], row["channels"], row["gamma"], row["mode"])
        groups.setdefault(key, []).append(row["best_test_acc"])
    table = []
    for (tokens, channels, gamma, mode), accs in sorted(groups.items()):
        table.append([
            tokens, channels, gamma, tokens * channels,
            float(sizing.omega(tokens, channels, gamma)), mode, len(accs),
            _median(accs), sum(accs) / len(accs), min(accs), max(accs),
        ])
    records.write_table(
        out_dir / "sweep_summary.csv",
        ["tokens", "channels", "gamma", "m", "omega", "mode", "seeds",
         "median_best_acc", "mean_best_acc", "min_best_acc", "max_best_acc"],
        table,
    )


# ---------------------------------------------------------------------------
# sizing


def run_sizing(budget: float, gamma: float, candidates, curve: bool,
               out_dir: Path, make_figures: bool = True) -> dict:
    out_dir = Path(out_dir)
    cfg = {"kind": "sizing", "sizing.omega": budget, "sizing.gamma": gamma,
           "sizing.channels": list(candidates), "sizing.curve": curve}
    fp = cfgmod.fingerprint(cfg)
    records.write_run_meta(out_dir, fp, cfgmod.dump_config(cfg), note="sizing")
    report = sizing.sizing_report(budget, gamma, candidates)
    with records.RecordWriter(out_dir / "records.jsonl", fp) as writer:
        writer.write("sizing", {
            "omega": report.omega,
            "gamma": report.gamma,
            "optimum": {"c_star": report.optimum[0], "s_star": report.optimum[1],
                        "m_max": report.optimum[2]},
            "bounds": {"m_lower": report.bounds[0], "m_upper": report.bounds[1]},
            "pairs": [vars(p) for p in report.pairs],
        })
        curve_rows = None
        if curve:
            curve_rows = sizing.width_curve(budget, gamma)
            for c, s_real, m in curve_rows:
                writer.write("sizing_curve_point", {"c": c, "s_real": s_real, "m": m})
    records.write_table(
        out_dir / "pairs.csv",
        ["s", "c", "m", "omega_achieved", "rel_error", "density"],
        [[p.s, p.c, p.m, p.omega_achieved, p.rel_error, p.density] for p in report.pairs],
    )
    if curve:
        records.write_table(out_dir / "width_curve.csv", ["c", "s_real", "m"], curve_rows)
        if make_figures:
            figures.sizing_curve_figure(curve_rows, report.optimum,
                                        out_dir / "width_curve.png")
    return {"fingerprint": fp, "optimum": report.optimum, "pairs": len(report.pairs),
            "out_dir": str(out_dir)}


# ---------------------------------------------------------------------------
# spectrum


def run_spectrum(args: dict, out_dir: Path, make_figures: bool = True) -> dict:
    out_dir = Path(out_dir)
    cfg = {"kind": "spectrum"}
    cfg.update({f"spectrum.{k}": (list(v) if isinstance(v, (list, tuple)) else v)
                for k, v in args.items() if v is not None})
    fp = cfgmod.fingerprint(cfg)
    records.write_run_meta(out_dir, fp, cfgmod.dump_config(cfg), note="spectrum")
    trials = args.get("trials", 20)
    seed = args.get("seed", 0)
    summary: dict = {"fingerprint": fp, "out_dir": str(out_dir)}

    with records.RecordWriter(out_dir / "records.jsonl", fp) as writer:
        if args.get("dense_square"):
            m = int(args["dense_square"])
            largest = []
            last_values = None
            for t in range(trials):
                z = np.random.default_rng([seed, t]).standard_normal((m, m))
                report = spectrum.normalized_spectrum(z, seed=t)
                largest.append(report.largest)
                last_values = report.singular_values
                writer.write("spectrum_trial", {"trial": t, "largest": report.largest,
                                                "rows": m, "cols": m})
            mean_largest = float(np.mean(largest))
            writer.write("spectrum", {"mode": "dense_square", "width": m,
                                      "trials": trials, "mean_largest": mean_largest})
            summary["mean_largest"] = mean_largest
            if make_figures:
                figures.spectrum_histogram(last_values, out_dir / "spectrum_hist.png",
                                           title=f"dense {m}x{m}, last trial")
        if args.get("rect_width"):
            m = int(args["rect_width"])
            gamma = int(args.get("rect_gamma", 4))
            largest = []
            for t in range(trials):
                z = np.random.default_rng([seed, 1000 + t]).standard_normal((gamma * m, m))
                report = spectrum.normalized_spectrum(z, seed=t)
                largest.append(report.largest)
                writer.write("spectrum_trial", {"trial": t, "largest": report.largest,
                                                "rows": gamma * m, "cols": m})
            mean_largest = float(np.mean(largest))
            writer.write("spectrum", {"mode": "rectangular", "width": m, "gamma": gamma,
                                      "trials": trials, "mean_largest": mean_largest,
                                      "limit": 1.0 + float(np.sqrt(gamma))})
            summary["rect_mean_largest"] = mean_largest
        if args.get("a_sweep"):
            a_values = [float(a) for a in args["a_sweep"]]
            budget = float(args.get("omega", 1000.0))
            rows = spectrum.a_sweep(budget, a_values, trials, seed)
            for row in rows:
                writer.write("spectrum_trial", row)
            monotone = 0
            for t in range(trials):
                series = [r["largest"] for r in rows if r["trial"] == t]
                ordered = [r["a"] for r in rows if r["trial"] == t]
                series = [v for _, v in sorted(zip(ordered, series))]
                if all(b > a for a, b in zip(series, series[1:])):
                    monotone += 1
            writer.write("spectrum", {"mode": "a_sweep", "omega": budget,
                                      "a_values": a_values, "trials": trials,
                                      "monotone_sets": monotone})
            summary["monotone_sets"] = monotone
            records.write_table(out_dir / "a_sweep.csv", ["a", "trial", "largest"],
                                [[r["a"], r["trial"], r["largest"]] for r in rows])
            if make_figures:
                figures.a_sweep_figure(rows, out_dir / "a_sweep.png")
        if args.get("pk_dup"):
            n1 = int(args.get("pk_n1", 3))
            dim = int(args.get("pk_dim", 4))
            worst = 0.0
            for t in range(trials):
                rng = np.random.default_rng([seed, 2000 + t])
                w = rng.standard_normal((dim, dim))
                spec = pk.square_spec(w, n1,
                                      perms.random_permutation(n1 * dim, rng),
                                      perms.random_permutation(n1 * dim, rng))
                predicted = spectrum.pk_spectrum(w, n1, spec.perm_in, spec.perm_out)
                actual = spectrum.singular_values(pk.effective_weight(spec))
                worst = max(worst, float(np.abs(predicted - actual).max()))
                writer.write("spectrum_trial", {"trial": t, "max_deviation": worst})
            writer.write("spectrum", {"mode": "pk_duplication", "n1": n1, "dim": dim,
                                      "trials": trials, "max_deviation": worst})
            summary["pk_dup_deviation"] = worst
    return summary


# ---------------------------------------------------------------------------
# equiv


def run_equiv(which, seed: int, nonlinear_middle: bool, out_dir: Path) -> dict:
    out_dir = Path(out_dir)
    cfg = {"kind": "equiv", "equiv.suites": list(which), "equiv.seed": seed,
           "equiv.nonlinear_middle": nonlinear_middle}
    fp = cfgmod.fingerprint(cfg)
    records.write_run_meta(out_dir, fp, cfgmod.dump_config(cfg), note="equiv")
    results = equiv.run_suites(which, seed=seed, nonlinear_middle=nonlinear_middle)
    with records.RecordWriter(out_dir / "records.jsonl", fp) as writer:
        for result in results:
            writer.write("verdict", result.payload())
    return {"fingerprint": fp, "results": results,
            "all_passed": all(r.passed for r in results), "out_dir": str(out_dir)}
