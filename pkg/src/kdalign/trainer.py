"""Distillation training loop: stream batches, run the student head on both
input streams, evaluate the weighted objective against frozen teacher
embeddings, maintain the negative queue, and step Adam. Fully deterministic
given the config seed."""

import copy
import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import Dataset, batches_per_epoch, load_batches
from .errors import BadConfig, NonFiniteLoss
from .metrics import multilingual_i2t_r1
from .negqueue import NegativeQueue
from .objectives import (OBJECTIVE_NAMES, AnchorTriple, LossReport,
                         Temperatures, combined_loss, validate_weights)
from .student import (OptimizerState, adam_step, add_grads, load_checkpoint,
                      save_checkpoint, student_forward, student_backward,
                      student_init)

log = logging.getLogger("kdalign")

DEFAULT_CONFIG = {
    "seed": 0,
    "batch_size": 64,
    "epochs": 3,
    "base_lr": 1e-5,
    "warmup_steps": 1000,
    "eval_every": 200,
    "dtype": "f64",
    "loss": {
        "weights": {"FD": 1.0, "ED": 0.0, "SD": 0.0, "MCL": 0.0, "DR": 0.0},
        "temperatures": {"tau_T": 0.05, "tau_S": 0.07, "tau_MCL": 0.07, "tau_SD": 1.0},
        "similarity": "cosine",
    },
    "queue": {"capacity": 4096, "dr_min": 64},
    "student": {"arch": "linear", "hidden_dim": 32},
}


def default_config():
    return copy.deepcopy(DEFAULT_CONFIG)


def apply_override(cfg: dict, dotted_key: str, raw_value: str):
    """Set a dotted config key from its string form, type-checked against the
    default schema. Unknown keys are rejected."""
    parts = dotted_key.split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node:
            raise BadConfig(f"unknown config key '{dotted_key}'")
        node = node[p]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise BadConfig(f"unknown config key '{dotted_key}'")
    current = node[leaf]
    try:
        if isinstance(current, bool):
            value = raw_value.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            value = int(raw_value)
        elif isinstance(current, float):
            value = float(raw_value)
        elif isinstance(current, str):
            value = raw_value
        else:
            raise BadConfig(f"key '{dotted_key}' is not overridable")
    except ValueError:
        raise BadConfig(f"cannot parse '{raw_value}' for key '{dotted_key}'")
    node[leaf] = value


def load_config(path=None, overrides=()):
    cfg = default_config()
    if path is not None:
        with open(path) as f:
            user = json.load(f)
        _merge_checked(cfg, user, prefix="")
    for item in overrides:
        if "=" not in item:
            raise BadConfig(f"override '{item}' must be key=value")
        k, v = item.split("=", 1)
        apply_override(cfg, k, v)
    validate_config(cfg)
    return cfg


def _merge_checked(base, user, prefix):
    for k, v in user.items():
        key = f"{prefix}{k}"
        if k not in base:
            raise BadConfig(f"unknown config key '{key}'")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise BadConfig(f"config key '{key}' must be an object")
            _merge_checked(base[k], v, prefix=f"{key}.")
        else:
            if isinstance(base[k], float) and isinstance(v, int):
                v = float(v)
            if type(v) is not type(base[k]):
                raise BadConfig(f"config key '{key}' has wrong type")
            base[k] = v


def validate_config(cfg):
    if cfg["batch_size"] < 1 or cfg["epochs"] < 1:
        raise BadConfig("batch_size and epochs must be >= 1")
    if cfg["base_lr"] <= 0:
        raise BadConfig("base_lr must be > 0")
    if cfg["warmup_steps"] < 0 or cfg["eval_every"] < 1:
        raise BadConfig("warmup_steps >= 0 and eval_every >= 1 required")
    if cfg["dtype"] not in ("f32", "f64"):
        raise BadConfig("dtype must be f32 or f64")
    validate_weights(cfg["loss"]["weights"])
    for name, tau in cfg["loss"]["temperatures"].items():
        if tau <= 0:
            raise BadConfig(f"temperature {name} must be > 0")
    if cfg["queue"]["capacity"] < 1:
        raise BadConfig("queue capacity must be >= 1")
    if cfg["student"]["arch"] not in ("linear", "mlp2"):
        raise BadConfig("student arch must be linear or mlp2")


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)  # per-step dicts
    wall_clock: list = field(default_factory=list)

    def write_csv(self, path):
        names = [f"loss_{n}" for n in OBJECTIVE_NAMES]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "total_loss"] + names + ["lr", "val_r1"])
            for r in self.rows:
                w.writerow(
                    [r["step"], repr(r["total"])]
                    + [repr(r["components"][n]) if n in r["components"] else ""
                       for n in OBJECTIVE_NAMES]
                    + [repr(r["lr"]),
                       repr(r["val_r1"]) if r.get("val_r1") is not None else ""])


def _temps_from_cfg(cfg):
    t = cfg["loss"]["temperatures"]
    return Temperatures(t["tau_T"], t["tau_S"], t["tau_MCL"], t["tau_SD"])


def _embed_fn(params, ds, dtype):
    def fn(lang, ids):
        X = ds.base[lang][ids].astype(dtype)
        Z, _ = student_forward(params, X)
        return Z
    return fn


def train(cfg, manifest_path, out_dir, params=None, opt=None, queue=None,
          start_step=0):
    """Run the full loop; returns (params, TrainHistory). Pass restored state
    plus start_step to continue from a checkpoint."""
    ds = Dataset(manifest_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    seed = cfg["seed"]
    weights = dict(cfg["loss"]["weights"])
    temps = _temps_from_cfg(cfg)
    sim = cfg["loss"]["similarity"]
    dtype = np.float32 if cfg["dtype"] == "f32" else np.float64
    dr_active = weights.get("DR", 0.0) > 0

    if params is None:
        params = student_init(cfg["student"]["arch"], ds.base_dim,
                              ds.teacher_dim, seed,
                              hidden_dim=cfg["student"]["hidden_dim"])
    if opt is None:
        opt = OptimizerState.new(params.flat().size, cfg["base_lr"],
                                 cfg["warmup_steps"])
    if dr_active and queue is None:
        queue = NegativeQueue(cfg["queue"]["capacity"], ds.teacher_dim)

    bpe = batches_per_epoch(ds, "train", cfg["batch_size"])
    total_steps = cfg["epochs"] * bpe
    history = TrainHistory()
    val_fn = _embed_fn(params, ds, dtype)
    dr_warned = False

    step = 0
    for epoch in range(cfg["epochs"]):
        for batch in load_batches(ds, "train", cfg["batch_size"], seed, epoch):
            step += 1
            if step <= start_step:
                continue
            zS_m, tape_m = student_forward(params, batch["X_m"].astype(dtype))
            zS_e, tape_e = student_forward(params, batch["X_e"].astype(dtype))
            T = batch["T"].astype(dtype)

            snap = None
            step_weights = weights
            if dr_active:
                queue.push_batch(batch["T"])
                if len(queue) >= cfg["queue"]["dr_min"]:
                    snap = queue.snapshot().astype(dtype)
                else:
                    step_weights = dict(weights, DR=0.0)
                    if not dr_warned:
                        log.warning(
                            "step %d: DR skipped until queue reaches %d rows "
                            "(have %d)", step, cfg["queue"]["dr_min"], len(queue))
                        dr_warned = True

            t0 = time.perf_counter()
            triple = AnchorTriple(zS_m, zS_e, T)
            if any(v > 0 for v in step_weights.values()):
                rep = combined_loss(triple, snap, step_weights, temps, sim)
            else:
                # DR-only config while the queue is still warming up
                rep = LossReport(0.0, np.zeros_like(zS_m), np.zeros_like(zS_e))
            if not np.isfinite(rep.value):
                raise NonFiniteLoss(f"non-finite loss at step {step}")

            grads = add_grads(
                student_backward(params, tape_m, rep.grad_zS_m),
                student_backward(params, tape_e, rep.grad_zS_e))
            lr = opt.effective_lr()
            adam_step(opt, params, grads)
            history.wall_clock.append(time.perf_counter() - t0)

            row = {"step": step, "total": rep.value,
                   "components": rep.components, "lr": lr, "val_r1": None}
            if step % cfg["eval_every"] == 0 or step == total_steps:
                row["val_r1"] = multilingual_i2t_r1(val_fn, ds, "val")
            history.rows.append(row)
        save_checkpoint(out / f"checkpoint_epoch{epoch + 1}.kdck", params, opt,
                        seed, step, queue)

    save_checkpoint(out / "checkpoint.kdck", params, opt, seed, step, queue)
    history.write_csv(out / "history.csv")
    return params, history


def resume(checkpoint_path, cfg, manifest_path, out_dir):
    """Continue a run from a KDCK checkpoint; the continued segment matches an
    uninterrupted run step-for-step in f64 mode."""
    state = load_checkpoint(checkpoint_path)
    queue = None
    if state["queue"] is not None:
        qs = state["queue"]
        queue = NegativeQueue.from_state(qs["capacity"], qs["dim"], qs["rows"])
    cfg = copy.deepcopy(cfg)
    cfg["seed"] = state["seed"]
    return train(cfg, manifest_path, out_dir, params=state["params"],
                 opt=state["opt"], queue=queue, start_step=state["step"])
