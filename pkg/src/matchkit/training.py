"""Training loop (Adam + L1 clipping), checkpoints and the evaluation harness."""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .datagen import DatasetRecord
from .mechanisms import rsd
from .metrics import (
    hamming_distance,
    ir_violation,
    num_blocking_pairs,
    reward_ratio,
    stability_violation,
    wilcoxon_one_sided,
)
from .neuralsd import forward_infer, forward_train, loss_with_stability_reg
from .ranking import PARAM_NAMES, RankingParams, init_params

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 4
    learning_rate: float = 0.1
    tau: float = 0.1
    d_emb: int = 10
    clip_l1_max: float = 10.0
    lambda_stability: float = 0.0
    seed: int = 0
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.d_emb < 1:
            raise ValueError("epochs >= 0, batch_size >= 1 and d_emb >= 1 required")
        if not (self.learning_rate > 0 and self.tau > 0 and self.clip_l1_max > 0):
            raise ValueError("learning_rate, tau and clip_l1_max must be positive")
        if self.lambda_stability < 0:
            raise ValueError("lambda_stability must be non-negative")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))


def clip_grad_l1(grads: Sequence[np.ndarray], max_norm: float) -> list[np.ndarray]:
    total = math.fsum(float(np.abs(g).sum()) for g in grads)
    if total <= max_norm:
        return [g.copy() for g in grads]
    scale = max_norm / total
    return [g * scale for g in grads]


@dataclass
class AdamState:
    t: int
    m: list
    v: list

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    b1, b2 = betas
    t = state.t + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        new_p.append(p - lr * mhat / (np.sqrt(vhat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(t, new_m, new_v)


# --------------------------------------------------------------------------
# checkpoints

@dataclass
class Checkpoint:
    params: RankingParams
    config: TrainConfig
    final_loss: float = float("nan")
    loss_curve: list = field(default_factory=list)

    def to_json(self) -> str:
        arrays = self.params.arrays()
        obj = {
            "format_version": CHECKPOINT_VERSION,
            "d": self.params.d,
            "d_emb": self.params.d_emb,
            "tau": self.params.tau,
            "params": {k: arrays[k].tolist() for k in PARAM_NAMES},
            "config": asdict(self.config),
            "final_loss": self.final_loss,
            "loss_curve": list(self.loss_curve),
        }
        return json.dumps(obj, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Checkpoint":
        obj = json.loads(text)
        if obj.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {obj.get('format_version')}")
        params = RankingParams(**{k: np.array(obj["params"][k], dtype=np.float64) for k in PARAM_NAMES},
                               tau=float(obj["tau"]))
        if params.d != obj["d"] or params.d_emb != obj["d_emb"]:
            raise ValueError("checkpoint dimensions disagree with its parameters")
        cfg = dict(obj["config"])
        cfg["betas"] = tuple(cfg["betas"])
        return cls(params, TrainConfig(**cfg), float(obj["final_loss"]), list(obj["loss_curve"]))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# training

class NonFiniteLoss(FloatingPointError):
    pass


def record_loss(params: RankingParams, rec: DatasetRecord, lam: float, L: int):
    out = forward_train(rec.profile, rec.instance.contexts_w, rec.instance.contexts_f, params)
    return loss_with_stability_reg(out.soft_matching, rec.example, rec.profile, lam, L)


def train(records: Sequence[DatasetRecord], config: TrainConfig, params: RankingParams | None = None,
          on_epoch=None) -> Checkpoint:
    """Minimise the mean per-record loss over shuffled mini-batches."""
    if not records:
        raise ValueError("empty training set")
    sizes = {(r.n, r.m) for r in records}
    if len(sizes) != 1:
        raise ValueError(f"training records mix instance sizes {sorted(sizes)}")
    d = records[0].instance.d
    if params is None:
        params = init_params(d, config.d_emb, seed=config.seed, tau=config.tau)
    values = [params.arrays()[k] for k in PARAM_NAMES]
    state = AdamState.zeros_like(values)
    rng = np.random.default_rng(config.seed)
    L = len(records)
    curve = []
    for epoch in range(config.epochs):
        order = rng.permutation(L)
        epoch_losses = []
        for start in range(0, L, config.batch_size):
            batch = order[start:start + config.batch_size]
            leaves = RankingParams(**{k: ad.Tensor(v, requires_grad=True) for k, v in zip(PARAM_NAMES, values)},
                                   tau=config.tau)
            grads = [np.zeros_like(v) for v in values]
            for idx in batch:
                lv = record_loss(leaves, records[idx], config.lambda_stability, L)
                val = lv.item()
                if not math.isfinite(val):
                    raise NonFiniteLoss(f"non-finite loss {val} at record {int(idx)} (epoch {epoch})")
                epoch_losses.append(val)
                for k in PARAM_NAMES:
                    getattr(leaves, k).zero_grad()
                ad.backward(lv)
                for gi, k in enumerate(PARAM_NAMES):
                    g = getattr(leaves, k).grad
                    if g is not None:
                        grads[gi] += g / len(batch)
            grads = clip_grad_l1(grads, config.clip_l1_max)
            values, state = adam_step(values, grads, state, config.learning_rate, config.betas, config.eps)
        mean_loss = float(np.mean(epoch_losses))
        curve.append(mean_loss)
        log.info("epoch %d mean loss %.6f", epoch + 1, mean_loss)
        if on_epoch is not None:
            on_epoch(epoch + 1, mean_loss)
    final = RankingParams(**dict(zip(PARAM_NAMES, values)), tau=config.tau)
    return Checkpoint(final, config, curve[-1] if curve else float("nan"), curve)


# --------------------------------------------------------------------------
# evaluation

LOWER_IS_BETTER = {"HD": True, "BP": True, "SV": True, "IRV": True, "RW": False}


def metrics_for(mechanism: str) -> tuple[str, ...]:
    return ("HD", "BP", "SV", "IRV") if mechanism == "DA" else ("HD", "RW")


def record_metrics(M, rec: DatasetRecord, names) -> dict:
    out = {}
    for name in names:
        if name == "HD":
            out[name] = hamming_distance(M, rec.example)
        elif name == "BP":
            out[name] = num_blocking_pairs(M, rec.profile)
        elif name == "SV":
            out[name] = stability_violation(M, rec.profile)
        elif name == "IRV":
            out[name] = ir_violation(M, rec.profile)
        elif name == "RW":
            out[name] = reward_ratio(M, rec.profile, rec.reward_spec(), rec.example)
    return out


def rsd_rng(seed: int, record_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(record_id), 0x525344]))


def thread_count(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("MATCHKIT_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    if threads < 1:
        raise ValueError("thread count must be positive")
    return threads


@dataclass
class EvalResult:
    rows: list            # dicts: record_id, model, metric, value
    aggregate: dict       # model -> metric -> {mean, std, n}
    wilcoxon: dict        # metric -> p-value (NeuralSD better than the baseline)

    def values(self, model: str, metric: str) -> np.ndarray:
        return np.array([r["value"] for r in self.rows if r["model"] == model and r["metric"] == metric])

    def mean(self, model: str, metric: str) -> float:
        return self.aggregate[model][metric]["mean"]


def evaluate(params: RankingParams, records: Sequence[DatasetRecord], seed: int = 0,
             metrics: Sequence[str] | None = None, threads: int | None = None) -> EvalResult:
    """NeuralSD (hard inference) against RSD on the same records."""
    if not records:
        raise ValueError("empty test set")
    if records[0].instance.d != params.d:
        raise ValueError(f"checkpoint context dim {params.d} != dataset dim {records[0].instance.d}")
    names = tuple(metrics) if metrics else metrics_for(records[0].mechanism)

    def one(item):
        rid, rec = item
        M_nn = forward_infer(rec.profile, rec.instance.contexts_w, rec.instance.contexts_f, params)
        M_rsd = rsd(rec.profile, rsd_rng(seed, rid))
        return rid, record_metrics(M_nn, rec, names), record_metrics(M_rsd, rec, names)

    with ThreadPoolExecutor(max_workers=thread_count(threads)) as pool:
        results = list(pool.map(one, enumerate(records)))

    rows = []
    for rid, nn, base in results:
        for model, vals in (("NeuralSD", nn), ("RSD", base)):
            for name in names:
                rows.append({"record_id": rid, "model": model, "metric": name, "value": vals[name]})
    aggregate = {}
    for model in ("NeuralSD", "RSD"):
        aggregate[model] = {}
        for name in names:
            v = np.array([r["value"] for r in rows if r["model"] == model and r["metric"] == name])
            aggregate[model][name] = {"mean": float(v.mean()), "std": float(v.std()), "n": int(len(v))}
    wil = {}
    for name in names:
        a = np.array([nn[name] for _, nn, _ in results])
        b = np.array([base[name] for _, _, base in results])
        alt = "less" if LOWER_IS_BETTER[name] else "greater"
        try:
            wil[name] = wilcoxon_one_sided(a, b, alt)
        except ValueError:
            wil[name] = float("nan")     # identical columns
    return EvalResult(rows, aggregate, wil)
