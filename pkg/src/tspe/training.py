"""Batching, Adam training with early stopping, and stratified k-fold CV."""
from __future__ import annotations

import logging
import math
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import PairDataset, SubgraphCatalog
from .metrics import accuracy, roc_auc
from .model import ModelConfig, PairBatch, TransformerModel, probability
from .numerics import autodiff as ad
from .numerics.rng import Xoshiro256, child_seed

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 20
    valid_fraction: float = 0.1
    max_epochs: int = 200
    patience: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.valid_fraction < 1.0:
            raise ValueError("valid_fraction must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.max_epochs < 0 or self.patience < 1:
            raise ValueError("max_epochs must be >= 0 and patience >= 1")


# ---------------------------------------------------------------- batching

def pair_members(dataset: PairDataset, catalog: SubgraphCatalog):
    out = []
    for p in dataset.pairs:
        a, b = catalog.members_of(p.subgraph_a), catalog.members_of(p.subgraph_b)
        if not a or not b:
            raise ValueError(f"pair ({p.subgraph_a}, {p.subgraph_b}) has an empty subgraph")
        out.append((a, b))
    return out


def build_batch(members, labels, encodings: np.ndarray, dtype="float32",
                extra_pad: int = 0) -> PairBatch:
    """Pad each side to its longest subgraph (plus ``extra_pad`` slots)."""
    width = encodings.shape[1]
    b = len(members)
    n_a = max(len(m[0]) for m in members) + extra_pad
    n_b = max(len(m[1]) for m in members) + extra_pad
    enc = np.zeros((b, n_a, width), dtype=dtype)
    dec = np.zeros((b, n_b, width), dtype=dtype)
    enc_mask = np.zeros((b, n_a), dtype=bool)
    dec_mask = np.zeros((b, n_b), dtype=bool)
    for i, (ma, mb) in enumerate(members):
        enc[i, :len(ma)] = encodings[list(ma)]
        dec[i, :len(mb)] = encodings[list(mb)]
        enc_mask[i, :len(ma)] = True
        dec_mask[i, :len(mb)] = True
    return PairBatch(enc, enc_mask, dec, dec_mask, np.asarray(labels, dtype=np.int64))


def make_batches(pairs: PairDataset, encodings: np.ndarray, catalog: SubgraphCatalog,
                 batch_size: int, seed: int | None = None, dtype="float32"):
    """Padded batches; the pair order is shuffled when ``seed`` is given."""
    members = pair_members(pairs, catalog)
    labels = pairs.labels
    order = np.arange(len(members))
    if seed is not None:
        order = Xoshiro256(seed).permutation(len(members))
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        yield build_batch([members[i] for i in idx], labels[idx], encodings, dtype)


# ---------------------------------------------------------------- optimizer

class Adam:
    """Adam over a fixed set of named arrays, updated in place.

    Moments live in one flat buffer so a step is a handful of vector ops.
    """

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.names = list(params)
        sizes = [params[n].size for n in self.names]
        self.bounds = np.cumsum([0] + sizes)
        dtype = np.result_type(*(params[n].dtype for n in self.names))
        self.m = np.zeros(self.bounds[-1], dtype=dtype)
        self.v = np.zeros(self.bounds[-1], dtype=dtype)
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        g = np.concatenate([grads[n].ravel() for n in self.names])
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * g
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * (g * g)
        update = (self.lr / c1) * self.m / (np.sqrt(self.v / c2) + self.eps)
        for n, lo, hi in zip(self.names, self.bounds[:-1], self.bounds[1:]):
            p = params[n]
            p -= update[lo:hi].reshape(p.shape).astype(p.dtype, copy=False)


# ---------------------------------------------------------------- training

def stratified_split(labels, fraction: float, seed: int):
    """Split indices into (train, held) with ``round(fraction * n_c)`` per class held."""
    labels = np.asarray(labels)
    rng = Xoshiro256(seed)
    train, held = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        perm = idx[rng.permutation(idx.size)]
        n_held = int(round(fraction * idx.size))
        if idx.size >= 2:
            n_held = min(max(n_held, 1), idx.size - 1)
        held.extend(perm[:n_held].tolist())
        train.extend(perm[n_held:].tolist())
    return np.sort(np.asarray(train, dtype=np.int64)), np.sort(np.asarray(held, dtype=np.int64))


def batch_loss(model: TransformerModel, batch: PairBatch) -> float:
    return float(ad.bce_with_logits(model.forward(batch), batch.labels).data)


def dataset_loss(model, batches) -> float:
    total, count = 0.0, 0
    for batch in batches:
        total += batch_loss(model, batch) * len(batch)
        count += len(batch)
    return total / count


def train_step(model: TransformerModel, batch: PairBatch, optimizer: Adam, generator=None):
    leaves = model.leaves()
    with ad.Tape() as tape:
        logits = model.forward(batch, leaves=leaves, generator=generator)
        loss = ad.bce_with_logits(logits, batch.labels)
    grads = ad.backward(tape, loss, leaves.values())
    optimizer.step(model.params, grads)
    return float(loss.data)


@dataclass
class TrainLog:
    train_loss: list[float] = field(default_factory=list)
    valid_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_epoch: int = 0

    def to_dict(self):
        return asdict(self)


def _epoch_encodings(encodings, model_cfg, epoch_rng):
    if isinstance(encodings, np.ndarray):
        return encodings
    signs = None
    if model_cfg.lpe_sign_flip and encodings.lpe is not None:
        signs = np.where(np.array([epoch_rng.random() for _ in range(encodings.lpe.k)]) < 0.5,
                         -1.0, 1.0)
    return encodings.compose(signs)


def fit(model: TransformerModel, pairs: PairDataset, encodings, catalog: SubgraphCatalog,
        cfg: TrainConfig, epochs: int, valid: PairDataset | None = None,
        patience: int | None = None, use_dropout: bool = True):
    """Run up to ``epochs`` epochs of Adam; returns ``(best_params, TrainLog)``.

    With ``valid`` given, keeps the parameters of the lowest validation loss
    and stops after ``patience`` epochs without improvement.
    """
    rng = Xoshiro256(child_seed(cfg.seed, "fit"))
    drop_gen = rng.spawn("dropout").numpy_generator() if use_dropout and model.cfg.dropout else None
    sign_rng = rng.spawn("lpe-sign")
    optimizer = Adam(model.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    history = TrainLog()
    fixed = _epoch_encodings(encodings, model.cfg, sign_rng) if not model.cfg.lpe_sign_flip else None
    valid_batches = None
    if valid is not None:
        static = encodings if isinstance(encodings, np.ndarray) else encodings.compose()
        valid_batches = list(make_batches(valid, static, catalog, cfg.batch_size,
                                          dtype=model.cfg.dtype))
    best = model.copy_params()
    best_loss = math.inf
    stale = 0
    for epoch in range(epochs):
        enc = fixed if fixed is not None else _epoch_encodings(encodings, model.cfg, sign_rng)
        total, count = 0.0, 0
        for b_idx, batch in enumerate(make_batches(pairs, enc, catalog, cfg.batch_size,
                                                   seed=rng.next_u64(), dtype=model.cfg.dtype)):
            loss = train_step(model, batch, optimizer, drop_gen)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b_idx}")
            total += loss * len(batch)
            count += len(batch)
        history.train_loss.append(total / count)
        history.stopped_epoch = epoch + 1
        if valid_batches is None:
            continue
        vloss = dataset_loss(model, valid_batches)
        history.valid_loss.append(vloss)
        if vloss < best_loss:
            best_loss, stale = vloss, 0
            best = model.copy_params()
            history.best_epoch = epoch
        else:
            stale += 1
            if patience is not None and stale >= patience:
                break
    if valid_batches is None:
        best = model.copy_params()
        history.best_epoch = history.stopped_epoch - 1
    return best, history


def train(model_cfg: ModelConfig, pairs: PairDataset, encodings, catalog: SubgraphCatalog,
          cfg: TrainConfig):
    """Fresh model, stratified validation split, early stopping.

    Returns ``(TransformerModel with best-validation parameters, TrainLog,
    (train_idx, valid_idx))``.
    """
    if len(pairs) < cfg.batch_size:
        raise ValueError(f"{len(pairs)} training pairs is fewer than batch size {cfg.batch_size}")
    train_idx, valid_idx = stratified_split(pairs.labels, cfg.valid_fraction,
                                            child_seed(cfg.seed, "valid-split"))
    model = TransformerModel(model_cfg, seed=child_seed(cfg.seed, "init"))
    best, history = fit(model, pairs.subset(train_idx), encodings, catalog, cfg,
                        cfg.max_epochs, valid=pairs.subset(valid_idx), patience=cfg.patience)
    model.params = best
    return model, history, (train_idx, valid_idx)


def predict(model: TransformerModel, pairs: PairDataset, encodings, catalog, batch_size=64):
    static = encodings if isinstance(encodings, np.ndarray) else encodings.compose()
    logits = [model.forward(b).data for b in make_batches(pairs, static, catalog, batch_size,
                                                          dtype=model.cfg.dtype)]
    return probability(np.concatenate(logits))


# ---------------------------------------------------------------- cross-validation

@dataclass
class FoldPlan:
    folds: list[np.ndarray]

    @property
    def k(self):
        return len(self.folds)

    def train_indices(self, i):
        return np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))


def stratified_kfold(labels, k: int, seed: int) -> FoldPlan:
    """Shuffle each class (seeded) and deal round-robin into ``k`` folds.

    The dealing position carries over from one class to the next, which
    keeps fold sizes within one of each other.
    """
    labels = np.asarray(labels if not isinstance(labels, PairDataset) else labels.labels)
    if k < 2:
        raise ValueError("k must be at least 2")
    rng = Xoshiro256(seed)
    folds = [[] for _ in range(k)]
    pos = 0
    for cls in (1, 0):
        idx = np.flatnonzero(labels == cls)
        if idx.size < k:
            raise ValueError(f"class {cls} has {idx.size} members, fewer than k={k}")
        for i in idx[rng.permutation(idx.size)]:
            folds[pos % k].append(int(i))
            pos += 1
    return FoldPlan([np.sort(np.asarray(f, dtype=np.int64)) for f in folds])


@dataclass
class MetricsReport:
    folds: list[dict]
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    dropped_folds: list[int] = field(default_factory=list)

    def _values(self, key, drop=True):
        return np.array([f[key] for i, f in enumerate(self.folds)
                         if not (drop and i in self.dropped_folds)])

    def mean(self, key, drop=True) -> float:
        return float(self._values(key, drop).mean())

    def std(self, key, drop=True) -> float:
        v = self._values(key, drop)
        return float(v.std(ddof=1)) if v.size > 1 else 0.0

    def drop_worst(self, n: int) -> "MetricsReport":
        order = sorted(range(len(self.folds)), key=lambda i: (self.folds[i]["roc_auc"], i))
        return MetricsReport(self.folds, self.config, self.seeds, sorted(order[:n]))

    def to_dict(self) -> dict:
        keys = ("roc_auc", "accuracy")
        doc = {
            "config": self.config,
            "seeds": self.seeds,
            "folds": self.folds,
            "mean": {k: self.mean(k, drop=False) for k in keys},
            "std": {k: self.std(k, drop=False) for k in keys},
        }
        if self.dropped_folds:
            doc["dropped_folds"] = self.dropped_folds
            doc["mean_after_drop"] = {k: self.mean(k) for k in keys}
            doc["std_after_drop"] = {k: self.std(k) for k in keys}
        return doc

    def table(self, label: str = "") -> str:
        lines = [f"{'fold':>6}  {'ROC AUC':>8}  {'Accuracy':>8}"]
        for i, f in enumerate(self.folds):
            mark = "  (dropped)" if i in self.dropped_folds else ""
            lines.append(f"{i:>6}  {f['roc_auc']:8.4f}  {f['accuracy']:8.4f}{mark}")
        tag = f" {label}" if label else ""
        for key, name in (("roc_auc", "ROC AUC"), ("accuracy", "Accuracy")):
            lines.append(f"{name}{tag}: {self.mean(key, False):.4f} ± {self.std(key, False):.4f}")
            if self.dropped_folds:
                lines.append(f"{name}{tag} after dropping {len(self.dropped_folds)} fold(s): "
                             f"{self.mean(key):.4f} ± {self.std(key):.4f}")
        return "\n".join(lines)


def _run_fold(args):
    fold, train_idx, test_idx, dataset, encodings, catalog, model_cfg, train_cfg = args
    overlap = np.intersect1d(train_idx, test_idx)
    assert overlap.size == 0, f"fold {fold}: test pairs leak into training"
    model, history, _ = train(model_cfg, dataset.subset(train_idx), encodings, catalog, train_cfg)
    test = dataset.subset(test_idx)
    probs = predict(model, test, encodings, catalog)
    labels = test.labels
    return {
        "fold": fold,
        "roc_auc": roc_auc(probs, labels),
        "accuracy": accuracy(probs, labels),
        "epochs": history.stopped_epoch,
        "best_epoch": history.best_epoch,
    }


def fold_seed(master: int, fold: int) -> int:
    return child_seed(master, f"fold-{fold}")


def cross_validate(dataset: PairDataset, encodings, catalog: SubgraphCatalog,
                   model_cfg: ModelConfig, train_cfg: TrainConfig, k: int, seed: int,
                   jobs: int = 1, plan: FoldPlan | None = None) -> MetricsReport:
    """One fresh model per fold, evaluated on the held-out fold.

    Fold seeds are derived from ``seed`` before any work starts, so results
    do not depend on ``jobs``.
    """
    if plan is None:
        plan = stratified_kfold(dataset.labels, k, child_seed(seed, "folds"))
    width = encodings.shape[1] if isinstance(encodings, np.ndarray) else encodings.width
    if width != model_cfg.input_width:
        model_cfg = ModelConfig(**{**model_cfg.to_dict(), "input_width": width})
    tasks = []
    for i in range(plan.k):
        cfg_i = TrainConfig(**{**asdict(train_cfg), "seed": fold_seed(seed, i)})
        tasks.append((i, plan.train_indices(i), plan.folds[i], dataset, encodings, catalog,
                      model_cfg, cfg_i))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]
    for r in results:
        log.info("fold %d: roc_auc=%.4f accuracy=%.4f (%d epochs)",
                 r["fold"], r["roc_auc"], r["accuracy"], r["epochs"])
    seeds = OrderedDict(master=seed, folds=[fold_seed(seed, i) for i in range(plan.k)])
    return MetricsReport(results, {"model": model_cfg.to_dict(), "train": asdict(train_cfg),
                                   "k": plan.k}, dict(seeds))
