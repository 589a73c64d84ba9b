"""Minibatch training with early stopping, evaluation metrics and the cross-validation protocol."""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from spin.data import FoldPlan
from spin.model import GraphSet, SpinConfig, SpinParams, backward_batch, forward_batch
from spin.nn import AdamState, adam_step, make_rng, one_hot, softmax, softmax_cross_entropy

log = logging.getLogger(__name__)

# Hyperparameter sets reported as best-performing per dataset (batch size,
# branch count R, intermediate dimension, learning rate, L2).
HYPERPARAMETER_GRID = {
    "DD": dict(batch_size=[16, 32], R=[2, 3, 4], hidden_dim=[16, 32, 64], learning_rate=5e-3, l2=0.0),
    "NCI1": dict(batch_size=[64, 128], R=[1, 2], hidden_dim=[16, 32], learning_rate=1e-3, l2=0.0),
    "PROTEINS": dict(batch_size=[16, 32, 64], R=[2, 3], hidden_dim=[8, 16], learning_rate=1e-3, l2=0.0),
    "ENZYMES": dict(batch_size=[8, 16, 32], R=[2, 3], hidden_dim=[8, 16], learning_rate=1e-3, l2=1e-3),
    "IMDB-BINARY": dict(batch_size=[16, 32], R=[2, 3, 4], hidden_dim=[8, 16, 32], learning_rate=5e-3, l2=0.0),
    "IMDB-MULTI": dict(batch_size=[16, 32, 64], R=[2, 3, 4], hidden_dim=[8, 16, 32], learning_rate=5e-3, l2=0.0),
    "REDDIT-BINARY": dict(batch_size=[32, 64, 128], R=[3, 4], hidden_dim=[8, 16], learning_rate=5e-3, l2=0.0),
    "REDDIT-MULTI-5K": dict(batch_size=[64, 128], R=[3, 4], hidden_dim=[8, 16], learning_rate=5e-3, l2=0.0),
    "COLLAB": dict(batch_size=[32, 64, 128], R=[2, 3, 4], hidden_dim=[8, 16, 32, 64], learning_rate=5e-3, l2=5e-4),
}


class NonFiniteLoss(ArithmeticError):
    """Training diverged (CLI exit code 3)."""


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-3
    max_epochs: int = 200
    patience: int = 30
    l2: float = 0.0
    seed: int = 0
    repeats_per_fold: int = 3
    min_delta: float = 1e-4

    def __post_init__(self):
        if self.batch_size < 1 or self.patience < 1 or self.repeats_per_fold < 1:
            raise ValueError("batch_size, patience and repeats_per_fold must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass
class TrainResult:
    params: SpinParams
    best_val_accuracy: float
    best_epoch: int
    curves: list  # (epoch, train_loss, val_accuracy)

    @property
    def epochs_run(self) -> int:
        return len(self.curves)


def loss_and_grads(params, config, batch: GraphSet, rng=None, training=True):
    logits, cache = forward_batch(params, config, batch, training=training, rng=rng)
    y = one_hot(batch.labels, config.num_classes, logits.dtype)
    loss, grad = softmax_cross_entropy(logits, y)
    return loss, backward_batch(params, config, cache, grad), logits


def predict_logits(params, config, graphs: GraphSet, chunk: int = 1024) -> np.ndarray:
    out = []
    for start in range(0, len(graphs), chunk):
        idx = np.arange(start, min(start + chunk, len(graphs)))
        part = graphs if len(idx) == len(graphs) else graphs.subset(idx)
        logits, _ = forward_batch(params, config, part, training=False)
        out.append(logits)
    return np.concatenate(out)


def auroc(scores, labels) -> float:
    """Area under the ROC curve from the Mann-Whitney rank statistic (ties averaged)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1
        i = j + 1
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def evaluate(params, config, graphs: GraphSet, with_auroc: bool = False) -> dict:
    """Accuracy (and AUROC for binary tasks). Has no side effects on ``params``."""
    if np.any(graphs.labels < 0):
        raise ValueError("evaluation set has unlabeled graphs")
    logits = predict_logits(params, config, graphs)
    metrics = {"accuracy": float(np.mean(np.argmax(logits, axis=1) == graphs.labels))}
    if with_auroc:
        if config.num_classes != 2:
            raise ValueError("AUROC is only defined here for binary classification")
        metrics["auroc"] = auroc(softmax(logits.astype(np.float64))[:, 1], graphs.labels)
    return metrics


def train_model(
    config: SpinConfig,
    train: GraphSet,
    val: GraphSet,
    tc: TrainConfig,
    params: Optional[SpinParams] = None,
    seed: Optional[int] = None,
) -> TrainResult:
    """Adam on minibatch cross-entropy; keeps the parameters with best validation accuracy.

    Stops when validation accuracy has not improved by more than
    ``tc.min_delta`` for ``tc.patience`` consecutive epochs.
    """
    seed = tc.seed if seed is None else seed
    init_rng, shuffle_rng, drop_rng = (make_rng(seed, k) for k in (1, 2, 3))
    dtype = config.np_dtype
    train = train.astype(dtype)
    val = val.astype(dtype)
    if params is None:
        params = SpinParams.init(config, init_rng)
    arrays = params.arrays()
    state = AdamState.for_arrays(arrays)
    best_params, best_acc, best_epoch = params.copy(), -np.inf, 0
    curves, wait = [], 0
    n = len(train)
    for epoch in range(1, tc.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, tc.batch_size):
            idx = order[start:start + tc.batch_size]
            batch = train.subset(idx)
            loss, grads, _ = loss_and_grads(params, config, batch, drop_rng, training=True)
            grad_arrays = grads.arrays()
            if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grad_arrays):
                raise NonFiniteLoss(
                    f"non-finite loss or gradient at epoch {epoch} (loss {loss}); try a smaller "
                    f"learning rate (current {tc.learning_rate}), float64, or rescaled inputs"
                )
            adam_step(arrays, grad_arrays, state, tc.learning_rate, tc.l2)
            total += loss * len(idx)
            seen += len(idx)
        val_acc = evaluate(params, config, val)["accuracy"]
        curves.append((epoch, total / seen, val_acc))
        if val_acc > best_acc + tc.min_delta:
            best_acc, best_epoch, wait = val_acc, epoch, 0
            best_params = params.copy()
        else:
            wait += 1
            if wait >= tc.patience:
                break
    return TrainResult(best_params, float(best_acc), best_epoch, curves)


# --- cross-validation ------------------------------------------------------

@dataclass
class CvRecord:
    fold: int
    repeat: int
    accuracy: float
    auroc: Optional[float] = None


@dataclass
class CvResult:
    records: list
    fold_scores: list
    selected: list  # per fold: chosen overrides
    curves: dict = field(default_factory=dict)  # (fold, repeat) -> curve rows

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_scores))

    @property
    def std(self) -> float:
        return float(np.std(self.fold_scores))

    @property
    def trainings(self) -> int:
        return len(self.records)

    def summary(self) -> str:
        return f"accuracy {100 * self.mean:.2f} ± {100 * self.std:.2f} over {len(self.fold_scores)} folds"

    def to_csv(self) -> str:
        has_auc = any(r.auroc is not None for r in self.records)
        rows = ["fold,repeat,accuracy" + (",auroc" if has_auc else "")]
        for r in self.records:
            row = f"{r.fold},{r.repeat},{r.accuracy:.6f}"
            if has_auc:
                row += f",{r.auroc:.6f}" if r.auroc is not None else ","
            rows.append(row)
        return "\n".join(rows) + "\n"


def grid_candidates(grid: Optional[dict]) -> list:
    """Expand ``{"batch_size": [...], "R": [...], "hidden_dim": [...]}`` into override dicts."""
    if not grid:
        return [{}]
    keys = [k for k in ("batch_size", "R", "hidden_dim") if k in grid]
    combos = itertools.product(*(grid[k] for k in keys))
    fixed = {k: grid[k] for k in ("learning_rate", "l2") if k in grid}
    return [dict(zip(keys, c), **fixed) for c in combos]


def _apply(config: SpinConfig, tc: TrainConfig, overrides: dict):
    cfg_keys = {k: v for k, v in overrides.items() if k in ("R", "hidden_dim")}
    tc_keys = {k: v for k, v in overrides.items() if k in ("batch_size", "learning_rate", "l2")}
    return replace(config, **cfg_keys), replace(tc, **tc_keys)


def _branches(graphs: GraphSet, R: int) -> GraphSet:
    if R == graphs.R:
        return graphs
    if R > graphs.R:
        raise ValueError(f"graphs precomputed with R={graphs.R}, cannot serve R={R}")
    return GraphSet(graphs.xs[: R + 1], graphs.offsets, graphs.labels)


def run_fold(fold_index: int, graphs: GraphSet, fold, config: SpinConfig, tc: TrainConfig,
             candidates: Sequence[dict], with_auroc: bool = False):
    """Model selection (when several candidates) then ``repeats_per_fold`` trainings."""
    train, val, test = graphs.subset(fold.train), graphs.subset(fold.val), graphs.subset(fold.test)
    chosen = candidates[0]
    if len(candidates) > 1:
        best = -np.inf
        for ci, cand in enumerate(candidates):
            cfg, tcc = _apply(config, tc, cand)
            res = train_model(cfg, _branches(train, cfg.R), _branches(val, cfg.R), tcc,
                              seed=_seed(tc.seed, fold_index, 1000 + ci))
            log.info("fold %d candidate %s val %.4f", fold_index, cand, res.best_val_accuracy)
            if res.best_val_accuracy > best:
                best, chosen = res.best_val_accuracy, cand
    cfg, tcc = _apply(config, tc, chosen)
    records, curves = [], {}
    for rep in range(tc.repeats_per_fold):
        res = train_model(cfg, _branches(train, cfg.R), _branches(val, cfg.R), tcc,
                          seed=_seed(tc.seed, fold_index, rep))
        m = evaluate(res.params, cfg, _branches(test, cfg.R), with_auroc=with_auroc)
        records.append(CvRecord(fold_index, rep, m["accuracy"], m.get("auroc")))
        curves[(fold_index, rep)] = res.curves
        log.info("fold %d repeat %d test accuracy %.4f", fold_index, rep, m["accuracy"])
    return records, chosen, curves


def _seed(seed: int, fold: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, fold, k]).generate_state(1)[0])


def _run_fold_star(args):
    return run_fold(*args)


def cross_validate(
    graphs: GraphSet,
    plan: FoldPlan,
    config: SpinConfig,
    tc: TrainConfig,
    grid: Optional[dict] = None,
    with_auroc: bool = False,
    workers: int = 1,
) -> CvResult:
    """Per fold: optional grid selection on validation, then repeated trainings scored on test.

    Repeats are averaged into one fold score; mean and (population) std are
    taken across folds.
    """
    candidates = grid_candidates(grid)
    jobs = [(i, graphs, f, config, tc, candidates, with_auroc) for i, f in enumerate(plan.folds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_fold_star, jobs))
    else:
        results = [run_fold(*job) for job in jobs]
    records, fold_scores, selected, curves = [], [], [], {}
    for recs, chosen, cv in results:
        records += recs
        fold_scores.append(float(np.mean([r.accuracy for r in recs])))
        selected.append(chosen)
        curves.update(cv)
    return CvResult(records, fold_scores, selected, curves)
