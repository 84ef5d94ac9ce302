"""Continual training strategies over the shared MLP.

Per-step loss, by strategy kind:

naive   CE(current batch)
ER      CE(current batch ++ equal-size buffer draw), reservoir updated with
        each training sample once per task
GDumb   greedy class-balanced buffer update first, then the model is
        reinitialized and trained with CE on the buffer contents only
DER     CE(current) + alpha * MSE(logits, stored logits) on one buffer draw
        + beta * CE on a second draw's labels (beta = 0 gives plain DER)
LwF     CE(current) + alpha * T^2 * KL(teacher || student) at temperature T,
        teacher = model returned by the previous task
SI      CE(current) + lambda * sum_i Omega_i (theta_i - ref_i)^2, Omega
        accumulated from the path integral sum_steps(-grad * actual step)
        normalized by ((task parameter drift)^2 + eps) at task end

All strategies run `epochs` passes of minibatch AdamW with early stopping on
the task's validation accuracy (patience 3, best-epoch state restored).
train_task never mutates its inputs; it returns updated copies.
"""

from __future__ import annotations

from typing import Dict, Optional, Tuple

import numpy as np

from .buffers import GDumbBuffer, ReplayBuffer
from .model import MLPModel, cross_entropy, log_softmax, softmax
from .spaces import StrategyConfig

PATIENCE = 3


class TrainingDiverged(RuntimeError):
    """Raised when a training step produces a non-finite loss."""


def make_buffer(cfg: StrategyConfig):
    if cfg.kind in ("ER", "DER"):
        return ReplayBuffer(cfg.mem_size)
    if cfg.kind == "GDumb":
        return GDumbBuffer(cfg.mem_size)
    return None


def _zeros_like_params(model: MLPModel) -> Dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in model.params.items()}


def _accumulate(into: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
                scale: float = 1.0) -> None:
    for k, g in grads.items():
        into[k] += scale * g


def loss_and_grads(model: MLPModel, cfg: StrategyConfig, X: np.ndarray,
                   y: np.ndarray, replay=None, replay_ce=None,
                   teacher: Optional[MLPModel] = None, train: bool = False,
                   rng: Optional[np.random.Generator] = None
                   ) -> Tuple[float, Dict[str, np.ndarray]]:
    """One training step's full strategy loss and its parameter gradients.

    replay / replay_ce are pre-drawn (X, y, logits) batches so the function
    is a deterministic map of the model parameters; grad_check relies on
    that.
    """
    total = _zeros_like_params(model)
    if cfg.kind == "ER" and replay is not None:
        X = np.concatenate([X, replay[0]])
        y = np.concatenate([y, replay[1]])
    logits, cache = model.forward(X, train=train, rng=rng)
    loss, dlogits = cross_entropy(logits, y)
    if cfg.kind == "LwF" and teacher is not None and cfg.alpha > 0.0:
        T = cfg.temperature
        p = softmax(teacher.logits(X) / T)
        lsq = log_softmax(logits / T)
        kl = float(np.sum(p * (np.log(p) - lsq), axis=1).mean())
        loss += cfg.alpha * T * T * kl
        dlogits = dlogits + cfg.alpha * T * (softmax(logits / T) - p) / len(y)
    _accumulate(total, model.backward(cache, dlogits))

    if cfg.kind == "DER":
        if replay is not None and replay[2] is not None:
            Xr, _, Zr = replay
            zr, cr = model.forward(Xr, train=train, rng=rng)
            loss += cfg.alpha * float(np.mean((zr - Zr) ** 2))
            _accumulate(total, model.backward(cr, cfg.alpha * 2.0 * (zr - Zr) / zr.size))
        if replay_ce is not None:
            X2, y2, _ = replay_ce
            z2, c2 = model.forward(X2, train=train, rng=rng)
            l2, d2 = cross_entropy(z2, y2)
            loss += cfg.beta * l2
            _accumulate(total, model.backward(c2, cfg.beta * d2))

    if cfg.kind == "SI" and model.si_omega is not None and cfg.si_lambda > 0.0:
        for k, omega in model.si_omega.items():
            diff = model.params[k] - model.si_ref[k]
            loss += cfg.si_lambda * float(np.sum(omega * diff * diff))
            total[k] += cfg.si_lambda * 2.0 * omega * diff
    return loss, total


def eval_accuracy(model: MLPModel, X: np.ndarray, y: np.ndarray) -> float:
    """Fraction of argmax predictions matching the labels; deterministic."""
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty split")
    pred = np.argmax(model.logits(X), axis=1)
    return float(np.mean(pred == y))


def _resized_replay(buf: ReplayBuffer, capacity: int,
                    rng: np.random.Generator) -> ReplayBuffer:
    # mem_size is itself a tuned hyperparameter, so a trial may ask for a
    # different capacity than the inherited memory; downsizing keeps a
    # uniform subsample.
    out = ReplayBuffer(capacity)
    out.seen = buf.seen
    keep = range(len(buf))
    if len(buf) > capacity:
        keep = sorted(rng.choice(len(buf), size=capacity, replace=False))
    out.xs = [buf.xs[i].copy() for i in keep]
    out.ys = [buf.ys[i] for i in keep]
    out.zs = [None if buf.zs[i] is None else buf.zs[i].copy() for i in keep]
    return out


def _resized_gdumb(buf: GDumbBuffer, capacity: int,
                   rng: np.random.Generator) -> GDumbBuffer:
    out = buf.clone()
    out.capacity = capacity
    while len(out) > capacity:
        largest = max(len(v) for v in out.items.values())
        donors = sorted(c for c, v in out.items.items() if len(v) == largest)
        donor = donors[int(rng.integers(0, len(donors)))]
        out.items[donor].pop(int(rng.integers(0, len(out.items[donor]))))
    return out


def _epoch_pass(model, cfg, X, y, buffer, teacher, rng, first_epoch, si_acc):
    """Train one epoch in place; updates the replay buffer on the first
    epoch only so each task sample enters the reservoir exactly once."""
    n = len(y)
    perm = rng.permutation(n)
    for s in range(0, n, cfg.batch_size):
        idx = perm[s:s + cfg.batch_size]
        Xb, yb = X[idx], y[idx]
        replay = replay_ce = None
        if cfg.kind in ("ER", "DER") and len(buffer) > 0:
            replay = buffer.draw(len(idx), rng)
            if cfg.kind == "DER":
                replay_ce = buffer.draw(len(idx), rng)
        loss, grads = loss_and_grads(model, cfg, Xb, yb, replay=replay,
                                     replay_ce=replay_ce, teacher=teacher,
                                     train=True, rng=rng)
        if not np.isfinite(loss):
            raise TrainingDiverged(
                f"non-finite loss {loss} ({cfg.kind}, lr={cfg.lr}, step offset {s})"
            )
        deltas = model.adamw_step(grads, cfg.lr, cfg.weight_decay)
        if si_acc is not None:
            for k in si_acc:
                si_acc[k] += -grads[k] * deltas[k]
        if first_epoch and cfg.kind in ("ER", "DER"):
            stored_logits = model.logits(Xb) if cfg.kind == "DER" else None
            buffer.add_batch(Xb, yb, rng, logits=stored_logits)


def _fit(model, cfg, X, y, X_val, y_val, buffer, teacher, rng, si_acc):
    """Epoch loop with early stopping; returns (best model, best si_acc,
    best val accuracy)."""
    best_acc = -1.0
    best_state = None
    best_epoch = -1
    for epoch in range(cfg.epochs):
        _epoch_pass(model, cfg, X, y, buffer, teacher, rng,
                    first_epoch=(epoch == 0), si_acc=si_acc)
        acc = eval_accuracy(model, X_val, y_val)
        if acc > best_acc:
            best_acc = acc
            best_epoch = epoch
            best_state = (model.clone(),
                          None if si_acc is None else {k: v.copy() for k, v in si_acc.items()})
        elif epoch - best_epoch >= PATIENCE:
            break
    return best_state[0], best_state[1], best_acc


def train_task(model: MLPModel, buffer, prev_model: Optional[MLPModel],
               cfg: StrategyConfig, task, rng: np.random.Generator
               ) -> Tuple[MLPModel, object, float]:
    """Train one task with the configured strategy.

    Returns (trained model, updated buffer, validation accuracy on the
    task's own split). Raises TrainingDiverged on a non-finite loss.
    """
    work = model.clone()
    work.dropout = cfg.dropout
    X, y = task.X_train, task.y_train

    if cfg.kind == "GDumb":
        buf = GDumbBuffer(cfg.mem_size) if buffer is None else _resized_gdumb(
            buffer, cfg.mem_size, rng)
        buf.add_batch(X, y, rng)
        fresh = MLPModel(work.input_dim, work.n_classes, dropout=cfg.dropout,
                         hidden=work.hidden, rng=rng)
        Xb, yb = buf.data()
        trained, _, acc = _fit(fresh, cfg, Xb, yb, task.X_val, task.y_val,
                               None, None, rng, None)
        return trained, buf, acc

    buf = None
    if cfg.kind in ("ER", "DER"):
        buf = ReplayBuffer(cfg.mem_size) if buffer is None else _resized_replay(
            buffer, cfg.mem_size, rng)

    teacher = prev_model if cfg.kind == "LwF" else None

    si_acc = None
    theta_start = None
    if cfg.kind == "SI":
        si_acc = _zeros_like_params(work)
        theta_start = {k: v.copy() for k, v in work.params.items()}
        if work.si_ref is None:
            work.si_ref = {k: v.copy() for k, v in theta_start.items()}

    trained, si_acc, acc = _fit(work, cfg, X, y, task.X_val, task.y_val,
                                buf, teacher, rng, si_acc)

    if cfg.kind == "SI":
        omega_old = trained.si_omega or _zeros_like_params(trained)
        omega_new = {}
        for k in trained.params:
            drift = trained.params[k] - theta_start[k]
            omega_new[k] = omega_old[k] + si_acc[k] / (drift * drift + cfg.si_eps)
        trained.si_omega = omega_new
        trained.si_ref = {k: v.copy() for k, v in trained.params.items()}

    return trained, buf, acc


def grad_check(model: MLPModel, cfg: StrategyConfig, X: np.ndarray,
               y: np.ndarray, replay=None, replay_ce=None,
               teacher: Optional[MLPModel] = None, n_coords: int = 40,
               fd_step: float = 1e-5, seed: int = 0) -> float:
    """Max relative error of the analytic strategy-loss gradient against
    central finite differences on a sample of coordinates per tensor.

    Dropout is forced off so the loss is a deterministic function of the
    parameters. Relative error divides by max(|analytic|, |fd|, 1e-3):
    central differences bottom out near 1e-9 on unit-scale losses, so
    sub-floor gradients are effectively compared absolutely.

    Coordinates whose +/- step flips a ReLU sign on any forward batch are
    skipped: the loss is not differentiable across that boundary, so the
    secant there says nothing about the gradient.
    """
    work = model.clone()
    work.dropout = 0.0
    batches = [X]
    if replay is not None:
        batches.append(replay[0])
    if replay_ce is not None:
        batches.append(replay_ce[0])

    def loss_at():
        return loss_and_grads(work, cfg, X, y, replay=replay,
                              replay_ce=replay_ce, teacher=teacher,
                              train=False)[0]

    def relu_signs():
        p = work.params
        signs = []
        for Xb in batches:
            z1 = Xb @ p["W1"] + p["b1"]
            z2 = np.maximum(z1, 0.0) @ p["W2"] + p["b2"]
            signs.append((z1 > 0.0, z2 > 0.0))
        return signs

    def same_signs(a, b):
        return all(
            np.array_equal(s1, t1) and np.array_equal(s2, t2)
            for (s1, s2), (t1, t2) in zip(a, b)
        )

    _, analytic = loss_and_grads(work, cfg, X, y, replay=replay,
                                 replay_ce=replay_ce, teacher=teacher,
                                 train=False)
    g = np.random.default_rng(seed)
    worst = 0.0
    for k, arr in work.params.items():
        flat = arr.reshape(-1)
        m = min(n_coords, flat.size)
        for idx in g.choice(flat.size, size=m, replace=False):
            keep = flat[idx]
            flat[idx] = keep + fd_step
            up = loss_at()
            signs_up = relu_signs()
            flat[idx] = keep - fd_step
            down = loss_at()
            signs_down = relu_signs()
            flat[idx] = keep
            if not same_signs(signs_up, signs_down):
                continue
            fd = (up - down) / (2.0 * fd_step)
            a = analytic[k].reshape(-1)[idx]
            err = abs(a - fd) / max(abs(a), abs(fd), 1e-3)
            worst = max(worst, err)
    return worst
