"""Training loops, objectives, and resolution-shift evaluation."""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .. import autodiff as ad
from .. import masks as mk
from .. import spectral
from ..archmask import complexity_loss
from ..autodiff import Tape
from ..conv import conv_apply, conv_cross_resolution, sample_kernel
from ..fields import coord_grid, eval_field
from ..optim import Adam
from .datasets import one_hot

__all__ = [
    "TrainConfig", "TrainResult", "TrainingError", "train", "fit_field",
    "eval_resolution_shift", "copy_memory_metrics", "adding_metrics",
]


class TrainingError(RuntimeError):
    """Raised when a loss turns non-finite; carries the step index."""

    def __init__(self, step, message):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class TrainConfig:
    lr: float = 1e-3
    steps: int = 2000
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lambda_alias: float = 0.0
    alias_mode: str = "per_layer"
    lambda_complexity: float = 0.0
    complexity_target: float = None    # absolute cost; None = cost at init
    complexity_target_ratio: float = 1.0
    mask_lr_scale: float = 1e-2        # mask lr = lr * this
    seed: int = 0
    log_every: int = 25

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.lambda_alias < 0 or self.lambda_complexity < 0:
            raise ValueError("regularizer weights must be >= 0")


@dataclass
class TrainResult:
    loss_trace: list
    metric_trace: list
    final_metrics: dict
    wall_seconds: float
    steps: int
    extras: dict = dc_field(default_factory=dict)


def _cross_entropy(logits, targets_onehot):
    """Mean cross entropy; logits [B, T, K], targets one-hot same shape."""
    logp = ad.log_softmax(logits, axis=-1)
    picked = ad.sum_(ad.mul(logp, ad.as_tensor(targets_onehot)), axis=-1)
    return ad.negate(ad.mean(picked))


def copy_memory_metrics(model, ds, batch=256):
    """Loss and recall accuracy (final 10 positions) over a dataset."""
    n_classes = 10
    total_loss, correct, counted = 0.0, 0, 0
    with ad.no_grad():
        for lo in range(0, len(ds), batch):
            xb = one_hot(ds.inputs[lo:lo + batch], n_classes)
            yb = ds.targets[lo:lo + batch]
            logits = model(xb)
            loss = _cross_entropy(logits, one_hot(yb, n_classes))
            total_loss += float(loss.data) * xb.shape[0]
            pred = np.argmax(logits.data[:, -10:, :], axis=-1)
            correct += int((pred == yb[:, -10:]).sum())
            counted += pred.size
    return {
        "loss": total_loss / len(ds),
        "accuracy": correct / counted,
    }


def adding_metrics(model, ds, batch=512):
    total, n = 0.0, 0
    with ad.no_grad():
        for lo in range(0, len(ds), batch):
            xb = ds.inputs[lo:lo + batch]
            yb = ds.targets[lo:lo + batch]
            pred = model(xb).data.reshape(-1)
            total += float(((pred - yb) ** 2).sum())
            n += len(yb)
    return {"mse": total / n}


def _model_batch_loss(model, kind, xb, yb):
    if kind == "copy_memory":
        logits = model(xb)
        return _cross_entropy(logits, yb)
    if kind == "adding":
        pred = model(xb)
        diff = ad.sub(ad.reshape(pred, (-1,)), ad.as_tensor(yb))
        return ad.mean(ad.square(diff))
    raise ValueError(f"unknown task kind: {kind!r}")


def train(model, ds, cfg):
    """Train a backbone on a dataset; returns the per-step trace.

    Deterministic given cfg.seed and the dataset. Raises TrainingError at
    the first non-finite loss.
    """
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    mask_params = model.mask_parameters()
    groups = [{"params": params, "lr": cfg.lr}]
    if mask_params:
        groups.append(
            {"params": mask_params, "lr": cfg.lr * cfg.mask_lr_scale}
        )
    opt = Adam(groups, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
               eps=cfg.eps, projections=[model.project_parameters])

    kind = ds.kind
    if kind == "copy_memory":
        inputs = one_hot(ds.inputs, 10)
        targets = one_hot(ds.targets, 10)
    else:
        inputs, targets = ds.inputs, ds.targets

    c_target = None
    if cfg.lambda_complexity > 0:
        with ad.no_grad():
            c_init = float(model.network_cost().data)
        c_target = cfg.complexity_target or c_init * cfg.complexity_target_ratio

    n = inputs.shape[0]
    order = np.arange(n)
    loss_trace, metric_trace = [], []
    ratio_trace, grad_norm_trace = [], []
    t0 = time.perf_counter()
    cursor = n  # force reshuffle on first step
    for step in range(cfg.steps):
        if cursor + cfg.batch_size > n:
            rng.shuffle(order)
            cursor = 0
        sel = order[cursor:cursor + cfg.batch_size]
        cursor += cfg.batch_size
        xb, yb = inputs[sel], targets[sel]
        with Tape() as tape:
            loss = _model_batch_loss(model, kind, xb, yb)
            task_loss = float(loss.data)
            if cfg.lambda_alias > 0:
                loss = ad.add(
                    loss,
                    ad.pointwise_scale(
                        model.alias_penalty(cfg.alias_mode), cfg.lambda_alias
                    ),
                )
            if cfg.lambda_complexity > 0:
                c_curr = model.network_cost()
                ratio_trace.append(float(c_curr.data) / c_target)
                loss = ad.add(
                    loss,
                    ad.pointwise_scale(
                        complexity_loss(c_curr, c_target),
                        cfg.lambda_complexity,
                    ),
                )
            total = float(loss.data)
            if not np.isfinite(total):
                raise TrainingError(step, f"non-finite loss {total}")
            opt.zero_grad()
            tape.backward(loss)
        grad_norm = _grad_norm(params)
        if not np.isfinite(grad_norm):
            raise TrainingError(step, "non-finite gradient norm")
        opt.step()
        loss_trace.append(task_loss)
        grad_norm_trace.append(grad_norm)
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            metric_trace.append(
                {"step": step, "loss": task_loss, "total_loss": total,
                 "grad_norm": grad_norm}
            )
    wall = time.perf_counter() - t0

    if kind == "copy_memory":
        final = copy_memory_metrics(model, ds)
        final["solved"] = bool(
            final["accuracy"] >= 1.0 or final["loss"] <= 1e-4
        )
    else:
        final = adding_metrics(model, ds)
        final["solved"] = bool(final["mse"] < 1e-3)
    extras = {"grad_norm_trace": grad_norm_trace}
    if ratio_trace:
        extras["complexity_ratio_trace"] = ratio_trace
        extras["complexity_target"] = c_target
    return TrainResult(
        loss_trace=loss_trace, metric_trace=metric_trace,
        final_metrics=final, wall_seconds=wall, steps=cfg.steps,
        extras=extras,
    )


def _grad_norm(params):
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad ** 2).sum())
    return float(np.sqrt(total))


def fit_field(field, target, steps=2000, lr=1e-3, size_mask=None,
              lambda_alias=0.0, alias_mode="per_layer", seed=0,
              mask_lr_scale=1e-2, log_every=50):
    """Fit a field (optionally masked) to a 1-d target on [-1, 1].

    This is the kernel-side fitting study: no convolution, the field
    itself regresses the target. When lambda_alias > 0 the kernel's
    analytic maximum frequency is penalized against the Nyquist limit of
    the target grid.
    """
    target = np.asarray(target, dtype=np.float64)
    n = target.shape[0]
    grid = coord_grid(n, 1, "causal")
    groups = [{"params": field.parameters(), "lr": lr}]
    projections = [field.project_parameters]
    if size_mask is not None:
        groups.append({"params": size_mask.parameters(),
                       "lr": lr * mask_lr_scale})
        projections.append(lambda: mk.project_bounds(size_mask))
    opt = Adam(groups, lr=lr, projections=projections)
    loss_trace, metric_trace = [], []
    t0 = time.perf_counter()
    for step in range(steps):
        with Tape() as tape:
            out = eval_field(field, grid)
            out = ad.reshape(out, (n,))
            if size_mask is not None:
                out = ad.mul(out, mk.mask_eval(size_mask, grid.axes[0]))
            mse = ad.mean(ad.square(ad.sub(out, ad.as_tensor(target))))
            loss = mse
            if lambda_alias > 0:
                loss = ad.add(
                    loss,
                    ad.pointwise_scale(
                        spectral.alias_loss(field, size_mask, n,
                                            mode=alias_mode),
                        lambda_alias,
                    ),
                )
            task_loss = float(mse.data)
            if not np.isfinite(task_loss):
                raise TrainingError(step, "non-finite loss")
            opt.zero_grad()
            tape.backward(loss)
        opt.step()
        loss_trace.append(task_loss)
        if step % log_every == 0 or step == steps - 1:
            metric_trace.append({"step": step, "loss": task_loss})
    final = {"mse": loss_trace[-1]}
    if lambda_alias > 0:
        with ad.no_grad():
            f_plus = spectral.flexconv_max_freq(field, size_mask) \
                if size_mask is not None else spectral.magnet_max_freq(field)
            final["f_plus"] = float(f_plus.data)
            final["f_nyquist"] = spectral.nyquist_freq(n)
    return TrainResult(
        loss_trace=loss_trace, metric_trace=metric_trace,
        final_metrics=final, wall_seconds=time.perf_counter() - t0,
        steps=steps,
    )


def eval_resolution_shift(model, ds, factor):
    """Evaluate conv-layer outputs after resampling data by `factor`.

    factor in {2, 1, 1/2, 1/4}: a factor below one subsamples the input
    (lower rate). Returns per-block relative deviation between the raw
    shifted-rate conv outputs and factor * full-rate outputs at matched
    time points, plus the corrected-output deviation.
    """
    allowed = (2.0, 1.0, 0.5, 0.25)
    if not any(abs(factor - a) < 1e-12 for a in allowed):
        raise ValueError(f"unsupported resolution factor: {factor}")
    metric = None
    if factor == 1.0:
        if ds.kind == "copy_memory":
            metric = copy_memory_metrics(model, ds)
        elif ds.kind == "adding":
            metric = adding_metrics(model, ds)
    x = ds.inputs if ds.inputs.ndim == 3 else one_hot(ds.inputs, 10)
    x = np.asarray(x, dtype=np.float64)[:8]  # a few probes suffice
    cfg = model.cfg
    sr1 = float(cfg.signal_len)
    sr2 = sr1 * factor
    stride = int(round(1.0 / factor)) if factor < 1 else 1
    report = {"factor": factor, "blocks": []}
    from .backbone import _NONLIN

    act = _NONLIN[cfg.nonlinearity]
    with ad.no_grad():
        h = model.encoder(ad.as_tensor(x))
        for bi, block in enumerate(model.blocks):
            kernel, _ = sample_kernel(block.field, block.plan.kernel_size,
                                      cfg.mode)
            full = conv_apply(h, kernel, cfg.mode, "direct").data
            if factor == 1.0:
                raw, matched = full, full
            elif factor < 1:
                h_sub = ad.as_tensor(h.data[:, ::stride])
                raw = conv_cross_resolution(
                    h_sub, block.field, sr1, sr2, block.plan,
                    size_mask=block.size_mask, apply_rate_factor=False,
                ).data
                matched = full[:, ::stride]
            else:
                # double rate via sample-and-hold; compare at originals
                B, T, C = h.data.shape
                h_up = np.zeros((B, 2 * T, C))
                h_up[:, ::2] = h.data
                h_up[:, 1::2] = h.data
                raw = conv_cross_resolution(
                    ad.as_tensor(h_up), block.field, sr1, sr2, block.plan,
                    size_mask=block.size_mask, apply_rate_factor=False,
                ).data[:, ::2]
                matched = full
            denom = np.linalg.norm(matched) or 1.0
            rel_raw = np.linalg.norm(raw - factor * matched) / denom
            rel_corr = np.linalg.norm(raw / factor - matched) / denom
            report["blocks"].append(
                {"block": bi + 1, "rel_raw_vs_scaled": float(rel_raw),
                 "rel_corrected": float(rel_corr)}
            )
            # advance the full-rate features through the real block
            h = act(ad.add(h, block.residual(h)))
    report["max_rel_raw_vs_scaled"] = max(
        b["rel_raw_vs_scaled"] for b in report["blocks"]
    )
    if metric is not None:
        report["metric"] = metric
    return report
