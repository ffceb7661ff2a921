"""Training: MSE loss, manual reverse-mode BPTT, AdamW, schedule, loop.

Gradients are computed by hand, reverse-mode, through the full network:
output mixing, activation, the SSM recurrences (unrolled over time), the
basis-expansion of every matrix element, batch normalization, and the
input-side mixing matrices. A finite-difference harness
(:func:`fd_check`) serves as the independent oracle for the analytic
gradients.

The stability projection is applied before each forward pass and treated
as a plain parameter rewrite: it is never differentiated through.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import network as net
from ._alloc import tune_allocator
from .network import NetworkParams, NetworkSpec

__all__ = [
    "TrainConfig",
    "NumericFailure",
    "loss_mse",
    "bptt_gradients",
    "fd_check",
    "FDReport",
    "init_optimizer_state",
    "adamw_step",
    "param_group",
    "lr_schedule",
    "train",
]


class NumericFailure(RuntimeError):
    """Raised when a forward pass or gradient turns non-finite."""


@dataclass
class TrainConfig:
    """Hyperparameters of one training run.

    Learning rate and weight decay come in two groups: the SSM expansion
    coefficients, and everything else (biases, norm parameters, mixing
    weights). ``segment_length`` chops long sequences into independent
    windows with the state reset to zero at each window start.
    """

    epochs: int = 1
    batch_size: int = 64
    lr_ssm: float = 1e-3
    lr_others: float = 1e-2
    wd_ssm: float = 0.0
    wd_others: float = 1e-3
    warmup_fraction: float = 0.05
    seed: int = 0
    segment_length: int | None = None
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    stability_eps: float = 1e-4
    recalibrate_norm: bool = True
    shuffle: bool = True
    loss: str = "mse"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.lr_ssm < 0 or self.lr_others < 0:
            raise ValueError("learning rates must be non-negative")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError(f"warmup_fraction must be in [0, 1), got {self.warmup_fraction}")
        if self.loss != "mse":
            raise ValueError(f"unsupported loss {self.loss!r}")


def loss_mse(pred, target) -> float:
    """Mean of squared element-wise differences over every axis."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


def _loss_and_grad(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


def param_group(name: str) -> str:
    """Optimizer group of a tensor: expansion coefficients vs. the rest."""
    return "ssm" if name.endswith(("a_coeff", "b_coeff", "c_coeff")) else "others"


def _backward(params: NetworkParams, cache: dict, dout: np.ndarray) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of the cached forward pass.

    ``dout`` is the loss gradient at the network output. Returns one
    gradient array per trainable tensor, keyed like
    ``NetworkParams.trainable_tensors``.
    """
    spec = params.spec
    grads: dict[str, np.ndarray] = {}
    layer_caches = cache["layers"]

    # cached intermediates are time-major (t, batch, ...); see _forward
    grads[f"mixing{spec.n_layers}"] = np.einsum("bot,tbc->oc", dout, cache["head_in"])
    dcur = np.einsum("oc,bot->tbc", params.mixings[-1], dout)

    for li in range(spec.n_layers - 1, -1, -1):
        ls = spec.layers[li]
        lp = params.layers[li]
        lc = layer_caches[li]
        t_len, n_batch, _ = dcur.shape

        dact = dcur.reshape(t_len, n_batch, ls.h, ls.n_out)
        if ls.activation == "gelu":
            dys = dact * net.gelu_grad(lc["ys"])
        else:
            dys = dact

        xs = lc["xs"]
        grads[f"layer{li}.c_bias"] = dys.sum(axis=(0, 1))
        dcmat = np.einsum("tbho,tbhn->thon", dys, xs)
        grads[f"layer{li}.c_coeff"] = np.einsum("thon,hkt->honk", dcmat, lc["phi_c"])

        # Adjoint of the state: lam[t] = C[t]^T dys[t] + A[t+1]^T lam[t+1].
        lam = np.einsum("thon,tbho->tbhn", lc["cmat"], dys)
        amat = lc["amat"]
        if ls.diag_a:
            for t in range(t_len - 2, -1, -1):
                lam[t] += amat[t + 1] * lam[t + 1]
        else:
            for t in range(t_len - 2, -1, -1):
                lam[t] += np.einsum("hmn,bhm->bhn", amat[t + 1], lam[t + 1])

        # A[0] and B[0] never act (the recurrence starts at t = 1), so their
        # time slices receive no gradient.
        uin = lc["uin"]
        if ls.diag_a:
            damat = np.zeros((t_len, ls.h, ls.n))
            damat[1:] = np.einsum("tbhn,tbhn->thn", lam[1:], xs[:-1])
            grads[f"layer{li}.a_coeff"] = np.einsum("thn,hkt->hnk", damat, lc["phi_a"])
        else:
            damat = np.zeros((t_len, ls.h, ls.n, ls.n))
            damat[1:] = np.einsum("tbhm,tbhn->thmn", lam[1:], xs[:-1])
            grads[f"layer{li}.a_coeff"] = np.einsum("thmn,hkt->hmnk", damat, lc["phi_a"])
        dbmat = np.zeros((t_len, ls.h, ls.n, ls.n_in))
        dbmat[1:] = np.einsum("tbhn,tbhi->thni", lam[1:], uin[:-1])
        grads[f"layer{li}.b_coeff"] = np.einsum("thni,hkt->hnik", dbmat, lc["phi_b"])

        duin = np.zeros_like(uin)
        duin[:-1] = np.einsum("thni,tbhn->tbhi", lc["bmat"][1:], lam[1:])
        dnz = duin.reshape(t_len, n_batch, ls.h * ls.n_in)

        if spec.normalize:
            xhat = lc["xhat"]
            grads[f"layer{li}.norm_shift"] = dnz.sum(axis=(0, 1))
            grads[f"layer{li}.norm_scale"] = (dnz * xhat).sum(axis=(0, 1))
            dxhat = dnz * lp.norm_scale
            mean_dxhat = dxhat.mean(axis=(0, 1), keepdims=True)
            mean_dxhat_xhat = (dxhat * xhat).mean(axis=(0, 1), keepdims=True)
            dz = (dxhat - mean_dxhat - xhat * mean_dxhat_xhat) / lc["sigma"]
        else:
            dz = dnz

        grads[f"mixing{li}"] = np.einsum("tbo,tbc->oc", dz, lc["pre_mix"])
        dcur = np.einsum("oc,tbo->tbc", params.mixings[li], dz)

    return grads


def bptt_gradients(params: NetworkParams, inputs, targets) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact reverse-mode gradients for one batch.

    Assumes the stability projection has already been applied this step;
    the projection itself is not differentiated. Raises
    :class:`NumericFailure` naming the offending layer if the forward
    pass produces non-finite values.
    """
    out, cache = net.forward_with_cache(params, inputs)
    for li, lc in enumerate(cache["layers"]):
        if not np.isfinite(lc["ys"]).all():
            raise NumericFailure(f"non-finite values in layer {li} forward pass")
    if not np.isfinite(out).all():
        raise NumericFailure("non-finite values in network output")
    loss, dout = _loss_and_grad(out, np.asarray(targets, dtype=np.float64))
    return loss, _backward(params, cache, dout)


def _loss_only(params: NetworkParams, inputs, targets) -> float:
    out, _ = net._forward(params, inputs, training=True, want_cache=False)
    return loss_mse(out, targets)


@dataclass(frozen=True)
class FDReport:
    """Per-tensor comparison of analytic and finite-difference gradients."""

    rel_errors: dict[str, float]
    failures: tuple[str, ...]
    tolerance: float
    step: float

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def worst(self) -> float:
        return max(self.rel_errors.values()) if self.rel_errors else 0.0

    def summary(self) -> str:
        lines = [f"fd check (step={self.step:g}, tolerance={self.tolerance:g})"]
        for name, err in sorted(self.rel_errors.items(), key=lambda kv: -kv[1]):
            flag = "FAIL" if name in self.failures else "ok"
            lines.append(f"  {name:<24s} max rel err {err:.3e}  [{flag}]")
        return "\n".join(lines)


def fd_check(params: NetworkParams, inputs, targets,
             step: float = 1e-6, tolerance: float = 1e-5) -> FDReport:
    """Check BPTT gradients against central finite differences.

    Every scalar parameter is perturbed by +-step and the loss
    re-evaluated, so the network must stay small (at most 1e4
    parameters). The relative error of a tensor is measured against the
    larger of the two gradients' max magnitudes, which keeps entries
    whose true gradient is near zero from amplifying the ~1e-10 absolute
    noise floor of central differences at the default step.
    """
    n_params = params.n_trainable()
    if n_params > 10_000:
        raise ValueError(f"fd_check is limited to 1e4 parameters, got {n_params}")
    if step >= 1e-2:
        warnings.warn(
            f"fd step {step:g} is large; truncation error will dominate the comparison",
            RuntimeWarning,
        )
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    _, grads = bptt_gradients(params, inputs, targets)

    rel_errors: dict[str, float] = {}
    failures: list[str] = []
    for name, tensor in params.trainable_tensors():
        fd = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = _loss_only(params, inputs, targets)
            flat[i] = orig - step
            lo = _loss_only(params, inputs, targets)
            flat[i] = orig
            fd_flat[i] = (hi - lo) / (2.0 * step)
        g = grads[name]
        scale = max(float(np.abs(g).max(initial=0.0)), float(np.abs(fd).max(initial=0.0)), 1e-12)
        rel = float(np.abs(g - fd).max(initial=0.0)) / scale
        rel_errors[name] = rel
        if rel > tolerance:
            failures.append(name)
    return FDReport(rel_errors, tuple(failures), tolerance, step)


def init_optimizer_state(params: NetworkParams) -> dict:
    state = {"step": 0, "m": {}, "v": {}}
    for name, tensor in params.trainable_tensors():
        state["m"][name] = np.zeros_like(tensor)
        state["v"][name] = np.zeros_like(tensor)
    return state


def adamw_step(params: NetworkParams, grads: dict, state: dict,
               lr_by_group: dict[str, float], wd_by_group: dict[str, float],
               betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
    """One decoupled-weight-decay adaptive update, in place.

    Expansion coefficients use the "ssm" learning rate / decay; every
    other tensor the "others" pair.
    """
    beta1, beta2 = betas
    state["step"] += 1
    t = state["step"]
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, tensor in params.trainable_tensors():
        g = grads[name]
        if not np.isfinite(g).all():
            raise NumericFailure(f"non-finite gradient for {name}")
        group = param_group(name)
        lr = lr_by_group[group]
        wd = wd_by_group[group]
        m = state["m"][name]
        v = state["v"][name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        tensor -= lr * (update + wd * tensor)


def lr_schedule(step: int, total_steps: int, base_lr: float,
                warmup_fraction: float = 0.05) -> float:
    """Linear warmup to base_lr, then cosine decay to zero at total_steps."""
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    warm = int(total_steps * warmup_fraction)
    if step < warm:
        return base_lr * step / warm
    span = max(total_steps - warm, 1)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * (step - warm) / span))


def _segment(x: np.ndarray, seg: int) -> np.ndarray:
    s, c, t = x.shape
    if t % seg != 0:
        raise ValueError(f"sequence length {t} is not a multiple of segment length {seg}")
    return x.reshape(s, c, t // seg, seg).transpose(0, 2, 1, 3).reshape(-1, c, seg)


def _extract_splits(data):
    """Accept a Dataset-like object or (train_x, train_y[, val_x, val_y])."""
    if hasattr(data, "split"):
        tr = data.split("train")
        names = getattr(data, "split_names", ())
        val = data.split("val") if "val" in names else None
        return (tr.inputs, tr.targets), (None if val is None else (val.inputs, val.targets))
    if len(data) == 2:
        return (data[0], data[1]), None
    if len(data) == 4:
        return (data[0], data[1]), (data[2], data[3])
    raise ValueError("data must be a Dataset or a 2- or 4-tuple of arrays")


def train(spec: NetworkSpec, data, config: TrainConfig,
          init_params: NetworkParams | None = None,
          checkpoint_dir=None) -> tuple[NetworkParams, dict[str, list]]:
    """Train a network and return (params, per-epoch history).

    Each step runs stability projection, a training-mode forward pass,
    BPTT, and one AdamW update with the scheduled learning rates; running
    normalization statistics are folded in along the way and, by default,
    recalibrated exactly over the training inputs at the end. A final
    projection leaves the returned parameters inside the stability
    budget. On numeric failure the last healthy parameters are saved to
    ``checkpoint_dir`` (when given) before the error propagates.
    """
    tune_allocator()
    (train_x, train_y), val = _extract_splits(data)
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.float64)
    if config.segment_length is not None and config.segment_length < train_x.shape[2]:
        train_x = _segment(train_x, config.segment_length)
        train_y = _segment(train_y, config.segment_length)

    n_samples = train_x.shape[0]
    steps_per_epoch = math.ceil(n_samples / config.batch_size)
    total_steps = config.epochs * steps_per_epoch

    if init_params is None:
        params = net.init_network(spec, np.random.default_rng([config.seed, 17]))
    else:
        params = init_params
    state = init_optimizer_state(params)
    shuffle_rng = np.random.default_rng([config.seed, 23])

    history: dict[str, list] = {
        "epoch": [], "train_loss": [], "val_loss": [], "max_a_budget": [],
        "lr_ssm": [], "lr_others": [],
    }
    step = 0
    snapshot = params.copy()
    try:
        for epoch in range(config.epochs):
            order = shuffle_rng.permutation(n_samples) if config.shuffle else np.arange(n_samples)
            loss_weighted = 0.0
            budget_worst = 0.0
            lr_s = lr_o = 0.0
            for start in range(0, n_samples, config.batch_size):
                idx = order[start:start + config.batch_size]
                bx = train_x[idx]
                by = train_y[idx]

                net.project_network(params, config.stability_eps)
                budget_worst = max(budget_worst, net.max_stability_budget(params))
                snapshot = params.copy()

                out, cache = net.forward_with_cache(params, bx)
                if not np.isfinite(out).all():
                    raise NumericFailure(f"non-finite network output at step {step}")
                loss, dout = _loss_and_grad(out, by)
                grads = _backward(params, cache, dout)
                net.update_running_stats(params, cache)

                lr_s = lr_schedule(step, total_steps, config.lr_ssm, config.warmup_fraction)
                lr_o = lr_schedule(step, total_steps, config.lr_others, config.warmup_fraction)
                adamw_step(params, grads, state,
                           {"ssm": lr_s, "others": lr_o},
                           {"ssm": config.wd_ssm, "others": config.wd_others},
                           config.betas, config.eps)
                loss_weighted += loss * len(idx)
                step += 1

            history["epoch"].append(epoch)
            history["train_loss"].append(loss_weighted / n_samples)
            if val is not None:
                vout = net.network_forward(params, val[0])
                history["val_loss"].append(loss_mse(vout, np.asarray(val[1], dtype=np.float64)))
            else:
                history["val_loss"].append(float("nan"))
            history["max_a_budget"].append(budget_worst)
            history["lr_ssm"].append(lr_s)
            history["lr_others"].append(lr_o)
    except NumericFailure:
        if checkpoint_dir is not None:
            from .serialize import checkpoint_save
            from pathlib import Path
            path = Path(checkpoint_dir)
            path.mkdir(parents=True, exist_ok=True)
            checkpoint_save(path / "last_good.ckpt", snapshot)
        raise

    net.project_network(params, config.stability_eps)
    if config.recalibrate_norm and spec.normalize:
        net.recalibrate_norm_stats(params, train_x)
    return params, history
