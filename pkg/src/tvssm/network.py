"""Deep SSM networks: specs, initialization, forward passes, accounting.

A network is a stack of hidden layers, each holding ``h`` independent SSM
neurons. The per-layer pipeline is

    mixing W  ->  batch norm  ->  SSM neurons  ->  activation

so each hidden layer's normalization acts on its own (h * n_in)-channel
input, and the norm that follows a layer's mixing matrix in the
SSM -> activation -> mixing -> norm ordering belongs to the next layer.
The final mixing matrix maps the last layer's outputs to the output
channels with no activation or normalization after it.

Time-invariant roles are represented internally as K = 1 expansions over
the constant dictionary, which makes the time-invariant network a strict
special case of the time-varying one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import erf

from . import ssm
from .basis import BasisDictionary, BasisFunction, BasisKind, evaluate_grid, sample_dictionary

__all__ = [
    "LayerSpec",
    "NetworkSpec",
    "LayerParams",
    "NetworkParams",
    "init_network",
    "network_forward",
    "forward_with_cache",
    "update_running_stats",
    "recalibrate_norm_stats",
    "project_network",
    "count_parameters",
    "count_macs",
    "match_param_budget",
    "gelu",
    "gelu_grad",
]

ACTIVATIONS = ("identity", "gelu")

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

# Range of per-state discretization steps used to place the initial
# transition spectrum; exp(-delta/2) keeps every eigenvalue inside the
# unit interval so freshly initialized networks satisfy the stability
# budget without projection.
DELTA_RANGE = (1e-3, 1e-1)


@dataclass(frozen=True)
class LayerSpec:
    """Shape and expansion configuration for one hidden SSM layer.

    ``k_a``/``k_b``/``k_c`` are the expansion sizes used when the matching
    role is time-varying; a time-invariant role always behaves as a
    single constant term regardless of its configured k.
    """

    h: int
    n: int
    n_in: int = 1
    n_out: int = 1
    k_a: int = 1
    k_b: int = 1
    k_c: int = 1
    tv_a: bool = False
    tv_b: bool = False
    tv_c: bool = False
    activation: str = "identity"
    diag_a: bool = True

    def __post_init__(self):
        if self.h < 1 or self.n < 1 or self.n_in < 1 or self.n_out < 1:
            raise ValueError(f"layer dimensions must be positive: {self}")
        if min(self.k_a, self.k_b, self.k_c) < 1:
            raise ValueError(f"expansion sizes must be positive: {self}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; choose from {ACTIVATIONS}")

    def k_eff(self, role: str) -> int:
        tv = {"a": self.tv_a, "b": self.tv_b, "c": self.tv_c}[role]
        k = {"a": self.k_a, "b": self.k_b, "c": self.k_c}[role]
        return k if tv else 1


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a full network.

    ``t`` is the training segment length the basis dictionaries are
    sampled for; forward passes accept any sequence length. When
    ``share_layer_dictionaries`` is set, all neurons of a layer share one
    dictionary per matrix role instead of sampling one each.
    """

    input_channels: int
    output_channels: int
    layers: tuple[LayerSpec, ...]
    t: int
    normalize: bool = True
    share_layer_dictionaries: bool = False

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.input_channels < 1 or self.output_channels < 1:
            raise ValueError("channel counts must be positive")
        if not self.layers:
            raise ValueError("need at least one hidden layer")
        if self.t < 1:
            raise ValueError(f"segment length must be positive, got {self.t}")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def mixing_shapes(self) -> list[tuple[int, int]]:
        """(out_dim, in_dim) of every mixing matrix, input side to output side."""
        shapes = []
        prev = self.input_channels
        for ls in self.layers:
            shapes.append((ls.h * ls.n_in, prev))
            prev = ls.h * ls.n_out
        shapes.append((self.output_channels, prev))
        return shapes

    def to_record(self) -> dict:
        return {
            "input_channels": self.input_channels,
            "output_channels": self.output_channels,
            "t": self.t,
            "normalize": self.normalize,
            "share_layer_dictionaries": self.share_layer_dictionaries,
            "layers": [
                {
                    "h": ls.h, "n": ls.n, "n_in": ls.n_in, "n_out": ls.n_out,
                    "k_a": ls.k_a, "k_b": ls.k_b, "k_c": ls.k_c,
                    "tv_a": ls.tv_a, "tv_b": ls.tv_b, "tv_c": ls.tv_c,
                    "activation": ls.activation, "diag_a": ls.diag_a,
                }
                for ls in self.layers
            ],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "NetworkSpec":
        layers = tuple(LayerSpec(**lr) for lr in rec["layers"])
        return cls(
            input_channels=int(rec["input_channels"]),
            output_channels=int(rec["output_channels"]),
            layers=layers,
            t=int(rec["t"]),
            normalize=bool(rec["normalize"]),
            share_layer_dictionaries=bool(rec["share_layer_dictionaries"]),
        )


@dataclass
class LayerParams:
    """Parameter tensors of one hidden layer, stacked across its neurons."""

    a_coeff: np.ndarray  # (h, n, K_A) diagonal or (h, n, n, K_A) dense
    b_coeff: np.ndarray  # (h, n, n_in, K_B)
    c_coeff: np.ndarray  # (h, n_out, n, K_C)
    c_bias: np.ndarray  # (h, n_out)
    dicts_a: tuple[BasisDictionary, ...]  # length h, or 1 when shared
    dicts_b: tuple[BasisDictionary, ...]
    dicts_c: tuple[BasisDictionary, ...]
    norm_scale: Optional[np.ndarray] = None  # (h * n_in,)
    norm_shift: Optional[np.ndarray] = None
    running_mean: Optional[np.ndarray] = None  # eval-mode statistics, not trainable
    running_var: Optional[np.ndarray] = None


@dataclass
class NetworkParams:
    spec: NetworkSpec
    layers: list[LayerParams]
    mixings: list[np.ndarray]

    def trainable_tensors(self) -> list[tuple[str, np.ndarray]]:
        """All learnable tensors in a fixed traversal order."""
        out = []
        for i, lp in enumerate(self.layers):
            out.append((f"layer{i}.a_coeff", lp.a_coeff))
            out.append((f"layer{i}.b_coeff", lp.b_coeff))
            out.append((f"layer{i}.c_coeff", lp.c_coeff))
            out.append((f"layer{i}.c_bias", lp.c_bias))
            if self.spec.normalize:
                out.append((f"layer{i}.norm_scale", lp.norm_scale))
                out.append((f"layer{i}.norm_shift", lp.norm_shift))
        for i, w in enumerate(self.mixings):
            out.append((f"mixing{i}", w))
        return out

    def n_trainable(self) -> int:
        return sum(t.size for _, t in self.trainable_tensors())

    def neuron(self, layer: int, j: int) -> ssm.SSMNeuron:
        """View of one neuron's parameters (arrays are shared, not copied)."""
        ls = self.spec.layers[layer]
        lp = self.layers[layer]
        dict_of = lambda dicts: dicts[0] if len(dicts) == 1 else dicts[j]
        a = ssm.TimeVaryingMatrixParam(lp.a_coeff[j], dict_of(lp.dicts_a), diagonal=ls.diag_a)
        b = ssm.TimeVaryingMatrixParam(lp.b_coeff[j], dict_of(lp.dicts_b))
        c = ssm.TimeVaryingMatrixParam(lp.c_coeff[j], dict_of(lp.dicts_c))
        return ssm.SSMNeuron(a, b, c, lp.c_bias[j])

    def copy(self) -> "NetworkParams":
        layers = [
            LayerParams(
                a_coeff=lp.a_coeff.copy(), b_coeff=lp.b_coeff.copy(),
                c_coeff=lp.c_coeff.copy(), c_bias=lp.c_bias.copy(),
                dicts_a=lp.dicts_a, dicts_b=lp.dicts_b, dicts_c=lp.dicts_c,
                norm_scale=None if lp.norm_scale is None else lp.norm_scale.copy(),
                norm_shift=None if lp.norm_shift is None else lp.norm_shift.copy(),
                running_mean=None if lp.running_mean is None else lp.running_mean.copy(),
                running_var=None if lp.running_var is None else lp.running_var.copy(),
            )
            for lp in self.layers
        ]
        return NetworkParams(self.spec, layers, [w.copy() for w in self.mixings])


def _sample_role_dicts(k: int, spec: NetworkSpec, h: int, rng) -> tuple[BasisDictionary, ...]:
    if spec.share_layer_dictionaries:
        return (sample_dictionary(k, spec.t, rng),)
    return tuple(sample_dictionary(k, spec.t, rng) for _ in range(h))


def init_network(spec: NetworkSpec, rng: np.random.Generator) -> NetworkParams:
    """Allocate and initialize all parameter tensors.

    Transition coefficients start from a stable spectrum exp(-delta/2)
    with delta log-spaced over DELTA_RANGE per state index, split evenly
    over the K_A terms so the materialized value under an all-ones basis
    column equals the base value (and the row budget equals |base| < 1).
    Input coefficients start at 1 and output coefficients uniform on
    [0, 1), with the same even split over their expansion terms. Mixing
    weights are uniform on +-1/sqrt(fan_in); biases and norm shifts start
    at zero, norm scales at one.
    """
    layers = []
    for ls in spec.layers:
        ka, kb, kc = ls.k_eff("a"), ls.k_eff("b"), ls.k_eff("c")
        dicts_a = _sample_role_dicts(ka, spec, ls.h, rng)
        dicts_b = _sample_role_dicts(kb, spec, ls.h, rng)
        dicts_c = _sample_role_dicts(kc, spec, ls.h, rng)

        delta = np.logspace(math.log10(DELTA_RANGE[0]), math.log10(DELTA_RANGE[1]), ls.n)
        a_base = np.exp(-0.5 * delta)  # (n,)
        if ls.diag_a:
            a_coeff = np.broadcast_to(a_base[None, :, None] / ka, (ls.h, ls.n, ka)).copy()
        else:
            a_coeff = np.zeros((ls.h, ls.n, ls.n, ka))
            idx = np.arange(ls.n)
            a_coeff[:, idx, idx, :] = a_base[None, :, None] / ka

        b_coeff = np.full((ls.h, ls.n, ls.n_in, kb), 1.0 / kb)
        c_base = rng.uniform(0.0, 1.0, size=(ls.h, ls.n_out, ls.n))
        c_coeff = np.broadcast_to(c_base[..., None] / kc, (ls.h, ls.n_out, ls.n, kc)).copy()
        c_bias = np.zeros((ls.h, ls.n_out))

        ch = ls.h * ls.n_in
        layers.append(LayerParams(
            a_coeff=a_coeff, b_coeff=b_coeff, c_coeff=c_coeff, c_bias=c_bias,
            dicts_a=dicts_a, dicts_b=dicts_b, dicts_c=dicts_c,
            norm_scale=np.ones(ch) if spec.normalize else None,
            norm_shift=np.zeros(ch) if spec.normalize else None,
            running_mean=np.zeros(ch) if spec.normalize else None,
            running_var=np.ones(ch) if spec.normalize else None,
        ))

    mixings = []
    for out_dim, in_dim in spec.mixing_shapes():
        bound = 1.0 / math.sqrt(in_dim)
        mixings.append(rng.uniform(-bound, bound, size=(out_dim, in_dim)))
    return NetworkParams(spec, layers, mixings)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x / np.sqrt(2.0))) + x * np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def layer_basis_grids(lp: LayerParams, ls: LayerSpec, t: int):
    """Per-role basis grids stacked across neurons, each (h, K, t)."""

    def stack(dicts, k):
        if len(dicts) == 1:
            return np.broadcast_to(evaluate_grid(dicts[0], t)[None], (ls.h, k, t))
        return np.stack([evaluate_grid(d, t) for d in dicts])

    return (
        stack(lp.dicts_a, ls.k_eff("a")),
        stack(lp.dicts_b, ls.k_eff("b")),
        stack(lp.dicts_c, ls.k_eff("c")),
    )


def _forward(params: NetworkParams, x: np.ndarray, training: bool, want_cache: bool):
    # all intermediates live in time-major layout (t, batch, ...) so the
    # recurrence steps touch contiguous slices; inputs/outputs stay
    # (batch, channels, t) at the boundary
    spec = params.spec
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != spec.input_channels:
        raise ValueError(
            f"input must be (batch, {spec.input_channels}, T), got shape {x.shape}"
        )
    n_batch, _, t_len = x.shape
    cur = np.ascontiguousarray(x.transpose(2, 0, 1))  # (t, batch, ch)
    caches = [] if want_cache else None

    for li, (ls, lp) in enumerate(zip(spec.layers, params.layers)):
        w = params.mixings[li]
        pre_mix = cur
        z = np.einsum("oc,tbc->tbo", w, cur)

        if spec.normalize:
            if training:
                mean = z.mean(axis=(0, 1))
                var = z.var(axis=(0, 1))
            else:
                mean = lp.running_mean
                var = lp.running_var
            sigma = np.sqrt(var + BN_EPS)
            xhat = (z - mean) / sigma
            nz = lp.norm_scale * xhat + lp.norm_shift
        else:
            mean = var = sigma = xhat = None
            nz = z

        uin = nz.reshape(t_len, n_batch, ls.h, ls.n_in)
        phi_a, phi_b, phi_c = layer_basis_grids(lp, ls, t_len)
        if ls.diag_a:
            amat = np.einsum("hnk,hkt->thn", lp.a_coeff, phi_a)
        else:
            amat = np.einsum("hmnk,hkt->thmn", lp.a_coeff, phi_a)
        bmat = np.einsum("hnik,hkt->thni", lp.b_coeff, phi_b)
        cmat = np.einsum("honk,hkt->thon", lp.c_coeff, phi_c)

        # bu[j] pairs the time-(j+1) input matrix with the time-j input
        bu = np.einsum("thni,tbhi->tbhn", bmat[1:], uin[:-1])
        xs = np.zeros((t_len, n_batch, ls.h, ls.n))
        if ls.diag_a:
            for t in range(1, t_len):
                np.multiply(amat[t], xs[t - 1], out=xs[t])
                xs[t] += bu[t - 1]
        else:
            for t in range(1, t_len):
                np.einsum("hmn,bhn->bhm", amat[t], xs[t - 1], out=xs[t])
                xs[t] += bu[t - 1]
        ys = np.einsum("thon,tbhn->tbho", cmat, xs) + lp.c_bias

        act = gelu(ys) if ls.activation == "gelu" else ys
        cur = act.reshape(t_len, n_batch, ls.h * ls.n_out)

        if want_cache:
            caches.append({
                "pre_mix": pre_mix, "mean": mean, "var": var, "sigma": sigma,
                "xhat": xhat, "uin": uin,
                "phi_a": phi_a, "phi_b": phi_b, "phi_c": phi_c,
                "amat": amat, "bmat": bmat, "cmat": cmat,
                "xs": xs, "ys": ys,
            })

    head_in = cur
    out = np.einsum("oc,tbc->bot", params.mixings[-1], cur)
    if want_cache:
        return out, {"layers": caches, "head_in": head_in}
    return out, None


def network_forward(params: NetworkParams, inputs, training: bool = False) -> np.ndarray:
    """Map (batch, in_channels, T) to (batch, out_channels, T).

    Evaluation mode (the default) normalizes with the stored running
    statistics and is deterministic; training mode uses the batch's own
    statistics but does not update the stored ones.
    """
    out, _ = _forward(params, inputs, training=training, want_cache=False)
    return out


def forward_with_cache(params: NetworkParams, inputs) -> tuple[np.ndarray, dict]:
    """Training-mode forward returning the intermediates needed by BPTT."""
    return _forward(params, inputs, training=True, want_cache=True)


def update_running_stats(params: NetworkParams, cache: dict, momentum: float = BN_MOMENTUM):
    """Fold the cached batch statistics into the running estimates."""
    if not params.spec.normalize:
        return
    for lp, lc in zip(params.layers, cache["layers"]):
        lp.running_mean += momentum * (lc["mean"] - lp.running_mean)
        lp.running_var += momentum * (lc["var"] - lp.running_var)


def recalibrate_norm_stats(params: NetworkParams, inputs, chunk_size: int = 256):
    """Replace running statistics with exact statistics of ``inputs``.

    Works layer by layer: each layer's statistics are recomputed from a
    streaming pass in which all earlier layers already use their final
    (recalibrated) statistics, so evaluation-mode forward passes see the
    same normalization the statistics were measured under.
    """
    spec = params.spec
    if not spec.normalize:
        return
    inputs = np.asarray(inputs, dtype=np.float64)
    for li in range(spec.n_layers):
        total = 0
        acc_sum = None
        acc_sq = None
        for start in range(0, inputs.shape[0], chunk_size):
            cur = np.ascontiguousarray(inputs[start:start + chunk_size].transpose(2, 0, 1))
            for lj in range(li):
                cur = _layer_stage_eval(params, lj, cur)
            z = np.einsum("oc,tbc->tbo", params.mixings[li], cur)
            flat = z.reshape(-1, z.shape[2])
            if acc_sum is None:
                acc_sum = flat.sum(axis=0)
                acc_sq = (flat * flat).sum(axis=0)
            else:
                acc_sum += flat.sum(axis=0)
                acc_sq += (flat * flat).sum(axis=0)
            total += flat.shape[0]
        mean = acc_sum / total
        var = acc_sq / total - mean * mean
        lp = params.layers[li]
        lp.running_mean[:] = mean
        lp.running_var[:] = np.maximum(var, 0.0)


def _layer_stage_eval(params: NetworkParams, li: int, cur: np.ndarray) -> np.ndarray:
    """One full hidden-layer stage (mix, norm, SSM, activation) in eval mode.

    ``cur`` is time-major (t, batch, channels), as is the result.
    """
    spec = params.spec
    ls = spec.layers[li]
    lp = params.layers[li]
    t_len, n_batch, _ = cur.shape
    z = np.einsum("oc,tbc->tbo", params.mixings[li], cur)
    if spec.normalize:
        sigma = np.sqrt(lp.running_var + BN_EPS)
        z = lp.norm_scale * (z - lp.running_mean) / sigma + lp.norm_shift
    uin = z.reshape(t_len, n_batch, ls.h, ls.n_in)
    phi_a, phi_b, phi_c = layer_basis_grids(lp, ls, t_len)
    if ls.diag_a:
        amat = np.einsum("hnk,hkt->thn", lp.a_coeff, phi_a)
    else:
        amat = np.einsum("hmnk,hkt->thmn", lp.a_coeff, phi_a)
    bmat = np.einsum("hnik,hkt->thni", lp.b_coeff, phi_b)
    cmat = np.einsum("honk,hkt->thon", lp.c_coeff, phi_c)
    bu = np.einsum("thni,tbhi->tbhn", bmat[1:], uin[:-1])
    xs = np.zeros((t_len, n_batch, ls.h, ls.n))
    if ls.diag_a:
        for t in range(1, t_len):
            np.multiply(amat[t], xs[t - 1], out=xs[t])
            xs[t] += bu[t - 1]
    else:
        for t in range(1, t_len):
            np.einsum("hmn,bhn->bhm", amat[t], xs[t - 1], out=xs[t])
            xs[t] += bu[t - 1]
    ys = np.einsum("thon,tbhn->tbho", cmat, xs) + lp.c_bias
    act = gelu(ys) if ls.activation == "gelu" else ys
    return act.reshape(t_len, n_batch, ls.h * ls.n_out)


def project_network(params: NetworkParams, eps: float = 1e-4) -> bool:
    """Apply the stability projection to every diagonal transition tensor.

    Dense transition matrices are left untouched (no budget guarantee is
    offered for them). Returns True when any row was rescaled.
    """
    changed = False
    for ls, lp in zip(params.spec.layers, params.layers):
        if ls.diag_a:
            rows = lp.a_coeff.reshape(-1, lp.a_coeff.shape[-1])
            changed |= ssm.project_rows_inplace(rows, eps)
    return changed


def max_stability_budget(params: NetworkParams) -> float:
    """Largest per-row absolute coefficient sum across diagonal transitions."""
    worst = 0.0
    for ls, lp in zip(params.spec.layers, params.layers):
        if ls.diag_a:
            worst = max(worst, float(np.abs(lp.a_coeff).sum(axis=-1).max()))
    return worst


@dataclass(frozen=True)
class ParameterCount:
    """Itemized trainable-parameter table for a network spec."""

    items: tuple[tuple[str, int], ...]
    per_neuron: tuple[int, ...]  # SSM scalars per neuron, one entry per layer
    total: int

    def as_dict(self) -> dict:
        return dict(self.items)


def count_parameters(spec: NetworkSpec) -> ParameterCount:
    """Count every learnable scalar the spec will allocate.

    Per layer: a diagonal transition contributes n coefficients per
    neuron (n^2 when dense), scaled by its expansion size; input and
    output matrices contribute n*n_in and n_out*n scaled likewise; each
    neuron has n_out output biases; the norm layer holds 2*h*n_in
    scale/shift parameters. Mixing matrices contribute out_dim*in_dim
    each. ``per_neuron`` matches the traversal of an allocated network:
    for n_in = n_out = 1 and diagonal transitions it equals
    3n + 1 for a time-invariant neuron and n(K_A + K_B + K_C) + 1 for a
    time-varying one.
    """
    items: list[tuple[str, int]] = []
    per_neuron: list[int] = []
    for li, ls in enumerate(spec.layers):
        ka, kb, kc = ls.k_eff("a"), ls.k_eff("b"), ls.k_eff("c")
        a = (ls.n if ls.diag_a else ls.n * ls.n) * ka
        b = ls.n * ls.n_in * kb
        c = ls.n_out * ls.n * kc
        per_neuron.append(a + b + c + ls.n_out)
        items.append((f"layer{li}.A", ls.h * a))
        items.append((f"layer{li}.B", ls.h * b))
        items.append((f"layer{li}.C", ls.h * c))
        items.append((f"layer{li}.C_bias", ls.h * ls.n_out))
        if spec.normalize:
            items.append((f"layer{li}.norm", 2 * ls.h * ls.n_in))
    for bi, (out_dim, in_dim) in enumerate(spec.mixing_shapes()):
        items.append((f"W{bi}", out_dim * in_dim))
    total = sum(count for _, count in items)
    return ParameterCount(tuple(items), tuple(per_neuron), total)


@dataclass(frozen=True)
class MacCount:
    """Multiply-accumulate counts for one inference pass of length t."""

    items: tuple[tuple[str, int], ...]
    per_step: int
    total: int

    def as_dict(self) -> dict:
        return dict(self.items)


def count_macs(spec: NetworkSpec, t: int) -> MacCount:
    """MACs for one single-sequence forward pass with precomputed matrices.

    Counted per time step and multiplied by ``t``: the state update costs
    n (diagonal) or n^2 (dense) plus n*n_in per neuron, the output
    projection n_out*n per neuron, each mixing matrix out_dim*in_dim, and
    evaluation-mode normalization one MAC per channel. Expansion sizes
    never enter, so time-varying and time-invariant specs with the same
    dimensions cost exactly the same. The one-off cost of materializing
    the matrices is not included here.
    """
    if t < 1:
        raise ValueError(f"need t >= 1, got {t}")
    items: list[tuple[str, int]] = []
    per_step = 0
    shapes = spec.mixing_shapes()
    for li, ls in enumerate(spec.layers):
        state = ls.h * ((ls.n if ls.diag_a else ls.n * ls.n) + ls.n * ls.n_in)
        out_proj = ls.h * ls.n_out * ls.n
        items.append((f"layer{li}.recurrence", state * t))
        items.append((f"layer{li}.output_projection", out_proj * t))
        per_step += state + out_proj
        if spec.normalize:
            norm = ls.h * ls.n_in
            items.append((f"layer{li}.norm", norm * t))
            per_step += norm
    for bi, (out_dim, in_dim) in enumerate(shapes):
        items.append((f"W{bi}", out_dim * in_dim * t))
        per_step += out_dim * in_dim
    return MacCount(tuple(items), per_step, per_step * t)


def match_param_budget(n_vary: int, k_a: int, k_b: int, k_c: int) -> int:
    """Time-invariant state size with the same per-neuron budget.

    For scalar-channel neurons with diagonal transitions, a time-varying
    neuron holds n_vary*(k_a + k_b + k_c) + 1 scalars and a
    time-invariant one 3*n_invar + 1, so equality requires
    n_invar = n_vary*(k_a + k_b + k_c)/3, which must come out integral.
    """
    for name, v in (("n_vary", n_vary), ("k_a", k_a), ("k_b", k_b), ("k_c", k_c)):
        if v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v}")
    prod = n_vary * (k_a + k_b + k_c)
    if prod % 3 != 0:
        raise ValueError(
            f"matched time-invariant state size n_vary*(k_a+k_b+k_c)/3 = {prod / 3} "
            "is not an integer"
        )
    return prod // 3
