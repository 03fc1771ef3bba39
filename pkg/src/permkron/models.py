"""Mixer architectures and the masked dense baseline, assembled from PK layers.

Two mixer variants share one code path: ``s_mixer`` blocks mix tokens and
channels with single weight matrices, ``mlp_mixer`` blocks use two-layer MLPs
widened by an expansion factor. Every mixing operation runs as a PK layer on
the column-stacked feature vector, so the "normal" architecture and its
random-permuted counterpart differ only in the frozen permutation arrays
stored next to the weights.

Permutation bookkeeping, fixed here once: features live as tokens x channels
matrices and ``vec`` stacks columns (chunks of length S). Under that
convention token mixing is already block diagonal, so the normal token pair
is (identity, identity), while channel mixing needs the transposing pair
(commutation(S, C), commutation(C, S)) folded into the same block so the
residual add lines up. ``bare`` mode drops skip connections and layer norms
and exists for the flat-MLP expansion oracle; its layer chain is enumerated
by ``body_layer_specs``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import dense, perms, pk

VARIANTS = ("s_mixer", "mlp_mixer")
PERMUTATION_MODES = ("normal", "random")


@dataclass(frozen=True)
class MixerConfig:
    variant: str = "s_mixer"
    in_tokens: int = 64        # patches per image
    in_channels: int = 48      # values per patch
    tokens: int = 64           # token count inside the mixing blocks
    channels: int = 64         # channel count inside the mixing blocks
    expansion: int = 1         # hidden widening of the mixing MLPs
    depth: int = 8             # number of base blocks
    num_classes: int = 10
    permutation_mode: str = "normal"
    perm_seed: int | None = None
    bare: bool = False         # no skips, no layer norm; oracle form only

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.permutation_mode not in PERMUTATION_MODES:
            raise ValueError(f"permutation_mode must be one of {PERMUTATION_MODES}")
        for name in ("in_tokens", "in_channels", "tokens", "channels", "num_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        if self.expansion < 1:
            raise ValueError("expansion must be at least 1")
        if self.variant == "s_mixer" and self.expansion != 1:
            raise ValueError("s_mixer has no hidden mixing layer; expansion is fixed to 1")
        if self.permutation_mode == "random" and self.perm_seed is None:
            raise ValueError("random permutation mode needs perm_seed")


@dataclass(frozen=True)
class SWMLPConfig:
    """Masked dense baseline: per-patch embedding, then residual masked FC blocks."""

    width: int                 # hidden width m
    density: float             # nonzero fraction p of each masked weight
    expansion: int = 1
    depth: int = 1
    mask_seed: int = 0
    num_classes: int = 10
    in_tokens: int = 64
    in_channels: int = 48

    def __post_init__(self):
        if not 0.0 < self.density <= 1.0:
            raise ValueError("density must lie in (0, 1]")
        if self.width < 1 or self.depth < 0 or self.expansion < 1:
            raise ValueError("width >= 1, depth >= 0, expansion >= 1 required")

    @property
    def embed_channels(self) -> int:
        return math.ceil(self.width / self.in_tokens)

    @property
    def needs_entry(self) -> bool:
        return self.in_tokens * self.embed_channels != self.width


class ModelParams:
    """Ordered name -> array store with trainability flags.

    Frozen permutations are int64 index arrays and masks are 0/1 float
    arrays; both are flagged non-trainable and the optimizer never touches
    them.
    """

    def __init__(self):
        self._arrays: dict[str, np.ndarray] = {}
        self._trainable: dict[str, bool] = {}

    def add(self, name: str, array, trainable: bool = True):
        if name in self._arrays:
            raise ValueError(f"duplicate parameter {name!r}")
        self._arrays[name] = np.asarray(array)
        self._trainable[name] = bool(trainable)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def names(self):
        return list(self._arrays)

    def items(self):
        return self._arrays.items()

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def set_trainable(self, name: str, flag: bool):
        if name not in self._arrays:
            raise KeyError(name)
        self._trainable[name] = bool(flag)

    def trainable_names(self):
        return [n for n in self._arrays if self._trainable[n]]

    def update(self, name: str, array: np.ndarray):
        if array.shape != self._arrays[name].shape:
            raise ValueError(f"shape change for {name!r}")
        self._arrays[name] = array

    def copy(self) -> "ModelParams":
        out = ModelParams()
        for name, arr in self._arrays.items():
            out.add(name, arr.copy(), self._trainable[name])
        return out


# ---------------------------------------------------------------------------
# input handling


def patchify(image, patch_size: int) -> np.ndarray:
    """Rearrange an H x W x 3 image into non-overlapping patches.

    Output row s holds patch s in row-major patch order; within a patch the
    values run row-major over pixels with the three channels innermost. The
    result is (H*W/P^2) x (3*P^2).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {image.shape}")
    h, w, _ = image.shape
    p = int(patch_size)
    if p < 1 or h % p or w % p:
        raise ValueError(f"patch size {p} does not divide image size {h}x{w}")
    grid_h, grid_w = h // p, w // p
    patches = image.reshape(grid_h, p, grid_w, p, 3).transpose(0, 2, 1, 3, 4)
    return patches.reshape(grid_h * grid_w, p * p * 3)


def patchify_batch(images, patch_size: int) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[3] != 3:
        raise ValueError(f"expected N x H x W x 3 images, got shape {images.shape}")
    n, h, w, _ = images.shape
    p = int(patch_size)
    if p < 1 or h % p or w % p:
        raise ValueError(f"patch size {p} does not divide image size {h}x{w}")
    grid_h, grid_w = h // p, w // p
    patches = images.reshape(n, grid_h, p, grid_w, p, 3).transpose(0, 1, 3, 2, 4, 5)
    return patches.reshape(n, grid_h * grid_w, p * p * 3)


def per_patch_fc(x, weight) -> np.ndarray:
    """Embed each patch: Y = X W^T with W of shape (channels, patch_values)."""
    x = dense.as_matrix(x)
    weight = dense.as_matrix(weight)
    if x.shape[1] != weight.shape[1]:
        raise ValueError(f"patch width {x.shape[1]} does not match weight {weight.shape}")
    return x @ weight.T


def generate_mask(rows: int, cols: int, p: float, seed) -> np.ndarray:
    """0/1 mask with exactly round(rows*cols*p) ones, placed uniformly without replacement."""
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    total = rows * cols
    count = int(math.floor(total * p + 0.5))
    rng = np.random.default_rng(seed)
    flat = np.zeros(total, dtype=np.float64)
    flat[rng.choice(total, size=count, replace=False)] = 1.0
    return flat.reshape(rows, cols)


# ---------------------------------------------------------------------------
# parameter construction


def _gaussian(rng, shape):
    # fan-in scaled: std = 1/sqrt(inputs feeding one output unit)
    fan_in = shape[-1]
    return rng.standard_normal(shape) / math.sqrt(fan_in)


def _normal_token_pair(c: int, s_in: int, s_out: int):
    return (
        perms.identity(c * s_in).sigma,
        perms.identity(c * s_out).sigma,
    )


def _normal_channel_pair(s: int, c_in: int, c_out: int):
    return (
        perms.commutation(s, c_in).sigma,
        perms.commutation(c_out, s).sigma,
    )


def _random_pair(rng, in_size: int, out_size: int):
    return (
        perms.random_permutation(in_size, rng).sigma,
        perms.random_permutation(out_size, rng).sigma,
    )


def init_mixer_params(config: MixerConfig, seed: int) -> ModelParams:
    """Initialize weights (fan-in scaled Gaussians), norms, and frozen permutations.

    In random mode the permutations come from one PCG64 stream seeded with
    ``config.perm_seed``, drawn in block order, entry permutation before exit.
    Bare configs carry only the mixing weights and permutations.
    """
    rng = np.random.default_rng(seed)
    perm_rng = np.random.default_rng(config.perm_seed) if config.permutation_mode == "random" else None
    s, c, g = config.tokens, config.channels, config.expansion
    params = ModelParams()

    if not config.bare:
        params.add("patch_embed.weight", _gaussian(rng, (c, config.in_channels)))

    for layer in range(config.depth):
        pre = f"block{layer}"
        s_in = config.in_tokens if (layer == 0 and not config.bare) else s

        if not config.bare:
            params.add(f"{pre}.token_norm.gain", np.ones(c))
            params.add(f"{pre}.token_norm.bias", np.zeros(c))
            if layer == 0:
                params.add(f"{pre}.skip.weight", _gaussian(rng, (s, config.in_tokens)))
                params.add(f"{pre}.skip_norm.gain", np.ones(c))
                params.add(f"{pre}.skip_norm.bias", np.zeros(c))

        if config.variant == "s_mixer":
            params.add(f"{pre}.token.weight", _gaussian(rng, (s, s_in)))
        else:
            params.add(f"{pre}.token.weight1", _gaussian(rng, (g * s, s_in)))
            params.add(f"{pre}.token.weight2", _gaussian(rng, (s, g * s)))
        if perm_rng is not None:
            t_in, t_out = _random_pair(perm_rng, c * s_in, c * s)
        else:
            t_in, t_out = _normal_token_pair(c, s_in, s)
        params.add(f"{pre}.token.perm_in", t_in, trainable=False)
        params.add(f"{pre}.token.perm_out", t_out, trainable=False)

        if not config.bare:
            params.add(f"{pre}.channel_norm.gain", np.ones(c))
            params.add(f"{pre}.channel_norm.bias", np.zeros(c))

        if config.variant == "s_mixer":
            params.add(f"{pre}.channel.weight", _gaussian(rng, (c, c)))
        else:
            params.add(f"{pre}.channel.weight1", _gaussian(rng, (g * c, c)))
            params.add(f"{pre}.channel.weight2", _gaussian(rng, (c, g * c)))
        if perm_rng is not None:
            c_in, c_out = _random_pair(perm_rng, s * c, s * c)
        else:
            c_in, c_out = _normal_channel_pair(s, c, c)
        params.add(f"{pre}.channel.perm_in", c_in, trainable=False)
        params.add(f"{pre}.channel.perm_out", c_out, trainable=False)

    if not config.bare:
        params.add("head_norm.gain", np.ones(c))
        params.add("head_norm.bias", np.zeros(c))
        params.add("classifier.weight", _gaussian(rng, (config.num_classes, c)))
        params.add("classifier.bias", np.zeros(config.num_classes))
    return params


def init_sw_mlp_params(config: SWMLPConfig, seed: int) -> ModelParams:
    """Masked dense baseline parameters with frozen masks.

    Mask seeds derive from (mask_seed, block, slot) so each mask is pinned
    independently of the weight draw order.
    """
    rng = np.random.default_rng(seed)
    m, g = config.width, config.expansion
    params = ModelParams()
    params.add("patch_embed.weight", _gaussian(rng, (config.embed_channels, config.in_channels)))
    if config.needs_entry:
        params.add("entry.weight", _gaussian(rng, (m, config.in_tokens * config.embed_channels)))
    for layer in range(config.depth):
        pre = f"block{layer}"
        params.add(f"{pre}.norm.gain", np.ones(m))
        params.add(f"{pre}.norm.bias", np.zeros(m))
        if g == 1:
            params.add(f"{pre}.weight", _gaussian(rng, (m, m)))
            params.add(f"{pre}.mask", generate_mask(m, m, config.density, [config.mask_seed, layer, 0]),
                       trainable=False)
        else:
            params.add(f"{pre}.weight1", _gaussian(rng, (g * m, m)))
            params.add(f"{pre}.mask1", generate_mask(g * m, m, config.density, [config.mask_seed, layer, 0]),
                       trainable=False)
            params.add(f"{pre}.weight2", _gaussian(rng, (m, g * m)))
            params.add(f"{pre}.mask2", generate_mask(m, g * m, config.density, [config.mask_seed, layer, 1]),
                       trainable=False)
    params.add("classifier.weight", _gaussian(rng, (config.num_classes, m)))
    params.add("classifier.bias", np.zeros(config.num_classes))
    return params


def init_params(config, seed: int) -> ModelParams:
    if isinstance(config, MixerConfig):
        return init_mixer_params(config, seed)
    if isinstance(config, SWMLPConfig):
        return init_sw_mlp_params(config, seed)
    raise TypeError(f"unknown config type {type(config)!r}")


# ---------------------------------------------------------------------------
# forward graphs


def _graph_param_vars(tape: ad.Tape, params: ModelParams) -> dict:
    out = {}
    for name, arr in params.items():
        if np.issubdtype(arr.dtype, np.integer):
            continue  # permutation index arrays enter ops as raw indices
        if params.is_trainable(name):
            out[name] = tape.leaf(arr, name)
        else:
            out[name] = tape.constant(arr, name)
    return out


def _vecv(x: ad.Var) -> ad.Var:
    """Column-stacked vec of the last two axes: (..., S, C) -> (..., C*S)."""
    lead = x.shape[:-2]
    s, c = x.shape[-2], x.shape[-1]
    return ad.reshape(ad.transpose_last2(x), lead + (c * s,))


def _matv(x: ad.Var, s: int, c: int) -> ad.Var:
    """Inverse of _vecv: (..., S*C) -> (..., S, C)."""
    lead = x.shape[:-1]
    return ad.transpose_last2(ad.reshape(x, lead + (c, s)))


def _pk_op(x: ad.Var, weight: ad.Var, n1: int, n2: int, k: int,
           sigma_in, sigma_out, activation: str) -> ad.Var:
    """PK layer on (..., n1*n2) vectors; sigma None means identity."""
    lead = x.shape[:-1]
    if sigma_in is not None:
        x = ad.permute_last(x, sigma_in, np.argsort(sigma_in))
    y = ad.transpose_last2(ad.reshape(x, lead + (n1, n2)))
    z = ad.matmul(weight, y)
    z = ad.reshape(ad.transpose_last2(z), lead + (n1 * k,))
    if sigma_out is not None:
        z = ad.permute_last(z, sigma_out, np.argsort(sigma_out))
    return ad.gelu(z) if activation == "gelu" else z


def _token_mix(pv, params, config, x: ad.Var, layer: int,
               activation: str | None = None) -> ad.Var:
    """Token-mixing half of a base block; input (..., S_in, C), output (..., S, C)."""
    s, c, g = config.tokens, config.channels, config.expansion
    s_in = x.shape[-2]
    pre = f"block{layer}"
    if config.bare:
        xn = x
    else:
        xn = ad.layer_norm(x, pv[f"{pre}.token_norm.gain"], pv[f"{pre}.token_norm.bias"])
    t = _vecv(xn)
    p_in = params[f"{pre}.token.perm_in"]
    p_out = params[f"{pre}.token.perm_out"]
    if config.variant == "s_mixer":
        mixed = _pk_op(t, pv[f"{pre}.token.weight"], c, s_in, s, p_in, p_out,
                       activation or "gelu")
    else:
        # two-layer mixing MLP: hidden activation inside, linear on the way
        # out when a residual follows, activated in the bare stack
        outer = activation or ("gelu" if config.bare else "linear")
        hidden = _pk_op(t, pv[f"{pre}.token.weight1"], c, s_in, g * s, p_in, None, "gelu")
        mixed = _pk_op(hidden, pv[f"{pre}.token.weight2"], c, g * s, s, None, p_out, outer)
    mixed = _matv(mixed, s, c)
    if config.bare:
        return mixed
    if layer == 0:
        skip = ad.matmul(pv[f"{pre}.skip.weight"], x)
        skip = ad.layer_norm(skip, pv[f"{pre}.skip_norm.gain"], pv[f"{pre}.skip_norm.bias"])
    else:
        skip = x
    return ad.add(skip, mixed)


def _channel_mix(pv, params, config, u: ad.Var, layer: int,
                 activation: str | None = None) -> ad.Var:
    s, c, g = config.tokens, config.channels, config.expansion
    pre = f"block{layer}"
    if config.bare:
        un = u
    else:
        un = ad.layer_norm(u, pv[f"{pre}.channel_norm.gain"], pv[f"{pre}.channel_norm.bias"])
    t = _vecv(un)
    p_in = params[f"{pre}.channel.perm_in"]
    p_out = params[f"{pre}.channel.perm_out"]
    if config.variant == "s_mixer":
        mixed = _pk_op(t, pv[f"{pre}.channel.weight"], s, c, c, p_in, p_out,
                       activation or "gelu")
    else:
        outer = activation or ("gelu" if config.bare else "linear")
        hidden = _pk_op(t, pv[f"{pre}.channel.weight1"], s, c, g * c, p_in, None, "gelu")
        mixed = _pk_op(hidden, pv[f"{pre}.channel.weight2"], s, g * c, c, None, p_out, outer)
    mixed = _matv(mixed, s, c)
    if config.bare:
        return mixed
    return ad.add(u, mixed)


def mixer_logits_graph(tape: ad.Tape, config: MixerConfig, params: ModelParams,
                       inputs: np.ndarray) -> ad.Var:
    """Full model graph on a patchified batch (B, S0, C0)."""
    if config.bare:
        raise ValueError("bare configs have no classification head")
    x = tape.constant(np.asarray(inputs, dtype=np.float64))
    pv = _graph_param_vars(tape, params)
    h = ad.matmul(x, ad.transpose_last2(pv["patch_embed.weight"]))
    for layer in range(config.depth):
        h = _token_mix(pv, params, config, h, layer)
        h = _channel_mix(pv, params, config, h, layer)
    z = ad.layer_norm(h, pv["head_norm.gain"], pv["head_norm.bias"])
    pooled = ad.mean_axis(z, axis=1)
    logits = ad.matmul(pooled, ad.transpose_last2(pv["classifier.weight"]))
    return ad.add(logits, pv["classifier.bias"])


def sw_mlp_logits_graph(tape: ad.Tape, config: SWMLPConfig, params: ModelParams,
                        inputs: np.ndarray) -> ad.Var:
    x = tape.constant(np.asarray(inputs, dtype=np.float64))
    pv = _graph_param_vars(tape, params)
    h = ad.matmul(x, ad.transpose_last2(pv["patch_embed.weight"]))
    v = _vecv(h)
    if "entry.weight" in params:
        v = ad.matmul(v, ad.transpose_last2(pv["entry.weight"]))
    for layer in range(config.depth):
        pre = f"block{layer}"
        hn = ad.layer_norm(v, pv[f"{pre}.norm.gain"], pv[f"{pre}.norm.bias"])
        if config.expansion == 1:
            w = ad.mul(pv[f"{pre}.weight"], pv[f"{pre}.mask"])
            z = ad.matmul(hn, ad.transpose_last2(w))
            v = ad.add(v, ad.gelu(z))
        else:
            w1 = ad.mul(pv[f"{pre}.weight1"], pv[f"{pre}.mask1"])
            w2 = ad.mul(pv[f"{pre}.weight2"], pv[f"{pre}.mask2"])
            z1 = ad.gelu(ad.matmul(hn, ad.transpose_last2(w1)))
            z2 = ad.matmul(z1, ad.transpose_last2(w2))
            v = ad.add(v, ad.gelu(z2))
    logits = ad.matmul(v, ad.transpose_last2(pv["classifier.weight"]))
    return ad.add(logits, pv["classifier.bias"])


def build_logits(tape: ad.Tape, config, params: ModelParams, inputs) -> ad.Var:
    if isinstance(config, MixerConfig):
        return mixer_logits_graph(tape, config, params, inputs)
    if isinstance(config, SWMLPConfig):
        return sw_mlp_logits_graph(tape, config, params, inputs)
    raise TypeError(f"unknown config type {type(config)!r}")


def model_forward(config, params: ModelParams, inputs) -> np.ndarray:
    """Logits for a patchified batch, value only."""
    tape = ad.Tape()
    return build_logits(tape, config, params, inputs).value


# single-matrix block entry points, mostly for oracles and unit checks


def token_mixing_block(x, params: ModelParams, config: MixerConfig, index: int = 0,
                       activation: str | None = None) -> np.ndarray:
    tape = ad.Tape()
    pv = _graph_param_vars(tape, params)
    xv = tape.constant(dense.as_matrix(x)[None, :, :])
    return _token_mix(pv, params, config, xv, index, activation).value[0]


def channel_mixing_block(u, params: ModelParams, config: MixerConfig, index: int = 0,
                         activation: str | None = None) -> np.ndarray:
    tape = ad.Tape()
    pv = _graph_param_vars(tape, params)
    uv = tape.constant(dense.as_matrix(u)[None, :, :])
    return _channel_mix(pv, params, config, uv, index, activation).value[0]


def sw_block(x, params: ModelParams, config: SWMLPConfig, index: int = 0) -> np.ndarray:
    x = dense.as_vector(x)
    if x.size != config.width:
        raise ValueError(f"input length {x.size} != width {config.width}")
    tape = ad.Tape()
    pv = _graph_param_vars(tape, params)
    pre = f"block{index}"
    v = tape.constant(x[None, :])
    hn = ad.layer_norm(v, pv[f"{pre}.norm.gain"], pv[f"{pre}.norm.bias"])
    if config.expansion == 1:
        w = ad.mul(pv[f"{pre}.weight"], pv[f"{pre}.mask"])
        out = ad.add(v, ad.gelu(ad.matmul(hn, ad.transpose_last2(w))))
    else:
        w1 = ad.mul(pv[f"{pre}.weight1"], pv[f"{pre}.mask1"])
        w2 = ad.mul(pv[f"{pre}.weight2"], pv[f"{pre}.mask2"])
        z1 = ad.gelu(ad.matmul(hn, ad.transpose_last2(w1)))
        out = ad.add(v, ad.gelu(ad.matmul(z1, ad.transpose_last2(w2))))
    return out.value[0]


# ---------------------------------------------------------------------------
# flat-MLP expansion of the bare block stack


def body_layer_specs(config: MixerConfig, params: ModelParams) -> list[pk.PKLayerSpec]:
    """PK layer chain of the bare block stack, acting on vec(X).

    Normal mode emits the alternating identity/commutation representation
    (the transposing step of each token layer is undone by the channel
    layer); random mode uses the stored frozen permutations with identity
    interfaces between stacked MLP layers. The composition equals the block
    stack exactly in both cases.
    """
    if not config.bare:
        raise ValueError("layer expansion is defined for bare configs only")
    s, c, g = config.tokens, config.channels, config.expansion
    random_mode = config.permutation_mode == "random"

    def stored(prefix, slot):
        return perms.Permutation(params[f"{prefix}.{slot}"])

    specs = []
    for layer in range(config.depth):
        pre = f"block{layer}"
        if config.variant == "s_mixer":
            w = params[f"{pre}.token.weight"]
            v = params[f"{pre}.channel.weight"]
            if random_mode:
                specs.append(pk.PKLayerSpec(c, s, s, w, stored(pre, "token.perm_in"),
                                            stored(pre, "token.perm_out"), "gelu"))
                specs.append(pk.PKLayerSpec(s, c, c, v, stored(pre, "channel.perm_in"),
                                            stored(pre, "channel.perm_out"), "gelu"))
            else:
                specs.append(pk.PKLayerSpec(c, s, s, w, perms.identity(c * s),
                                            perms.commutation(s, c), "gelu"))
                specs.append(pk.PKLayerSpec(s, c, c, v, perms.identity(s * c),
                                            perms.commutation(c, s), "gelu"))
        else:
            w1 = params[f"{pre}.token.weight1"]
            w2 = params[f"{pre}.token.weight2"]
            v1 = params[f"{pre}.channel.weight1"]
            v2 = params[f"{pre}.channel.weight2"]
            if random_mode:
                t_in, t_out = stored(pre, "token.perm_in"), stored(pre, "token.perm_out")
                c_in, c_out = stored(pre, "channel.perm_in"), stored(pre, "channel.perm_out")
            else:
                t_in, t_out = perms.identity(c * s), perms.commutation(s, c)
                c_in, c_out = perms.identity(s * c), perms.commutation(c, s)
            specs.append(pk.PKLayerSpec(c, s, g * s, w1, t_in, perms.identity(c * g * s), "gelu"))
            specs.append(pk.PKLayerSpec(c, g * s, s, w2, perms.identity(c * g * s), t_out, "gelu"))
            specs.append(pk.PKLayerSpec(s, c, g * c, v1, c_in, perms.identity(s * g * c), "gelu"))
            specs.append(pk.PKLayerSpec(s, g * c, c, v2, perms.identity(s * g * c), c_out, "gelu"))
    return specs


def bare_body_forward(config: MixerConfig, params: ModelParams, x_matrix) -> np.ndarray:
    """Bare block stack on an S x C feature matrix, via the memory-friendly path."""
    x_matrix = dense.as_matrix(x_matrix)
    if x_matrix.shape != (config.tokens, config.channels):
        raise ValueError(
            f"expected {(config.tokens, config.channels)} features, got {x_matrix.shape}"
        )
    x = dense.vec(x_matrix)
    for spec in body_layer_specs(config, params):
        x = pk.pk_forward(spec, x)
    return dense.mat(x, config.tokens, config.channels)


def effective_mlp_forward(config: MixerConfig, params: ModelParams, x,
                          entry_limit: int = dense.ORACLE_ENTRY_LIMIT) -> np.ndarray:
    """Evaluate the bare stack as a plain MLP with materialized dense weights."""
    x = dense.as_vector(x)
    if x.size != config.tokens * config.channels:
        raise ValueError(f"input length {x.size} != tokens*channels")
    for spec in body_layer_specs(config, params):
        w = pk.effective_weight(spec, entry_limit=entry_limit)
        x = pk.activation_fn(spec.activation)(w @ x)
    return x


def bare_body_graph(tape: ad.Tape, config: MixerConfig, params: ModelParams,
                    x: ad.Var) -> ad.Var:
    """Differentiable bare stack on row vectors (..., S*C), factorized path."""
    for spec in body_layer_specs(config, params):
        weight = tape.constant(spec.weight)
        x = _pk_op(x, weight, spec.n1, spec.n2, spec.k,
                   spec.perm_in.sigma, spec.perm_out.sigma, spec.activation)
    return x


def effective_mlp_graph(tape: ad.Tape, config: MixerConfig, params: ModelParams,
                        x: ad.Var, entry_limit: int = dense.ORACLE_ENTRY_LIMIT) -> ad.Var:
    """Differentiable bare stack on row vectors, dense materialized path."""
    for spec in body_layer_specs(config, params):
        w = tape.constant(pk.effective_weight(spec, entry_limit=entry_limit))
        x = ad.matmul(x, ad.transpose_last2(w))
        x = ad.gelu(x) if spec.activation == "gelu" else x
    return x


def mixing_layer_nnz(config: MixerConfig, params: ModelParams) -> list[int]:
    """Structural nonzero count of each mixing layer (bare stack order)."""
    return [pk.nnz(spec) for spec in body_layer_specs(config, params)]


# ---------------------------------------------------------------------------
# checkpoints


def config_to_dict(config) -> dict:
    d = dataclasses.asdict(config)
    d["kind"] = "mixer" if isinstance(config, MixerConfig) else "sw_mlp"
    return d


def config_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    if kind == "mixer":
        return MixerConfig(**d)
    if kind == "sw_mlp":
        return SWMLPConfig(**d)
    raise ValueError(f"unknown config kind {kind!r}")


def save_checkpoint(path, config, params: ModelParams):
    """Write a flat npz: one array per parameter plus the JSON config.

    Layout: key ``config`` holds the JSON config string (including all
    seeds), key ``trainable`` the names of trainable entries, and every
    other key is ``param/<name>``.
    """
    arrays = {f"param/{name}": arr for name, arr in params.items()}
    arrays["config"] = np.array(json.dumps(config_to_dict(config), sort_keys=True))
    arrays["trainable"] = np.array(sorted(params.trainable_names()))
    np.savez(path, **arrays)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as data:
        config = config_from_dict(json.loads(str(data["config"])))
        trainable = set(data["trainable"].tolist())
        params = ModelParams()
        names = sorted(n for n in data.files if n.startswith("param/"))
        for key in names:
            name = key[len("param/"):]
            params.add(name, data[key], trainable=name in trainable)
    return config, params
