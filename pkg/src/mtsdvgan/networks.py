"""LSTM encoder / generator / discriminator: parameters, init, forwards.

All three networks share the same stacked-LSTM trunk (default depth 3,
100 hidden units).  The encoder summarizes a window by the final hidden
state of the top layer and emits a Gaussian posterior (mu, log-variance)
over a 15-dimensional latent space; the generator decodes a latent vector
autoregressively back into a window; the discriminator scores a window
with a clamped probability of being real and exposes the input of its
final fully connected layer as the feature vector used by the
feature-center loss.

Forward functions take and return tape Tensors (see mtsdvgan.autodiff) so
any scalar objective composed from them is exactly differentiable.  The
sequence recursions run inside fused tape nodes backed by the active
kernel backend.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import Tensor

GATE_ORDER = ("f", "i", "c", "o")  # packing order of gate blocks in W/U/b


class ShapeError(ValueError):
    pass


@dataclass
class NetSpec:
    """Shape contract shared by the three networks."""

    window: int = 30
    features: int = 8
    hidden: int = 100
    depth: int = 3
    latent: int = 15
    disc_feature_dim: int = 100
    prob_clamp: float = 1e-6
    decoder_feedback: str = "autoregressive"  # or "repeat_latent"
    dtype: str = "float32"

    def np_dtype(self):
        return np.dtype(self.dtype)


@dataclass
class LstmLayer:
    """One LSTM layer, gates packed row-wise in GATE_ORDER.

    W: (4h, in) input weights, U: (4h, h) recurrent weights, b: (4h,).
    """

    W: Tensor
    U: Tensor
    b: Tensor

    @property
    def hidden(self) -> int:
        return self.U.data.shape[1]

    def gate(self, name: str):
        """Per-gate (W, U, b) views in the orientation (hidden x in)."""
        idx = GATE_ORDER.index(name)
        h = self.hidden
        sl = slice(idx * h, (idx + 1) * h)
        return self.W.data[sl], self.U.data[sl], self.b.data[sl]


@dataclass
class Affine:
    W: Tensor  # (out, in)
    b: Tensor  # (out,)


@dataclass
class EncoderParams:
    layers: list
    mu_head: Affine
    logvar_head: Affine


@dataclass
class GeneratorParams:
    latent_to_state: Affine  # (2h, latent): rows 0:h -> h0, rows h:2h -> c0
    layers: list
    output_head: Affine  # (d, h)


@dataclass
class DiscriminatorParams:
    layers: list
    feature_head: Affine  # (F, h)
    final_head: Affine  # (1, F)


@dataclass
class ModelBundle:
    spec: NetSpec
    encoder: Optional[EncoderParams]
    generator: GeneratorParams
    discriminator: DiscriminatorParams


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def init_truncated_normal(shape, std: float, rng: np.random.Generator,
                          dtype=np.float32) -> np.ndarray:
    """Normal(0, std) with redraw until every entry satisfies |v| <= 2 std."""
    if std <= 0:
        raise ValueError("std must be positive")
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out.astype(dtype)


def _init_layer(in_dim, hidden, std, rng, dtype) -> LstmLayer:
    return LstmLayer(
        W=ad.leaf(init_truncated_normal((4 * hidden, in_dim), std, rng, dtype)),
        U=ad.leaf(init_truncated_normal((4 * hidden, hidden), std, rng, dtype)),
        b=ad.leaf(np.zeros(4 * hidden, dtype=dtype)),
    )


def _init_affine(out_dim, in_dim, std, rng, dtype) -> Affine:
    return Affine(
        W=ad.leaf(init_truncated_normal((out_dim, in_dim), std, rng, dtype)),
        b=ad.leaf(np.zeros(out_dim, dtype=dtype)),
    )


def _init_stack(in_dim, spec, std, rng, dtype):
    dims = [in_dim] + [spec.hidden] * (spec.depth - 1)
    return [_init_layer(d, spec.hidden, std, rng, dtype) for d in dims]


def init_bundle(spec: NetSpec, seed: int, init_std: float = 0.02,
                with_encoder: bool = True) -> ModelBundle:
    """Fresh parameter bundle; deterministic in (spec, seed, init_std)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    dtype = spec.np_dtype()

    encoder = None
    if with_encoder:
        encoder = EncoderParams(
            layers=_init_stack(spec.features, spec, init_std, rng, dtype),
            mu_head=_init_affine(spec.latent, spec.hidden, init_std, rng, dtype),
            logvar_head=_init_affine(spec.latent, spec.hidden, init_std, rng, dtype),
        )
    gen_in = spec.features if spec.decoder_feedback == "autoregressive" else spec.latent
    generator = GeneratorParams(
        latent_to_state=_init_affine(2 * spec.hidden, spec.latent, init_std, rng, dtype),
        layers=_init_stack(gen_in, spec, init_std, rng, dtype),
        output_head=_init_affine(spec.features, spec.hidden, init_std, rng, dtype),
    )
    discriminator = DiscriminatorParams(
        layers=_init_stack(spec.features, spec, init_std, rng, dtype),
        feature_head=_init_affine(spec.disc_feature_dim, spec.hidden, init_std, rng, dtype),
        final_head=_init_affine(1, spec.disc_feature_dim, init_std, rng, dtype),
    )
    return ModelBundle(spec=spec, encoder=encoder, generator=generator,
                       discriminator=discriminator)


# ---------------------------------------------------------------------------
# parameter bookkeeping
# ---------------------------------------------------------------------------

def _stack_named(prefix, layers):
    for l, layer in enumerate(layers):
        yield f"{prefix}.lstm{l}.W", layer.W
        yield f"{prefix}.lstm{l}.U", layer.U
        yield f"{prefix}.lstm{l}.b", layer.b


def named_tensors(bundle: ModelBundle):
    """(name, Tensor) pairs for every trainable array, packed layout."""
    out = []
    if bundle.encoder is not None:
        out.extend(_stack_named("encoder", bundle.encoder.layers))
        out.append(("encoder.mu_head.W", bundle.encoder.mu_head.W))
        out.append(("encoder.mu_head.b", bundle.encoder.mu_head.b))
        out.append(("encoder.logvar_head.W", bundle.encoder.logvar_head.W))
        out.append(("encoder.logvar_head.b", bundle.encoder.logvar_head.b))
    out.extend(_stack_named("generator", bundle.generator.layers))
    out.append(("generator.latent_to_state.W", bundle.generator.latent_to_state.W))
    out.append(("generator.latent_to_state.b", bundle.generator.latent_to_state.b))
    out.append(("generator.output_head.W", bundle.generator.output_head.W))
    out.append(("generator.output_head.b", bundle.generator.output_head.b))
    out.extend(_stack_named("discriminator", bundle.discriminator.layers))
    out.append(("discriminator.feature_head.W", bundle.discriminator.feature_head.W))
    out.append(("discriminator.feature_head.b", bundle.discriminator.feature_head.b))
    out.append(("discriminator.final_head.W", bundle.discriminator.final_head.W))
    out.append(("discriminator.final_head.b", bundle.discriminator.final_head.b))
    return out


def group_tensors(bundle: ModelBundle, group: str):
    """Tensors of one network: 'encoder' | 'generator' | 'discriminator'."""
    return [(n, t) for n, t in named_tensors(bundle) if n.startswith(group + ".")]


# ---------------------------------------------------------------------------
# fused sequence ops (tape nodes over the kernel backend)
# ---------------------------------------------------------------------------

def _layer_data(layers):
    return [(l.W.data, l.U.data, l.b.data) for l in layers]


def lstm_stack(x: Tensor, layers, h0: Optional[np.ndarray] = None,
               c0: Optional[np.ndarray] = None) -> Tensor:
    """Stacked-LSTM sequence forward as a single fused tape node.

    x: (B, k, in).  Returns top-layer hidden states (B, k, h).  h0/c0 are
    constant initial states (zeros by default); gradient flows to x and to
    the layer parameters.
    """
    B = x.data.shape[0]
    L = len(layers)
    hidden = layers[0].hidden
    if h0 is None:
        h0 = np.zeros((L, B, hidden), dtype=x.data.dtype)
    if c0 is None:
        c0 = np.zeros((L, B, hidden), dtype=x.data.dtype)
    h_top, cache = kernels.lstm_stack_forward(x.data, _layer_data(layers), h0, c0)

    parents = [x]
    for layer in layers:
        parents.extend((layer.W, layer.U, layer.b))

    def multi_vjp(g, mask):
        need_x = mask[0]
        need_params = any(mask[1:])
        dx, pgrads, _, _ = kernels.lstm_stack_backward(
            cache, np.ascontiguousarray(g), need_x_grad=need_x,
            need_param_grads=need_params, need_state_grads=False)
        out = [dx]
        for l in range(L):
            if pgrads is None:
                out.extend((None, None, None))
            else:
                out.extend(pgrads[l])
        return out

    return ad.fused(h_top, parents, multi_vjp)


def lstm_decode(h0_1: Tensor, c0_1: Tensor, layers, head: Affine, k: int) -> Tensor:
    """Autoregressive decoder as a fused tape node.

    h0_1/c0_1: (B, h) initial state of layer 1 (upper layers start at
    zero).  Each step's output-head result feeds the next step's input;
    the first input is the zero vector.  Returns (B, k, d).
    """
    B = h0_1.data.shape[0]
    L = len(layers)
    hidden = layers[0].hidden
    dt = h0_1.data.dtype
    h0 = np.zeros((L, B, hidden), dtype=dt)
    c0 = np.zeros((L, B, hidden), dtype=dt)
    h0[0] = h0_1.data
    c0[0] = c0_1.data
    y, cache = kernels.decoder_forward(h0, c0, _layer_data(layers),
                                       head.W.data, head.b.data, k)

    parents = [h0_1, c0_1]
    for layer in layers:
        parents.extend((layer.W, layer.U, layer.b))
    parents.extend((head.W, head.b))

    def multi_vjp(g, mask):
        need_state = mask[0] or mask[1]
        need_params = any(mask[2:])
        pgrads, dWout, dbout, dh0, dc0 = kernels.decoder_backward(
            cache, np.ascontiguousarray(g), need_param_grads=need_params,
            need_state_grads=need_state)
        out = [dh0[0] if dh0 is not None else None,
               dc0[0] if dc0 is not None else None]
        for l in range(L):
            if pgrads is None:
                out.extend((None, None, None))
            else:
                out.extend(pgrads[l])
        out.extend((dWout, dbout))
        return out

    return ad.fused(y, parents, multi_vjp)


# ---------------------------------------------------------------------------
# published forwards
# ---------------------------------------------------------------------------

def lstm_cell_step(layer: LstmLayer, x_t: Tensor, h_prev: Tensor, c_prev: Tensor):
    """One LSTM cell update built from elementary tape ops.

    Defines the semantics the fused kernels must reproduce:
    f,i,o = logistic(W.x + U.h + b); c~ = tanh(...);
    c = f*c_prev + i*c~; h = o*tanh(c).
    """
    h = layer.hidden
    if x_t.data.shape[-1] != layer.W.data.shape[1]:
        raise ShapeError(
            f"cell input has {x_t.data.shape[-1]} features, expected {layer.W.data.shape[1]}")
    z = ad.add(ad.add(ad.matmul(x_t, _transpose(layer.W)),
                      ad.matmul(h_prev, _transpose(layer.U))), layer.b)
    f = ad.sigmoid(ad.slice_cols(z, 0, h))
    i = ad.sigmoid(ad.slice_cols(z, h, 2 * h))
    g = ad.tanh(ad.slice_cols(z, 2 * h, 3 * h))
    o = ad.sigmoid(ad.slice_cols(z, 3 * h, 4 * h))
    c = ad.add(ad.mul(f, c_prev), ad.mul(i, g))
    h_t = ad.mul(o, ad.tanh(c))
    return h_t, c


def _transpose(a: Tensor) -> Tensor:
    return Tensor(a.data.T, (a,), (lambda g: g.T,))


def encode(enc: EncoderParams, x: Tensor):
    """Window batch (B, k, d) -> posterior (mu, logvar), each (B, latent)."""
    _check_window(x, enc.layers[0].W.data.shape[1])
    h_top = lstm_stack(x, enc.layers)
    h_last = ad.take_step(h_top, x.data.shape[1] - 1)
    mu = ad.affine(h_last, enc.mu_head.W, enc.mu_head.b)
    logvar = ad.affine(h_last, enc.logvar_head.W, enc.logvar_head.b)
    return mu, logvar


def reparameterize(mu: Tensor, logvar: Tensor, eps: np.ndarray) -> Tensor:
    """z = mu + exp(logvar / 2) * eps."""
    if mu.data.shape != logvar.data.shape or mu.data.shape != eps.shape:
        raise ShapeError("mu, logvar and eps must share a shape")
    sigma = ad.exp(ad.scale(logvar, 0.5))
    return ad.add(mu, ad.mul(sigma, Tensor(eps)))


def generate(gen: GeneratorParams, z: Tensor, k: int,
             feedback: str = "autoregressive") -> Tensor:
    """Latent batch (B, latent) -> reconstructed windows (B, k, d)."""
    if z.data.ndim != 2 or z.data.shape[1] != gen.latent_to_state.W.data.shape[1]:
        raise ShapeError(
            f"latent batch shape {z.data.shape} does not match latent dim "
            f"{gen.latent_to_state.W.data.shape[1]}")
    hidden = gen.layers[0].hidden
    init = ad.affine(z, gen.latent_to_state.W, gen.latent_to_state.b)
    h0 = ad.slice_cols(init, 0, hidden)
    c0 = ad.slice_cols(init, hidden, 2 * hidden)
    if feedback == "autoregressive":
        return lstm_decode(h0, c0, gen.layers, gen.output_head, k)
    if feedback == "repeat_latent":
        x_seq = ad.repeat_steps(z, k)
        h_top = _stack_with_state(x_seq, gen.layers, h0, c0)
        B = z.data.shape[0]
        flat = ad.reshape(h_top, (B * k, hidden))
        y = ad.affine(flat, gen.output_head.W, gen.output_head.b)
        return ad.reshape(y, (B, k, gen.output_head.W.data.shape[0]))
    raise ValueError(f"unknown decoder feedback mode: {feedback!r}")


def _stack_with_state(x: Tensor, layers, h0_1: Tensor, c0_1: Tensor) -> Tensor:
    """lstm_stack variant whose layer-1 initial state carries gradient."""
    B = x.data.shape[0]
    L = len(layers)
    hidden = layers[0].hidden
    dt = x.data.dtype
    h0 = np.zeros((L, B, hidden), dtype=dt)
    c0 = np.zeros((L, B, hidden), dtype=dt)
    h0[0] = h0_1.data
    c0[0] = c0_1.data
    h_top, cache = kernels.lstm_stack_forward(x.data, _layer_data(layers), h0, c0)

    parents = [x, h0_1, c0_1]
    for layer in layers:
        parents.extend((layer.W, layer.U, layer.b))

    def multi_vjp(g, mask):
        need_x = mask[0]
        need_state = mask[1] or mask[2]
        need_params = any(mask[3:])
        dx, pgrads, dh0, dc0 = kernels.lstm_stack_backward(
            cache, np.ascontiguousarray(g), need_x_grad=need_x,
            need_param_grads=need_params, need_state_grads=need_state)
        out = [dx,
               dh0[0] if dh0 is not None else None,
               dc0[0] if dc0 is not None else None]
        for l in range(L):
            if pgrads is None:
                out.extend((None, None, None))
            else:
                out.extend(pgrads[l])
        return out

    return ad.fused(h_top, parents, multi_vjp)


def discriminate(disc: DiscriminatorParams, x: Tensor, prob_clamp: float = 1e-6):
    """Window batch -> (probability of real (B,), feature vector (B, F)).

    The probability is clamped into [prob_clamp, 1 - prob_clamp] so
    downstream logarithms are always finite.
    """
    _check_window(x, disc.layers[0].W.data.shape[1])
    h_top = lstm_stack(x, disc.layers)
    h_last = ad.take_step(h_top, x.data.shape[1] - 1)
    fea = ad.affine(h_last, disc.feature_head.W, disc.feature_head.b)
    logit = ad.affine(fea, disc.final_head.W, disc.final_head.b)
    y = ad.clamp(ad.sigmoid(logit), prob_clamp, 1.0 - prob_clamp)
    return ad.reshape(y, (x.data.shape[0],)), fea


def _check_window(x: Tensor, expected_features: int):
    if x.data.ndim != 3:
        raise ShapeError(f"window batch must be (B, k, d), got {x.data.shape}")
    if x.data.shape[2] != expected_features:
        raise ShapeError(
            f"window has {x.data.shape[2]} features, network expects {expected_features}")


# convenience re-export: exact reverse-mode gradients of any scalar objective
grad = ad.grad
