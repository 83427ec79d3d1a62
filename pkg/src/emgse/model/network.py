"""The enhancement network: dual encoders, late fusion, stacked BLSTM, and
the spectral output layer, with exact forward/backward passes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import (
    AffineParams,
    BLSTMParams,
    affine_backward,
    affine_forward,
    blstm_layer_backward,
    blstm_layer_forward,
    dropout_mask,
    init_affine,
    init_blstm,
    l1_loss,
    l1_loss_grad,
    relu,
    relu_backward,
)

VARIANT_MULTIMODAL = "EMGSE"
VARIANT_AUDIO_ONLY = "SE_A"
VARIANTS = (VARIANT_MULTIMODAL, VARIANT_AUDIO_ONLY)


@dataclass(frozen=True)
class NetDims:
    """Layer sizes; defaults are the production configuration."""

    aux_in: int = 5425  # EMG features (or 257 for the audio-only variant)
    audio_in: int = 257
    enc_hidden: int = 200
    enc_out: int = 100
    fusion_out: int = 200
    blstm_hidden: int = 250
    out_dim: int = 257

    @property
    def fusion_in(self) -> int:
        return 2 * self.enc_out

    @property
    def blstm_out(self) -> int:
        return 2 * self.blstm_hidden


@dataclass
class EMGSEParams:
    """All trainable parameters plus the architecture identity."""

    variant: str
    channel_set: str
    dims: NetDims
    enc_aux1: AffineParams
    enc_aux2: AffineParams
    enc_aud1: AffineParams
    enc_aud2: AffineParams
    fusion: AffineParams
    blstm1: BLSTMParams
    blstm2: BLSTMParams
    out: AffineParams

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        """Canonical (name, array) pairs; order is part of the checkpoint format."""
        items: list[tuple[str, np.ndarray]] = []
        for prefix, aff in (
            ("enc_aux1", self.enc_aux1),
            ("enc_aux2", self.enc_aux2),
            ("enc_aud1", self.enc_aud1),
            ("enc_aud2", self.enc_aud2),
            ("fusion", self.fusion),
        ):
            items.append((f"{prefix}.w", aff.w))
            items.append((f"{prefix}.b", aff.b))
        for lname, layer in (("blstm1", self.blstm1), ("blstm2", self.blstm2)):
            for dname, direction in (("fw", layer.fw), ("bw", layer.bw)):
                items.append((f"{lname}.{dname}.wx", direction.wx))
                items.append((f"{lname}.{dname}.wh", direction.wh))
                items.append((f"{lname}.{dname}.bx", direction.bx))
                items.append((f"{lname}.{dname}.bh", direction.bh))
        items.append(("out.w", self.out.w))
        items.append(("out.b", self.out.b))
        return items

    def set_param(self, name: str, value: np.ndarray) -> None:
        head, leaf = name.rsplit(".", 1)
        obj = self
        for part in head.split("."):
            obj = getattr(obj, part)
        current = getattr(obj, leaf)
        if current.shape != value.shape:
            raise ValueError(f"{name}: shape {value.shape} != expected {current.shape}")
        setattr(obj, leaf, np.asarray(value, dtype=np.float64))

    def copy(self) -> "EMGSEParams":
        out = build_params(self.variant, self.channel_set, self.dims, np.random.default_rng(0))
        for name, arr in self.named_params():
            out.set_param(name, arr.copy())
        return out


def build_params(
    variant: str, channel_set: str, dims: NetDims, rng: np.random.Generator
) -> EMGSEParams:
    """Initialize all layers, uniform +-1/sqrt(fan_in), in canonical order."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if variant == VARIANT_AUDIO_ONLY and dims.aux_in != dims.audio_in:
        raise ValueError("audio-only variant requires aux_in == audio_in")
    return EMGSEParams(
        variant=variant,
        channel_set=channel_set,
        dims=dims,
        enc_aux1=init_affine(rng, dims.aux_in, dims.enc_hidden),
        enc_aux2=init_affine(rng, dims.enc_hidden, dims.enc_out),
        enc_aud1=init_affine(rng, dims.audio_in, dims.enc_hidden),
        enc_aud2=init_affine(rng, dims.enc_hidden, dims.enc_out),
        fusion=init_affine(rng, dims.fusion_in, dims.fusion_out),
        blstm1=init_blstm(rng, dims.fusion_out, dims.blstm_hidden),
        blstm2=init_blstm(rng, 2 * dims.blstm_hidden, dims.blstm_hidden),
        out=init_affine(rng, 2 * dims.blstm_hidden, dims.out_dim),
    )


@dataclass
class ForwardCache:
    x_aux: np.ndarray
    x_audio: np.ndarray
    aux_pre1: np.ndarray
    aux_mask1: np.ndarray | None
    aux_drop1: np.ndarray
    aux_pre2: np.ndarray
    aux_mask2: np.ndarray | None
    v_aux: np.ndarray
    aud_pre1: np.ndarray
    aud_act1: np.ndarray
    aud_pre2: np.ndarray
    v_aud: np.ndarray
    fused_in: np.ndarray
    fusion_pre: np.ndarray
    latent: np.ndarray
    blstm1_cache: tuple
    blstm1_out: np.ndarray
    blstm2_cache: tuple
    blstm2_out: np.ndarray
    out_pre: np.ndarray


def forward(
    params: EMGSEParams,
    x_emg: np.ndarray | None,
    x_audio: np.ndarray,
    train: bool = False,
    dropout_p: float = 0.5,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Full network pass.

    Returns (enhanced normalized magnitudes (T, 257), fusion latent (T, 200),
    cache for backward). The audio-only variant routes the audio features
    through an independently parameterized second branch and must be called
    with x_emg=None; the multimodal variant requires EMG features with the
    same frame count as the audio.
    """
    x_audio = np.asarray(x_audio, dtype=np.float64)
    if params.variant == VARIANT_AUDIO_ONLY:
        if x_emg is not None:
            raise ValueError("audio-only variant does not accept EMG input")
        x_aux = x_audio
        use_dropout = False  # dropout belongs to the EMG encoder only
    else:
        if x_emg is None:
            raise ValueError("multimodal variant requires EMG features")
        x_aux = np.asarray(x_emg, dtype=np.float64)
        if x_aux.shape[0] != x_audio.shape[0]:
            raise ValueError(
                f"frame count mismatch: EMG {x_aux.shape[0]} vs audio {x_audio.shape[0]}"
            )
        use_dropout = train and dropout_p > 0.0
    if x_aux.shape[1] != params.dims.aux_in:
        raise ValueError(f"aux dim {x_aux.shape[1]} != expected {params.dims.aux_in}")
    if x_audio.shape[1] != params.dims.audio_in:
        raise ValueError(f"audio dim {x_audio.shape[1]} != expected {params.dims.audio_in}")
    if use_dropout and rng is None:
        raise ValueError("training forward with dropout requires an rng")

    # Auxiliary (EMG) encoder: affine -> ReLU -> dropout, twice.
    aux_pre1 = affine_forward(params.enc_aux1, x_aux)
    act1 = relu(aux_pre1)
    if use_dropout:
        mask1 = dropout_mask(rng, act1.shape, dropout_p)
        drop1 = act1 * mask1
    else:
        mask1 = None
        drop1 = act1
    aux_pre2 = affine_forward(params.enc_aux2, drop1)
    act2 = relu(aux_pre2)
    if use_dropout:
        mask2 = dropout_mask(rng, act2.shape, dropout_p)
        v_aux = act2 * mask2
    else:
        mask2 = None
        v_aux = act2

    # Audio encoder: affine -> ReLU, twice, no dropout.
    aud_pre1 = affine_forward(params.enc_aud1, x_audio)
    aud_act1 = relu(aud_pre1)
    aud_pre2 = affine_forward(params.enc_aud2, aud_act1)
    v_aud = relu(aud_pre2)

    fused_in = np.concatenate([v_aux, v_aud], axis=1)
    fusion_pre = affine_forward(params.fusion, fused_in)
    latent = relu(fusion_pre)

    b1_out, b1_cache = blstm_layer_forward(params.blstm1, latent)
    b2_out, b2_cache = blstm_layer_forward(params.blstm2, b1_out)

    out_pre = affine_forward(params.out, b2_out)
    z = relu(out_pre)

    cache = ForwardCache(
        x_aux=x_aux,
        x_audio=x_audio,
        aux_pre1=aux_pre1,
        aux_mask1=mask1,
        aux_drop1=drop1,
        aux_pre2=aux_pre2,
        aux_mask2=mask2,
        v_aux=v_aux,
        aud_pre1=aud_pre1,
        aud_act1=aud_act1,
        aud_pre2=aud_pre2,
        v_aud=v_aud,
        fused_in=fused_in,
        fusion_pre=fusion_pre,
        latent=latent,
        blstm1_cache=b1_cache,
        blstm1_out=b1_out,
        blstm2_cache=b2_cache,
        blstm2_out=b2_out,
        out_pre=out_pre,
    )
    return z, latent, cache


def backward(params: EMGSEParams, cache: ForwardCache, dz: np.ndarray) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients for every parameter given dLoss/dz."""
    grads: dict[str, np.ndarray] = {}

    d_out_pre = relu_backward(cache.out_pre, dz)
    d_b2_out, grads["out.w"], grads["out.b"] = affine_backward(params.out, cache.blstm2_out, d_out_pre)

    d_b1_out, (g2_fw, g2_bw) = blstm_layer_backward(params.blstm2, cache.blstm2_cache, d_b2_out)
    d_latent, (g1_fw, g1_bw) = blstm_layer_backward(params.blstm1, cache.blstm1_cache, d_b1_out)
    for lname, g_fw, g_bw in (("blstm1", g1_fw, g1_bw), ("blstm2", g2_fw, g2_bw)):
        for dname, g in (("fw", g_fw), ("bw", g_bw)):
            grads[f"{lname}.{dname}.wx"] = g.wx
            grads[f"{lname}.{dname}.wh"] = g.wh
            grads[f"{lname}.{dname}.bx"] = g.bx
            grads[f"{lname}.{dname}.bh"] = g.bh

    d_fusion_pre = relu_backward(cache.fusion_pre, d_latent)
    d_fused_in, grads["fusion.w"], grads["fusion.b"] = affine_backward(
        params.fusion, cache.fused_in, d_fusion_pre
    )
    enc_out = params.dims.enc_out
    d_v_aux = d_fused_in[:, :enc_out]
    d_v_aud = d_fused_in[:, enc_out:]

    # Audio branch.
    d_aud_pre2 = relu_backward(cache.aud_pre2, d_v_aud)
    d_aud_act1, grads["enc_aud2.w"], grads["enc_aud2.b"] = affine_backward(
        params.enc_aud2, cache.aud_act1, d_aud_pre2
    )
    d_aud_pre1 = relu_backward(cache.aud_pre1, d_aud_act1)
    _, grads["enc_aud1.w"], grads["enc_aud1.b"] = affine_backward(
        params.enc_aud1, cache.x_audio, d_aud_pre1
    )

    # Auxiliary branch (dropout masks replayed from the cache).
    d_act2 = d_v_aux * cache.aux_mask2 if cache.aux_mask2 is not None else d_v_aux
    d_aux_pre2 = relu_backward(cache.aux_pre2, d_act2)
    d_drop1, grads["enc_aux2.w"], grads["enc_aux2.b"] = affine_backward(
        params.enc_aux2, cache.aux_drop1, d_aux_pre2
    )
    d_act1 = d_drop1 * cache.aux_mask1 if cache.aux_mask1 is not None else d_drop1
    d_aux_pre1 = relu_backward(cache.aux_pre1, d_act1)
    _, grads["enc_aux1.w"], grads["enc_aux1.b"] = affine_backward(
        params.enc_aux1, cache.x_aux, d_aux_pre1
    )
    return grads


def loss_and_grads(
    params: EMGSEParams,
    x_emg: np.ndarray | None,
    x_audio: np.ndarray,
    target: np.ndarray,
    dropout_p: float,
    rng: np.random.Generator,
) -> tuple[float, dict[str, np.ndarray]]:
    """One training-mode forward/backward pass against an L1 target."""
    z, _, cache = forward(params, x_emg, x_audio, train=True, dropout_p=dropout_p, rng=rng)
    loss = l1_loss(z, target)
    grads = backward(params, cache, l1_loss_grad(z, target))
    return loss, grads
