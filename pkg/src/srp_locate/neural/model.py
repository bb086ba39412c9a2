"""Per-pair CRNN with metadata late fusion, written directly in numpy.

Layout of a forward pass for a batch of ``B`` microphone pairs::

    phase (B, 2, N, F)
      -> 4 x [conv 1x2 over frequency, stride 2, ReLU]   (B, N, F', C_c)
      -> mean over frequency                             (B, N, C_c)
      -> unidirectional GRU, last step                   (B, C_r)
      -> concat normalized pair metadata                 (B, C_r + 9)
      -> MLP: ReLU, ReLU, linear                         (B, G*G)

Kernels have unit time extent and the GRU runs forward in time, so the
features at frame ``n`` depend only on frames ``<= n``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..geometry import GRID_SIZE, METADATA_LEN


@dataclass(frozen=True)
class ModelConfig:
    conv_layers: int = 4
    conv_channels: int = 64
    rnn_hidden: int = 128
    metadata_len: int = METADATA_LEN
    mlp_layers: int = 3
    mlp_width: int = 625
    grid_side: int = GRID_SIZE
    n_bins: int = 257

    def __post_init__(self):
        if self.conv_layers < 1 or self.mlp_layers < 1:
            raise ValueError("need at least one conv and one MLP layer")
        if self.n_bins >> self.conv_layers < 1:
            raise ValueError(f"{self.n_bins} frequency bins cannot be halved {self.conv_layers} times")

    @property
    def output_size(self) -> int:
        return self.grid_side ** 2

    def conv_bins(self) -> list[int]:
        """Frequency bins after each conv layer (kernel 2, stride 2, no padding)."""
        bins, f = [], self.n_bins
        for _ in range(self.conv_layers):
            f = f // 2
            bins.append(f)
        return bins

    def shapes(self) -> dict[str, tuple[int, ...]]:
        s: dict[str, tuple[int, ...]] = {}
        c_in = 2
        for k in range(self.conv_layers):
            s[f"conv{k}.w"] = (2, c_in, self.conv_channels)
            s[f"conv{k}.b"] = (self.conv_channels,)
            c_in = self.conv_channels
        h = self.rnn_hidden
        s["gru.w_ih"] = (self.conv_channels, 3 * h)
        s["gru.w_hh"] = (h, 3 * h)
        s["gru.b_ih"] = (3 * h,)
        s["gru.b_hh"] = (3 * h,)
        width_in = h + self.metadata_len
        for k in range(self.mlp_layers):
            width_out = self.output_size if k == self.mlp_layers - 1 else self.mlp_width
            s[f"mlp{k}.w"] = (width_in, width_out)
            s[f"mlp{k}.b"] = (width_out,)
            width_in = width_out
        return s

    def n_params(self) -> int:
        return int(sum(np.prod(shape) for shape in self.shapes().values()))

    def to_dict(self) -> dict:
        return asdict(self)


def _fan_in(name: str, shapes: dict[str, tuple[int, ...]], hidden: int) -> int:
    if name.startswith("gru"):
        return hidden
    w = shapes[name.rsplit(".", 1)[0] + ".w"]
    return int(np.prod(w[:-1]))


class ModelWeights:
    """Named parameter tensors for a :class:`ModelConfig`, kept in a fixed order."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        expected = config.shapes()
        if list(params) != list(expected):
            raise ValueError(f"parameter names {list(params)} do not match config {list(expected)}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ValueError(f"{name}: shape {params[name].shape}, config expects {shape}")
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0, dtype=np.float32) -> "ModelWeights":
        """Uniform ``+-1/sqrt(fan_in)`` initialization from a seeded generator."""
        rng = np.random.default_rng(seed)
        params = {}
        shapes = config.shapes()
        for name, shape in shapes.items():
            bound = 1.0 / np.sqrt(_fan_in(name, shapes, config.rnn_hidden))
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
        return cls(config, params)

    @classmethod
    def zeros(cls, config: ModelConfig, dtype=np.float32) -> "ModelWeights":
        return cls(config, {n: np.zeros(s, dtype=dtype) for n, s in config.shapes().items()})

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def astype(self, dtype) -> "ModelWeights":
        return ModelWeights(self.config, {n: p.astype(dtype) for n, p in self.params.items()})

    def copy(self) -> "ModelWeights":
        return ModelWeights(self.config, {n: p.copy() for n, p in self.params.items()})

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class ForwardCache:
    conv_inputs: list
    conv_pre: list
    conv_bins_in: list
    gru_x: np.ndarray
    gru_h: np.ndarray
    gru_r: np.ndarray
    gru_z: np.ndarray
    gru_n: np.ndarray
    gru_ghn: np.ndarray
    mlp_inputs: list
    mlp_pre: list
    freq_bins: int


def _check_inputs(config: ModelConfig, feats: np.ndarray, meta: np.ndarray):
    if feats.ndim != 4 or feats.shape[1] != 2:
        raise ValueError(f"conv0: expected phase features (B, 2, N, F), got {feats.shape}")
    if feats.shape[3] != config.n_bins:
        raise ValueError(f"conv0: expected {config.n_bins} frequency bins, got {feats.shape[3]}")
    if meta.shape != (feats.shape[0], config.metadata_len):
        raise ValueError(f"mlp0: expected metadata ({feats.shape[0]}, {config.metadata_len}), got {meta.shape}")


def forward(weights: ModelWeights, feats, meta) -> tuple[np.ndarray, ForwardCache]:
    """Batched forward pass; returns ``(B, G*G)`` outputs and the activation cache."""
    cfg = weights.config
    dtype = weights.dtype
    feats = np.asarray(feats, dtype=dtype)
    meta = np.asarray(meta, dtype=dtype)
    _check_inputs(cfg, feats, meta)
    batch, _, n_frames, _ = feats.shape

    x = np.ascontiguousarray(feats.transpose(0, 2, 3, 1))  # (B, N, F, C)
    conv_inputs, conv_pre, conv_bins_in = [], [], []
    for k in range(cfg.conv_layers):
        w, b = weights[f"conv{k}.w"], weights[f"conv{k}.b"]
        f_in, c_in = x.shape[2], x.shape[3]
        f_out = f_in // 2
        xr = x[:, :, :2 * f_out].reshape(batch * n_frames * f_out, 2 * c_in)
        pre = xr @ w.reshape(2 * c_in, -1) + b
        conv_inputs.append(xr)
        conv_pre.append(pre)
        conv_bins_in.append(f_in)
        x = np.maximum(pre, 0).reshape(batch, n_frames, f_out, -1)

    freq_bins = x.shape[2]
    seq = x.mean(axis=2)  # (B, N, C_c)

    hidden = cfg.rnn_hidden
    w_hh, b_hh = weights["gru.w_hh"], weights["gru.b_hh"]
    gi = seq @ weights["gru.w_ih"] + weights["gru.b_ih"]  # (B, N, 3H)
    hs = np.zeros((n_frames + 1, batch, hidden), dtype=dtype)
    rs = np.empty((n_frames, batch, hidden), dtype=dtype)
    zs = np.empty_like(rs)
    ns = np.empty_like(rs)
    ghns = np.empty_like(rs)
    for t in range(n_frames):
        h_prev = hs[t]
        gh = h_prev @ w_hh + b_hh
        g = gi[:, t]
        r = _sigmoid(g[:, :hidden] + gh[:, :hidden])
        z = _sigmoid(g[:, hidden:2 * hidden] + gh[:, hidden:2 * hidden])
        ghn = gh[:, 2 * hidden:]
        n = np.tanh(g[:, 2 * hidden:] + r * ghn)
        hs[t + 1] = (1 - z) * n + z * h_prev
        rs[t], zs[t], ns[t], ghns[t] = r, z, n, ghn

    u = np.concatenate([hs[-1], meta], axis=1)
    mlp_inputs, mlp_pre = [], []
    for k in range(cfg.mlp_layers):
        mlp_inputs.append(u)
        pre = u @ weights[f"mlp{k}.w"] + weights[f"mlp{k}.b"]
        mlp_pre.append(pre)
        u = np.maximum(pre, 0) if k < cfg.mlp_layers - 1 else pre

    cache = ForwardCache(conv_inputs, conv_pre, conv_bins_in, seq, hs, rs, zs, ns, ghns,
                         mlp_inputs, mlp_pre, freq_bins)
    return u, cache


def backward(weights: ModelWeights, cache: ForwardCache | None, grad_out) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of all parameters given ``d loss / d output``."""
    if cache is None:
        raise ValueError("backward needs the cache from a forward pass")
    cfg = weights.config
    dtype = weights.dtype
    grads: dict[str, np.ndarray] = {}
    d = np.asarray(grad_out, dtype=dtype)

    for k in reversed(range(cfg.mlp_layers)):
        if k < cfg.mlp_layers - 1:
            d = d * (cache.mlp_pre[k] > 0)
        grads[f"mlp{k}.w"] = cache.mlp_inputs[k].T @ d
        grads[f"mlp{k}.b"] = d.sum(axis=0)
        d = d @ weights[f"mlp{k}.w"].T

    hidden = cfg.rnn_hidden
    dh = d[:, :hidden]  # metadata columns carry no parameters upstream
    n_frames, batch = cache.gru_r.shape[:2]
    w_hh = weights["gru.w_hh"]
    dgi = np.empty((batch, n_frames, 3 * hidden), dtype=dtype)
    dw_hh = np.zeros_like(w_hh)
    db_hh = np.zeros(3 * hidden, dtype=dtype)
    for t in reversed(range(n_frames)):
        h_prev = cache.gru_h[t]
        r, z, n, ghn = cache.gru_r[t], cache.gru_z[t], cache.gru_n[t], cache.gru_ghn[t]
        dn = dh * (1 - z)
        dz = dh * (h_prev - n)
        da_n = dn * (1 - n * n)
        da_r = da_n * ghn * r * (1 - r)
        da_z = dz * z * (1 - z)
        dgh = np.concatenate([da_r, da_z, da_n * r], axis=1)
        dgi[:, t] = np.concatenate([da_r, da_z, da_n], axis=1)
        dw_hh += h_prev.T @ dgh
        db_hh += dgh.sum(axis=0)
        dh = dh * z + dgh @ w_hh.T
    grads["gru.w_hh"] = dw_hh
    grads["gru.b_hh"] = db_hh
    x = cache.gru_x
    grads["gru.w_ih"] = x.reshape(-1, x.shape[-1]).T @ dgi.reshape(-1, 3 * hidden)
    grads["gru.b_ih"] = dgi.sum(axis=(0, 1))
    dseq = dgi @ weights["gru.w_ih"].T  # (B, N, C_c)

    f_last = cache.freq_bins
    dx = np.broadcast_to((dseq / f_last)[:, :, None, :], (batch, n_frames, f_last, dseq.shape[-1]))
    for k in reversed(range(cfg.conv_layers)):
        dpre = dx.reshape(-1, dx.shape[-1]) * (cache.conv_pre[k] > 0)
        w = weights[f"conv{k}.w"]
        c_in = w.shape[1]
        grads[f"conv{k}.w"] = (cache.conv_inputs[k].T @ dpre).reshape(w.shape)
        grads[f"conv{k}.b"] = dpre.sum(axis=0)
        if k == 0:
            break
        dxr = (dpre @ w.reshape(2 * c_in, -1).T).reshape(batch, n_frames, -1, c_in)
        f_in = cache.conv_bins_in[k]
        if dxr.shape[2] != f_in:
            pad = np.zeros((batch, n_frames, f_in - dxr.shape[2], c_in), dtype=dtype)
            dxr = np.concatenate([dxr, pad], axis=2)
        dx = dxr

    return {name: grads[name] for name in cfg.shapes()}


def forward_pair(weights: ModelWeights, feat, meta) -> tuple[np.ndarray, ForwardCache]:
    """Single-pair forward pass: ``(2, N, F)`` phase and a 9-vector of metadata."""
    data = feat.data if hasattr(feat, "data") else feat
    meta = meta.normalized if hasattr(meta, "normalized") else meta
    out, cache = forward(weights, np.asarray(data)[None], np.asarray(meta)[None])
    return out[0], cache
