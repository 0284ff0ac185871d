"""Shared-trunk actor-critic MLP in numpy, masked action distribution, checkpoints.

Checkpoint layout (little-endian)::

    b"PPLC" | u32 version=1 | u64 obs-layout hash | u32 layer count
    per layer: u32 in | u32 out | u8 activation (0 identity, 1 tanh)
    u64 training timesteps | u64 seed
    payload: float32 parameters, per layer weight (in x out, row-major) then bias,
             trunk layers, then actor head, then critic head
    u32 CRC32 of the payload
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import AllMasked, FormatError, LayoutMismatch, ShapeMismatch
from .io import atomic_write
from .observe import OBS_DIM, layout_hash

N_ACTIONS = 6
MASKED_LOGIT = -1e9
ACT_IDENTITY, ACT_TANH = 0, 1
MAGIC = b"PPLC"
VERSION = 1


@dataclass
class Layer:
    weight: np.ndarray  # (in, out)
    bias: np.ndarray
    activation: int = ACT_TANH


def _orthogonal(rng, n_in, n_out, gain):
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


class PolicyNet:
    """``depth`` tanh layers feeding an actor head (6 logits) and a critic head (1 value)."""

    def __init__(self, layers, obs_layout=None, seed=0, timesteps=0):
        self.layers = list(layers)
        self.obs_layout = layout_hash() if obs_layout is None else obs_layout
        self.seed = int(seed)
        self.timesteps = int(timesteps)

    @classmethod
    def create(cls, seed=0, hidden=512, depth=4, obs_dim=OBS_DIM, obs_layout=None):
        rng = np.random.default_rng(seed)
        layers = []
        n_in = obs_dim
        for _ in range(depth):
            layers.append(Layer(_orthogonal(rng, n_in, hidden, np.sqrt(2.0)), np.zeros(hidden), ACT_TANH))
            n_in = hidden
        layers.append(Layer(_orthogonal(rng, n_in, N_ACTIONS, 0.01), np.zeros(N_ACTIONS), ACT_IDENTITY))
        layers.append(Layer(_orthogonal(rng, n_in, 1, 1.0), np.zeros(1), ACT_IDENTITY))
        return cls(layers, obs_layout, seed)

    @property
    def trunk(self):
        return self.layers[:-2]

    @property
    def obs_dim(self):
        return self.layers[0].weight.shape[0]

    def params(self):
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def copy(self):
        layers = [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        return PolicyNet(layers, self.obs_layout, self.seed, self.timesteps)

    def forward(self, obs, cache=False):
        """Return ``(logits, value)``; batched if ``obs`` is 2-D.

        With ``cache=True`` also return the activations needed by ``backward``.
        """
        x = np.asarray(obs, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.obs_dim:
            raise ShapeMismatch(f"observation width {x.shape[1]} != network input {self.obs_dim}")
        acts = [x]
        h = x
        for layer in self.trunk:
            h = h @ layer.weight + layer.bias
            if layer.activation == ACT_TANH:
                h = np.tanh(h)
            acts.append(h)
        actor, critic = self.layers[-2], self.layers[-1]
        logits = h @ actor.weight + actor.bias
        value = (h @ critic.weight + critic.bias)[:, 0]
        if single:
            logits, value = logits[0], value[0]
        if cache:
            return logits, value, acts
        return logits, value

    def backward(self, acts, dlogits, dvalue):
        """Gradients (same order as ``params()``) given output gradients."""
        actor, critic = self.layers[-2], self.layers[-1]
        h = acts[-1]
        dvalue = np.asarray(dvalue).reshape(-1, 1)
        grads_actor = [h.T @ dlogits, dlogits.sum(axis=0)]
        grads_critic = [h.T @ dvalue, dvalue.sum(axis=0)]
        dh = dlogits @ actor.weight.T + dvalue @ critic.weight.T
        trunk_grads = []
        for i in range(len(self.trunk) - 1, -1, -1):
            layer = self.trunk[i]
            out = acts[i + 1]
            if layer.activation == ACT_TANH:
                dz = dh * (1.0 - out * out)
            else:
                dz = dh
            trunk_grads = [acts[i].T @ dz, dz.sum(axis=0)] + trunk_grads
            if i:
                dh = dz @ layer.weight.T
        return trunk_grads + grads_actor + grads_critic


def masked_logits(logits, mask):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise AllMasked("every action is masked")
    return np.where(mask, logits, MASKED_LOGIT)


def masked_distribution(logits, mask):
    """Softmax over unmasked logits; masked entries get probability exactly 0."""
    z = masked_logits(np.asarray(logits, dtype=np.float64), mask)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def masked_log_probs(logits, mask):
    z = masked_logits(np.asarray(logits, dtype=np.float64), mask)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def sample_from(probs, mask, u):
    """Inverse-CDF draw of one action per row for uniforms ``u``."""
    probs = np.atleast_2d(probs)
    mask = np.atleast_2d(mask)
    u = np.atleast_1d(u)
    cdf = np.cumsum(probs, axis=1)
    actions = (cdf <= u[:, None]).sum(axis=1)
    last = N_ACTIONS - 1 - np.argmax(mask[:, ::-1], axis=1)
    bad = actions >= N_ACTIONS
    actions[bad] = last[bad]
    return actions


def act(net, obs, mask, mode="sample", rng=None):
    """Pick an action; returns ``(action, log_prob, value)``."""
    logits, value = net.forward(obs)
    logp = masked_log_probs(logits, mask)
    if mode == "greedy":
        action = int(np.argmax(logp))
    elif mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        action = int(sample_from(np.exp(logp), mask, rng.random())[0])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return action, float(logp[action]), float(value)


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------

def checkpoint_bytes(net):
    header = struct.pack("<4sIQI", MAGIC, VERSION, net.obs_layout, len(net.layers))
    for layer in net.layers:
        n_in, n_out = layer.weight.shape
        header += struct.pack("<IIB", n_in, n_out, layer.activation)
    header += struct.pack("<QQ", net.timesteps, net.seed & ((1 << 64) - 1))
    payload = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in net.params())
    return header + payload + struct.pack("<I", zlib.crc32(payload))


def save_checkpoint(net, path):
    atomic_write(path, checkpoint_bytes(net))


def parse_checkpoint(data, expected_layout="default"):
    """Decode checkpoint bytes.

    ``expected_layout`` is the observation layout hash the caller runs with;
    the default is the full (unmasked) layout, ``None`` skips the check.
    """
    if expected_layout == "default":
        expected_layout = layout_hash()
    mv = memoryview(data)
    pos = 0

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(mv):
            raise FormatError("checkpoint truncated")
        vals = struct.unpack_from(fmt, mv, pos)
        pos += size
        return vals

    magic, version, layout, n_layers = take("<4sIQI")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    shapes = [take("<IIB") for _ in range(n_layers)]
    timesteps, seed = take("<QQ")
    payload_start = pos
    layers = []
    for n_in, n_out, activation in shapes:
        n_w, n_b = 4 * n_in * n_out, 4 * n_out
        if pos + n_w + n_b > len(mv):
            raise FormatError("checkpoint truncated")
        w = np.frombuffer(mv[pos:pos + n_w], dtype="<f4")
        b = np.frombuffer(mv[pos + n_w:pos + n_w + n_b], dtype="<f4")
        pos += n_w + n_b
        layers.append(Layer(w.astype(np.float64).reshape(n_in, n_out), b.astype(np.float64), activation))
    payload = bytes(mv[payload_start:pos])
    (crc,) = take("<I")
    if pos != len(mv):
        raise FormatError("trailing bytes after checkpoint")
    if crc != zlib.crc32(payload):
        raise FormatError("payload CRC mismatch")
    if expected_layout is not None and layout != expected_layout:
        raise LayoutMismatch(f"checkpoint observation layout {layout:#018x} != expected {expected_layout:#018x}")
    return PolicyNet(layers, layout, seed, timesteps)


def load_checkpoint(path, expected_layout="default"):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read(), expected_layout)
