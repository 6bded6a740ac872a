"""Small numpy networks with hand-written backprop, Gaussian policies, Adam and
running normalizers."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LOG_STD_MIN = math.log(1e-4)
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class StaleCacheError(RuntimeError):
    """Backward called with a cache recorded before the parameters changed."""


class NumericalError(FloatingPointError):
    pass


# ---------------------------------------------------------------------------
# MLP


def param_count(sizes) -> int:
    return sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))


class Mlp:
    """ReLU MLP whose weights and biases are views into one flat vector ``theta``.

    Row-vector convention: a layer computes ``h @ W + b`` with ``W`` of shape
    ``(fan_in, fan_out)``. The subgradient of ReLU at 0 is taken as 0.
    """

    def __init__(self, sizes, rng: np.random.Generator | None = None, out_scale: float = 1.0,
                 buffer: np.ndarray | None = None):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        n = param_count(self.sizes)
        if buffer is None:
            buffer = np.zeros(n)
        elif buffer.shape != (n,):
            raise ValueError(f"buffer must have shape ({n},)")
        self.theta = buffer
        self.W, self.b = [], []
        off = 0
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            self.W.append(self.theta[off:off + i * o].reshape(i, o))
            off += i * o
            self.b.append(self.theta[off:off + o])
            off += o
        self.version = 0
        if rng is not None:
            self.init(rng, out_scale)

    @property
    def n_params(self) -> int:
        return self.theta.size

    def init(self, rng, out_scale=1.0):
        """He-style uniform fan-in init, zero biases, last layer scaled by ``out_scale``."""
        for k, W in enumerate(self.W):
            bound = math.sqrt(6.0 / W.shape[0])
            W[...] = rng.uniform(-bound, bound, W.shape)
            self.b[k][...] = 0.0
        self.W[-1] *= out_scale
        self.touch()

    def touch(self):
        """Record that ``theta`` was modified in place."""
        self.version += 1

    def set_params(self, theta):
        self.theta[...] = theta
        self.touch()

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {h.shape[1]} != {self.sizes[0]}")
        acts = [h]
        last = len(self.W) - 1
        for k, (W, b) in enumerate(zip(self.W, self.b)):
            z = h @ W + b
            h = z if k == last else np.maximum(z, 0.0)
            acts.append(h)
        out = h[0] if single else h
        return out, (acts, single, self.version)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out, input_grad: bool = False):
        """Gradient of ``sum(output * grad_out)`` with respect to ``theta``."""
        acts, single, version = cache
        if version != self.version:
            raise StaleCacheError("parameters changed since this forward pass")
        g = np.asarray(grad_out, dtype=float)
        g = g[None, :] if single else g
        grad = np.empty_like(self.theta)
        gW, gb = self._views(grad)
        for k in range(len(self.W) - 1, -1, -1):
            if k != len(self.W) - 1:
                g = g * (acts[k + 1] > 0.0)
            gW[k][...] = acts[k].T @ g
            gb[k][...] = g.sum(axis=0)
            if k or input_grad:
                g = g @ self.W[k].T
        if input_grad:
            return grad, (g[0] if single else g)
        return grad

    def _views(self, flat):
        Ws, bs = [], []
        off = 0
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            Ws.append(flat[off:off + i * o].reshape(i, o))
            off += i * o
            bs.append(flat[off:off + o])
            off += o
        return Ws, bs


# ---------------------------------------------------------------------------
# Gaussian policy


def gaussian_log_prob(x, mean, log_std):
    """Sum over the last axis of diagonal Gaussian log-densities."""
    x, mean, log_std = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, mean, log_std)))
    z = (x - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - HALF_LOG_2PI, axis=-1)


def gaussian_entropy(log_std):
    """Entropy sum_k 0.5 * ln(2 pi e sigma_k^2)."""
    log_std = np.asarray(log_std, dtype=float)
    return float(np.sum(0.5 + HALF_LOG_2PI + log_std))


@dataclass
class PolicySample:
    action: np.ndarray           # primary action as sampled (before env clipping)
    aux_raw: float | None        # unbounded sample of the repetition head
    log_prob: float
    noise: np.ndarray | None = None   # AR(1) exploration noise used, if any
    aux: float | None = None     # set when the policy fixes d_i / t_i itself


class GaussianPolicy:
    """Diagonal Gaussian policy on a ReLU trunk.

    The trunk outputs ``K`` action means and, when ``aux`` is set, a mean and
    log-std for the scalar repetition head (state dependent). The primary
    log-stds are a free vector shared by all states. All parameters live in
    ``theta``: first the trunk, then the ``K`` log-stds.

    With AR(1) exploration, actions are ``mu + sigma * eps_t`` where
    ``eps_t = alpha * eps_{t-1} + sqrt(1 - alpha^2) * eta_t``; the log-density
    is the conditional one given ``eps_{t-1}``.
    """

    def __init__(self, obs_dim: int, action_dim: int, aux: bool = False, hidden=(256, 256),
                 rng: np.random.Generator | None = None, init_log_std: float = 0.0,
                 out_scale: float = 0.01):
        self.obs_dim, self.action_dim, self.aux = int(obs_dim), int(action_dim), bool(aux)
        self.hidden = tuple(hidden)
        n_out = self.action_dim + (2 if self.aux else 0)
        sizes = (self.obs_dim, *self.hidden, n_out)
        n_net = param_count(sizes)
        self.theta = np.zeros(n_net + self.action_dim)
        self.net = Mlp(sizes, buffer=self.theta[:n_net])
        self.log_std = self.theta[n_net:]
        if rng is not None:
            self.net.init(rng, out_scale)
        self.log_std[...] = init_log_std

    @property
    def n_params(self) -> int:
        return self.theta.size

    def touch(self):
        np.maximum(self.log_std, LOG_STD_MIN, out=self.log_std)
        self.net.touch()

    def check(self):
        if not np.all(np.isfinite(self.theta)):
            raise NumericalError("non-finite policy parameters")
        if np.any(self.log_std < LOG_STD_MIN):
            raise NumericalError("policy log-std below its floor")

    def heads(self, obs):
        out, cache = self.net.forward(obs)
        K = self.action_dim
        mean = out[..., :K]
        if not self.aux:
            return mean, None, None, cache
        aux_mean = out[..., K]
        aux_ls = np.clip(out[..., K + 1], LOG_STD_MIN, LOG_STD_MAX)
        return mean, aux_mean, aux_ls, cache

    def sample(self, obs, rng, deterministic: bool = False, alpha: float = 0.0,
               prev_noise: np.ndarray | None = None) -> PolicySample:
        mean, aux_mean, aux_ls, _ = self.heads(obs)
        K = self.action_dim
        if deterministic:
            return PolicySample(mean.copy(), None if aux_mean is None else float(aux_mean), 0.0)
        eta = rng.standard_normal(K + (1 if self.aux else 0))
        std = np.exp(self.log_std)
        if alpha:
            beta = math.sqrt(1.0 - alpha * alpha)
            prev = np.zeros(K) if prev_noise is None else prev_noise
            noise = alpha * prev + beta * eta[:K]
            action = mean + std * noise
            logp = float(np.sum(-0.5 * eta[:K] ** 2 - self.log_std - math.log(beta) - HALF_LOG_2PI))
        else:
            noise = eta[:K]
            action = mean + std * noise
            logp = float(np.sum(-0.5 * noise * noise - self.log_std - HALF_LOG_2PI))
        aux_raw = None
        if self.aux:
            aux_raw = float(aux_mean + math.exp(aux_ls) * eta[K])
            logp += -0.5 * eta[K] ** 2 - float(aux_ls) - HALF_LOG_2PI
        return PolicySample(action, aux_raw, logp, noise=noise if alpha else None)

    def log_prob(self, obs, actions, aux_raw=None, prev_noise=None, alpha: float = 0.0):
        return self.log_prob_grad(obs, actions, aux_raw, None, prev_noise, alpha)[0]

    def log_prob_grad(self, obs, actions, aux_raw=None, weights=None, prev_noise=None,
                      alpha: float = 0.0, entropy_coef: float = 0.0):
        """Log-densities of a batch and, if ``weights`` is given, the gradient of
        ``sum_j w_j log pi_j + entropy_coef * sum_j H_j`` with respect to ``theta``."""
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        actions = np.asarray(actions, dtype=float).reshape(len(obs), self.action_dim)
        mean, aux_mean, aux_ls, cache = self.heads(obs)
        K = self.action_dim
        std = np.exp(self.log_std)
        centre = mean
        beta = 1.0
        if alpha:
            beta = math.sqrt(1.0 - alpha * alpha)
            if prev_noise is not None:
                centre = mean + std * alpha * np.asarray(prev_noise, dtype=float).reshape(mean.shape)
        z = (actions - centre) / (std * beta)
        logp = np.sum(-0.5 * z * z - self.log_std - math.log(beta) - HALF_LOG_2PI, axis=1)
        if self.aux:
            if aux_raw is None:
                raise ValueError("policy has a repetition head; aux_raw is required")
            aux_raw = np.asarray(aux_raw, dtype=float).reshape(len(obs))
            za = (aux_raw - aux_mean) * np.exp(-aux_ls)
            logp = logp + (-0.5 * za * za - aux_ls - HALF_LOG_2PI)
        if weights is None:
            return logp, None
        w = np.asarray(weights, dtype=float).reshape(len(obs))
        g_out = np.zeros((len(obs), self.net.sizes[-1]))
        g_out[:, :K] = w[:, None] * z / (std * beta)
        # d logp / d log_std: z * (a - mu) / (sigma beta) - 1, which reduces to z^2 - 1 without AR
        g_ls = np.sum(w[:, None] * (z * (actions - mean) / (std * beta) - 1.0), axis=0)
        if self.aux:
            inside = (aux_ls > LOG_STD_MIN) & (aux_ls < LOG_STD_MAX)
            ent = entropy_coef * np.ones(len(obs))
            g_out[:, K] = w * za * np.exp(-aux_ls)
            g_out[:, K + 1] = (w * (za * za - 1.0) + ent) * inside
        g_ls = g_ls + entropy_coef * len(obs)
        grad = np.empty_like(self.theta)
        grad[:self.net.n_params] = self.net.backward(cache, g_out)
        grad[self.net.n_params:] = g_ls
        return logp, grad

    def entropy(self, obs=None) -> float:
        """Mean entropy of the policy at ``obs`` (primary part only when ``obs`` is None)."""
        h = gaussian_entropy(self.log_std)
        if self.aux and obs is not None:
            _, _, aux_ls, _ = self.heads(np.atleast_2d(obs))
            h += float(np.mean(0.5 + HALF_LOG_2PI + aux_ls))
        return h

    def copy(self) -> "GaussianPolicy":
        p = GaussianPolicy(self.obs_dim, self.action_dim, self.aux, self.hidden)
        p.theta[...] = self.theta
        return p


class ValueNet:
    """Scalar value MLP."""

    def __init__(self, obs_dim: int, hidden=(256, 256), rng: np.random.Generator | None = None):
        self.net = Mlp((obs_dim, *hidden, 1), rng=rng, out_scale=1.0)
        self.theta = self.net.theta

    def touch(self):
        self.net.touch()

    def __call__(self, obs):
        out = self.net(obs)
        return out[..., 0]

    def mse_grad(self, obs, targets):
        """``mean((V - y)^2)`` and its gradient."""
        obs = np.atleast_2d(obs)
        out, cache = self.net.forward(obs)
        err = out[:, 0] - np.asarray(targets, dtype=float)
        loss = float(np.mean(err * err))
        grad = self.net.backward(cache, (2.0 / len(err)) * err[:, None])
        return loss, grad


# ---------------------------------------------------------------------------
# Optimizer


class Adam:
    """Adam over a list of parameter arrays updated in place, with optional
    joint gradient-norm clipping."""

    def __init__(self, shapes, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = float(lr), beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads, max_norm: float | None = None):
        """Apply one descent step on ``grads`` (the gradient of a loss). Returns
        the pre-clip global gradient norm."""
        norm = math.sqrt(sum(float(g @ g) for g in grads))
        if not math.isfinite(norm):
            raise NumericalError("non-finite gradient")
        scale = 1.0
        if max_norm is not None and norm > max_norm:
            scale = max_norm / (norm + 1e-6)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if scale != 1.0:
                g = g * scale
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return norm


# ---------------------------------------------------------------------------
# Normalizers


class FrozenNormalizer:
    """Immutable snapshot of a :class:`Normalizer`."""

    def __init__(self, mean, var, eps, clip):
        self.mean = np.array(mean, dtype=float)
        self.std = np.sqrt(np.array(var, dtype=float) + eps)
        self.clip = clip
        self.mean.flags.writeable = False
        self.std.flags.writeable = False

    def __call__(self, x):
        y = (np.asarray(x, dtype=float) - self.mean) / self.std
        if self.clip is not None:
            y = np.clip(y, -self.clip, self.clip)
        return y

    normalize = __call__


class Normalizer:
    """Per-dimension exponential moving mean and variance.

    The update rate is ``max(rate, 1/count)`` so early samples are averaged
    uniformly before the moving average takes over.
    """

    def __init__(self, dim: int, rate: float = 1e-3, eps: float = 1e-8, clip: float | None = 10.0):
        self.dim = int(dim)
        self.rate, self.eps, self.clip = float(rate), float(eps), clip
        self.mean = np.zeros(self.dim)
        self.var = np.ones(self.dim)
        self.count = 0

    def update(self, x):
        x = np.asarray(x, dtype=float).reshape(self.dim)
        self.count += 1
        a = max(self.rate, 1.0 / self.count)
        d = x - self.mean
        self.mean = self.mean + a * d
        self.var = (1.0 - a) * (self.var + a * d * d)

    def __call__(self, x):
        y = (np.asarray(x, dtype=float) - self.mean) / np.sqrt(self.var + self.eps)
        if self.clip is not None:
            y = np.clip(y, -self.clip, self.clip)
        return y

    normalize = __call__

    def snapshot(self) -> FrozenNormalizer:
        return FrozenNormalizer(self.mean, self.var, self.eps, self.clip)

    def state(self) -> dict:
        return {"mean": self.mean.tolist(), "var": self.var.tolist(), "count": self.count,
                "rate": self.rate, "eps": self.eps, "clip": self.clip}

    @classmethod
    def from_state(cls, d) -> "Normalizer":
        n = cls(len(d["mean"]), d["rate"], d["eps"], d["clip"])
        n.mean = np.array(d["mean"], dtype=float)
        n.var = np.array(d["var"], dtype=float)
        n.count = int(d["count"])
        return n


# ---------------------------------------------------------------------------
# Checkpoints

MAGIC = b"SARLABCK"
FORMAT_VERSION = 1


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named float arrays to ``path`` and a JSON sidecar ``path + '.json'``.

    Layout: magic, version (u32), array count (u32), then per array a name
    (u16 length + utf-8), ndim (u32), dims (u64 each); then all data as
    little-endian float64 in the same order.
    """
    path = Path(path)
    header = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(arrays))]
    body = []
    shapes = {}
    for name, a in arrays.items():
        a = np.asarray(a, dtype="<f8")
        nb = name.encode()
        header.append(struct.pack("<H", len(nb)) + nb)
        header.append(struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape))
        body.append(a.tobytes(order="C"))
        shapes[name] = list(a.shape)
    path.write_bytes(b"".join(header + body))
    side = {"format_version": FORMAT_VERSION, "shapes": shapes}
    side.update(meta or {})
    Path(str(path) + ".json").write_text(json.dumps(side, indent=2, sort_keys=True))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint")
    version, n = struct.unpack_from("<II", raw, 8)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 16
    specs = []
    for _ in range(n):
        (ln,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off:off + ln].decode()
        off += ln
        (ndim,) = struct.unpack_from("<I", raw, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}Q", raw, off)
        off += 8 * ndim
        specs.append((name, shape))
    arrays = {}
    for name, shape in specs:
        count = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape).astype(float)
        off += 8 * count
    if off != len(raw):
        raise ValueError("trailing bytes in checkpoint")
    side = Path(str(path) + ".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    return arrays, meta
