"""Fully connected networks with hand-written backprop, and Adam.

Parameters of a network live in one flat vector (float64 unless a network
is built with another dtype); ``MlpSpec.layout``
names the weight and bias blocks inside it.  Networks take batches shaped
``(n, input_dim)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

HEADS = ("linear", "gaussian", "sigmoid")
LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class StaleCacheError(RuntimeError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden: tuple[int, ...] = (64, 64)
    head: str = "linear"

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        if self.input_dim <= 0 or self.output_dim <= 0 or any(h <= 0 for h in self.hidden):
            raise ValueError(f"all dimensions must be positive: {self}")

    @property
    def raw_output_dim(self) -> int:
        # gaussian heads emit mean and log-std
        return 2 * self.output_dim if self.head == "gaussian" else self.output_dim

    def layer_dims(self) -> list[int]:
        return [self.input_dim, *self.hidden, self.raw_output_dim]

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        dims = self.layer_dims()
        out = []
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            out.append((f"W{i}", (a, b)))
            out.append((f"b{i}", (b,)))
        return out

    @property
    def size(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.layout())

    def to_json(self) -> dict:
        return {"input_dim": self.input_dim, "output_dim": self.output_dim, "hidden": list(self.hidden), "head": self.head}

    @classmethod
    def from_json(cls, d: dict) -> "MlpSpec":
        return cls(int(d["input_dim"]), int(d["output_dim"]), tuple(int(h) for h in d["hidden"]), d["head"])


def layer_views(spec: MlpSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    if params.shape != (spec.size,):
        raise ValueError(f"parameter vector has shape {params.shape}, spec needs ({spec.size},)")
    views, offset = [], 0
    dims = spec.layer_dims()
    for a, b in zip(dims[:-1], dims[1:]):
        W = params[offset : offset + a * b].reshape(a, b)
        offset += a * b
        bias = params[offset : offset + b]
        offset += b
        views.append((W, bias))
    return views


def init_params(spec: MlpSpec, rng: np.random.Generator, last_scale: float = 1.0) -> np.ndarray:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases."""
    params = np.zeros(spec.size)
    views = layer_views(spec, params)
    for i, (W, _) in enumerate(views):
        bound = 1.0 / math.sqrt(W.shape[0])
        if i == len(views) - 1:
            bound *= last_scale
        W[...] = rng.uniform(-bound, bound, size=W.shape)
    return params


def _forward(spec, views, x):
    acts = [x]
    h = x
    last = len(views) - 1
    for i, (W, b) in enumerate(views):
        z = h @ W + b
        if i < last:
            h = np.maximum(z, 0.0)
        elif spec.head == "sigmoid":
            h = 1.0 / (1.0 + np.exp(-z))
        else:
            h = z
        acts.append(h)
    return h, acts


def _backward(spec, views, acts, out_grad, want_params=True, want_input=True):
    grads = []
    g = out_grad.astype(views[0][0].dtype, copy=False)
    if spec.head == "sigmoid":
        y = acts[-1]
        g = g * y * (1.0 - y)
    last = len(views) - 1
    for i in range(last, -1, -1):
        W, _ = views[i]
        if want_params:
            grads.append(g.sum(axis=0))
            grads.append(acts[i].T @ g)
        if i == 0 and not want_input:
            g = None
            break
        g = g @ W.T
        if i > 0:
            g = g * (acts[i] > 0.0)
    if not want_params:
        return None, g
    grads.reverse()
    return np.concatenate([a.ravel() for a in grads]), g


def forward(spec: MlpSpec, params: np.ndarray, x):
    """Returns ``(output, cache)``; the output head is applied except for gaussian heads,
    which return the raw ``[mean, log_std]`` block."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"input has shape {x.shape}, expected (n, {spec.input_dim})")
    out, acts = _forward(spec, layer_views(spec, params), x)
    return out, (spec, acts, None)


def backward(spec: MlpSpec, params: np.ndarray, cache, out_grad):
    """Gradient of ``sum(output * out_grad)`` w.r.t. the flat params and the input."""
    cspec, acts, _ = cache
    if cspec != spec:
        raise StaleCacheError("cache was produced by a different network spec")
    out_grad = np.asarray(out_grad, dtype=np.float64)
    if out_grad.shape != acts[-1].shape:
        raise ValueError(f"output gradient has shape {out_grad.shape}, expected {acts[-1].shape}")
    return _backward(spec, layer_views(spec, params), acts, out_grad)


class Network:
    """An :class:`MlpSpec` bound to a parameter vector that is updated in place."""

    def __init__(self, spec: MlpSpec, rng: np.random.Generator | None = None, params=None, last_scale: float = 1.0,
                 dtype=np.float64):
        self.spec = spec
        if params is None:
            if rng is None:
                raise ValueError("need either rng or params")
            params = init_params(spec, rng, last_scale)
        self.params = np.array(params, dtype=dtype)
        self._views = layer_views(spec, self.params)
        self.version = 0

    def __call__(self, x) -> np.ndarray:
        return _forward(self.spec, self._views, x)[0]

    def forward(self, x):
        out, acts = _forward(self.spec, self._views, x)
        return out, (self.spec, acts, self.version)

    def backward(self, cache, out_grad, params: bool = True, inputs: bool = True):
        """``(param_grad, input_grad)``; either side can be skipped (returned as ``None``)."""
        spec, acts, version = cache
        if version != self.version or spec != self.spec:
            raise StaleCacheError("parameters changed since this cache was produced")
        return _backward(self.spec, self._views, acts, np.asarray(out_grad), params, inputs)

    def set_params(self, values) -> None:
        self.params[...] = values
        self.version += 1

    def touched(self) -> None:
        """Mark an in-place parameter update."""
        self.version += 1

    @property
    def dtype(self):
        return self.params.dtype

    def copy(self) -> "Network":
        return Network(self.spec, params=self.params.copy(), dtype=self.params.dtype)


class Adam:
    def __init__(self, size: int, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 dtype=np.float64):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size, dtype=dtype)
        self.v = np.zeros(size, dtype=dtype)
        self.t = 0
        self.skipped = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> bool:
        """In-place bias-corrected update; a non-finite gradient is skipped and counted."""
        if grad.shape != params.shape or self.m.shape != params.shape:
            raise ValueError(f"layout mismatch: params {params.shape}, grad {grad.shape}, state {self.m.shape}")
        if not np.all(np.isfinite(grad)):
            self.skipped += 1
            return False
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return True

    def state_dict(self) -> dict:
        return {
            "m": self.m.copy(),
            "v": self.v.copy(),
            "t": self.t,
            "skipped": self.skipped,
            "hyper": [self.lr, self.beta1, self.beta2, self.eps],
        }

    def load_state_dict(self, d: dict) -> None:
        self.m = np.array(d["m"], dtype=np.asarray(d["m"]).dtype)
        self.v = np.array(d["v"], dtype=np.asarray(d["v"]).dtype)
        self.t = int(d["t"])
        self.skipped = int(d["skipped"])
        self.lr, self.beta1, self.beta2, self.eps = (float(x) for x in d["hyper"])


# ------------------------------------------------------------ squashed gaussian


def _log1m_tanh2(u):
    # log(1 - tanh(u)^2), stable for large |u|
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def squashed_sample(mu, log_std, noise):
    """``a = tanh(mu + sigma * noise)`` and its log-density under the squashed gaussian.

    ``log_std`` is clamped to ``[LOG_STD_MIN, LOG_STD_MAX]``; the cache feeds
    :func:`squashed_sample_backward`.
    """
    clipped = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    std = np.exp(clipped)
    u = mu + std * noise
    a = np.tanh(u)
    logp = np.sum(-0.5 * noise * noise - clipped - _HALF_LOG_2PI - _log1m_tanh2(u), axis=-1)
    cache = (a, std, noise, (log_std >= LOG_STD_MIN) & (log_std <= LOG_STD_MAX))
    return a, logp, cache


def squashed_sample_backward(cache, grad_a, grad_logp):
    """Reparameterised gradients w.r.t. ``mu`` and the unclamped ``log_std``."""
    a, std, noise, inside = cache
    g_u = grad_a * (1.0 - a * a) + grad_logp[..., None] * 2.0 * a
    g_mu = g_u
    g_log_std = (g_u * std * noise - grad_logp[..., None]) * inside
    return g_mu, g_log_std


def gaussian_policy_sample(spec: MlpSpec, params: np.ndarray, x, noise):
    """Reparameterised tanh-gaussian action and log-probability for a batch of inputs."""
    if spec.head != "gaussian":
        raise ValueError("gaussian_policy_sample needs a gaussian head")
    raw, _ = forward(spec, params, x)
    d = spec.output_dim
    a, logp, _ = squashed_sample(raw[:, :d], raw[:, d:], np.asarray(noise, dtype=np.float64))
    return a, logp


# ------------------------------------------------------------------- checkpoints


def save_networks(path, networks: dict, optimizers: dict | None = None) -> None:
    """Versioned ``.npz`` of named networks (layout + values) and their Adam states."""
    arrays = {}
    meta = {"version": 1, "networks": {}, "optimizers": {}}
    for name, net in networks.items():
        arrays[f"net/{name}"] = net.params
        meta["networks"][name] = {"spec": net.spec.to_json(), "layout": [[n, list(s)] for n, s in net.spec.layout()]}
    for name, opt in (optimizers or {}).items():
        st = opt.state_dict()
        arrays[f"opt/{name}/m"] = st["m"]
        arrays[f"opt/{name}/v"] = st["v"]
        meta["optimizers"][name] = {"t": st["t"], "skipped": st["skipped"], "hyper": st["hyper"]}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_networks(path) -> tuple[dict, dict]:
    with np.load(path) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        if meta.get("version") != 1:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        nets = {
            name: Network(MlpSpec.from_json(info["spec"]), params=z[f"net/{name}"], dtype=z[f"net/{name}"].dtype)
            for name, info in meta["networks"].items()
        }
        opts = {}
        for name, info in meta["optimizers"].items():
            opt = Adam(z[f"opt/{name}/m"].size, dtype=z[f"opt/{name}/m"].dtype)
            opt.load_state_dict({"m": z[f"opt/{name}/m"], "v": z[f"opt/{name}/v"], **info})
            opts[name] = opt
    return nets, opts
