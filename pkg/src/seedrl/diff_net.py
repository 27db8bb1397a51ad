"""Small feed-forward networks with hand-rolled reverse-mode gradients.

Everything is dense numpy on flat float64 parameter vectors: a network is a
spec plus one flat array, weights and biases are reshaped views into it, and
``backward`` returns the exact gradient of ``sum(output * upstream)`` with
respect to the flat vector and the input. Networks here stay tiny (a few
thousand parameters), so there is no graph machinery, just the chain rule.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
# Initial bias for log-std outputs of gaussian heads: start moderately broad.
LOG_STD_BIAS_INIT = -0.5

_ACTIVATIONS = ("tanh", "relu")
_OUTPUTS = ("linear", "categorical_logits", "gaussian_head")


@dataclass(frozen=True)
class NetSpec:
    """Architecture description: widths ``(in, hidden..., out)`` plus heads.

    ``gaussian_head`` interprets the output as ``dim`` means followed by
    ``dim`` log-stds (so the final width must be even); log-stds are clamped
    to ``[LOG_STD_MIN, LOG_STD_MAX]`` in the forward pass.
    """

    layer_widths: tuple[int, ...]
    activation: str = "tanh"
    output: str = "linear"

    def __post_init__(self) -> None:
        if len(self.layer_widths) < 3:
            raise ValueError("need at least one hidden layer")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError(f"bad layer widths {self.layer_widths}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.output not in _OUTPUTS:
            raise ValueError(f"unknown output kind {self.output!r}")
        if self.output == "gaussian_head" and self.layer_widths[-1] % 2 != 0:
            raise ValueError("gaussian_head needs an even output width")

    @property
    def in_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def out_dim(self) -> int:
        return self.layer_widths[-1]

    def param_count(self) -> int:
        return sum(i * o + o for i, o in zip(self.layer_widths[:-1], self.layer_widths[1:]))

    def to_doc(self) -> dict:
        return {"layer_widths": list(self.layer_widths),
                "activation": self.activation, "output": self.output}

    @staticmethod
    def from_doc(doc: dict) -> "NetSpec":
        return NetSpec(tuple(doc["layer_widths"]), doc["activation"], doc["output"])


def init_params(spec: NetSpec, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights, zero biases (log-std biases offset)."""
    params = np.zeros(spec.param_count())
    offset = 0
    widths = spec.layer_widths
    for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        n_w = fan_in * fan_out
        params[offset:offset + n_w] = rng.uniform(-limit, limit, size=n_w)
        offset += n_w
        if spec.output == "gaussian_head" and layer == len(widths) - 2:
            params[offset + fan_out // 2:offset + fan_out] = LOG_STD_BIAS_INIT
        offset += fan_out
    return params


class Net:
    """A NetSpec bound to a flat parameter vector (views stay live)."""

    def __init__(self, spec: NetSpec, params: np.ndarray | None = None,
                 rng: np.random.Generator | None = None):
        self.spec = spec
        if params is None:
            if rng is None:
                raise ValueError("need params or an rng to initialize")
            params = init_params(spec, rng)
        params = np.ascontiguousarray(params, dtype=np.float64)
        if params.shape != (spec.param_count(),):
            raise ValueError(f"param vector shape {params.shape} != ({spec.param_count()},)")
        self.params = params
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        offset = 0
        for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
            self.weights.append(params[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out))
            offset += fan_in * fan_out
            self.biases.append(params[offset:offset + fan_out])
            offset += fan_out

    def clone(self) -> "Net":
        return Net(self.spec, self.params.copy())

    def load_flat(self, flat: np.ndarray) -> None:
        self.params[:] = flat  # in place, keeps views valid

    def forward(self, x: np.ndarray, with_cache: bool = False):
        """Forward pass; accepts a single vector or a (batch, in) matrix."""
        if not isinstance(x, np.ndarray) or x.dtype != np.float64:
            x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x.reshape(1, -1) if single else x
        if h.shape[1] != self.spec.in_dim:
            raise ValueError(f"input width {h.shape[1]} != {self.spec.in_dim}")
        tanh = self.spec.activation == "tanh"
        acts = [h]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = h @ w
            z += b
            h = np.tanh(z) if tanh else np.maximum(z, 0.0, out=z)
            acts.append(h)
        y = h @ self.weights[-1]
        y += self.biases[-1]
        clamp_mask = None
        if self.spec.output == "gaussian_head":
            half = self.spec.out_dim // 2
            log_std = y[:, half:]
            clamp_mask = (log_std > LOG_STD_MIN) & (log_std < LOG_STD_MAX)
            y = np.concatenate([y[:, :half], np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)], axis=1)
        out = y[0] if single else y
        if with_cache:
            return out, (acts, clamp_mask, single)
        return out

    def backward(self, cache, upstream: np.ndarray):
        """Gradient of sum(output * upstream) w.r.t. params and input.

        Returns ``(grad_flat, grad_input)`` with shapes matching ``params``
        and the forward input.
        """
        acts, clamp_mask, single = cache
        g = np.asarray(upstream, dtype=np.float64)
        if single:
            g = g.reshape(1, -1)
        if g.shape != (acts[0].shape[0], self.spec.out_dim):
            raise ValueError(f"upstream shape {g.shape} mismatches output")
        if self.spec.output == "gaussian_head":
            half = self.spec.out_dim // 2
            g = np.concatenate([g[:, :half], g[:, half:] * clamp_mask], axis=1)
        grad = np.zeros_like(self.params)
        # Views into grad mirroring the weight/bias layout.
        g_w, g_b = [], []
        offset = 0
        for fan_in, fan_out in zip(self.spec.layer_widths[:-1], self.spec.layer_widths[1:]):
            g_w.append(grad[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out))
            offset += fan_in * fan_out
            g_b.append(grad[offset:offset + fan_out])
            offset += fan_out
        for layer in range(len(self.weights) - 1, -1, -1):
            a_in = acts[layer]
            g_w[layer][:] = a_in.T @ g
            g_b[layer][:] = g.sum(axis=0)
            g = g @ self.weights[layer].T
            if layer > 0:
                a = acts[layer]
                if self.spec.activation == "tanh":
                    g = g * (1.0 - a * a)
                else:
                    g = g * (a > 0.0)
        grad_input = g[0] if single else g
        return grad, grad_input


@dataclass
class AdamState:
    """First/second moment accumulators for one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    learning_rate: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def for_params(params: np.ndarray, learning_rate: float = 3e-3) -> "AdamState":
        return AdamState(m=np.zeros_like(params), v=np.zeros_like(params),
                         learning_rate=learning_rate)


def optimizer_step(params: np.ndarray, grad: np.ndarray, opt: AdamState) -> np.ndarray:
    """One adaptive-moment update with bias correction; mutates params in place."""
    if params.shape != grad.shape or params.shape != opt.m.shape:
        raise ValueError("parameter/gradient/moment shape mismatch")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient; halting update")
    opt.step += 1
    opt.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * grad
    opt.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * grad * grad
    m_hat = opt.m / (1.0 - opt.beta1 ** opt.step)
    v_hat = opt.v / (1.0 - opt.beta2 ** opt.step)
    params -= opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.eps)
    return params


def config_hash(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


CHECKPOINT_FORMAT_VERSION = 1


def save_checkpoint(directory: str | Path, name: str, nets: dict[str, Net],
                    optimizers: dict[str, AdamState] | None = None,
                    meta: dict | None = None) -> Path:
    """Write ``<name>.json`` (manifest) plus ``<name>.bin`` (f32-LE params).

    The blob is the concatenation of each net's flat vector, cast to
    little-endian float32, in manifest order.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    chunks = []
    offset = 0
    for net_name in sorted(nets):
        net = nets[net_name]
        entries.append({
            "name": net_name,
            "spec": net.spec.to_doc(),
            "param_count": net.spec.param_count(),
            "offset": offset,
        })
        chunks.append(net.params.astype("<f4").tobytes())
        offset += net.spec.param_count()
    opt_doc = {}
    for opt_name, opt in (optimizers or {}).items():
        opt_doc[opt_name] = {"step": opt.step, "learning_rate": opt.learning_rate}
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "blob": f"{name}.bin",
        "nets": entries,
        "optimizers": opt_doc,
        "meta": meta or {},
    }
    manifest["config_hash"] = config_hash({"nets": entries, "meta": meta or {}})
    blob_path = directory / f"{name}.bin"
    blob_path.write_bytes(b"".join(chunks))
    manifest_path = directory / f"{name}.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest_path


def load_checkpoint(manifest_path: str | Path):
    """Read a checkpoint; returns ``(nets, optimizer_doc, meta)``."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('format_version')}")
    blob = (manifest_path.parent / manifest["blob"]).read_bytes()
    flat32 = np.frombuffer(blob, dtype="<f4")
    nets = {}
    for entry in manifest["nets"]:
        spec = NetSpec.from_doc(entry["spec"])
        chunk = flat32[entry["offset"]:entry["offset"] + entry["param_count"]]
        if chunk.size != entry["param_count"]:
            raise ValueError(f"blob truncated for net {entry['name']}")
        nets[entry["name"]] = Net(spec, chunk.astype(np.float64))
    return nets, manifest.get("optimizers", {}), manifest.get("meta", {})
