"""Small numpy function-approximation stack.

Networks keep all weights in one flat parameter vector; layer weights are
reshaped views into it, so optimizers, soft target updates and checkpoints
work on plain vectors.

Every network is an *ensemble* of ``members`` independent copies evaluated
with batched matmuls: inputs are ``(members, batch, ...)`` (or
``(batch, ...)``, broadcast to every member) and outputs are
``(members, batch, out)``.  The multi-agent learner keeps all actors (and
all local critics) in one ensemble each.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ContractViolation, ConfigurationError

CHECKPOINT_FORMAT = 1


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# activation, derivative expressed through the activation's output
ACTIVATIONS = {
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
    "sigmoid": (sigmoid, lambda y: y * (1.0 - y)),
    "identity": (lambda x: x, None),
}


class Network:
    """Base class: flat parameter store plus layer views."""

    kind = "base"

    def __init__(self, members: int = 1):
        if members < 1:
            raise ConfigurationError("members must be >= 1")
        self.members = int(members)
        self._shapes: list[tuple[str, tuple[int, ...]]] = []
        self.params = np.zeros(0)
        self._views: dict[str, np.ndarray] = {}

    def _allocate(self, shapes):
        self._shapes = list(shapes)
        total = sum(int(np.prod(s)) for _, s in self._shapes)
        self.params = np.zeros(total)
        self._bind()

    def _bind(self):
        self._views = {}
        offset = 0
        for name, shape in self._shapes:
            size = int(np.prod(shape))
            self._views[name] = self.params[offset:offset + size].reshape(shape)
            offset += size

    def _flatten(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([grads[name].reshape(-1) for name, _ in self._shapes])

    @property
    def n_params(self) -> int:
        return self.params.size

    def set_params(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape != self.params.shape:
            raise ContractViolation(f"expected {self.params.shape} parameters, got {values.shape}")
        self.params[...] = values

    def copy(self) -> "Network":
        clone = network_from_spec(self.spec())
        clone.set_params(self.params)
        return clone

    def spec(self) -> dict:
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)[0]


def _glorot(rng, members, fan_in, fan_out, scale=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out)) if scale is None else scale
    return rng.uniform(-limit, limit, size=(members, fan_in, fan_out))


class _DenseStack:
    """Shared forward/backward for a stack of affine + activation layers."""

    def __init__(self, prefix, sizes, hidden, output):
        self.prefix = prefix
        self.sizes = list(sizes)
        self.acts = [hidden] * (len(sizes) - 2) + [output]
        for a in self.acts:
            if a not in ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {a!r}")

    def shapes(self, members):
        out = []
        for k, (fi, fo) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            out.append((f"{self.prefix}W{k}", (members, fi, fo)))
            out.append((f"{self.prefix}b{k}", (members, fo)))
        return out

    def init(self, views, rng, members, out_scale, out_bias):
        n_layers = len(self.sizes) - 1
        for k, (fi, fo) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            last = k == n_layers - 1
            views[f"{self.prefix}W{k}"][...] = _glorot(rng, members, fi, fo,
                                                       out_scale if last else None)
            views[f"{self.prefix}b{k}"][...] = out_bias if last else 0.0

    def forward(self, views, x):
        hs = [x]
        h = x
        for k, act in enumerate(self.acts):
            z = np.matmul(h, views[f"{self.prefix}W{k}"]) + views[f"{self.prefix}b{k}"][:, None, :]
            h = ACTIVATIONS[act][0](z)
            hs.append(h)
        return h, hs

    def backward(self, views, hs, dy, grads):
        dh = dy
        for k in reversed(range(len(self.acts))):
            deriv = ACTIVATIONS[self.acts[k]][1]
            dz = dh if deriv is None else dh * deriv(hs[k + 1])
            h_in = hs[k]
            if h_in.ndim == 2:  # input shared by all members
                grads[f"{self.prefix}W{k}"] = np.matmul(h_in.T, dz)
            else:
                grads[f"{self.prefix}W{k}"] = np.matmul(h_in.transpose(0, 2, 1), dz)
            grads[f"{self.prefix}b{k}"] = dz.sum(axis=1)
            dh = np.matmul(dz, views[f"{self.prefix}W{k}"].transpose(0, 2, 1))
        return dh


class MLP(Network):
    """Feed-forward network: ``sizes[0]`` inputs, hidden tanh layers."""

    kind = "mlp"

    def __init__(self, sizes, hidden="tanh", output="identity", members=1, rng=None,
                 out_scale=3e-3, out_bias=0.0):
        super().__init__(members)
        if len(sizes) < 2:
            raise ConfigurationError("need at least input and output sizes")
        self.sizes = [int(s) for s in sizes]
        self.hidden, self.output = hidden, output
        self._stack = _DenseStack("", self.sizes, hidden, output)
        self._allocate(self._stack.shapes(self.members))
        if rng is not None:
            self._stack.init(self._views, rng, self.members, out_scale, out_bias)

    @property
    def n_in(self):
        return self.sizes[0]

    @property
    def n_out(self):
        return self.sizes[-1]

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_in or x.ndim not in (2, 3):
            raise ContractViolation(f"expected input (..., {self.n_in}), got {x.shape}")
        if x.ndim == 3 and x.shape[0] != self.members:
            raise ContractViolation(f"expected {self.members} members, got {x.shape[0]}")
        y, hs = self._stack.forward(self._views, x)
        return y, hs

    def backward(self, dy, cache):
        """Gradient of ``sum(dy * y)`` w.r.t. parameters (flat) and input."""
        grads: dict[str, np.ndarray] = {}
        dx = self._stack.backward(self._views, cache, np.asarray(dy, dtype=float), grads)
        return self._flatten(grads), dx

    def spec(self):
        return {"kind": self.kind, "sizes": self.sizes, "hidden": self.hidden,
                "output": self.output, "members": self.members}


class RegionNet(Network):
    """Permutation-shared region encoder followed by a dense head.

    Input is ``(..., n_regions, features)``.  The same encoder layer maps
    every region slice to ``encoder_units`` values; the head sees the mean
    encoding over regions, concatenated with the encoding of the member's
    target region when ``targets`` is given (member ``e`` targets region
    ``targets[e]``).  The output is therefore invariant to any permutation
    of the non-target region slices.
    """

    kind = "region"

    def __init__(self, features, n_regions, encoder_units, hidden, n_out, output="identity",
                 targets=None, members=1, rng=None, out_scale=3e-3, out_bias=0.0):
        super().__init__(members)
        self.features = int(features)
        self.n_regions = int(n_regions)
        self.encoder_units = int(encoder_units)
        self.hidden_sizes = [int(h) for h in hidden]
        self.n_out = int(n_out)
        self.output = output
        if targets is not None:
            targets = [int(t) for t in targets]
            if len(targets) != self.members or not all(0 <= t < n_regions for t in targets):
                raise ConfigurationError("targets must give one valid region per member")
        self.targets = targets
        head_in = encoder_units * (2 if targets is not None else 1)
        self._head = _DenseStack("head_", [head_in, *self.hidden_sizes, self.n_out], "tanh",
                                 output)
        self._allocate([("enc_W", (self.members, self.features, self.encoder_units)),
                        ("enc_b", (self.members, self.encoder_units)),
                        *self._head.shapes(self.members)])
        if rng is not None:
            self._views["enc_W"][...] = _glorot(rng, self.members, self.features,
                                                self.encoder_units)
            self._head.init(self._views, rng, self.members, out_scale, out_bias)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim not in (3, 4) or x.shape[-2:] != (self.n_regions, self.features):
            raise ContractViolation(
                f"expected input (..., {self.n_regions}, {self.features}), got {x.shape}")
        if x.ndim == 4 and x.shape[0] != self.members:
            raise ContractViolation(f"expected {self.members} members, got {x.shape[0]}")
        batch = x.shape[-3]
        E, n, u = self.members, self.n_regions, self.encoder_units
        flat = x.reshape(batch * n, self.features) if x.ndim == 3 else \
            x.reshape(E, batch * n, self.features)
        enc = np.tanh(np.matmul(flat, self._views["enc_W"]) + self._views["enc_b"][:, None, :])
        enc = enc.reshape(E, batch, n, u)
        pooled = enc.mean(axis=2)
        if self.targets is not None:
            own = enc[np.arange(E), :, self.targets, :]
            z = np.concatenate([own, pooled], axis=-1)
        else:
            z = pooled
        y, hs = self._head.forward(self._views, z)
        return y, (flat, enc, hs, x.ndim)

    def backward(self, dy, cache):
        flat, enc, hs, in_ndim = cache
        grads: dict[str, np.ndarray] = {}
        dz = self._head.backward(self._views, hs, np.asarray(dy, dtype=float), grads)
        E, batch, n, u = enc.shape
        if self.targets is not None:
            d_own, d_pool = dz[..., :u], dz[..., u:]
        else:
            d_own, d_pool = None, dz
        denc = np.repeat((d_pool / n)[:, :, None, :], n, axis=2)
        if d_own is not None:
            denc[np.arange(E), :, self.targets, :] += d_own
        dpre = (denc * (1.0 - enc * enc)).reshape(E, batch * n, u)
        if in_ndim == 3:
            grads["enc_W"] = np.matmul(flat.T, dpre)
        else:
            grads["enc_W"] = np.matmul(flat.transpose(0, 2, 1), dpre)
        grads["enc_b"] = dpre.sum(axis=1)
        dx = np.matmul(dpre, self._views["enc_W"].transpose(0, 2, 1))
        return self._flatten(grads), dx.reshape(E, batch, n, self.features)

    def spec(self):
        return {"kind": self.kind, "features": self.features, "n_regions": self.n_regions,
                "encoder_units": self.encoder_units, "hidden": self.hidden_sizes,
                "n_out": self.n_out, "output": self.output, "targets": self.targets,
                "members": self.members}


def network_from_spec(spec: dict) -> Network:
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "mlp":
        return MLP(**spec)
    if kind == "region":
        return RegionNet(**spec)
    raise ConfigurationError(f"unknown network kind {kind!r}")


class Adam:
    """Adam on a flat parameter vector (updated in place)."""

    def __init__(self, size, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = float(lr), beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grads):
        grads = np.asarray(grads, dtype=float)
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grads
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grads * grads
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return params

    def state_dict(self):
        return {"m": self.m.copy(), "v": self.v.copy(), "t": self.t}


def optimizer_step(params, grads, opt: Adam):
    """Functional wrapper: apply one Adam step and return ``params``."""
    return opt.step(params, grads)


def soft_update(target, online, tau):
    """``target <- (1 - tau) * target + tau * online`` on flat vectors (in place)."""
    t_params = target.params if isinstance(target, Network) else target
    o_params = online.params if isinstance(online, Network) else online
    if not 0.0 <= tau <= 1.0:
        raise ConfigurationError(f"tau must lie in [0, 1], got {tau}")
    if tau == 1.0:
        t_params[...] = o_params
    elif tau > 0.0:
        t_params *= 1.0 - tau
        t_params += tau * o_params
    return t_params


def save_checkpoint(path, networks: dict[str, Network], metadata: dict | None = None):
    """Write networks (architecture + flat parameters) to an ``.npz`` file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": CHECKPOINT_FORMAT,
        "networks": {name: net.spec() for name, net in networks.items()},
        "metadata": metadata or {},
    }
    arrays = {f"params/{name}": net.params for name, net in networks.items()}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(networks, metadata)``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ConfigurationError(f"unsupported checkpoint format {header.get('format')!r}")
        networks = {}
        for name, spec in header["networks"].items():
            net = network_from_spec(spec)
            net.set_params(data[f"params/{name}"])
            networks[name] = net
    return networks, header["metadata"]
