"""Monotone network blocks and plain dense feature extractors.

Two monotone architectures are provided as parameter containers plus graph
builders over :mod:`monosurv.autodiff`:

* MONDE: a stack of affine maps with non-negative weight matrices, tanh
  between layers and an identity last layer. Monotone in every input
  coordinate.
* MONDE+: layers of the form

      z' = H z + sigma( A( softplus(a t + b) o softplus(G z) ) + B z + L z0 )

  where sigma is tanh on hidden layers and identity on the last one, z0 is
  the original feature block and t a scalar time column. With A, B, G, H and
  a projected non-negative the output is non-decreasing in t while the
  dependence on z0 through L stays unconstrained, which is the property the
  survival models are built on.

Parameter tensors live in flat name-to-array dicts so they can be merged
into model-level stores and fed to graphs as named inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from monosurv import autodiff as ad

__all__ = [
    "ConfigError",
    "MondeParams",
    "MondePlusParams",
    "DenseParams",
    "init_monde",
    "init_monde_plus",
    "init_dense",
    "monde_graph",
    "monde_plus_graph",
    "dense_graph",
    "layer_norm_graph",
    "monde_forward",
    "monde_plus_forward",
    "dense_forward",
    "project_nonnegative",
    "clamp_nonnegative_inplace",
]

DEFAULT_T_WIDTH = 64
LAYER_NORM_EPS = 1e-5


class ConfigError(ValueError):
    """Invalid architecture description."""


def _check_widths(widths, minimum=2):
    if len(widths) < minimum:
        raise ConfigError(f"need at least {minimum} widths, got {widths}")
    for w in widths:
        if int(w) != w or w < 1:
            raise ConfigError(f"widths must be positive integers, got {widths}")


@dataclass
class MondeParams:
    """Non-negative-weight dense stack; `widths` includes input and output."""

    widths: tuple[int, ...]
    tensors: dict[str, np.ndarray]

    @property
    def constrained(self) -> frozenset[str]:
        return frozenset(n for n in self.tensors if n.startswith("w"))


@dataclass
class MondePlusParams:
    """Time-monotone stack; monotone in t only, free in the features."""

    in_dim: int
    hidden: tuple[int, ...]
    out_dim: int
    t_width: int
    tensors: dict[str, np.ndarray]

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.in_dim, *self.hidden, self.out_dim)

    @property
    def constrained(self) -> frozenset[str]:
        prefixes = ("A", "Bw", "Gw", "Hw", "ta")
        return frozenset(n for n in self.tensors if n.startswith(prefixes))


@dataclass
class DenseParams:
    """Ordinary dense net; `blocks[k]` adds layer norm + relu after layer k."""

    dims: tuple[int, ...]
    blocks: tuple[bool, ...]
    tensors: dict[str, np.ndarray]

    @property
    def constrained(self) -> frozenset[str]:
        return frozenset()


def _kaiming_uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_monde(widths, seed: int = 0) -> MondeParams:
    """Folded-Gaussian init: weights |N(0, 1/fan_in)| * 4.6 and biases
    |N(0, 1/fan_out)| * 6.6, so every weight starts feasible (non-negative)
    and the stack starts strictly increasing.

    The fan normalization keeps the all-positive weight rows from drifting
    the tanh activations into saturation at the widths used here; wider
    scalings freeze the network into a constant function of its inputs.
    """
    widths = tuple(int(w) for w in widths)
    _check_widths(widths)
    rng = np.random.default_rng(seed)
    tensors = {}
    for k in range(len(widths) - 1):
        fan_in, fan_out = widths[k], widths[k + 1]
        tensors[f"w{k}"] = 4.6 * np.abs(
            rng.normal(0.0, 1.0 / fan_in, size=(fan_out, fan_in))
        )
        tensors[f"b{k}"] = 6.6 * np.abs(
            rng.normal(0.0, 1.0 / fan_out, size=(1, fan_out))
        )
    return MondeParams(widths=widths, tensors=tensors)


def init_monde_plus(
    in_dim: int,
    hidden,
    out_dim: int = 1,
    t_width: int = DEFAULT_T_WIDTH,
    seed: int = 0,
) -> MondePlusParams:
    """Kaiming-uniform init (U(+-1/sqrt(fan_in)), the dense-layer default),
    with the constrained matrices folded to |.| and shrunk by 0.2, the B bias
    pushed negative (-8.5 scale), the G bias pushed positive (+10 scale),
    a ~ U[0, 1) and the time bias at zero."""
    hidden = tuple(int(w) for w in hidden)
    chain = (int(in_dim), *hidden, int(out_dim))
    _check_widths(chain)
    if int(t_width) != t_width or t_width < 1:
        raise ConfigError(f"t_width must be a positive integer, got {t_width}")
    rng = np.random.default_rng(seed)
    tensors = {}
    for k in range(len(chain) - 1):
        w0, w1 = chain[k], chain[k + 1]
        d = int(t_width)
        tensors[f"A{k}"] = 0.2 * np.abs(_kaiming_uniform(rng, (w1, d), d))
        tensors[f"Bw{k}"] = 0.2 * np.abs(_kaiming_uniform(rng, (w1, w0), w0))
        tensors[f"Bb{k}"] = -8.5 * np.abs(_kaiming_uniform(rng, (1, w1), w0))
        tensors[f"Gw{k}"] = 0.2 * np.abs(_kaiming_uniform(rng, (d, w0), w0))
        tensors[f"Gb{k}"] = 10.0 * np.abs(_kaiming_uniform(rng, (1, d), w0))
        tensors[f"Hw{k}"] = 0.2 * np.abs(_kaiming_uniform(rng, (w1, w0), w0))
        tensors[f"Hb{k}"] = _kaiming_uniform(rng, (1, w1), w0)
        tensors[f"Lw{k}"] = _kaiming_uniform(rng, (w1, in_dim), in_dim)
        tensors[f"Lb{k}"] = _kaiming_uniform(rng, (1, w1), in_dim)
        tensors[f"ta{k}"] = rng.uniform(0.0, 1.0, size=(1, d))
        tensors[f"tb{k}"] = np.zeros((1, d))
    return MondePlusParams(
        in_dim=int(in_dim),
        hidden=hidden,
        out_dim=int(out_dim),
        t_width=int(t_width),
        tensors=tensors,
    )


def init_dense(dims, blocks=None, seed: int = 0) -> DenseParams:
    """Kaiming-uniform dense net; block layers get unit-gain layer norms."""
    dims = tuple(int(d) for d in dims)
    _check_widths(dims)
    if blocks is None:
        blocks = tuple(True for _ in range(len(dims) - 1))
    blocks = tuple(bool(b) for b in blocks)
    if len(blocks) != len(dims) - 1:
        raise ConfigError("blocks must have one flag per layer")
    rng = np.random.default_rng(seed)
    tensors = {}
    for k in range(len(dims) - 1):
        fan_in, fan_out = dims[k], dims[k + 1]
        tensors[f"w{k}"] = _kaiming_uniform(rng, (fan_out, fan_in), fan_in)
        tensors[f"b{k}"] = _kaiming_uniform(rng, (1, fan_out), fan_in)
        if blocks[k]:
            tensors[f"g{k}"] = np.ones((1, fan_out))
            tensors[f"n{k}"] = np.zeros((1, fan_out))
    return DenseParams(dims=dims, blocks=blocks, tensors=tensors)


# ---------------------------------------------------------------------------
# Graph builders (parameters appear as named inputs `prefix + tensor name`)


def monde_graph(widths, z: ad.Expr, prefix: str = "") -> ad.Expr:
    _check_widths(widths)
    last = len(widths) - 2
    for k in range(len(widths) - 1):
        z = ad.affine(z, ad.inp(f"{prefix}w{k}"), ad.inp(f"{prefix}b{k}"))
        if k < last:
            z = ad.tanh(z)
    return z


def monde_plus_graph(
    in_dim: int,
    hidden,
    out_dim: int,
    t: ad.Expr,
    x: ad.Expr,
    prefix: str = "",
) -> ad.Expr:
    chain = (in_dim, *tuple(hidden), out_dim)
    _check_widths(chain)
    z = x
    last = len(chain) - 2
    for k in range(len(chain) - 1):
        warped_t = ad.softplus(ad.mul(t, ad.inp(f"{prefix}ta{k}")) + ad.inp(f"{prefix}tb{k}"))
        gate = ad.softplus(ad.affine(z, ad.inp(f"{prefix}Gw{k}"), ad.inp(f"{prefix}Gb{k}")))
        z_tilde = ad.affine(ad.hadamard(warped_t, gate), ad.inp(f"{prefix}A{k}"))
        pre = (
            z_tilde
            + ad.affine(z, ad.inp(f"{prefix}Bw{k}"), ad.inp(f"{prefix}Bb{k}"))
            + ad.affine(x, ad.inp(f"{prefix}Lw{k}"), ad.inp(f"{prefix}Lb{k}"))
        )
        act = pre if k == last else ad.tanh(pre)
        z = ad.add(ad.affine(z, ad.inp(f"{prefix}Hw{k}"), ad.inp(f"{prefix}Hb{k}")), act)
    return z


def layer_norm_graph(h: ad.Expr, width: int, gain: str, bias: str) -> ad.Expr:
    """Row-wise layer norm with learned gain/bias, built from primitive ops."""
    mean_w = ad.const(np.full((1, width), 1.0 / width))
    mu = ad.affine(h, mean_w)
    centered = ad.sub(h, mu)
    var = ad.affine(ad.hadamard(centered, centered), mean_w)
    inv_std = ad.power(ad.add(var, ad.const(LAYER_NORM_EPS)), -0.5)
    return ad.mul(ad.mul(centered, inv_std), ad.inp(gain)) + ad.inp(bias)


def dense_graph(dims, blocks, x: ad.Expr, prefix: str = "") -> ad.Expr:
    _check_widths(dims)
    z = x
    for k in range(len(dims) - 1):
        z = ad.affine(z, ad.inp(f"{prefix}w{k}"), ad.inp(f"{prefix}b{k}"))
        if blocks[k]:
            z = layer_norm_graph(z, dims[k + 1], f"{prefix}g{k}", f"{prefix}n{k}")
            z = ad.relu(z)
    return z


# ---------------------------------------------------------------------------
# Direct forward evaluation (cached graphs, used by tests and property checks)

_graph_cache: dict = {}


def _cached_monde(widths):
    key = ("monde", widths)
    if key not in _graph_cache:
        _graph_cache[key] = monde_graph(widths, ad.inp("z"))
    return _graph_cache[key]


def _cached_monde_plus(chain, t_width):
    key = ("monde_plus", chain, t_width)
    if key not in _graph_cache:
        in_dim, hidden, out_dim = chain[0], chain[1:-1], chain[-1]
        _graph_cache[key] = monde_plus_graph(
            in_dim, hidden, out_dim, ad.inp("t"), ad.inp("z")
        )
    return _graph_cache[key]


def _cached_dense(dims, blocks):
    key = ("dense", dims, blocks)
    if key not in _graph_cache:
        _graph_cache[key] = dense_graph(dims, blocks, ad.inp("z"))
    return _graph_cache[key]


def _run(expr, params, extra):
    bindings = dict(params.tensors)
    bindings.update(extra)
    return ad.eval_graph(expr, bindings)


def monde_forward(params: MondeParams, z) -> np.ndarray:
    """Evaluate the stack; 1-D input gives a 1-D output, (B, d) stays batched."""
    z = np.asarray(z, dtype=np.float64)
    squeeze = z.ndim == 1
    out = _run(_cached_monde(params.widths), params, {"z": z})
    return out.ravel() if squeeze else out


def monde_plus_forward(params: MondePlusParams, t, x) -> np.ndarray:
    """Evaluate at scalar-per-row times t (scalar or (B, 1)) and features x."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    x2 = x.reshape(1, -1) if squeeze else x
    t2 = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    if t2.shape[0] == 1 and x2.shape[0] > 1:
        t2 = np.full((x2.shape[0], 1), t2[0, 0])
    expr = _cached_monde_plus(params.widths, params.t_width)
    out = _run(expr, params, {"t": t2, "z": x2})
    return out.ravel() if squeeze else out


def dense_forward(params: DenseParams, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    squeeze = z.ndim == 1
    out = _run(_cached_dense(params.dims, params.blocks), params, {"z": z})
    return out.ravel() if squeeze else out


# ---------------------------------------------------------------------------
# Feasibility projection


def clamp_nonnegative_inplace(tensors: dict[str, np.ndarray], names) -> None:
    for name in names:
        np.maximum(tensors[name], 0.0, out=tensors[name])


def project_nonnegative(params):
    """Clamp the constrained tensors at zero; unconstrained ones are copied
    untouched. Idempotent, returns a new params object of the same type."""
    fresh = {name: arr.copy() for name, arr in params.tensors.items()}
    clamp_nonnegative_inplace(fresh, params.constrained)
    return replace(params, tensors=fresh)
