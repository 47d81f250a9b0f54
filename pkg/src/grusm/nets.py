"""Network model and forward-evaluation semantics.

A controller is a single-hidden-layer tanh network with recurrent self loops
on its hidden nodes. It may additionally route activation through one frozen
source network: the target's inputs feed the source's hidden layer, and the
source's outputs feed the target's output layer, through evolvable transfer
weights. The source's own input channels are clamped to zero and its internal
parameters are never modified.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

N_DIRECTIONS = 9
N_OUTPUTS = 10  # 3x3 joystick substrate + fire
NO_MOVE = 4  # centre of the 3x3 substrate, row-major
FORMAT_VERSION = 1


class NetworkConfigError(ValueError):
    """Raised on dimension mismatches and malformed network structure."""


class NetworkFormatError(ValueError):
    """Raised when a serialized network document cannot be parsed.

    ``field`` names the offending location, e.g. ``"target.hidden[2].bias"``.
    """

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class Action:
    """Joystick direction (row-major index into the 3x3 substrate) plus fire."""

    direction: int
    fire: bool

    def __post_init__(self):
        if not 0 <= self.direction < N_DIRECTIONS:
            raise NetworkConfigError(f"direction {self.direction} out of range")

    def deltas(self) -> tuple[int, int]:
        """(drow, dcol) movement encoded by the direction index."""
        return self.direction // 3 - 1, self.direction % 3 - 1


@dataclass
class TargetModule:
    """A plain single-hidden-layer tanh network with per-node self loops.

    ``w_in`` is [inputs x hidden], ``w_out`` is [hidden x outputs]. Inputs are
    grouped into equally shaped substrates, one per object class.
    """

    substrates: list[tuple[int, int]]
    hidden_bias: np.ndarray
    hidden_self: np.ndarray
    out_bias: np.ndarray
    w_in: np.ndarray
    w_out: np.ndarray

    def __post_init__(self):
        self.hidden_bias = np.asarray(self.hidden_bias, dtype=np.float64)
        self.hidden_self = np.asarray(self.hidden_self, dtype=np.float64)
        self.out_bias = np.asarray(self.out_bias, dtype=np.float64)
        self.w_in = np.atleast_2d(np.asarray(self.w_in, dtype=np.float64))
        self.w_out = np.atleast_2d(np.asarray(self.w_out, dtype=np.float64))
        self.validate()

    @property
    def n_inputs(self) -> int:
        return sum(r * c for r, c in self.substrates)

    @property
    def n_hidden(self) -> int:
        return len(self.hidden_bias)

    @property
    def n_outputs(self) -> int:
        return len(self.out_bias)

    def validate(self):
        if self.n_outputs != N_OUTPUTS:
            raise NetworkConfigError(
                f"expected exactly {N_OUTPUTS} output nodes, got {self.n_outputs}"
            )
        if self.hidden_self.shape != self.hidden_bias.shape:
            raise NetworkConfigError("one self-loop weight per hidden node required")
        n_in, n_hid = self.n_inputs, self.n_hidden
        if self.w_in.shape != (n_in, n_hid):
            raise NetworkConfigError(
                f"w_in shape {self.w_in.shape} != ({n_in}, {n_hid})"
            )
        if self.w_out.shape != (n_hid, self.n_outputs):
            raise NetworkConfigError(
                f"w_out shape {self.w_out.shape} != ({n_hid}, {self.n_outputs})"
            )
        for name, arr in [
            ("hidden_bias", self.hidden_bias),
            ("hidden_self", self.hidden_self),
            ("out_bias", self.out_bias),
            ("w_in", self.w_in),
            ("w_out", self.w_out),
        ]:
            if arr.size and not np.all(np.isfinite(arr)):
                raise NetworkConfigError(f"non-finite values in {name}")

    def param_count(self) -> int:
        """Connection weights plus biases plus self loops."""
        return (
            self.w_in.size
            + self.w_out.size
            + self.hidden_bias.size
            + self.hidden_self.size
            + self.out_bias.size
        )


@dataclass(frozen=True)
class SourceModule:
    """A complete trained network, frozen for reuse.

    ``digest`` is a pure function of the internal parameters; it must be
    unchanged by any training run that reuses this module.
    """

    net: TargetModule
    digest: str
    label: str = ""

    def verify(self):
        actual = digest_of(self.net)
        if actual != self.digest:
            raise NetworkConfigError(
                f"source parameters were modified: digest {actual} != {self.digest}"
            )


def make_source(net: TargetModule, label: str = "") -> SourceModule:
    return SourceModule(net=net, digest=digest_of(net), label=label)


@dataclass
class TransferLinks:
    """Cross-network connections: target inputs -> source hidden, and
    source outputs -> target outputs. No other cross connections exist."""

    in_to_hidden: np.ndarray
    out_to_out: np.ndarray

    def __post_init__(self):
        self.in_to_hidden = np.atleast_2d(np.asarray(self.in_to_hidden, dtype=np.float64))
        self.out_to_out = np.atleast_2d(np.asarray(self.out_to_out, dtype=np.float64))


@dataclass
class GrusmNetwork:
    """A target module plus at most one attached frozen source."""

    target: TargetModule
    sources: list[tuple[SourceModule, TransferLinks]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.sources) > 1:
            raise NetworkConfigError("at most one source network may be attached")
        for src, links in self.sources:
            n_in = self.target.n_inputs
            if links.in_to_hidden.shape != (n_in, src.net.n_hidden):
                raise NetworkConfigError(
                    f"in_to_hidden shape {links.in_to_hidden.shape} != "
                    f"({n_in}, {src.net.n_hidden})"
                )
            if links.out_to_out.shape != (src.net.n_outputs, self.target.n_outputs):
                raise NetworkConfigError(
                    f"out_to_out shape {links.out_to_out.shape} != "
                    f"({src.net.n_outputs}, {self.target.n_outputs})"
                )

    @property
    def source(self) -> SourceModule | None:
        return self.sources[0][0] if self.sources else None

    @property
    def links(self) -> TransferLinks | None:
        return self.sources[0][1] if self.sources else None


@dataclass
class NetworkState:
    """Previous-step hidden activations; all zero at episode start."""

    target_hidden: np.ndarray
    source_hidden: np.ndarray


def initial_state(net: GrusmNetwork) -> NetworkState:
    n_src_hidden = net.source.net.n_hidden if net.source else 0
    return NetworkState(
        target_hidden=np.zeros(net.target.n_hidden),
        source_hidden=np.zeros(n_src_hidden),
    )


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------

_EMPTY = np.zeros(0)
_EMPTY_2D = np.zeros((0, 0))


def _forward_py(obs, w_in, h_self, h_bias, w_out, o_bias,
                i2h, s_self, s_bias, s_wout, s_obias, o2o,
                h_prev, s_prev, h_new, s_new, s_out, out):
    h_new[:] = np.tanh(obs @ w_in + h_self * h_prev + h_bias)
    acc = h_new @ w_out + o_bias
    if s_out.shape[0]:
        s_new[:] = np.tanh(obs @ i2h + s_self * s_prev + s_bias)
        s_out[:] = np.tanh(s_new @ s_wout + s_obias)
        acc = acc + s_out @ o2o
    out[:] = np.tanh(acc)


try:  # pragma: no cover - exercised indirectly
    if os.environ.get("GRUSM_NO_NUMBA"):
        raise ImportError("numba disabled by GRUSM_NO_NUMBA")
    from numba import njit

    @njit(cache=True)
    def _forward_nb(obs, w_in, h_self, h_bias, w_out, o_bias,
                    i2h, s_self, s_bias, s_wout, s_obias, o2o,
                    h_prev, s_prev, h_new, s_new, s_out, out):
        n_in = obs.shape[0]
        n_hid = h_prev.shape[0]
        n_out = out.shape[0]
        n_sh = s_prev.shape[0]
        n_so = s_out.shape[0]
        for j in range(n_hid):
            a = h_bias[j] + h_self[j] * h_prev[j]
            for i in range(n_in):
                a += obs[i] * w_in[i, j]
            h_new[j] = math.tanh(a)
        for j in range(n_sh):
            a = s_bias[j] + s_self[j] * s_prev[j]
            for i in range(n_in):
                a += obs[i] * i2h[i, j]
            s_new[j] = math.tanh(a)
        for m in range(n_so):
            b = s_obias[m]
            for j in range(n_sh):
                b += s_new[j] * s_wout[j, m]
            s_out[m] = math.tanh(b)
        for k in range(n_out):
            a = o_bias[k]
            for j in range(n_hid):
                a += h_new[j] * w_out[j, k]
            for m in range(n_so):
                a += s_out[m] * o2o[m, k]
            out[k] = math.tanh(a)

    _forward = _forward_nb
except ImportError:  # pragma: no cover
    _forward = _forward_py


class NetworkRunner:
    """Reusable forward evaluator for one network.

    Owns its recurrent state and scratch buffers; call :meth:`reset` at
    episode start. The array returned by :meth:`step` is reused between
    calls, so copy it if you need to keep it.
    """

    def __init__(self, net: GrusmNetwork):
        t = net.target
        self.net = net
        self.n_inputs = t.n_inputs
        self._w_in = np.ascontiguousarray(t.w_in)
        self._w_out = np.ascontiguousarray(t.w_out)
        self._h_bias = t.hidden_bias
        self._h_self = t.hidden_self
        self._o_bias = t.out_bias
        if net.sources:
            src, links = net.sources[0]
            s = src.net
            self._i2h = np.ascontiguousarray(links.in_to_hidden)
            self._o2o = np.ascontiguousarray(links.out_to_out)
            self._s_self = s.hidden_self
            self._s_bias = s.hidden_bias
            self._s_wout = np.ascontiguousarray(s.w_out)
            self._s_obias = s.out_bias
            n_sh = s.n_hidden
        else:
            self._i2h = np.zeros((t.n_inputs, 0))
            self._o2o = np.zeros((0, t.n_outputs))
            self._s_self = self._s_bias = _EMPTY
            self._s_wout = np.zeros((0, 0))
            self._s_obias = _EMPTY
            n_sh = 0
        self._h = np.zeros(t.n_hidden)
        self._h2 = np.zeros(t.n_hidden)
        self._s = np.zeros(n_sh)
        self._s2 = np.zeros(n_sh)
        self._sout = np.zeros(self._o2o.shape[0])
        self._out = np.zeros(t.n_outputs)

    def reset(self):
        self._h[:] = 0.0
        self._s[:] = 0.0

    def step(self, obs: np.ndarray) -> np.ndarray:
        if obs.shape[0] != self.n_inputs:
            raise NetworkConfigError(
                f"observation size {obs.shape[0]} != network inputs {self.n_inputs}"
            )
        _forward(obs, self._w_in, self._h_self, self._h_bias, self._w_out,
                 self._o_bias, self._i2h, self._s_self, self._s_bias,
                 self._s_wout, self._s_obias, self._o2o,
                 self._h, self._s, self._h2, self._s2, self._sout, self._out)
        self._h, self._h2 = self._h2, self._h
        self._s, self._s2 = self._s2, self._s
        return self._out

    def state(self) -> NetworkState:
        return NetworkState(self._h.copy(), self._s.copy())


def step_activate(
    net: GrusmNetwork, state: NetworkState, obs: np.ndarray
) -> tuple[np.ndarray, NetworkState]:
    """One synchronous activation step.

    Target hidden units combine the observation, their recurrent self loop on
    the previous activation, and their bias, through tanh. If a source is
    attached, its hidden layer sees the observation only through the transfer
    weights (its own input channels are clamped to zero), and its outputs are
    mixed into the target's output pre-activations. Returns the 10 output
    activations and the successor state.
    """
    t = net.target
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (t.n_inputs,):
        raise NetworkConfigError(
            f"observation shape {obs.shape} != ({t.n_inputs},)"
        )
    if state.target_hidden.shape != (t.n_hidden,):
        raise NetworkConfigError("state does not match target hidden layer")
    n_sh = net.source.net.n_hidden if net.source else 0
    if state.source_hidden.shape != (n_sh,):
        raise NetworkConfigError("state does not match source hidden layer")

    runner = NetworkRunner(net)
    runner._h[:] = state.target_hidden
    runner._s[:] = state.source_hidden
    out = runner.step(obs).copy()
    return out, runner.state()


def decode_action(outputs: np.ndarray) -> Action:
    """Argmax over the 9 direction outputs (ties to the lowest index);
    fire iff the fire output is strictly positive."""
    if len(outputs) != N_OUTPUTS:
        raise NetworkConfigError(f"expected {N_OUTPUTS} outputs, got {len(outputs)}")
    return Action(direction=int(np.argmax(outputs[:N_DIRECTIONS])),
                  fire=bool(outputs[N_DIRECTIONS] > 0.0))


# ---------------------------------------------------------------------------
# Induced active subnetwork
# ---------------------------------------------------------------------------

NodeId = tuple[str, int]


def edge_list(net: GrusmNetwork) -> tuple[list[tuple[NodeId, NodeId]], list[NodeId], list[NodeId]]:
    """The explicit-edge view of a network.

    Every matrix entry is an edge, including zero-weight ones; self loops are
    not edges (they alone never create a path). Returns (edges, target inputs,
    target outputs). Node ids are ("t_in"|"t_hid"|"t_out"|"s_in"|"s_hid"|"s_out", index).
    """
    t = net.target
    edges: list[tuple[NodeId, NodeId]] = []
    for i in range(t.n_inputs):
        for j in range(t.n_hidden):
            edges.append((("t_in", i), ("t_hid", j)))
    for j in range(t.n_hidden):
        for k in range(t.n_outputs):
            edges.append((("t_hid", j), ("t_out", k)))
    if net.sources:
        src, _ = net.sources[0]
        s = src.net
        for i in range(t.n_inputs):
            for j in range(s.n_hidden):
                edges.append((("t_in", i), ("s_hid", j)))
        for i in range(s.n_inputs):
            for j in range(s.n_hidden):
                edges.append((("s_in", i), ("s_hid", j)))
        for j in range(s.n_hidden):
            for k in range(s.n_outputs):
                edges.append((("s_hid", j), ("s_out", k)))
        for k in range(s.n_outputs):
            for m in range(t.n_outputs):
                edges.append((("s_out", k), ("t_out", m)))
    inputs = [("t_in", i) for i in range(t.n_inputs)]
    outputs = [("t_out", k) for k in range(t.n_outputs)]
    return edges, inputs, outputs


def nodes_on_paths(edges, sources, sinks) -> set:
    """Nodes lying on some directed path from a source to a sink.

    Works on any explicit edge list; computed as the intersection of forward
    reachability from ``sources`` and backward reachability from ``sinks``.
    """
    fwd: dict = {}
    bwd: dict = {}
    for u, v in edges:
        if u != v:  # self loops never extend paths
            fwd.setdefault(u, []).append(v)
            bwd.setdefault(v, []).append(u)

    def closure(start, adj):
        seen = set(start)
        stack = list(start)
        while stack:
            u = stack.pop()
            for v in adj.get(u, ()):
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    return closure(sources, fwd) & closure(sinks, bwd)


def active_subnetwork(net: GrusmNetwork) -> set[NodeId]:
    """Nodes on some directed path from a target input to a target output,
    where paths may run through the source via the transfer connections."""
    edges, inputs, outputs = edge_list(net)
    return nodes_on_paths(edges, inputs, outputs)


def zero_outside_active(net: GrusmNetwork) -> GrusmNetwork:
    """A copy of ``net`` with all parameters of nodes outside the active
    subnetwork (their incident edge weights, bias and self loop) set to zero.

    Evaluation of the result must match the original on every input sequence.
    """
    active = active_subnetwork(net)
    t = net.target
    new_t = TargetModule(
        substrates=list(t.substrates),
        hidden_bias=t.hidden_bias.copy(),
        hidden_self=t.hidden_self.copy(),
        out_bias=t.out_bias.copy(),
        w_in=t.w_in.copy(),
        w_out=t.w_out.copy(),
    )
    for j in range(t.n_hidden):
        if ("t_hid", j) not in active:
            new_t.hidden_bias[j] = 0.0
            new_t.hidden_self[j] = 0.0
            new_t.w_in[:, j] = 0.0
            new_t.w_out[j, :] = 0.0
    for i in range(t.n_inputs):
        if ("t_in", i) not in active:
            new_t.w_in[i, :] = 0.0
    sources = []
    if net.sources:
        src, links = net.sources[0]
        s = src.net
        new_s = TargetModule(
            substrates=list(s.substrates),
            hidden_bias=s.hidden_bias.copy(),
            hidden_self=s.hidden_self.copy(),
            out_bias=s.out_bias.copy(),
            w_in=s.w_in.copy(),
            w_out=s.w_out.copy(),
        )
        new_links = TransferLinks(links.in_to_hidden.copy(), links.out_to_out.copy())
        for i in range(s.n_inputs):
            if ("s_in", i) not in active:
                new_s.w_in[i, :] = 0.0
        for j in range(s.n_hidden):
            if ("s_hid", j) not in active:
                new_s.hidden_bias[j] = 0.0
                new_s.hidden_self[j] = 0.0
                new_s.w_in[:, j] = 0.0
                new_s.w_out[j, :] = 0.0
                new_links.in_to_hidden[:, j] = 0.0
        for k in range(s.n_outputs):
            if ("s_out", k) not in active:
                new_s.out_bias[k] = 0.0
                new_s.w_out[:, k] = 0.0
                new_links.out_to_out[k, :] = 0.0
        sources.append((make_source(new_s, src.label), new_links))
    return GrusmNetwork(target=new_t, sources=sources)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _target_doc(t: TargetModule) -> dict:
    return {
        "substrates": [{"rows": r, "cols": c} for r, c in t.substrates],
        "hidden": [
            {"bias": float(b), "self": float(s)}
            for b, s in zip(t.hidden_bias, t.hidden_self)
        ],
        "outputs": [{"bias": float(b)} for b in t.out_bias],
        "w_in": [[float(x) for x in row] for row in t.w_in],
        "w_out": [[float(x) for x in row] for row in t.w_out],
    }


def digest_of(net: TargetModule) -> str:
    """Hex SHA-256 of the canonical serialization of all internal parameters."""
    canonical = json.dumps(_target_doc(net), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def network_doc(net: GrusmNetwork) -> dict:
    doc = {"version": FORMAT_VERSION, "target": _target_doc(net.target)}
    if net.sources:
        src, links = net.sources[0]
        doc["source"] = {
            "net": _target_doc(src.net),
            "digest": src.digest,
            "label": src.label,
        }
        doc["transfer"] = {
            "in_to_hidden": [[float(x) for x in row] for row in links.in_to_hidden],
            "out_to_out": [[float(x) for x in row] for row in links.out_to_out],
        }
    else:
        doc["source"] = None
        doc["transfer"] = None
    return doc


def serialize(net: GrusmNetwork) -> bytes:
    """Deterministic JSON bytes; equal bytes iff equal parameters."""
    return (json.dumps(network_doc(net), indent=2) + "\n").encode("utf-8")


def _expect(doc, key, kind, where):
    if not isinstance(doc, dict) or key not in doc:
        raise NetworkFormatError(f"{where}.{key}" if where else key, "missing")
    val = doc[key]
    if kind is float:
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise NetworkFormatError(f"{where}.{key}" if where else key,
                                     "expected a number")
        return float(val)
    if not isinstance(val, kind):
        raise NetworkFormatError(f"{where}.{key}" if where else key,
                                 f"expected {kind.__name__}")
    return val


def _target_from_doc(doc, where) -> TargetModule:
    subs = _expect(doc, "substrates", list, where)
    substrates = []
    for i, s in enumerate(subs):
        substrates.append((
            int(_expect(s, "rows", float, f"{where}.substrates[{i}]")),
            int(_expect(s, "cols", float, f"{where}.substrates[{i}]")),
        ))
    hidden = _expect(doc, "hidden", list, where)
    h_bias, h_self = [], []
    for i, h in enumerate(hidden):
        h_bias.append(_expect(h, "bias", float, f"{where}.hidden[{i}]"))
        h_self.append(_expect(h, "self", float, f"{where}.hidden[{i}]"))
    outputs = _expect(doc, "outputs", list, where)
    o_bias = [_expect(o, "bias", float, f"{where}.outputs[{i}]")
              for i, o in enumerate(outputs)]
    w_in = _expect(doc, "w_in", list, where)
    w_out = _expect(doc, "w_out", list, where)
    n_in = sum(r * c for r, c in substrates)
    try:
        t = TargetModule(
            substrates=substrates,
            hidden_bias=np.array(h_bias, dtype=np.float64),
            hidden_self=np.array(h_self, dtype=np.float64),
            out_bias=np.array(o_bias, dtype=np.float64),
            w_in=np.array(w_in, dtype=np.float64).reshape(n_in, len(hidden)),
            w_out=np.array(w_out, dtype=np.float64).reshape(len(hidden), len(outputs)),
        )
    except (ValueError, TypeError) as exc:
        raise NetworkFormatError(where or "target", str(exc)) from exc
    return t


def deserialize(data: bytes | str) -> GrusmNetwork:
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError("<document>", f"invalid JSON: {exc}") from exc
    version = _expect(doc, "version", float, "")
    if version != FORMAT_VERSION:
        raise NetworkFormatError("version", f"unsupported version {version}")
    target = _target_from_doc(_expect(doc, "target", dict, ""), "target")
    sources = []
    src_doc = doc.get("source")
    if src_doc is not None:
        net = _target_from_doc(_expect(src_doc, "net", dict, "source"), "source.net")
        stored = _expect(src_doc, "digest", str, "source")
        if digest_of(net) != stored:
            raise NetworkFormatError("source.digest",
                                     "digest does not match source parameters")
        label = _expect(src_doc, "label", str, "source")
        tr_doc = doc.get("transfer")
        if tr_doc is None:
            raise NetworkFormatError("transfer", "missing for attached source")
        try:
            links = TransferLinks(
                in_to_hidden=np.array(_expect(tr_doc, "in_to_hidden", list, "transfer"),
                                      dtype=np.float64).reshape(target.n_inputs,
                                                                net.n_hidden),
                out_to_out=np.array(_expect(tr_doc, "out_to_out", list, "transfer"),
                                    dtype=np.float64).reshape(net.n_outputs,
                                                              target.n_outputs),
            )
        except (ValueError, TypeError) as exc:
            raise NetworkFormatError("transfer", str(exc)) from exc
        sources.append((SourceModule(net=net, digest=stored, label=label), links))
    try:
        return GrusmNetwork(target=target, sources=sources)
    except NetworkConfigError as exc:
        raise NetworkFormatError("<document>", str(exc)) from exc


def save_network(net: GrusmNetwork, path):
    from .fileio import atomic_write_bytes

    atomic_write_bytes(path, serialize(net))


def load_network(path) -> GrusmNetwork:
    with open(path, "rb") as f:
        return deserialize(f.read())
