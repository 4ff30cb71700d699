"""Autoregressive sampling controller: one LSTM cell plus per-decision heads.

Decisions are drawn sequentially; the embedding of each choice feeds the
next LSTM step.  Training follows the score-function (log-derivative)
policy-gradient estimator with an exponential-moving-average baseline and
plain SGD: parameters ascend grad(sum_t log pi(choice_t)) * (reward - baseline).

All trainable arrays live in one flat parameter vector with named views, so
an update is a single fused axpy plus one finiteness check.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from codesign import _kernels

CHECKPOINT_VERSION = 1


class NonFiniteGradient(FloatingPointError):
    """A parameter went non-finite after an update (learning rate too high)."""


class SchemaMismatch(ValueError):
    """Checkpoint was trained on a different decision schema."""


def schema_fingerprint(schema) -> str:
    return hashlib.sha256(repr(list(schema)).encode()).hexdigest()[:16]


def _layout(schema, hidden, embed_dim):
    """(name, shape) for every parameter block, in flat-buffer order."""
    n_embed = 1 + sum(k for _, k in schema)
    blocks = [
        ("embed", (n_embed, embed_dim)),
        ("w_x", (4 * hidden, embed_dim)),
        ("w_h", (4 * hidden, hidden)),
        ("b", (4 * hidden,)),
    ]
    for i, (_, k) in enumerate(schema):
        blocks.append((f"head_w_{i}", (k, hidden)))
        blocks.append((f"head_b_{i}", (k,)))
    return blocks


def _views(buffer, blocks):
    out = {}
    pos = 0
    for name, shape in blocks:
        size = int(np.prod(shape))
        out[name] = buffer[pos : pos + size].reshape(shape)
        pos += size
    assert pos == buffer.size
    return out


@dataclass
class PolicyState:
    """All trainable state of the controller.

    ``embed`` holds one row per (decision, option) pair plus a start token
    (row 0); ``w_x``/``w_h``/``b`` are the fused LSTM gate weights in
    (input, forget, cell, output) order; ``head_w``/``head_b`` are the
    per-decision linear heads.  ``baseline`` is the EMA of observed rewards.
    """

    schema: list[tuple[str, int]]
    hidden: int
    embed_dim: int
    theta: np.ndarray
    baseline: float
    baseline_decay: float
    step: int
    rng: np.random.Generator
    _v: dict = field(repr=False, default_factory=dict)
    _grad: np.ndarray | None = field(repr=False, default=None)
    _gv: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        blocks = _layout(self.schema, self.hidden, self.embed_dim)
        self._v = _views(self.theta, blocks)
        self._grad = np.zeros_like(self.theta)
        self._gv = _views(self._grad, blocks)
        offsets = [1]
        for _, k in self.schema[:-1]:
            offsets.append(offsets[-1] + k)
        self._offsets = offsets
        self.embed = self._v["embed"]
        self.w_x = self._v["w_x"]
        self.w_h = self._v["w_h"]
        self.b = self._v["b"]
        self.head_w = [self._v[f"head_w_{i}"] for i in range(len(self.schema))]
        self.head_b = [self._v[f"head_b_{i}"] for i in range(len(self.schema))]
        self._core = None
        if _kernels.PolicyCore is not None:
            starts = {}
            pos = 0
            for name, shape in blocks:
                starts[name] = pos
                pos += int(np.prod(shape))
            self._core = _kernels.PolicyCore(
                self.theta, self.hidden, self.embed_dim,
                [k for _, k in self.schema], self._offsets,
                starts["w_x"], starts["w_h"], starts["b"],
                [starts[f"head_w_{i}"] for i in range(len(self.schema))],
                [starts[f"head_b_{i}"] for i in range(len(self.schema))],
            )

    @staticmethod
    def create(schema, hidden: int = 64, embed_dim: int = 16, seed: int = 0,
               init_scale: float = 0.1, baseline_decay: float = 0.95) -> "PolicyState":
        """Fresh policy; ``init_scale=0`` gives exactly uniform sampling."""
        schema = [(str(n), int(k)) for n, k in schema]
        rng = np.random.default_rng(seed)
        blocks = _layout(schema, hidden, embed_dim)
        n_params = sum(int(np.prod(shape)) for _, shape in blocks)
        theta = np.zeros(n_params)
        policy = PolicyState(
            schema=schema, hidden=hidden, embed_dim=embed_dim, theta=theta,
            baseline=0.0, baseline_decay=baseline_decay, step=0, rng=rng,
        )
        if init_scale:
            for name in ("embed", "w_x", "w_h"):
                v = policy._v[name]
                v[:] = rng.uniform(-init_scale, init_scale, size=v.shape)
            for i in range(len(schema)):
                v = policy._v[f"head_w_{i}"]
                v[:] = rng.uniform(-init_scale, init_scale, size=v.shape)
        return policy

    def param_arrays(self):
        yield from self._v.items()


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _softmax(logits):
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass
class _Tape:
    """Forward activations needed for backprop, one entry per decision."""

    x_rows: list
    h_prev: list
    c_prev: list
    gates: list  # (i, f, g, o) each (H,)
    tanh_c: list
    h: list
    probs: list
    choices: list


@dataclass
class _CoreTape:
    """Handle onto the compiled core's stored forward pass."""

    serial: int
    choices: list


def _forward(policy: PolicyState, choices=None):
    """Run the controller; samples when ``choices`` is None, else replays them.

    Returns (choices, per-decision log-probs, tape).
    """
    if policy._core is not None:
        core = policy._core
        if choices is None:
            out, logps = core.forward(policy.rng.random(len(policy.schema)), None)
        else:
            out, logps = core.forward(None, np.asarray(choices, dtype=np.int64))
        out = [int(c) for c in out]
        return out, logps, _CoreTape(core.serial, out)
    H = policy.hidden
    h = np.zeros(H)
    c = np.zeros(H)
    offsets = policy._offsets
    tape = _Tape([], [], [], [], [], [], [], [])
    logps = np.empty(len(policy.schema))
    uniforms = policy.rng.random(len(policy.schema)) if choices is None else None
    x_row = 0  # start token
    out_choices: list[int] = []
    for t, (_, k) in enumerate(policy.schema):
        x = policy.embed[x_row]
        z = policy.w_x @ x
        z += policy.w_h @ h
        z += policy.b
        g_if = _sigmoid(z[: 2 * H])
        gi, gf = g_if[:H], g_if[H:]
        gg = np.tanh(z[2 * H : 3 * H])
        go = _sigmoid(z[3 * H :])
        tape.h_prev.append(h)
        tape.c_prev.append(c)
        c = gf * c + gi * gg
        tanh_c = np.tanh(c)
        h = go * tanh_c
        logits = policy.head_w[t] @ h + policy.head_b[t]
        p = _softmax(logits)
        if choices is None:
            u = uniforms[t]
            choice = int(min(np.searchsorted(np.cumsum(p), u, side="right"), k - 1))
        else:
            choice = int(choices[t])
        logps[t] = np.log(p[choice])
        tape.x_rows.append(x_row)
        tape.gates.append((gi, gf, gg, go))
        tape.tanh_c.append(tanh_c)
        tape.h.append(h)
        tape.probs.append(p)
        tape.choices.append(choice)
        out_choices.append(choice)
        x_row = offsets[t] + choice
    return out_choices, logps, tape


def sample(policy: PolicyState) -> tuple[list[int], np.ndarray]:
    """Draw one decision vector; returns (choices, per-decision log-probs)."""
    choices, logps, _ = _forward(policy)
    return choices, logps


def sample_with_tape(policy: PolicyState):
    """Like :func:`sample` but also returns the forward tape so the update
    can skip the replay pass (the search loop's hot path)."""
    return _forward(policy)


def _backward(policy: PolicyState, tape: _Tape, dlogits_list) -> np.ndarray:
    """grad of sum_t <dlogits_t, logits_t> over the flat parameter buffer."""
    H = policy.hidden
    grad = policy._grad
    grad.fill(0.0)
    gv = policy._gv
    g_wx, g_wh, g_b, g_embed = gv["w_x"], gv["w_h"], gv["b"], gv["embed"]
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    dz = np.empty(4 * H)
    for t in range(len(policy.schema) - 1, -1, -1):
        gi, gf, gg, go = tape.gates[t]
        tanh_c = tape.tanh_c[t]
        dlogits = dlogits_list[t]
        gv[f"head_w_{t}"] += dlogits[:, None] * tape.h[t]
        gv[f"head_b_{t}"] += dlogits
        dh = policy.head_w[t].T @ dlogits
        dh += dh_next
        do = dh * tanh_c
        dc = dh * go * (1.0 - tanh_c * tanh_c)
        dc += dc_next
        dz[:H] = dc * gg * gi * (1.0 - gi)
        dz[H : 2 * H] = dc * tape.c_prev[t] * gf * (1.0 - gf)
        dz[2 * H : 3 * H] = dc * gi * (1.0 - gg * gg)
        dz[3 * H :] = do * go * (1.0 - go)
        x = policy.embed[tape.x_rows[t]]
        g_wx += dz[:, None] * x
        g_wh += dz[:, None] * tape.h_prev[t]
        g_b += dz
        g_embed[tape.x_rows[t]] += policy.w_x.T @ dz
        dh_next = policy.w_h.T @ dz
        dc_next = dc * gf
    return grad


def logprob_and_grads(policy: PolicyState, choices) -> tuple[float, dict[str, np.ndarray]]:
    """sum_t log pi(choice_t) and its parameter gradients (replayed pass).

    The returned arrays are copies, safe to keep across further updates.
    """
    _, logps, tape = _forward(policy, choices)
    if isinstance(tape, _CoreTape):
        core = policy._core
        core.backward(1.0, 0.0)
        blocks = _layout(policy.schema, policy.hidden, policy.embed_dim)
        gv = _views(core.grad_arr, blocks)
        return float(logps.sum()), {name: g.copy() for name, g in gv.items()}
    dlogits = []
    for t in range(len(policy.schema)):
        d = -tape.probs[t].copy()
        d[tape.choices[t]] += 1.0
        dlogits.append(d)
    _backward(policy, tape, dlogits)
    return float(logps.sum()), {name: g.copy() for name, g in policy._gv.items()}


def update_from_tape(
    policy: PolicyState,
    tape: _Tape,
    reward_value: float,
    learning_rate: float,
    entropy_coef: float = 0.0,
) -> PolicyState:
    """One SGD ascent step on the baseline-centered REINFORCE objective.

    With reward exactly at the baseline (and no entropy bonus) the update is
    a no-op.  The baseline then absorbs the new reward via its EMA.
    """
    if not np.isfinite(reward_value):
        raise ValueError(f"reward must be finite, got {reward_value}")
    advantage = reward_value - policy.baseline
    if isinstance(tape, _CoreTape):
        core = policy._core
        if core.serial != tape.serial:  # another forward ran since; replay
            core.forward(None, np.asarray(tape.choices, dtype=np.int64))
        core.backward(advantage, entropy_coef)
        if not core.apply(learning_rate):
            bad = [name for name, v in policy.param_arrays() if not np.isfinite(v).all()]
            raise NonFiniteGradient(f"parameters became non-finite: {', '.join(bad)}")
    else:
        dlogits = []
        for t in range(len(policy.schema)):
            p = tape.probs[t]
            d = p * (-advantage)
            d[tape.choices[t]] += advantage
            if entropy_coef:
                logp = np.log(np.maximum(p, 1e-300))
                entropy = -(p * logp).sum()
                d += entropy_coef * (-p * (logp + entropy))
            dlogits.append(d)
        grad = _backward(policy, tape, dlogits)
        policy.theta += learning_rate * grad
        if not np.isfinite(policy.theta).all():
            bad = [name for name, v in policy.param_arrays() if not np.isfinite(v).all()]
            raise NonFiniteGradient(f"parameters became non-finite: {', '.join(bad)}")
    policy.baseline = policy.baseline_decay * policy.baseline + (1.0 - policy.baseline_decay) * reward_value
    policy.step += 1
    return policy


def reinforce_update(
    policy: PolicyState,
    choices,
    logps,
    reward_value: float,
    learning_rate: float,
    entropy_coef: float = 0.0,
) -> PolicyState:
    """REINFORCE step from a (choices, log-probs) pair: replays the forward
    pass to rebuild activations, then applies :func:`update_from_tape`."""
    _, _, tape = _forward(policy, choices)
    return update_from_tape(policy, tape, reward_value, learning_rate, entropy_coef)


def save_checkpoint(policy: PolicyState, path) -> None:
    """Versioned container: schema fingerprint, arrays, baseline, RNG state."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "schema": list(policy.schema),
        "fingerprint": schema_fingerprint(policy.schema),
        "hidden": policy.hidden,
        "embed_dim": policy.embed_dim,
        "baseline": policy.baseline,
        "baseline_decay": policy.baseline_decay,
        "step": policy.step,
        "rng_state": policy.rng.bit_generator.state,
    }
    arrays = dict(policy.param_arrays())
    np.savez(path, _meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path, schema) -> PolicyState:
    """Restore a checkpoint; refuses a schema other than the one it was trained on."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["_meta"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        if meta["fingerprint"] != schema_fingerprint(schema):
            raise SchemaMismatch(
                f"checkpoint schema {meta['fingerprint']} != requested {schema_fingerprint(schema)}"
            )
        saved_schema = [(name, int(k)) for name, k in meta["schema"]]
        hidden, embed_dim = int(meta["hidden"]), int(meta["embed_dim"])
        blocks = _layout(saved_schema, hidden, embed_dim)
        theta = np.concatenate([np.asarray(data[name], dtype=np.float64).ravel() for name, _ in blocks])
        rng = np.random.default_rng()
        rng.bit_generator.state = meta["rng_state"]
        return PolicyState(
            schema=saved_schema,
            hidden=hidden,
            embed_dim=embed_dim,
            theta=theta,
            baseline=float(meta["baseline"]),
            baseline_decay=float(meta["baseline_decay"]),
            step=int(meta["step"]),
            rng=rng,
        )
