"""Router fusion of detail stacks and gated residual injection into a toy decoder.

The decoder is a stack of ``L_dec`` blocks, each ``H + tanh(mix(LN(H)))``
where ``mix`` is a causal token-mixing affine map over the last ``window``
positions. At selected layers the visual slice of the block output receives
``s_l * g * Proj(LN(M))``, where ``M`` is a softmax-weighted mixture of the
projected detail stacks.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .stacks import StackBank

LN_EPS = 1e-5
DEFAULT_INJECT_LAYERS = (2, 4, 6, 8)


@dataclass(frozen=True)
class Affine:
    w: np.ndarray  # (d_in, d_out)
    b: np.ndarray  # (d_out,)

    def __call__(self, x):
        return x @ self.w + self.b

    @classmethod
    def random(cls, rng, d_in, d_out, gain=1.0, bias_scale=0.0):
        w = rng.normal(0.0, gain / np.sqrt(d_in), size=(d_in, d_out))
        b = rng.normal(0.0, bias_scale, size=d_out) if bias_scale else np.zeros(d_out)
        return cls(w, b)


@dataclass(frozen=True)
class LayerNorm:
    gamma: np.ndarray
    beta: np.ndarray
    eps: float = LN_EPS

    def __call__(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        return (x - mu) / np.sqrt(var + self.eps) * self.gamma + self.beta

    @classmethod
    def identity(cls, d):
        return cls(np.ones(d), np.zeros(d))


@dataclass(frozen=True)
class InjectionParams:
    router_q: Affine
    router_k: Affine
    gate: Affine  # 2*d_llm -> d_llm, followed by sigmoid
    proj: Affine
    ln_hidden: LayerNorm
    ln_detail: LayerNorm
    residual_scale: float = 0.0

    @classmethod
    def create(cls, rng, d_llm, residual_scale=0.0, proj_jitter=0.3):
        # detail projection starts near identity so the injected update points along the detail
        jitter = Affine.random(rng, d_llm, d_llm, gain=proj_jitter)
        return cls(
            router_q=Affine.random(rng, d_llm, d_llm),
            router_k=Affine.random(rng, d_llm, d_llm),
            gate=Affine.random(rng, 2 * d_llm, d_llm),
            proj=Affine(np.eye(d_llm) + jitter.w, jitter.b),
            ln_hidden=LayerNorm.identity(d_llm),
            ln_detail=LayerNorm.identity(d_llm),
            residual_scale=residual_scale,
        )

    def with_scale(self, s):
        return InjectionParams(self.router_q, self.router_k, self.gate, self.proj,
                               self.ln_hidden, self.ln_detail, float(s))


@dataclass(frozen=True)
class DecoderLayer:
    ln: LayerNorm
    mix_w: np.ndarray  # (window, d, d); mix_w[k] weights the token k positions back
    mix_b: np.ndarray

    def __call__(self, H):
        x = self.ln(H)
        y = np.broadcast_to(self.mix_b, H.shape).copy()
        for k in range(self.mix_w.shape[0]):
            if k == 0:
                y += x @ self.mix_w[0]
            elif k < H.shape[0]:
                y[k:] += x[:-k] @ self.mix_w[k]
        return H + np.tanh(y)


@dataclass(frozen=True)
class FusionModel:
    """Immutable parameter set: projector, decoder blocks, per-layer injection maps."""

    projector: Affine
    layers: tuple
    injection: dict  # layer index (1-based) -> InjectionParams
    d_llm: int

    @property
    def n_layers(self):
        return len(self.layers)

    @classmethod
    def create(cls, seed, d_vit, d_llm=32, n_layers=8, window=4, residual_scale=0.0):
        rng = np.random.default_rng(seed)
        projector = Affine.random(rng, d_vit, d_llm, bias_scale=0.1)
        layers = []
        for _ in range(n_layers):
            mix_w = rng.normal(0.0, 1.0 / np.sqrt(window * d_llm), size=(window, d_llm, d_llm))
            layers.append(DecoderLayer(LayerNorm.identity(d_llm), mix_w, np.zeros(d_llm)))
        injection = {l: InjectionParams.create(rng, d_llm, residual_scale)
                     for l in range(1, n_layers + 1)}
        return cls(projector, tuple(layers), injection, d_llm)

    def with_residual_scale(self, scales):
        """Copy with ``s_l`` replaced; ``scales`` is a float or ``{layer: s_l}``."""
        if not isinstance(scales, dict):
            scales = {l: scales for l in self.injection}
        inj = {l: p.with_scale(scales.get(l, p.residual_scale)) for l, p in self.injection.items()}
        return FusionModel(self.projector, self.layers, inj, self.d_llm)


@dataclass
class ProjectedTokens:
    U: np.ndarray  # ((1 + N_stack) * T_v, d_llm)
    stack_length: int
    n_stacks: int

    @property
    def vis_slice(self):
        return slice(0, self.stack_length)

    def stack_slice(self, i):
        T_v = self.stack_length
        return slice((i + 1) * T_v, (i + 2) * T_v)

    @property
    def vis(self):
        return self.U[self.vis_slice]

    @property
    def stacks(self):
        """``(N_stack, T_v, d_llm)`` view of the stack segments."""
        return self.U[self.stack_length:].reshape(self.n_stacks, self.stack_length, -1)


def project(G: np.ndarray, bank, projector: Affine) -> ProjectedTokens:
    """Concatenate global tokens and stacks along the token axis and project."""
    stacks = bank.as_array() if isinstance(bank, StackBank) else np.asarray(bank)
    T_v = G.shape[0]
    if stacks.ndim != 3 or stacks.shape[1] != T_v:
        raise ShapeError(f"stacks of shape {stacks.shape} do not match {T_v} global tokens")
    if stacks.shape[2] != G.shape[1]:
        raise ShapeError(f"stack width {stacks.shape[2]} != global token width {G.shape[1]}")
    V = np.concatenate([G, stacks.reshape(-1, G.shape[1])], axis=0)
    return ProjectedTokens(projector(V), T_v, stacks.shape[0])


def summarize(tokens: np.ndarray) -> np.ndarray:
    tokens = np.asarray(tokens)
    if tokens.shape[0] == 0:
        raise ShapeError("cannot summarize an empty token sequence")
    return tokens.mean(axis=0)


def softmax(logits):
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def router_logits(H_vis, proj: ProjectedTokens, params: InjectionParams):
    q = params.router_q(summarize(H_vis))
    keys = params.router_k(proj.stacks.mean(axis=1))  # (N_stack, d)
    return keys @ q / np.sqrt(q.shape[0])


def router_fuse(H_vis, proj: ProjectedTokens, params: InjectionParams):
    """Returns ``(M, alpha)``: fused detail ``(T_v, d_llm)`` and stack weights ``(N_stack,)``."""
    if H_vis.shape[0] != proj.stack_length:
        raise ShapeError(f"visual slice length {H_vis.shape[0]} != stack length {proj.stack_length}")
    alpha = softmax(router_logits(H_vis, proj, params))
    M = np.tensordot(alpha, proj.stacks, axes=1)
    return M, alpha


def sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    # saturated inputs would round to exactly 0 or 1; keep the open interval
    return np.clip(out, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)


def gate_and_delta(H_vis, M, params: InjectionParams):
    if H_vis.shape != M.shape:
        raise ShapeError(f"visual slice {H_vis.shape} and fused detail {M.shape} differ")
    h = params.ln_hidden(H_vis)
    m = params.ln_detail(M)
    g = sigmoid(params.gate(np.concatenate([h, m], axis=1)))
    return g, g * params.proj(m)


def inject(H: np.ndarray, vis_range: slice, delta: np.ndarray, residual_scale: float) -> np.ndarray:
    out = H.copy()
    if out[vis_range].shape != delta.shape:
        raise ShapeError(f"delta {delta.shape} does not fit visual slice {out[vis_range].shape}")
    out[vis_range] = H[vis_range] + residual_scale * delta
    return out


@dataclass
class InjectionRecord:
    alpha: np.ndarray
    fused: np.ndarray
    gate: np.ndarray
    delta: np.ndarray
    residual_scale: float


@dataclass
class DecoderTrace:
    hidden: list  # hidden[l] is the state after layer l (post-injection); hidden[0] is the input
    vis_range: slice
    records: dict = field(default_factory=dict)  # layer -> InjectionRecord

    @property
    def final_vis(self):
        return self.hidden[-1][self.vis_range]


def _check_layers(layers, n_layers):
    layers = tuple(sorted(set(layers)))
    bad = [l for l in layers if not 1 <= l <= n_layers]
    if bad:
        raise ShapeError(f"layer indices {bad} outside 1..{n_layers}")
    return layers


def decoder_forward(G, text_embed, bank, model: FusionModel,
                    inject_layers=DEFAULT_INJECT_LAYERS, proj: ProjectedTokens | None = None):
    """Run the toy decoder on ``[text; U[vis]]``, injecting fused details at ``inject_layers``."""
    inject_layers = _check_layers(inject_layers, model.n_layers)
    if proj is None:
        proj = project(G, bank, model.projector)
    n_text = text_embed.shape[0]
    vis_range = slice(n_text, n_text + proj.stack_length)
    H = np.concatenate([text_embed, proj.vis], axis=0)
    trace = DecoderTrace([H], vis_range)
    for l, layer in enumerate(model.layers, start=1):
        H = layer(H)
        if l in inject_layers:
            params = model.injection[l]
            M, alpha = router_fuse(H[vis_range], proj, params)
            g, delta = gate_and_delta(H[vis_range], M, params)
            H = inject(H, vis_range, delta, params.residual_scale)
            trace.records[l] = InjectionRecord(alpha, M, g, delta, params.residual_scale)
        trace.hidden.append(H)
    return trace


def fused_details(trace: DecoderTrace, proj: ProjectedTokens, model: FusionModel, layers) -> dict:
    """Fused detail ``M`` each listed layer would route to, given the states in ``trace``.

    Uses the recorded value where the layer injected; otherwise routes from
    the layer's output state.
    """
    out = {}
    for l in _check_layers(layers, model.n_layers):
        if l in trace.records:
            out[l] = trace.records[l].fused
        else:
            out[l], _ = router_fuse(trace.hidden[l][trace.vis_range], proj, model.injection[l])
    return out


def cosine_rows(a, b):
    num = (a * b).sum(axis=1)
    den = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    return num / np.maximum(den, 1e-300)


def retention_score(trace: DecoderTrace, details: dict) -> float:
    """Mean cosine similarity between final visual states and each layer's fused detail."""
    final = trace.final_vis
    return float(np.mean([cosine_rows(final, M).mean() for M in details.values()]))


TRACE_COLUMNS = ("layer", "vis_norm", "delta_norm", "residual_scale", "alpha")


def trace_rows(trace: DecoderTrace) -> list[dict]:
    rows = []
    for l in range(1, len(trace.hidden)):
        rec = trace.records.get(l)
        rows.append(dict(
            layer=l,
            vis_norm=float(np.linalg.norm(trace.hidden[l][trace.vis_range])),
            delta_norm=float(np.linalg.norm(rec.delta)) if rec else 0.0,
            residual_scale=rec.residual_scale if rec else 0.0,
            alpha=[float(a) for a in rec.alpha] if rec else [],
        ))
    return rows


def format_trace_csv(trace: DecoderTrace) -> str:
    lines = [",".join(TRACE_COLUMNS[:-1]) + ",alpha..."]
    for r in trace_rows(trace):
        cells = [str(r["layer"]), repr(r["vis_norm"]), repr(r["delta_norm"]), repr(r["residual_scale"])]
        cells += [repr(a) for a in r["alpha"]]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
