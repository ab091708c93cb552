"""End-to-end wiring: configuration, the staged run, reports and the retention probe."""
from __future__ import annotations

import dataclasses
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .backbone import BackboneParams, encode_global, encode_patches, extract_patch, match_token_grid, resize
from .errors import ConfigError, StageError, TileFuseError
from .fusion import (DEFAULT_INJECT_LAYERS, FusionModel, decoder_forward, format_trace_csv,
                     fused_details, project, retention_score, trace_rows)
from .imageio import read_ppm, synth_image
from .stacks import PhaseOffset, build_bank, phase_length
from .stitch import PatchFeatureGrid, overlap_add



@dataclass
class PipelineConfig:
    # geometry
    canvas_side: int = 96
    patch_side: int = 8
    min_token_width: int = 2
    window_widths: tuple = (32, 16)
    # encoder
    seed: int = 0
    d_vit: int = 16
    encoder_layers: tuple = (1, 2, 3)
    encoder_side: int = 32
    global_side: int = 32
    # bank; stack_length 0 means "derive from the global token count"
    downsample: int = 2
    stack_length: int = 0
    # fusion
    d_llm: int = 32
    decoder_layers: int = 8
    mix_window: int = 4
    inject_layers: tuple = DEFAULT_INJECT_LAYERS
    residual_scale: float = 1.0
    fusion_seed: int = -1  # -1: reuse ``seed``
    text_tokens: int = 8
    # io
    input: str = ""
    synth_seed: int = -1  # -1: reuse ``seed``
    synth_side: int = 128
    out: str = ""
    plan_only: bool = False

    @property
    def grid(self) -> geo.GridConfig:
        return geo.GridConfig(self.canvas_side, self.patch_side, self.min_token_width)

    @property
    def global_tokens(self):
        return (self.global_side // self.patch_side) ** 2

    @property
    def resolved_stack_length(self):
        return self.stack_length or self.global_tokens

    @property
    def resolved_fusion_seed(self):
        return self.seed if self.fusion_seed < 0 else self.fusion_seed

    @property
    def resolved_synth_seed(self):
        return self.seed if self.synth_seed < 0 else self.synth_seed

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def plans(self):
        cfg = self.grid
        adm = geo.admissible_widths(cfg)
        return [geo.plan_scale(cfg, w, adm) for w in self.window_widths]

    def validate(self):
        """Fail-fast checks; everything here runs before any compute."""
        if not self.window_widths:
            raise ConfigError("at least one window width is required")
        try:
            plans = self.plans()
            geo.validate_cross_scale(plans, self.grid)
        except TileFuseError as exc:
            raise ConfigError(f"geometry: {exc}") from exc
        widths = [p.token_width for p in plans]
        if len(set(widths)) != len(widths):
            raise ConfigError(f"window widths {self.window_widths} snap to duplicate token widths {widths}")
        if self.plan_only:
            return plans
        p = self.patch_side
        if self.encoder_side % p or self.global_side % p:
            raise ConfigError(f"encoder side {self.encoder_side} and global side {self.global_side} "
                              f"must be multiples of patch side {p}")
        if not self.encoder_layers or min(self.encoder_layers) < 1:
            raise ConfigError(f"encoder layers must be positive, got {self.encoder_layers}")
        if self.downsample < 1:
            raise ConfigError(f"downsample must be >= 1, got {self.downsample}")
        if self.stack_length < 0:
            raise ConfigError("stack_length must be >= 0")
        if self.decoder_layers < 1 or self.d_llm < 1 or self.d_vit < 1 or self.mix_window < 1:
            raise ConfigError("decoder_layers, d_llm, d_vit and mix_window must be positive")
        bad = [l for l in self.inject_layers if not 1 <= l <= self.decoder_layers]
        if bad:
            raise ConfigError(f"inject layers {bad} outside 1..{self.decoder_layers}")
        if self.text_tokens < 0:
            raise ConfigError("text_tokens must be >= 0")
        if self.input and not os.path.exists(self.input):
            raise ConfigError(f"input image {self.input!r} does not exist")
        if not self.input and self.synth_side < p:
            raise ConfigError(f"synth_side {self.synth_side} smaller than patch side {p}")
        return plans


PROFILES = {
    "toy": PipelineConfig(),
    "paper-geometry": PipelineConfig(
        canvas_side=672, patch_side=14, min_token_width=8, window_widths=(336, 168),
        encoder_layers=(8, 16, 24), encoder_side=336, global_side=336, synth_side=672,
    ),
}

_TUPLE_KEYS = {"window_widths", "encoder_layers", "inject_layers"}


def _parse_value(key, raw, default):
    raw = raw.strip()
    try:
        if key in _TUPLE_KEYS:
            return tuple(int(float(x)) if key != "window_widths" else _num(x)
                         for x in raw.split(",") if x.strip())
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def _num(x):
    v = float(x)
    return int(v) if v.is_integer() else v


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    base = base or PipelineConfig()
    defaults = {f.name: getattr(base, f.name) for f in dataclasses.fields(base)}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        updates[key] = _parse_value(key, raw, defaults[key])
    return base.replace(**updates)


def load_config(path, base=None) -> PipelineConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read(), base)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc


@dataclass
class RunReport:
    plan_rows: list
    bank: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    retention: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    trace_csv: str = ""

    def sections(self) -> dict:
        """Machine-readable sections, one CSV document per section name."""
        out = {"plan": geo.format_plan_csv(self.plan_rows)}
        if self.bank:
            lines = ["key,value"]
            for k in ("n_stack", "stack_length", "f", "n_scales", "n_layers"):
                lines.append(f"{k},{self.bank[k]}")
            lines.append("stack,scale,layer,a,b,raw_length")
            for i, (s, l, a, b, raw) in enumerate(self.bank["stacks"]):
                lines.append(f"{i},{s},{l},{a},{b},{raw}")
            out["bank"] = "\n".join(lines) + "\n"
        if self.trace_csv:
            out["trace"] = self.trace_csv
        if self.retention:
            out["retention"] = "key,value\n" + "".join(
                f"{k},{v!r}\n" for k, v in self.retention.items())
        out["timings"] = "stage,seconds\n" + "".join(
            f"{k},{v:.6f}\n" for k, v in self.timings.items())
        return out

    def to_text(self) -> str:
        parts = ["plan", geo.format_plan_text(self.plan_rows)]
        if self.bank:
            parts.append(f"bank: N_stack={self.bank['n_stack']} T_v={self.bank['stack_length']} "
                         f"f={self.bank['f']} raw_lengths={sorted(set(r[-1] for r in self.bank['stacks']))}")
        if self.trace:
            parts.append("\ntrace")
            parts.append(f"{'layer':>5} {'|H_vis|':>12} {'|delta|':>12}  alpha (max, argmax)")
            for r in self.trace:
                a = r["alpha"]
                tail = f"{max(a):.4f} @ {int(np.argmax(a))}" if a else "-"
                parts.append(f"{r['layer']:>5} {r['vis_norm']:>12.6f} {r['delta_norm']:>12.6f}  {tail}")
        if self.retention:
            parts.append("\nretention")
            parts.extend(f"  {k}: {v:.6f}" for k, v in self.retention.items())
        if self.timings:
            parts.append("\ntimings (s)")
            parts.extend(f"  {k}: {v:.4f}" for k, v in self.timings.items())
        return "\n".join(parts) + "\n"

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        for name, body in self.sections().items():
            with open(os.path.join(out_dir, f"{name}.csv"), "w") as fh:
                fh.write(body)


@contextmanager
def _stage(name, timings):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except TileFuseError as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - t0


def load_image(config: PipelineConfig) -> np.ndarray:
    if config.input:
        return read_ppm(config.input)
    return synth_image(config.resolved_synth_seed, config.synth_side, config.patch_side)


def build_features(config: PipelineConfig, img, plans, backbone: BackboneParams, timings=None):
    """Window features for every (scale, layer): ``{(scale_id, layer): [PatchFeatureGrid]}``."""
    timings = {} if timings is None else timings
    S = config.canvas_side
    with _stage("resize", timings):
        canvas_img = resize(img, S, S)
    patches = {}
    for scale_id, plan in enumerate(plans):
        rects = geo.enumerate_windows(plan)
        with _stage("extract", timings):
            crops = np.stack([extract_patch(canvas_img, r) for r in rects])
        with _stage("encode", timings):
            per_layer = encode_patches(crops, backbone)
        for layer, grids in per_layer.items():
            patches[(scale_id, layer)] = [
                PatchFeatureGrid(scale_id, layer, (r.row, r.col), match_token_grid(g, plan.token_width))
                for r, g in zip(rects, grids)
            ]
    return patches


def prepare(config: PipelineConfig, timings=None):
    """Everything up to and including the stack bank and global tokens."""
    timings = {} if timings is None else timings
    plans = config.validate()
    backbone = BackboneParams.create(config.seed, config.d_vit, config.encoder_layers,
                                     config.patch_side, config.encoder_side)
    with _stage("load", timings):
        img = load_image(config)
    patches = build_features(config, img, plans, backbone, timings)
    with _stage("stitch", timings):
        canvases = {key: overlap_add(grids, plans[key[0]]) for key, grids in patches.items()}
    with _stage("bank", timings):
        bank = build_bank(canvases, config.downsample, config.resolved_stack_length,
                          scales=range(len(plans)), layers=config.encoder_layers)
    with _stage("global", timings):
        G = encode_global(img, backbone, config.global_side, config.global_side)
    return plans, canvases, bank, G


def text_embedding(config: PipelineConfig) -> np.ndarray:
    rng = np.random.default_rng([config.resolved_fusion_seed, 7])
    return rng.normal(0.0, 1.0, size=(config.text_tokens, config.d_llm))


def fusion_model(config: PipelineConfig) -> FusionModel:
    return FusionModel.create(config.resolved_fusion_seed, config.d_vit, config.d_llm,
                              config.decoder_layers, config.mix_window, config.residual_scale)


def _bank_summary(bank):
    return dict(
        n_stack=len(bank), stack_length=bank.stack_length, f=bank.f,
        n_scales=len(bank.scales), n_layers=len(bank.layers),
        stacks=[(s.scale_id, s.layer_id, s.offset.a, s.offset.b, s.raw_length) for s in bank.stacks],
    )


def _cross_check(report: RunReport, config: PipelineConfig, plans):
    T = config.grid.base_tokens
    for row, plan in zip(report.plan_rows, plans):
        t = plan.token_width
        n_side = 2 * T // t - 1
        assert row["n_side"] == n_side, row
        assert row["n_win"] == n_side ** 2, row
        assert row["n_tok"] == (2 * T - t) ** 2 == n_side ** 2 * t * t, row
    if report.bank:
        f = config.downsample
        assert report.bank["n_stack"] == len(plans) * len(set(config.encoder_layers)) * f * f
        for s, l, a, b, raw in report.bank["stacks"]:
            assert raw == phase_length(T, PhaseOffset(a, b), f)


def run(config: PipelineConfig) -> RunReport:
    timings = {}
    if config.plan_only:
        with _stage("plan", timings):
            plans = config.validate()
            rows = geo.plan_rows(plans, config.grid)
        report = RunReport(rows, timings=timings)
        _cross_check(report, config, plans)
        return report

    plans, canvases, bank, G = prepare(config, timings)
    model = fusion_model(config)
    text = text_embedding(config)
    with _stage("project", timings):
        proj = project(G, bank, model.projector)
    with _stage("decode", timings):
        trace = decoder_forward(G, text, bank, model, config.inject_layers, proj=proj)
    with _stage("retention", timings):
        probe_layers = config.inject_layers or DEFAULT_INJECT_LAYERS
        probe_layers = [l for l in probe_layers if l <= config.decoder_layers] or [config.decoder_layers]
        score = retention_score(trace, fused_details(trace, proj, model, probe_layers))
        base = decoder_forward(G, text, bank, model, (), proj=proj)
        base_score = retention_score(base, fused_details(base, proj, model, probe_layers))
    report = RunReport(
        plan_rows=geo.plan_rows(plans, config.grid),
        bank=_bank_summary(bank),
        trace=trace_rows(trace),
        retention=dict(injected=score, baseline=base_score, difference=score - base_score),
        timings=timings,
        trace_csv=format_trace_csv(trace),
    )
    _cross_check(report, config, plans)
    return report


@dataclass
class ProbeRow:
    inject_layers: tuple
    injected: list
    baseline: list

    @property
    def differences(self):
        return [a - b for a, b in zip(self.injected, self.baseline)]

    @property
    def wins(self):
        return sum(d > 0 for d in self.differences)

    def summary(self) -> dict:
        inj, base, diff = (np.asarray(x) for x in (self.injected, self.baseline, self.differences))
        return dict(
            inject_layers="|".join(map(str, self.inject_layers)) or "none",
            seeds=len(inj),
            injected_mean=float(inj.mean()), injected_std=float(inj.std()),
            baseline_mean=float(base.mean()), baseline_std=float(base.std()),
            mean_difference=float(diff.mean()),
            wins=self.wins, win_rate=self.wins / len(inj),
        )


PROBE_COLUMNS = ("inject_layers", "seeds", "injected_mean", "injected_std", "baseline_mean",
                 "baseline_std", "mean_difference", "wins", "win_rate")


def retention_probe(config: PipelineConfig, seeds: int, layer_sets=None, reference_layers=None):
    """Paired with/without-injection runs over ``seeds`` consecutive seeds.

    Both arms of a pair share the image, encoder and all decoder parameters.
    The score is measured against the fused details at ``reference_layers``
    (default: the configured inject layers), so every arm is scored on the
    same targets.
    """
    if seeds < 2:
        raise ConfigError(f"probe needs at least 2 seeds, got {seeds}")
    layer_sets = [tuple(sorted(ls)) for ls in (layer_sets or [config.inject_layers])]
    reference = tuple(reference_layers or config.inject_layers or DEFAULT_INJECT_LAYERS)
    rows = [ProbeRow(ls, [], []) for ls in layer_sets]
    for k in range(seeds):
        cfg = config.replace(seed=config.seed + k, fusion_seed=-1, synth_seed=-1)
        _, _, bank, G = prepare(cfg)
        model = fusion_model(cfg)
        text = text_embedding(cfg)
        proj = project(G, bank, model.projector)
        base = decoder_forward(G, text, bank, model, (), proj=proj)
        base_score = retention_score(base, fused_details(base, proj, model, reference))
        for row in rows:
            trace = decoder_forward(G, text, bank, model, row.inject_layers, proj=proj)
            row.injected.append(retention_score(trace, fused_details(trace, proj, model, reference)))
            row.baseline.append(base_score)
    return rows


def format_probe_csv(rows) -> str:
    lines = [",".join(PROBE_COLUMNS)]
    for row in rows:
        s = row.summary()
        lines.append(",".join(repr(s[c]) if isinstance(s[c], float) else str(s[c]) for c in PROBE_COLUMNS))
    return "\n".join(lines) + "\n"
