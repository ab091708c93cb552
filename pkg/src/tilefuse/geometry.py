"""Snapped sliding-window geometry on a square token grid.

All windows live on the ``T_base x T_base`` token lattice induced by a canvas
of side ``S`` pixels and patch side ``p``. Window widths are restricted to the
even divisors of ``T_base`` (the admissible set), which makes the 50% stride
integral and lets every scale share corners with every other scale.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Sequence

import numpy as np

from .errors import AlignmentError, EmptyAdmissibleSetError, GeometryError

DEFAULT_MIN_TOKEN_WIDTH = 8


@dataclass(frozen=True)
class GridConfig:
    canvas_side_px: int
    patch_side_px: int
    min_token_width: int = DEFAULT_MIN_TOKEN_WIDTH

    def __post_init__(self):
        S, p, d_min = self.canvas_side_px, self.patch_side_px, self.min_token_width
        if p < 1 or S < 1:
            raise GeometryError(f"canvas side and patch side must be positive, got S={S}, p={p}")
        if S % p:
            raise GeometryError(f"canvas side {S} is not a multiple of patch side {p}")
        if d_min < 2 or d_min % 2:
            raise GeometryError(f"min_token_width must be even and >= 2, got {d_min}")

    @property
    def base_tokens(self) -> int:
        return self.canvas_side_px // self.patch_side_px


@dataclass(frozen=True)
class AdmissibleSet:
    widths: tuple

    def __post_init__(self):
        if not self.widths:
            raise EmptyAdmissibleSetError("admissible set is empty")
        if any(b <= a for a, b in zip(self.widths, self.widths[1:])):
            raise GeometryError(f"admissible widths must be strictly increasing: {self.widths}")

    def __contains__(self, d):
        return d in self.widths

    def __iter__(self):
        return iter(self.widths)

    def __len__(self):
        return len(self.widths)


@dataclass(frozen=True)
class ScalePlan:
    """Snapped geometry of one window scale.

    Instances built through :func:`plan_scale` satisfy every lattice invariant;
    direct construction is allowed (e.g. to probe :func:`validate_cross_scale`)
    and is not checked here.
    """

    nominal_width_px: float
    token_width: int
    token_stride: int
    patch_side_px: int
    base_tokens: int
    start_positions_tok: tuple = field(default=None)

    def __post_init__(self):
        if self.start_positions_tok is None:
            starts = tuple(range(0, self.base_tokens - self.token_width + 1, self.token_stride))
            object.__setattr__(self, "start_positions_tok", starts)

    @property
    def window_px(self) -> int:
        return self.token_width * self.patch_side_px

    @property
    def pixel_stride(self) -> int:
        return self.token_stride * self.patch_side_px

    @property
    def windows_per_side(self) -> int:
        return len(self.start_positions_tok)

    @property
    def window_count(self) -> int:
        return self.windows_per_side ** 2


@dataclass(frozen=True)
class WindowRect:
    row: int
    col: int
    top_tok: int
    left_tok: int
    side_tok: int
    patch_side_px: int

    @property
    def top_px(self) -> int:
        return self.top_tok * self.patch_side_px

    @property
    def left_px(self) -> int:
        return self.left_tok * self.patch_side_px

    @property
    def side_px(self) -> int:
        return self.side_tok * self.patch_side_px


def admissible_widths(cfg: GridConfig) -> AdmissibleSet:
    T = cfg.base_tokens
    widths = tuple(d for d in range(2, T + 1, 2) if T % d == 0 and d >= cfg.min_token_width)
    if not widths:
        raise EmptyAdmissibleSetError(
            f"no even divisor of T_base={T} is >= min_token_width={cfg.min_token_width}"
        )
    return AdmissibleSet(widths)


def snap(nominal_tokens: Real, adm: AdmissibleSet) -> int:
    """Nearest admissible width to ``nominal_tokens``; ties go to the larger width.

    Distances are compared as exact rationals so a float input that sits
    exactly halfway between two widths is still treated as a tie.
    """
    x = Fraction(nominal_tokens)
    if x <= 0:
        raise GeometryError(f"nominal token width must be positive, got {nominal_tokens}")
    # min over (distance, -d) picks the larger d on equal distance
    return min(adm.widths, key=lambda d: (abs(x - d), -d))


def plan_scale(cfg: GridConfig, nominal_width_px: Real, adm: AdmissibleSet | None = None) -> ScalePlan:
    if nominal_width_px <= 0:
        raise GeometryError(f"nominal window width must be positive, got {nominal_width_px}")
    if adm is None:
        adm = admissible_widths(cfg)
    t = snap(Fraction(nominal_width_px) / cfg.patch_side_px, adm)
    plan = ScalePlan(
        nominal_width_px=nominal_width_px,
        token_width=t,
        token_stride=t // 2,
        patch_side_px=cfg.patch_side_px,
        base_tokens=cfg.base_tokens,
    )
    assert plan.windows_per_side == 2 * (cfg.base_tokens // t) - 1
    assert plan.start_positions_tok[-1] + t == cfg.base_tokens
    return plan


def enumerate_windows(plan: ScalePlan) -> list[WindowRect]:
    """All windows of ``plan`` in row-major ``(i, j)`` order."""
    starts = plan.start_positions_tok
    rects = []
    for i, top in enumerate(starts):
        for j, left in enumerate(starts):
            rects.append(WindowRect(i, j, top, left, plan.token_width, plan.patch_side_px))
    return rects


def token_count(plan: ScalePlan, cfg: GridConfig) -> int:
    """Raw token count of one scale-layer pair: ``(2 T_base - t_s)^2``."""
    T, t = cfg.base_tokens, plan.token_width
    closed = (2 * T - t) ** 2
    direct = plan.windows_per_side ** 2 * t * t
    if closed != direct:
        raise GeometryError(f"token count mismatch for t_s={t}: {closed} != {direct}")
    return closed


@dataclass
class AlignmentReport:
    base_tokens: int
    coverage: dict  # token_width -> (T, T) int array of windows covering each token

    def min_coverage(self, token_width):
        return int(self.coverage[token_width].min())

    def max_coverage(self, token_width):
        return int(self.coverage[token_width].max())


def validate_cross_scale(plans: Sequence[ScalePlan], cfg: GridConfig) -> AlignmentReport:
    if not plans:
        raise GeometryError("validate_cross_scale needs at least one plan")
    T = cfg.base_tokens
    coverage = {}
    for plan in plans:
        t, tau = plan.token_width, plan.token_stride
        if tau < 1 or (T - t) % tau:
            raise AlignmentError(
                f"scale t_s={t}: last corner {T - t} is not a multiple of stride {tau}",
                scale=t, corner=T - t,
            )
        for s in plan.start_positions_tok:
            if s % tau or s < 0 or s + t > T:
                raise AlignmentError(
                    f"scale t_s={t}: corner {s} is off-lattice for stride {tau} on T_base={T}",
                    scale=t, corner=s,
                )
        cov = np.zeros((T, T), dtype=np.int64)
        for r in enumerate_windows(plan):
            cov[r.top_tok:r.top_tok + t, r.left_tok:r.left_tok + t] += 1
        if cov.min() < 1:
            u, v = np.argwhere(cov == 0)[0]
            raise AlignmentError(
                f"scale t_s={t}: token ({u}, {v}) is not covered by any window",
                scale=t, corner=(int(u), int(v)),
            )
        coverage[t] = cov
    return AlignmentReport(T, coverage)


PLAN_COLUMNS = ("nominal_px", "t_s", "w_s", "tau_s", "delta_s", "n_side", "n_win", "n_tok")


def plan_rows(plans: Sequence[ScalePlan], cfg: GridConfig) -> list[dict]:
    rows = []
    for plan in plans:
        rows.append(dict(
            nominal_px=plan.nominal_width_px,
            t_s=plan.token_width,
            w_s=plan.window_px,
            tau_s=plan.token_stride,
            delta_s=plan.pixel_stride,
            n_side=plan.windows_per_side,
            n_win=plan.window_count,
            n_tok=token_count(plan, cfg),
        ))
    return rows


def _fmt(v):
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def format_plan_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    buf.write(",".join(PLAN_COLUMNS) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(row[c]) for c in PLAN_COLUMNS) + "\n")
    return buf.getvalue()


def format_plan_text(rows: Sequence[dict]) -> str:
    cells = [list(PLAN_COLUMNS)] + [[_fmt(r[c]) for c in PLAN_COLUMNS] for r in rows]
    widths = [max(len(row[k]) for row in cells) for k in range(len(PLAN_COLUMNS))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
