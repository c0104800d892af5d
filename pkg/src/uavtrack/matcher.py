"""Zero-mean normalized cross-correlation matching and template scheduling.

Two correlation paths are provided: ``zmncc_oracle`` evaluates the textbook
definition at a single placement with explicit mean subtraction and no
algebraic shortcuts, and ``zmncc_fast`` produces the full score map over a
search window using integral images for the window statistics. The fast
path is required to agree with the oracle to 1e-9 everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from .errors import UndefinedScore, WindowTooSmall
from .imaging import Frame, Patch, TemplateBank

if TYPE_CHECKING:
    from .estimator import SearchWindow

TEMPLATE_BUDGET = 7

# Windows whose zero-mean energy falls below this are treated as constant
# (score undefined). Intensities are 8-bit scale, so any real contrast
# yields an energy >= ~1 while float residue on a flat window stays < 1e-4.
_FLAT_ENERGY_TOL = 1e-3

# Cap on placements x template-area elements materialized per numerator
# chunk (about 16 MB of float64).
_CHUNK_ELEMS = 2_000_000


@dataclass(frozen=True)
class CorrelationMap:
    """ZMNCC scores over all valid template placements inside a window.

    ``scores[v, u]`` is the coefficient for the template's top-left corner
    at frame pixel (x0 + u, y0 + v); NaN marks placements where the window
    content is constant and the score is undefined.
    """

    scores: np.ndarray
    x0: int
    y0: int

    @property
    def width(self) -> int:
        return self.scores.shape[1]

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    def best(self) -> tuple[float, tuple[int, int]]:
        """Max defined score and its placement in frame coordinates."""
        if np.all(np.isnan(self.scores)):
            return (float("nan"), (self.x0, self.y0))
        idx = np.nanargmax(self.scores)
        v, u = np.unravel_index(idx, self.scores.shape)
        return (float(self.scores[v, u]), (self.x0 + int(u), self.y0 + int(v)))


@dataclass(frozen=True)
class Detection:
    """Matched target location: centroid of all above-threshold placements."""

    position: tuple[int, int]
    score: float
    template_index: int
    frame_index: int


@dataclass
class SchedulerState:
    """Rotation-bank scheduling state; single-owner, mutated by ``detect``.

    After a match at index k the next frame scans [k-2 .. k+4] (mod bank
    size). After a miss the next frame starts one template after the start
    of the missed frame. A fresh tracker starts at template 0.
    """

    last_matched_index: Optional[int] = None
    fallback_start_index: int = 0
    budget: int = TEMPLATE_BUDGET
    last_frame_missed: bool = False
    last_frame_evals: int = field(default=0, compare=False)

    def start_index(self, bank_size: int) -> int:
        if self.last_matched_index is not None and not self.last_frame_missed:
            return (self.last_matched_index - 2) % bank_size
        return self.fallback_start_index % bank_size


def schedule_order(sched: SchedulerState, bank_size: int = 36) -> list[int]:
    """Template indices to try this frame, in order, at most ``budget``."""
    start = sched.start_index(bank_size)
    n = min(sched.budget, bank_size)
    return [(start + i) % bank_size for i in range(n)]


def zmncc_oracle(frame_region: np.ndarray, template: Patch,
                 placement: tuple[int, int]) -> float:
    """Direct ZMNCC at one placement: zero-mean numerator over the product
    of zero-mean energies, evaluated straight from the definition.

    ``placement`` is the (u, v) top-left of the template inside the region.
    """
    region = np.asarray(frame_region, dtype=np.float64)
    u, v = placement
    th, tw = template.pixels.shape
    if u < 0 or v < 0 or v + th > region.shape[0] or u + tw > region.shape[1]:
        raise WindowTooSmall(
            f"placement {placement} puts a {tw}x{th} template outside the region")
    window = region[v:v + th, u:u + tw]
    if float(window.max()) == float(window.min()):
        raise UndefinedScore("window under the template is constant")
    if template.is_constant:
        raise UndefinedScore("template is constant")
    wm = window.mean()
    tzm = template.pixels - template.pixels.mean()
    wzm = window - wm
    num = float(np.sum(wzm * tzm))
    den = math.sqrt(float(np.sum(wzm * wzm)) * float(np.sum(tzm * tzm)))
    return num / den


def zmncc_fast(frame: Frame, template: Patch, window: "SearchWindow") -> CorrelationMap:
    """ZMNCC score map over every placement of ``template`` in ``window``.

    Window sums and sums of squares come from integral images built over
    the (mean-centered) window region, so per-placement statistics cost
    O(1); the zero-mean numerator is a direct O(template area) product per
    placement. Accumulation is float64 throughout.
    """
    th, tw = template.pixels.shape
    x0 = max(0, int(window.x0))
    y0 = max(0, int(window.y0))
    x1 = min(frame.width, int(window.x1))
    y1 = min(frame.height, int(window.y1))
    if x1 - x0 < tw or y1 - y0 < th:
        raise WindowTooSmall(
            f"window {(x0, y0, x1, y1)} cannot hold a {tw}x{th} template")
    if template.is_constant:
        raise UndefinedScore("template is constant")

    region = frame.pixels[y0:y1, x0:x1]
    # Centering on the region mean conditions the s2 - s1^2/n subtraction.
    g = region - region.mean()

    s1 = np.zeros((g.shape[0] + 1, g.shape[1] + 1))
    s2 = np.zeros_like(s1)
    np.cumsum(np.cumsum(g, axis=0), axis=1, out=s1[1:, 1:])
    np.cumsum(np.cumsum(g * g, axis=0), axis=1, out=s2[1:, 1:])

    wh = g.shape[0] - th + 1
    ww = g.shape[1] - tw + 1
    win_sum = s1[th:th + wh, tw:tw + ww] - s1[:wh, tw:tw + ww] \
        - s1[th:th + wh, :ww] + s1[:wh, :ww]
    win_sq = s2[th:th + wh, tw:tw + ww] - s2[:wh, tw:tw + ww] \
        - s2[th:th + wh, :ww] + s2[:wh, :ww]
    n = th * tw
    energy = np.maximum(win_sq - win_sum * win_sum / n, 0.0)

    tzm = template.zm_pixels
    num = np.empty((wh, ww))
    view = np.lib.stride_tricks.sliding_window_view(g, (th, tw))
    rows_per_chunk = max(1, _CHUNK_ELEMS // (ww * n))
    for r in range(0, wh, rows_per_chunk):
        stop = min(wh, r + rows_per_chunk)
        num[r:stop] = np.tensordot(view[r:stop], tzm, axes=([2, 3], [0, 1]))

    defined = energy > _FLAT_ENERGY_TOL
    scores = np.full((wh, ww), np.nan)
    np.divide(num, np.sqrt(energy * (template.zm_norm ** 2)),
              out=scores, where=defined)
    return CorrelationMap(scores=scores, x0=x0, y0=y0)


def _centroid_cluster(us: np.ndarray, vs: np.ndarray, scores: np.ndarray,
                      diag: float) -> tuple[float, float, float]:
    """Centroid of matching placements; multimodal maps keep only the
    cluster around the maximum score (points within 2 x template diagonal).
    """
    cu, cv = float(us.mean()), float(vs.mean())
    d = np.hypot(us - cu, vs - cv)
    if np.any(d > 2.0 * diag):
        k = int(np.argmax(scores))
        keep = np.hypot(us - us[k], vs - vs[k]) <= 2.0 * diag
        us, vs, scores = us[keep], vs[keep], scores[keep]
        cu, cv = float(us.mean()), float(vs.mean())
    return cu, cv, float(scores.max())


def detect(frame: Frame, bank: TemplateBank, sched: SchedulerState,
           window: "SearchWindow", threshold: float) -> Optional[Detection]:
    """Try up to ``budget`` bank templates in scheduler order.

    Stops at the first template whose map has any score >= threshold; the
    detection position is the centroid of that template's matching
    placements, reported at template-center coordinates. Returns None on a
    full miss and advances the scheduler's fallback start. ``sched`` is
    updated in place; ``sched.last_frame_evals`` counts the template maps
    evaluated this call.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    bank_size = bank.size
    order = schedule_order(sched, bank_size)
    start = order[0]
    tw, th = bank.canvas
    diag = math.hypot(tw, th)

    evals = 0
    for index in order:
        template = bank.templates[index]
        cmap = zmncc_fast(frame, template, window)
        evals += 1
        hits = cmap.scores >= threshold  # NaN compares False
        if not np.any(hits):
            continue
        vs, us = np.nonzero(hits)
        cu, cv, best = _centroid_cluster(
            us.astype(np.float64), vs.astype(np.float64),
            cmap.scores[vs, us], diag)
        px = int(round(cmap.x0 + cu + (tw - 1) / 2.0))
        py = int(round(cmap.y0 + cv + (th - 1) / 2.0))
        sched.last_matched_index = index
        sched.last_frame_missed = False
        sched.last_frame_evals = evals
        return Detection(position=(px, py), score=best,
                         template_index=index, frame_index=frame.frame_index)

    sched.fallback_start_index = (start + 1) % bank_size
    sched.last_frame_missed = True
    sched.last_frame_evals = evals
    return None
