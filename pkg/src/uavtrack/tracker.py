"""Per-frame tracking pipeline shared by the closed loop and the CLI.

Until the first detection the whole frame is searched; afterwards each
frame is predicted, matched inside the covariance-derived window, and
corrected (or propagated without correction on a miss).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import estimator, matcher
from .config import TrackerConfig
from .errors import DimensionMismatch
from .imaging import Frame, TemplateBank, build_template_bank, extract_patch
from .matcher import Detection, SchedulerState


@dataclass(frozen=True)
class TrackStep:
    frame_index: int
    time: float
    detection: Optional[Detection]
    window_rect: tuple[int, int, int, int]
    half_width: float
    half_height: float
    templates_evaluated: int


class Tracker:
    """Single-target tracker: template bank + scheduler + Kalman filter."""

    def __init__(self, cfg: TrackerConfig, frame_size: tuple[int, int]):
        self.cfg = cfg.validate()
        self.frame_size = frame_size
        self.bank: TemplateBank | None = None
        self.sched = SchedulerState(budget=cfg.template_budget)
        self.state: estimator.TrackState | None = None

    @property
    def canvas(self) -> tuple[int, int]:
        if self.bank is None:
            raise RuntimeError("no template selected")
        return self.bank.canvas

    def select(self, frame: Frame, roi: tuple[int, int, int, int]) -> None:
        """Cut the template from ``frame`` and build the rotation bank."""
        patch = extract_patch(frame, roi)
        self.bank = build_template_bank(patch)
        self.sched = SchedulerState(budget=self.cfg.template_budget)
        self.state = None

    def process(self, frame: Frame) -> TrackStep:
        if self.bank is None:
            raise RuntimeError("select a template before processing frames")
        if (frame.width, frame.height) != self.frame_size:
            raise DimensionMismatch(
                f"frame {frame.width}x{frame.height} does not match "
                f"tracker size {self.frame_size[0]}x{self.frame_size[1]}")
        t = frame.timestamp

        if self.state is None or not self.state.initialized:
            window = estimator.full_frame_window(*self.frame_size)
            det = matcher.detect(frame, self.bank, self.sched, window,
                                 self.cfg.zmncc_threshold)
            if det is not None:
                self.state = estimator.init(
                    det, t, sigma=self.cfg.sigma, P0=self._p0())
        else:
            pred = estimator.predict(self.state, t)
            window = estimator.search_window(pred, self.canvas, self.frame_size)
            det = matcher.detect(frame, self.bank, self.sched, window,
                                 self.cfg.zmncc_threshold)
            self.state = estimator.correct(pred, det.position) if det else pred

        return TrackStep(
            frame_index=frame.frame_index, time=t, detection=det,
            window_rect=(window.x0, window.y0, window.x1, window.y1),
            half_width=window.half_width, half_height=window.half_height,
            templates_evaluated=self.sched.last_frame_evals)

    def _p0(self) -> np.ndarray:
        return np.diag([self.cfg.p0_pos, self.cfg.p0_pos,
                        self.cfg.p0_vel, self.cfg.p0_vel])
