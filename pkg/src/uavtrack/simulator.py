"""Synthetic flight scenes with ground truth, and the closed-loop runner.

A scenario describes a static value-noise world, a blob-textured target
sprite following a piecewise-linear trajectory and heading ramp, per-frame
illumination gain/offset schedules, and dropout intervals during which the
target is absent. Everything is derived from the scenario seed, so a
scenario renders bit-identically on every run.

Scenario positions are given in frame coordinates of the unshifted
(zero pan/tilt) viewport.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import gimbal as gim
from .config import ConfigError, TrackerConfig, iter_kv_lines
from .errors import InvalidScenario
from .imaging import Frame, rotation_canvas_side, warp_raster
from .tracker import Tracker, TrackStep

Breakpoints = list[tuple[float, ...]]


@dataclass
class Scenario:
    width: int
    height: int
    fps: float
    duration: float
    seed: int
    position: Breakpoints                   # (t, x, y) sprite-center breakpoints
    heading: Breakpoints = field(default_factory=lambda: [(0.0, 0.0)])
    gain: Breakpoints = field(default_factory=lambda: [(0.0, 1.0)])
    offset: Breakpoints = field(default_factory=lambda: [(0.0, 0.0)])
    dropouts: list[tuple[float, float]] = field(default_factory=list)
    sprite_width: int = 30
    sprite_height: int = 30
    sprite_contrast: float = 62.0
    background_base: float = 105.0
    background_contrast: float = 9.0
    background_cell: int = 5
    distractors: int = 2
    world_margin: int = 128
    quantize: bool = False

    @property
    def n_frames(self) -> int:
        return int(round(self.fps * self.duration))

    def frame_time(self, k: int) -> float:
        return k / self.fps

    def in_dropout(self, t: float) -> bool:
        return any(a <= t < b for a, b in self.dropouts)

    def validate(self) -> "Scenario":
        if self.width < 8 or self.height < 8:
            raise InvalidScenario(f"frame size {self.width}x{self.height} too small")
        if self.fps <= 0 or self.duration <= 0:
            raise InvalidScenario("fps and duration must be positive")
        if self.n_frames < 1:
            raise InvalidScenario("scenario renders zero frames")
        if self.sprite_width * self.sprite_height < 16:
            raise InvalidScenario("sprite must cover at least 16 pixels")
        if not self.position:
            raise InvalidScenario("position schedule is empty")
        if self.world_margin < 0:
            raise InvalidScenario("world_margin must be >= 0")
        side = rotation_canvas_side(self.sprite_width, self.sprite_height)
        if side > min(self.width, self.height):
            raise InvalidScenario(
                f"sprite canvas {side} exceeds frame {self.width}x{self.height}")
        for k in range(self.n_frames):
            t = self.frame_time(k)
            if self.in_dropout(t):
                continue
            cx, cy = _interp_xy(self.position, t)
            tlx = round(cx - (side - 1) / 2.0)
            tly = round(cy - (side - 1) / 2.0)
            if tlx < 0 or tly < 0 or tlx + side > self.width or tly + side > self.height:
                raise InvalidScenario(
                    f"target leaves the frame at t={t:.3f}s while in view")
        return self


@dataclass(frozen=True)
class TruthRecord:
    frame_index: int
    time: float
    visible: bool
    x: float
    y: float
    heading: float
    gain: float
    offset: float


@dataclass
class GroundTruth:
    records: list[TruthRecord]

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


@dataclass
class FrameRecord:
    frame_index: int
    time: float
    detected: bool
    x: int | None
    y: int | None
    score: float | None
    template_index: int | None
    templates_evaluated: int
    miss: bool
    window: tuple[int, int, int, int]
    half_width: float
    half_height: float
    truth_visible: bool
    truth_x: float
    truth_y: float
    truth_heading: float
    gain: float
    offset: float
    pan_rad: float = 0.0
    tilt_rad: float = 0.0
    pan_counts: int = 0
    tilt_counts: int = 0
    saturated: bool = False
    wall_ms: float = 0.0


@dataclass
class TrackReport:
    records: list[FrameRecord]
    canvas: tuple[int, int]
    frame_size: tuple[int, int]

    def detection_rate(self) -> float:
        visible = [r for r in self.records if r.truth_visible]
        if not visible:
            return 0.0
        return sum(r.detected for r in visible) / len(visible)

    def false_positive_count(self, diag_mult: float = 2.0) -> int:
        """Detections farther than diag_mult x canvas diagonal from truth,
        or produced while the target is absent."""
        limit = diag_mult * math.hypot(*self.canvas)
        n = 0
        for r in self.records:
            if not r.detected:
                continue
            if not r.truth_visible:
                n += 1
            elif math.hypot(r.x - r.truth_x, r.y - r.truth_y) > limit:
                n += 1
        return n

    def miss_runs(self) -> list[int]:
        runs, run = [], 0
        for r in self.records:
            if r.miss:
                run += 1
            elif run:
                runs.append(run)
                run = 0
        if run:
            runs.append(run)
        return runs


# --------------------------------------------------------------------------
# Procedural textures
# --------------------------------------------------------------------------

def value_noise(rng: np.random.Generator, height: int, width: int, cell: int,
                octaves: int = 2) -> np.ndarray:
    """Zero-mean, unit-std lattice noise with bilinear interpolation."""
    acc = np.zeros((height, width))
    amp = 1.0
    for o in range(octaves):
        step = max(2, cell >> o)
        g = rng.standard_normal((height // step + 2, width // step + 2))
        ys = np.arange(height) / step
        xs = np.arange(width) / step
        y0 = np.floor(ys).astype(int)[:, None]
        x0 = np.floor(xs).astype(int)[None, :]
        fy = (ys % 1.0)[:, None]
        fx = (xs % 1.0)[None, :]
        top = (1 - fx) * g[y0, x0] + fx * g[y0, x0 + 1]
        bot = (1 - fx) * g[y0 + 1, x0] + fx * g[y0 + 1, x0 + 1]
        acc += amp * ((1 - fy) * top + fy * bot)
        amp *= 0.5
    acc -= acc.mean()
    sd = acc.std()
    if sd > 0:
        acc /= sd
    return acc


def blob_sprite(rng: np.random.Generator, width: int, height: int,
                contrast: float, base: float, n_blobs: int = 6) -> np.ndarray:
    """Rotation-asymmetric target texture: Gaussian blobs plus fine grain.

    The mix fixes the angular decorrelation of the rotation bank: a
    template 5 degrees off still correlates above 0.9 (so the 10-degree
    bank covers every heading) while 10 degrees off falls clearly below it
    (so the matched index never lags the heading by a full bank step).
    """
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    fld = np.zeros((height, width))
    for _ in range(n_blobs):
        cx = rng.uniform(0.15, 0.85) * (width - 1)
        cy = rng.uniform(0.15, 0.85) * (height - 1)
        s = rng.uniform(0.7, 1.4) * 0.14 * min(width, height)
        amp = rng.choice([-1.0, 1.0]) * rng.uniform(0.6, 1.0)
        fld += amp * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * s * s))
    sd = fld.std()
    if sd > 0:
        fld /= sd
    fld += 0.35 * value_noise(rng, height, width, 3, octaves=1)
    fld -= fld.mean()
    sd = fld.std()
    if sd > 0:
        fld /= sd
    # Cap at 195 so gain schedules up to 1.3 stay clear of the 255 clip.
    return np.clip(base + contrast * fld, 15.0, 195.0)


def _interp_xy(points: Breakpoints, t: float) -> tuple[float, float]:
    ts = [p[0] for p in points]
    return (float(np.interp(t, ts, [p[1] for p in points])),
            float(np.interp(t, ts, [p[2] for p in points])))


def _interp_1d(points: Breakpoints, t: float) -> float:
    ts = [p[0] for p in points]
    return float(np.interp(t, ts, [p[1] for p in points]))


# --------------------------------------------------------------------------
# Rendering
# --------------------------------------------------------------------------

class SceneRenderer:
    """Renders scenario frames; owns the static world raster."""

    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.scenario = scenario
        s = scenario
        rng = np.random.default_rng(s.seed)
        m = s.world_margin
        wh, ww = s.height + 2 * m, s.width + 2 * m
        world = s.background_base + s.background_contrast * value_noise(
            rng, wh, ww, s.background_cell)
        self.sprite = blob_sprite(rng, s.sprite_width, s.sprite_height,
                                  s.sprite_contrast, s.background_base)
        self.canvas_side = rotation_canvas_side(s.sprite_width, s.sprite_height)
        self._ones = np.ones_like(self.sprite)
        self._place_distractors(rng, world)
        world = np.clip(world, 0.0, 255.0)
        world.setflags(write=False)
        self.world = world

    def _place_distractors(self, rng: np.random.Generator, world: np.ndarray) -> None:
        s = self.scenario
        m = s.world_margin
        side = self.canvas_side
        path = [_interp_xy(s.position, s.frame_time(k)) for k in range(0, s.n_frames, 5)]
        keep_away = math.hypot(side, side)
        placed = []
        for i in range(s.distractors):
            tex = blob_sprite(rng, s.sprite_width, s.sprite_height,
                              s.sprite_contrast * 0.8, s.background_base, n_blobs=5)
            for _ in range(200):
                x = rng.integers(0, world.shape[1] - s.sprite_width)
                y = rng.integers(0, world.shape[0] - s.sprite_height)
                cx, cy = x - m + s.sprite_width / 2, y - m + s.sprite_height / 2
                if all(math.hypot(cx - px, cy - py) > keep_away for px, py in path) \
                        and all(math.hypot(cx - qx, cy - qy) > keep_away for qx, qy in placed):
                    world[y:y + s.sprite_height, x:x + s.sprite_width] = tex
                    placed.append((cx, cy))
                    break

    def truth(self, k: int) -> TruthRecord:
        s = self.scenario
        t = s.frame_time(k)
        cx, cy = self._target_center(t)
        return TruthRecord(frame_index=k, time=t, visible=not s.in_dropout(t),
                           x=cx, y=cy, heading=_interp_1d(s.heading, t) % 360.0,
                           gain=_interp_1d(s.gain, t), offset=_interp_1d(s.offset, t))

    def _target_center(self, t: float) -> tuple[float, float]:
        """Actually-rendered sprite center in zero-offset frame coordinates."""
        cx, cy = _interp_xy(self.scenario.position, t)
        half = (self.canvas_side - 1) / 2.0
        return (round(cx - half) + half, round(cy - half) + half)

    def target_rect_frame0(self) -> tuple[int, int, int, int]:
        """Sprite-interior ROI (x, y, w, h) in frame 0, for template selection."""
        s = self.scenario
        cx, cy = self._target_center(0.0)
        half = (self.canvas_side - 1) / 2.0
        tlx, tly = int(round(cx - half)), int(round(cy - half))
        mx = (self.canvas_side - s.sprite_width) // 2
        my = (self.canvas_side - s.sprite_height) // 2
        return (tlx + mx, tly + my, s.sprite_width, s.sprite_height)

    def render(self, k: int, viewport: tuple[int, int] = (0, 0)) -> tuple[Frame, TruthRecord]:
        """Render frame k with the viewport shifted by whole pixels.

        The reported truth position is expressed in the rendered frame's
        coordinates (world position minus the viewport shift).
        """
        s = self.scenario
        t = s.frame_time(k)
        m = s.world_margin
        ox = max(-m, min(m, int(viewport[0])))
        oy = max(-m, min(m, int(viewport[1])))
        crop = self.world[m + oy:m + oy + s.height, m + ox:m + ox + s.width].copy()

        truth = self.truth(k)
        if truth.visible:
            heading = truth.heading
            canvas = warp_raster(self.sprite, heading, 0.0)
            alpha = np.clip(warp_raster(self._ones, heading, 0.0), 0.0, 1.0)
            half = (self.canvas_side - 1) / 2.0
            tlx = int(round(truth.x - half)) - ox
            tly = int(round(truth.y - half)) - oy
            _blend(crop, canvas, alpha, tlx, tly)

        out = np.clip(truth.gain * crop + truth.offset, 0.0, 255.0)
        if s.quantize:
            out = np.rint(out)
        frame = Frame(out, timestamp=t, frame_index=k)
        return frame, replace(truth, x=truth.x - ox, y=truth.y - oy)


def _blend(dst: np.ndarray, src: np.ndarray, alpha: np.ndarray, x: int, y: int) -> None:
    """Alpha-composite src onto dst at (x, y), clipped to dst bounds."""
    h, w = src.shape
    H, W = dst.shape
    x0, y0 = max(0, x), max(0, y)
    x1, y1 = min(W, x + w), min(H, y + h)
    if x0 >= x1 or y0 >= y1:
        return
    sub = (slice(y0 - y, y1 - y), slice(x0 - x, x1 - x))
    a = alpha[sub]
    dst[y0:y1, x0:x1] = (1.0 - a) * dst[y0:y1, x0:x1] + a * src[sub]


# --------------------------------------------------------------------------
# Sequence rendering and the closed loop
# --------------------------------------------------------------------------

def render_sequence(scenario: Scenario) -> tuple[list[Frame], GroundTruth]:
    """Open-loop rendering at zero viewport offset."""
    renderer = SceneRenderer(scenario)
    frames, records = [], []
    for k in range(scenario.n_frames):
        frame, truth = renderer.render(k)
        frames.append(frame)
        records.append(truth)
    return frames, GroundTruth(records)


def run_closed_loop(scenario: Scenario, cfg: TrackerConfig | None = None,
                    frame_sink=None) -> TrackReport:
    """Full pipeline: render -> window -> detect -> correct/miss -> gimbal.

    The gimbal pose shifts the next frame's viewport, closing the loop.
    The target must be in view at frame 0 so the template can be selected.
    ``frame_sink``, if given, receives every rendered Frame (for export).
    """
    cfg = (cfg or TrackerConfig()).validate()
    renderer = SceneRenderer(scenario)
    s = scenario
    if s.in_dropout(0.0):
        raise InvalidScenario("target must be visible at frame 0 to select a template")

    cam = gim.CameraModel(hfov=cfg.hfov, vfov=cfg.vfov, width=s.width, height=s.height)
    g = gim.GimbalState(pan_limit=cfg.pan_limit, tilt_limit=cfg.tilt_limit,
                        max_rate=cfg.gimbal_max_rate,
                        count_resolution=cfg.count_resolution)
    frame_center = ((s.width - 1) / 2.0, (s.height - 1) / 2.0)
    dt = 1.0 / s.fps

    frame0, _ = renderer.render(0, gim.viewport_offset_px(g, cam))
    tracker = Tracker(cfg, frame_size=(s.width, s.height))
    tracker.select(frame0, renderer.target_rect_frame0())

    records = []
    for k in range(s.n_frames):
        t0 = time.perf_counter()
        frame, truth = renderer.render(k, gim.viewport_offset_px(g, cam))
        if frame_sink is not None:
            frame_sink(frame)
        step = tracker.process(frame)
        g, counts = gim.centering_step(step.detection, frame_center, cam, g, dt)
        wall_ms = (time.perf_counter() - t0) * 1e3
        records.append(_record(step, truth, g, counts, wall_ms))
    return TrackReport(records=records, canvas=tracker.canvas,
                       frame_size=(s.width, s.height))


def _record(step: TrackStep, truth: TruthRecord, g: gim.GimbalState,
            counts: tuple[int, int], wall_ms: float) -> FrameRecord:
    det = step.detection
    return FrameRecord(
        frame_index=step.frame_index, time=step.time,
        detected=det is not None,
        x=det.position[0] if det else None,
        y=det.position[1] if det else None,
        score=det.score if det else None,
        template_index=det.template_index if det else None,
        templates_evaluated=step.templates_evaluated,
        miss=det is None,
        window=step.window_rect, half_width=step.half_width,
        half_height=step.half_height,
        truth_visible=truth.visible, truth_x=truth.x, truth_y=truth.y,
        truth_heading=truth.heading, gain=truth.gain, offset=truth.offset,
        pan_rad=g.pan, tilt_rad=g.tilt,
        pan_counts=counts[0], tilt_counts=counts[1], saturated=g.saturated,
        wall_ms=wall_ms)


# --------------------------------------------------------------------------
# Scenario files
# --------------------------------------------------------------------------

_SCALAR_KEYS = {
    "width": int, "height": int, "fps": float, "duration": float, "seed": int,
    "sprite_width": int, "sprite_height": int, "sprite_contrast": float,
    "background_base": float, "background_contrast": float,
    "background_cell": int, "distractors": int, "world_margin": int,
    "quantize": int,
}
_SCHEDULE_KEYS = {"position": 3, "heading": 2, "gain": 2, "offset": 2}


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    """Parse the key=value scenario format; errors carry line numbers."""
    values: dict = {}
    for lineno, key, raw in iter_kv_lines(text, source):
        try:
            if key in _SCALAR_KEYS:
                values[key] = _SCALAR_KEYS[key](raw)
            elif key in _SCHEDULE_KEYS:
                values[key] = _parse_schedule(raw, _SCHEDULE_KEYS[key])
            elif key == "dropout":
                values["dropouts"] = _parse_dropouts(raw)
            else:
                raise ValueError(f"unknown key '{key}'")
        except ValueError as e:
            raise ConfigError(f"{source}:{lineno}: {e}") from None
    for required in ("width", "height", "fps", "duration", "seed", "position"):
        if required not in values:
            raise ConfigError(f"{source}: missing required key '{required}'")
    values["quantize"] = bool(values.get("quantize", 0))
    return Scenario(**values).validate()


def load_scenario(path: str) -> Scenario:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read scenario {path}: {e}") from None
    return parse_scenario(text, source=path)


def scenario_text(s: Scenario) -> str:
    """Serialize a scenario to the key=value file format."""
    lines = ["# uavtrack scenario"]
    for key, caster in _SCALAR_KEYS.items():
        attr = "quantize" if key == "quantize" else key
        v = getattr(s, attr)
        lines.append(f"{key}={int(v) if key == 'quantize' else v!r}"
                     if isinstance(v, float) else f"{key}={int(v)}")
    for key in _SCHEDULE_KEYS:
        pts = getattr(s, key)
        lines.append(f"{key}=" + ";".join(
            f"{p[0]!r}:" + ",".join(repr(float(c)) for c in p[1:]) for p in pts))
    if s.dropouts:
        lines.append("dropout=" + ",".join(f"{a!r}-{b!r}" for a, b in s.dropouts))
    return "\n".join(lines) + "\n"


def _parse_schedule(raw: str, arity: int) -> Breakpoints:
    """Parse 't:v' or 't:x,y' breakpoints separated by ';'."""
    points = []
    for item in raw.split(";"):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ValueError(f"breakpoint '{item}' needs the form t:value")
        t_str, v_str = item.split(":", 1)
        comps = [float(c) for c in v_str.split(",")]
        if len(comps) != arity - 1:
            raise ValueError(
                f"breakpoint '{item}' needs {arity - 1} value component(s)")
        points.append((float(t_str), *comps))
    if not points:
        raise ValueError("schedule has no breakpoints")
    if any(b[0] <= a[0] for a, b in zip(points, points[1:])):
        raise ValueError("breakpoint times must strictly increase")
    return points


def _parse_dropouts(raw: str) -> list[tuple[float, float]]:
    spans = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        if "-" not in item:
            raise ValueError(f"dropout '{item}' needs the form start-end")
        a_str, b_str = item.split("-", 1)
        a, b = float(a_str), float(b_str)
        if b <= a:
            raise ValueError(f"dropout '{item}' must have end > start")
        spans.append((a, b))
    return spans


# --------------------------------------------------------------------------
# Standard scenarios
# --------------------------------------------------------------------------

def benign_scenario(seed: int = 11) -> Scenario:
    """500 frames, gentle near-center drift, heading ramp 0-350, gain 0.8-1.3.

    The drift rate stays within what the stiff default filter can follow;
    see the README notes on the tracking envelope.
    """
    return Scenario(
        width=320, height=240, fps=25.0, duration=20.0, seed=seed,
        position=[(0.0, 159.0, 119.0), (10.0, 171.0, 127.0), (20.0, 163.0, 121.0)],
        heading=[(0.0, 0.0), (20.0, 350.0)],
        gain=[(0.0, 1.0), (8.0, 1.3), (16.0, 0.8), (20.0, 1.0)],
    )


def dropout_scenario(seed: int = 23) -> Scenario:
    """Steady track, then a 30-frame dropout (t in [10, 11.2)), then reappearance."""
    return Scenario(
        width=320, height=240, fps=25.0, duration=20.0, seed=seed,
        position=[(0.0, 150.0, 110.0), (20.0, 186.0, 134.0)],
        heading=[(0.0, 0.0)],
        dropouts=[(10.0, 11.2)],
    )


def centering_scenario(seed: int = 31) -> Scenario:
    """Static off-center target for closed-loop gimbal convergence."""
    return Scenario(
        width=320, height=240, fps=25.0, duration=20.0, seed=seed,
        position=[(0.0, 120.0, 96.0)],
        heading=[(0.0, 0.0)],
        distractors=0,
    )


def benchmark_scenario(patch_width: int, patch_height: int, seed: int = 5,
                       n_frames: int = 600) -> Scenario:
    """640x480 quantized scenario used by the throughput benchmark."""
    fps = 25.0
    duration = n_frames / fps
    return Scenario(
        width=640, height=480, fps=fps, duration=duration, seed=seed,
        position=[(0.0, 240.0, 200.0), (duration, 400.0, 280.0)],
        heading=[(0.0, 0.0), (duration, 350.0)],
        sprite_width=patch_width, sprite_height=patch_height,
        distractors=3, quantize=True,
    )
