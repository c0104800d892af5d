import math

import numpy as np
import pytest

from conftest import window
from uavtrack import simulator
from uavtrack.config import ConfigError
from uavtrack.errors import InvalidScenario
from uavtrack.imaging import Patch, extract_patch
from uavtrack.matcher import zmncc_fast
from uavtrack.simulator import (
    Scenario, SceneRenderer, benign_scenario, dropout_scenario,
    parse_scenario, render_sequence, run_closed_loop, scenario_text,
)


def small_scenario(**overrides) -> Scenario:
    base = dict(width=120, height=100, fps=20.0, duration=1.5, seed=3,
                position=[(0.0, 60.0, 50.0)], sprite_width=20, sprite_height=20,
                distractors=1, world_margin=24)
    base.update(overrides)
    return Scenario(**base)


class TestRendering:
    def test_stationary_scene_renders_identical_frames(self):
        frames, truth = render_sequence(small_scenario())
        assert all(np.array_equal(f.pixels, frames[0].pixels) for f in frames)
        assert all(t.visible for t in truth)

    def test_rendering_is_deterministic(self):
        s = small_scenario(heading=[(0.0, 0.0), (1.5, 80.0)])
        f1, _ = render_sequence(s)
        f2, _ = render_sequence(s)
        for a, b in zip(f1, f2):
            assert np.array_equal(a.pixels, b.pixels)

    def test_truth_heading_equals_warp_angle(self):
        s = small_scenario(heading=[(0.0, 0.0), (1.5, 350.0)])
        _, truth = render_sequence(s)
        for rec in truth:
            want = np.interp(rec.time, [0.0, 1.5], [0.0, 350.0]) % 360.0
            assert rec.heading == want

    def test_gain_offset_leave_scores_unchanged(self):
        dim = dict(sprite_contrast=25.0, background_base=80.0,
                   background_contrast=5.0)
        plain = small_scenario(**dim)
        lit = small_scenario(gain=[(0.0, 1.3)], offset=[(0.0, 20.0)], **dim)
        f0, truth0 = render_sequence(plain)
        f1, _ = render_sequence(lit)
        assert f1[0].pixels.max() < 255.0  # the invariance premise: no clipping
        rec = truth0.records[0]
        side = SceneRenderer(plain).canvas_side
        roi = (int(rec.x - (side - 1) / 2), int(rec.y - (side - 1) / 2), 20, 20)
        tpl = extract_patch(f0[0], (roi[0] + (side - 20) // 2,
                                    roi[1] + (side - 20) // 2, 20, 20))
        win = window(0, 0, 120, 100)
        m0 = zmncc_fast(f0[0], tpl, win).scores
        m1 = zmncc_fast(f1[0], tpl, win).scores
        ok = ~np.isnan(m0)
        assert np.array_equal(np.isnan(m0), np.isnan(m1))
        assert np.max(np.abs(m0[ok] - m1[ok])) < 1e-9

    def test_dropout_controls_visibility_exactly(self):
        s = small_scenario(duration=2.0, dropouts=[(0.5, 1.0)])
        frames, truth = render_sequence(s)
        for rec in truth:
            assert rec.visible == (not 0.5 <= rec.time < 1.0)
        hidden = [f for f, t in zip(frames, truth) if not t.visible]
        shown = [f for f, t in zip(frames, truth) if t.visible]
        assert not np.array_equal(hidden[0].pixels, shown[0].pixels)

    def test_quantize_produces_integral_pixels(self):
        s = small_scenario(quantize=True, gain=[(0.0, 1.17)])
        frames, _ = render_sequence(s)
        assert np.array_equal(frames[0].pixels, np.rint(frames[0].pixels))

    def test_viewport_shift_moves_truth(self):
        r = SceneRenderer(small_scenario())
        f0, t0 = r.render(0, (0, 0))
        f1, t1 = r.render(0, (5, -3))
        assert (t1.x, t1.y) == (t0.x - 5, t0.y + 3)
        assert not np.array_equal(f0.pixels, f1.pixels)


class TestValidation:
    def test_target_leaving_frame_rejected(self):
        s = small_scenario(position=[(0.0, 60.0, 50.0), (1.5, 130.0, 50.0)])
        with pytest.raises(InvalidScenario):
            s.validate()

    def test_sprite_bigger_than_frame_rejected(self):
        with pytest.raises(InvalidScenario):
            small_scenario(sprite_width=90, sprite_height=90).validate()

    def test_closed_loop_needs_visible_start(self):
        s = small_scenario(duration=2.0, dropouts=[(0.0, 0.5)])
        with pytest.raises(InvalidScenario):
            run_closed_loop(s)


class TestScenarioFiles:
    def test_text_round_trip(self):
        s = benign_scenario()
        s.dropouts = [(1.0, 2.5)]
        assert parse_scenario(scenario_text(s)) == s

    def test_parse_reports_line_numbers(self):
        text = "width=320\nheight=240\nbogus_key=1\n"
        with pytest.raises(ConfigError, match=":3:"):
            parse_scenario(text)

    def test_parse_rejects_bad_schedule(self):
        text = ("width=120\nheight=100\nfps=20\nduration=1\nseed=1\n"
                "position=0:10\n")
        with pytest.raises(ConfigError, match=":6:"):
            parse_scenario(text)

    def test_parse_rejects_missing_required(self):
        with pytest.raises(ConfigError, match="missing required key"):
            parse_scenario("width=120\n")

    def test_parse_rejects_bad_dropout(self):
        text = ("width=120\nheight=100\nfps=20\nduration=1\nseed=1\n"
                "position=0:60,50\ndropout=2-1\n")
        with pytest.raises(ConfigError, match=":7:"):
            parse_scenario(text)


class TestClosedLoop:
    def test_report_is_deterministic(self):
        s = small_scenario(duration=1.0, heading=[(0.0, 0.0), (1.0, 30.0)])
        r1 = run_closed_loop(s)
        r2 = run_closed_loop(s)
        for a, b in zip(r1.records, r2.records):
            for field in ("frame_index", "detected", "x", "y", "score",
                          "template_index", "templates_evaluated", "window",
                          "half_width", "half_height", "pan_rad", "tilt_rad",
                          "pan_counts", "tilt_counts"):
                assert getattr(a, field) == getattr(b, field)

    def test_benign_truth_error_bounded(self):
        rep = run_closed_loop(benign_scenario())
        det = [r for r in rep.records if r.detected]
        err = sorted(math.hypot(r.x - r.truth_x, r.y - r.truth_y) for r in det)
        assert err[int(0.95 * len(err))] <= 3.0

    def test_dropout_report_shape(self):
        rep = run_closed_loop(dropout_scenario())
        hidden = [r for r in rep.records if not r.truth_visible]
        assert len(hidden) == 30
        assert all(r.miss for r in hidden)

    def test_sprite_has_contrast_headroom(self):
        sprite = simulator.blob_sprite(np.random.default_rng(0), 30, 30, 62.0, 105.0)
        assert sprite.max() <= 195.0 and sprite.min() >= 15.0
        assert Patch(sprite).zm_norm > 0
