import math

import numpy as np
import pytest

from layup.sheet_state import (CaptureFrame, SectorGaussians, SheetGeometry,
                               assign_sector, average_states, build_state,
                               filter_uncompacted, fit_ellipse,
                               read_capture_frames, segment_regions,
                               write_capture_frames)


def frame_from(points, t=0):
    return CaptureFrame(points=np.asarray(points, dtype=float), t=t)


def polar(deg, r=100.0):
    a = math.radians(deg)
    return np.array([r * math.cos(a), r * math.sin(a)])


class TestAssignSector:
    def test_first_wedge(self, square_geom):
        assert assign_sector(polar(10.0), square_geom) == 1

    def test_boundary_belongs_to_upper_wedge(self, square_geom):
        # (100, 100) sits exactly on the 45-degree boundary
        assert assign_sector(np.array([100.0, 100.0]), square_geom) == 2

    def test_last_wedge(self, square_geom):
        assert assign_sector(polar(359.0), square_geom) == 8

    def test_center_tie_break(self, square_geom):
        assert assign_sector(np.zeros(2), square_geom) == 1

    def test_partition(self, square_geom):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-140, 140, size=(500, 2))
        sectors = [assign_sector(p, square_geom) for p in pts]
        assert all(1 <= s <= 8 for s in sectors)
        # every point lands in the wedge its angle dictates
        for p, s in zip(pts, sectors):
            ang = math.atan2(p[1], p[0]) % (2 * math.pi)
            assert s == min(int(ang // (math.pi / 4)) + 1, 8)


class TestFilterUncompacted:
    def test_threshold_strict(self):
        fr = frame_from([[0, 0, 0.0], [1, 0, 0.4], [2, 0, 2.1]])
        kept = filter_uncompacted(fr, 0.5)
        assert kept.shape == (1, 3)
        assert kept[0, 2] == 2.1

    def test_fully_compacted(self):
        fr = frame_from([[0, 0, 0.0], [1, 1, 0.0]])
        assert len(filter_uncompacted(fr, 0.5)) == 0

    def test_gaussian_bump_level_set(self):
        # peak 5 bump: h > 0.5 exactly inside radius sigma*sqrt(2 ln 10)
        sigma = 20.0
        xs = np.arange(-80, 81, 4.0)
        gx, gy = np.meshgrid(xs, xs)
        r2 = gx.ravel() ** 2 + gy.ravel() ** 2
        h = 5.0 * np.exp(-r2 / (2 * sigma**2))
        fr = frame_from(np.column_stack([gx.ravel(), gy.ravel(), h]))
        kept = filter_uncompacted(fr, 0.5)
        r_star2 = 2 * sigma**2 * math.log(10.0)
        inside = r2 < r_star2
        assert len(kept) == inside.sum()
        kept_r2 = kept[:, 0] ** 2 + kept[:, 1] ** 2
        assert kept_r2.max() < r_star2

    def test_rejects_nonpositive_floor(self):
        with pytest.raises(ValueError):
            filter_uncompacted(frame_from([[0, 0, 1.0]]), 0.0)


class TestSegmentRegions:
    def test_two_clusters(self):
        a = np.array([[0, 0, 1.0], [4, 0, 1.0], [0, 4, 1.0]])
        b = a + np.array([100.0, 0, 0])
        groups = segment_regions(np.vstack([a, b]), link_radius=10.0)
        assert len(groups) == 2
        assert [len(g) for g in groups] == [3, 3]

    def test_single_point(self):
        groups = segment_regions(np.array([[1.0, 2.0, 3.0]]), link_radius=10.0)
        assert len(groups) == 1 and len(groups[0]) == 1

    def test_chain_linkage(self):
        pts = np.array([[0, 0, 1.0], [8, 0, 1.0], [16, 0, 1.0]])
        assert len(segment_regions(pts, link_radius=10.0)) == 1

    def test_deterministic_ordering(self):
        rng = np.random.default_rng(11)
        clusters = [rng.normal(c, 2.0, size=(10, 2)) for c in
                    [(50, 0), (-50, 20), (0, -60)]]
        pts = np.vstack([np.column_stack([c, np.ones(len(c))]) for c in clusters])
        groups = segment_regions(pts, link_radius=12.0)
        mins = [(g[:, 0].min(), g[:, 1].min()) for g in groups]
        assert mins == sorted(mins)

    def test_partition_invariant_under_input_order(self):
        rng = np.random.default_rng(14)
        clusters = [rng.normal(c, 3.0, size=(8, 2)) for c in
                    [(40, 40), (-60, 10), (10, -70), (80, -20)]]
        pts = np.vstack([np.column_stack([c, np.ones(len(c))]) for c in clusters])
        permuted = pts[rng.permutation(len(pts))]

        def signature(groups):
            return sorted((len(g), round(float(g[:, 0].min()), 9),
                           round(float(g[:, 1].min()), 9)) for g in groups)

        assert signature(segment_regions(pts, 12.0)) == \
            signature(segment_regions(permuted, 12.0))


class TestFitEllipse:
    def test_line_along_x(self):
        pts = np.column_stack([np.linspace(-10, 10, 21), np.zeros(21), np.ones(21)])
        ell = fit_ellipse(pts)
        assert ell.theta == 0.0
        assert ell.b == 0.0
        assert ell.a > 0

    def test_isotropic_tie_break(self):
        pts = np.array([[1, 0, 1.0], [-1, 0, 1.0], [0, 1, 1.0], [0, -1, 1.0]])
        ell = fit_ellipse(pts)
        assert abs(ell.a - ell.b) < 1e-12
        assert ell.theta == 0.0

    def test_single_point_degenerate(self):
        ell = fit_ellipse(np.array([[3.0, 4.0, 2.0]]))
        assert ell.a == 0.0 and ell.b == 0.0 and ell.theta == 0.0
        assert ell.mean_height == 2.0

    def test_recovers_known_gaussian(self):
        rng = np.random.default_rng(42)
        theta = math.radians(30.0)
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        xy = rng.normal(size=(10_000, 2)) * [20.0, 5.0] @ rot.T
        ell = fit_ellipse(np.column_stack([xy, np.ones(len(xy))]))
        assert abs(ell.a - 40.0) / 40.0 < 0.05
        assert abs(ell.b - 10.0) / 10.0 < 0.05
        assert abs(math.degrees(ell.theta) - 30.0) < 2.0

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(5)
        xy = rng.normal(size=(300, 2)) * [12.0, 3.0]
        base = fit_ellipse(np.column_stack([xy, np.ones(len(xy))]))
        phi = 0.7
        rot = np.array([[math.cos(phi), -math.sin(phi)],
                        [math.sin(phi), math.cos(phi)]])
        turned = fit_ellipse(np.column_stack([xy @ rot.T, np.ones(len(xy))]))
        assert abs(turned.a - base.a) < 1e-6
        assert abs(turned.b - base.b) < 1e-6
        d = (turned.theta - base.theta - phi) % math.pi
        assert min(d, math.pi - d) < 1e-9


def bump_points(center, sigma, peak, extent=60.0, pitch=4.0):
    xs = np.arange(center[0] - extent, center[0] + extent + pitch / 2, pitch)
    ys = np.arange(center[1] - extent, center[1] + extent + pitch / 2, pitch)
    gx, gy = np.meshgrid(xs, ys)
    r2 = (gx - center[0]) ** 2 + (gy - center[1]) ** 2
    h = peak * np.exp(-r2 / (2 * sigma**2))
    return np.column_stack([gx.ravel(), gy.ravel(), h.ravel()])


class TestBuildState:
    def test_fully_compacted(self, square_geom):
        pts = bump_points((0, 0), 10.0, 0.0)
        state = build_state(frame_from(pts), square_geom)
        assert state.all_sentinel

    def test_single_bump_lands_in_its_sector(self, square_geom):
        center = polar(112.5, 90.0)  # middle of sector 3
        state = build_state(frame_from(bump_points(center, 12.0, 4.0)), square_geom)
        live = [s.sector for s in state.sectors if not s.is_sentinel]
        assert live == [3]
        s3 = state.sector(3)
        assert np.linalg.norm(s3.mu1[:2] - center) < 5.0
        assert s3.mu1[2] > 0.5

    def test_weighted_mean_matches_pointwise_oracle(self, square_geom):
        # two well-separated bumps, both inside sector 1
        c1, c2 = polar(8.0, 70.0), polar(38.0, 115.0)
        pts = np.vstack([bump_points(c1, 7.0, 4.0, extent=30),
                         bump_points(c2, 10.0, 3.0, extent=40)])
        frame = frame_from(pts)
        state = build_state(frame, square_geom)
        s1 = state.sector(1)
        assert s1.sample_count == 2
        # count-weighted mean over regions equals the plain mean of the
        # filtered points, recomputed here from scratch
        kept = pts[pts[:, 2] > 0.5]
        assert np.allclose(s1.mu1, kept.mean(axis=0), atol=1e-9)

    def test_single_region_sigma2_zero(self, square_geom):
        state = build_state(frame_from(bump_points(polar(70, 90), 12.0, 4.0)),
                            square_geom)
        s2 = state.sector(2)
        assert s2.sample_count == 1
        assert np.all(s2.sigma2 == 0.0)
        assert np.trace(s2.sigma1) > 0

    def test_covariances_psd(self, square_geom):
        rng = np.random.default_rng(8)
        pts = np.column_stack([rng.uniform(-140, 140, (400, 2)),
                               rng.uniform(0, 3.0, 400)])
        state = build_state(frame_from(pts), square_geom)
        for s in state.sectors:
            for m in (s.sigma1, s.sigma2):
                assert np.allclose(m, m.T)
                assert np.linalg.eigvalsh(m).min() > -1e-9

    def test_height_scaling_exact_on_fixed_level_set(self, square_geom):
        # discrete heights keep the filtered point set identical under
        # scaling, so the mean height scales exactly and xy stays put
        rng = np.random.default_rng(12)
        xy = polar(200, 100) + rng.normal(0, 6, size=(40, 2))
        h = rng.choice([2.0, 3.0, 4.0], size=40)
        pts = np.column_stack([xy, h])
        doubled = pts.copy()
        doubled[:, 2] *= 2.0
        s_base = build_state(frame_from(pts), square_geom)
        s_doubled = build_state(frame_from(doubled), square_geom)
        for a, b in zip(s_base.sectors, s_doubled.sectors):
            assert a.is_sentinel == b.is_sentinel
            if a.is_sentinel:
                continue
            assert np.array_equal(b.mu1[:2], a.mu1[:2])
            assert b.mu1[2] == pytest.approx(2.0 * a.mu1[2], rel=1e-12)
            assert np.array_equal(b.mu2[:2], a.mu2[:2])

    def test_deterministic(self, square_geom):
        pts = bump_points(polar(300, 100), 15.0, 5.0)
        a = build_state(frame_from(pts), square_geom)
        b = build_state(frame_from(pts), square_geom)
        assert a.to_json() == b.to_json()


class TestCaptureIO:
    def test_round_trip(self, tmp_path):
        frames = [CaptureFrame(points=np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 0.1]]), t=0),
                  CaptureFrame(points=np.array([[5.0, 6.0, 0.0]]), t=1)]
        target = tmp_path / "caps.jsonl"
        write_capture_frames(target, frames)
        back = read_capture_frames(target)
        assert len(back) == 2
        for orig, rt in zip(frames, back):
            assert rt.t == orig.t
            assert np.array_equal(rt.points, orig.points)

    def test_bad_record_names_line(self, tmp_path):
        target = tmp_path / "caps.jsonl"
        target.write_text('{"t": 0, "points": [[0, 0, 1.0]]}\nnot json\n')
        with pytest.raises(ValueError, match=":2:"):
            read_capture_frames(target)


class TestAverageStates:
    def test_union_of_live_sectors(self, square_geom):
        s_a = build_state(frame_from(bump_points(polar(20, 90), 10, 4.0)), square_geom)
        s_b = build_state(frame_from(bump_points(polar(200, 90), 10, 4.0)), square_geom)
        avg = average_states([s_a, s_b])
        live = {s.sector for s in avg.sectors if not s.is_sentinel}
        assert live == {1, 5}

    def test_mean_of_means(self, square_geom):
        sectors_a = [SectorGaussians.sentinel(i) for i in range(1, 9)]
        sectors_b = [SectorGaussians.sentinel(i) for i in range(1, 9)]
        from layup.sheet_state import SheetState
        sa = SheetState(square_geom, sectors_a)
        sb = SheetState(square_geom, sectors_b)
        sa.sectors[0] = SectorGaussians(1, np.array([1.0, 2.0, 3.0]), np.eye(3),
                                        np.array([4.0, 2.0, 0.5]), np.eye(3), 1)
        sb.sectors[0] = SectorGaussians(1, np.array([3.0, 4.0, 5.0]), np.eye(3),
                                        np.array([6.0, 4.0, 1.5]), np.eye(3), 1)
        avg = average_states([sa, sb])
        assert np.allclose(avg.sector(1).mu1, [2.0, 3.0, 4.0])
        assert np.allclose(avg.sector(1).mu2, [5.0, 3.0, 1.0])
