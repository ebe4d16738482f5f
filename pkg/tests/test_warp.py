import numpy as np
import pytest
import torch

from motiondict.warp import SpatialMismatchError, identity_grid, warp, warp_pyramid


def sample_smooth_instance(rng: np.random.Generator, h: int = 5, w: int = 5):
    """Random (feature, flow) whose sample points sit strictly inside the
    grid and away from bilinear kinks (integer crossings), so central
    differences are valid: target coordinates are drawn cell + fraction
    and converted back to displacements."""
    feature = torch.from_numpy(rng.uniform(-1, 1, (1, h, w)))
    px = rng.integers(0, w - 1, (h, w)) + rng.uniform(0.15, 0.85, (h, w))
    py = rng.integers(0, h - 1, (h, w)) + rng.uniform(0.15, 0.85, (h, w))
    flow = np.stack(
        [
            (px - np.arange(w)[None, :]) * 2.0 / (w - 1),
            (py - np.arange(h)[:, None]) * 2.0 / (h - 1),
        ]
    )
    return feature, torch.from_numpy(flow)


def warp_gradient_check(seed: int, instances: int, rel_tol: float = 1e-3, stride: int = 7) -> int:
    """Compare autograd warp gradients (both arguments) against central
    finite differences on float64 instances; returns the count checked."""
    rng = np.random.default_rng(seed)
    checked = 0
    while checked < instances:
        feature, flow = sample_smooth_instance(rng)
        checked += 1
        feature.requires_grad_(True)
        flow.requires_grad_(True)
        weights = torch.from_numpy(rng.normal(size=feature.shape))
        loss = (warp(feature, flow) * weights).sum()
        grad_feature, grad_flow = torch.autograd.grad(loss, (feature, flow))
        eps = 1e-6

        def loss_at(f, fl):
            return float((warp(f, fl) * weights).sum())

        for which, grad in (("feature", grad_feature), ("flow", grad_flow)):
            base = (feature if which == "feature" else flow).detach()
            for k in range(0, base.numel(), stride):
                plus, minus = base.clone().flatten(), base.clone().flatten()
                plus[k] += eps
                minus[k] -= eps
                if which == "feature":
                    fd = (
                        loss_at(plus.view(base.shape), flow.detach())
                        - loss_at(minus.view(base.shape), flow.detach())
                    ) / (2 * eps)
                else:
                    fd = (
                        loss_at(feature.detach(), plus.view(base.shape))
                        - loss_at(feature.detach(), minus.view(base.shape))
                    ) / (2 * eps)
                analytic = grad.flatten()[k].item()
                assert abs(fd - analytic) <= rel_tol * max(1.0, abs(fd)), (
                    f"{which}[{k}]: fd={fd} analytic={analytic}"
                )
    return checked


def bilinear_oracle(feature: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Brute-force bilinear interpolation, float64 loops, border clamp."""
    c, h, w = feature.shape
    out = np.zeros((c, h, w), dtype=np.float64)
    feature = feature.astype(np.float64)
    flow = flow.astype(np.float64)
    for i in range(h):
        for j in range(w):
            px = min(max(j + flow[0, i, j] * (w - 1) / 2.0, 0.0), float(w - 1))
            py = min(max(i + flow[1, i, j] * (h - 1) / 2.0, 0.0), float(h - 1))
            x0, y0 = int(np.floor(px)), int(np.floor(py))
            x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
            wx, wy = px - x0, py - y0
            for ch in range(c):
                top = feature[ch, y0, x0] * (1 - wx) + feature[ch, y0, x1] * wx
                bottom = feature[ch, y1, x0] * (1 - wx) + feature[ch, y1, x1] * wx
                out[ch, i, j] = top * (1 - wy) + bottom * wy
    return out


class TestIdentityGrid:
    def test_2x2_corners(self):
        grid = identity_grid(2, 2)
        assert torch.equal(grid[0], torch.tensor([[-1.0, 1.0], [-1.0, 1.0]]))
        assert torch.equal(grid[1], torch.tensor([[-1.0, -1.0], [1.0, 1.0]]))

    def test_degenerate_height(self):
        grid = identity_grid(1, 3)
        assert torch.equal(grid[0], torch.tensor([[-1.0, 0.0, 1.0]]))
        assert torch.equal(grid[1], torch.zeros(1, 3))

    def test_matches_linspace_loop(self):
        grid = identity_grid(4, 4)
        for i in range(4):
            for j in range(4):
                assert grid[0, i, j].item() == pytest.approx(-1.0 + 2.0 * j / 3.0, abs=1e-7)
                assert grid[1, i, j].item() == pytest.approx(-1.0 + 2.0 * i / 3.0, abs=1e-7)

    def test_nonpositive_sizes(self):
        with pytest.raises(SpatialMismatchError):
            identity_grid(0, 3)


class TestWarp:
    def test_zero_flow_identity(self):
        torch.manual_seed(0)
        feature = torch.randn(3, 7, 7)
        out = warp(feature, torch.zeros(2, 7, 7))
        assert (out - feature).abs().max() < 1e-6
        assert torch.equal(out, feature)  # exact by construction

    def test_zero_flow_identity_double(self):
        torch.manual_seed(1)
        feature = torch.randn(2, 5, 6, dtype=torch.float64)
        out = warp(feature, torch.zeros(2, 5, 6, dtype=torch.float64))
        assert (out - feature).abs().max() < 1e-12

    def test_ramp_shift_closed_form(self):
        # horizontal ramp f(x) = x; constant displacement dx shifts values
        w = 9
        xs = torch.linspace(-1.0, 1.0, w)
        feature = xs.expand(1, 4, w).clone()
        dx = 0.25
        flow = torch.zeros(2, 4, w)
        flow[0] = dx
        out = warp(feature, flow)
        for j in range(w):
            px = min(j + dx * (w - 1) / 2.0, w - 1.0)
            x0 = int(np.floor(px))
            x1 = min(x0 + 1, w - 1)
            frac = px - x0
            expected = float(xs[x0]) * (1 - frac) + float(xs[x1]) * frac
            assert out[0, 0, j].item() == pytest.approx(expected, abs=1e-6)

    def test_out_of_range_clamps_to_border(self):
        feature = torch.arange(12.0).reshape(1, 3, 4)
        flow = torch.zeros(2, 3, 4)
        flow[0] = 5.0  # pushes every x sample beyond +1
        out = warp(feature, flow)
        border = feature[:, :, -1:]
        assert torch.equal(out, border.expand(1, 3, 4))

    def test_matches_brute_force_oracle_single(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            h, w = rng.integers(3, 8, size=2)
            feature = torch.from_numpy(rng.uniform(-1, 1, (3, h, w)).astype(np.float32))
            flow = torch.from_numpy(rng.uniform(-1.3, 1.3, (2, h, w)).astype(np.float32))
            expected = bilinear_oracle(feature.numpy(), flow.numpy())
            got = warp(feature, flow).numpy()
            assert np.abs(got - expected).max() < 1e-6

    def test_matches_brute_force_oracle_double(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            h, w = rng.integers(3, 8, size=2)
            feature = torch.from_numpy(rng.uniform(-1, 1, (2, h, w)))
            flow = torch.from_numpy(rng.uniform(-1.3, 1.3, (2, h, w)))
            expected = bilinear_oracle(feature.numpy(), flow.numpy())
            got = warp(feature, flow).numpy()
            assert np.abs(got - expected).max() < 1e-12

    def test_linearity_in_features(self):
        torch.manual_seed(2)
        f = torch.randn(2, 6, 6)
        g = torch.randn(2, 6, 6)
        flow = torch.randn(2, 6, 6) * 0.4
        combined = warp(2.5 * f + 0.5 * g, flow)
        split = 2.5 * warp(f, flow) + 0.5 * warp(g, flow)
        assert (combined - split).abs().max() < 1e-6

    def test_boundedness(self):
        torch.manual_seed(3)
        for _ in range(10):
            f = torch.randn(1, 5, 5)
            flow = torch.randn(2, 5, 5) * 2.0
            out = warp(f, flow)
            assert out.max() <= f.max() + 1e-6
            assert out.min() >= f.min() - 1e-6

    def test_gradients_match_central_differences(self):
        # analytic (autograd) vs central finite differences, double precision,
        # sampled away from bilinear kinks and the border clamp
        count = warp_gradient_check(seed=9, instances=20)
        assert count == 20

    def test_spatial_mismatch(self):
        with pytest.raises(SpatialMismatchError):
            warp(torch.zeros(3, 4, 4), torch.zeros(2, 5, 5))
        with pytest.raises(SpatialMismatchError):
            warp(torch.zeros(3, 4, 4), torch.zeros(3, 4, 4))


class TestWarpPyramid:
    def test_zero_flows_identity(self):
        torch.manual_seed(4)
        pyramid = [torch.randn(2, s, s) for s in (4, 8, 16)]
        flows = [torch.zeros(2, s, s) for s in (4, 8, 16)]
        out = warp_pyramid(pyramid, flows)
        for level, original in zip(out, pyramid):
            assert (level - original).abs().max() < 1e-6

    def test_single_level_reduces_to_warp(self):
        torch.manual_seed(5)
        level = torch.randn(3, 6, 6)
        flow = torch.randn(2, 6, 6) * 0.3
        assert torch.equal(warp_pyramid([level], [flow])[0], warp(level, flow))

    def test_levels_equal_independent_calls(self):
        torch.manual_seed(6)
        pyramid = [torch.randn(2, s, s) for s in (4, 8)]
        flows = [torch.randn(2, s, s) * 0.2 for s in (4, 8)]
        out = warp_pyramid(pyramid, flows)
        for level, flow, got in zip(pyramid, flows, out):
            assert torch.equal(got, warp(level, flow))

    def test_level_count_mismatch(self):
        with pytest.raises(SpatialMismatchError):
            warp_pyramid([torch.zeros(1, 4, 4)], [])
