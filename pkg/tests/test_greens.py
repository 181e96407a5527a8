import numpy as np
import pytest

from metascreen import greens

L = 20.0
CFG = greens.LatticeConfig(L=L)
KB = 0.1 / (1 - 0.05j)


def spectral_laplace(x, y, n_modes):
    """Raw mode sum of the sound-soft Laplace kernel (image difference)."""

    def gper(zl, zd):
        ns = np.arange(1, n_modes + 1)
        eta = 2 * np.pi * ns / L
        out = np.abs(zd) / (2 * L)
        out -= np.sum(np.cos(eta * zl) * np.exp(-eta * np.abs(zd)) / (2 * np.pi * ns))
        return out

    return gper(x[0] - y[0], x[1] - y[1]) - gper(x[0] - y[0], x[1] + y[1])


def spectral_helmholtz(x, y, k, n_modes):
    """Raw mode sum of the sound-soft Helmholtz kernel (image difference)."""

    def gper(zl, zd):
        out = np.exp(1j * k * np.abs(zd)) / (2j * k * L)
        ns = np.arange(1, n_modes + 1)
        eta = 2 * np.pi * ns / L
        gam = np.sqrt(eta**2 - k**2 + 0j)
        out -= np.sum(np.cos(eta * zl) * np.exp(-gam * np.abs(zd)) / (L * gam))
        return out

    return gper(x[0] - y[0], x[1] - y[1]) - gper(x[0] - y[0], x[1] + y[1])


class TestLaplace:
    def test_wall_trace(self):
        x = np.array([1.0, 2.0])
        assert abs(greens.laplace_gs(x, np.array([5.0, 0.0]), CFG)) == 0.0

    def test_symmetry(self):
        x, y = np.array([1.0, 2.0]), np.array([3.0, 1.0])
        assert abs(greens.laplace_gs(x, y, CFG) - greens.laplace_gs(y, x, CFG)) < 1e-14

    def test_spectral_oracle(self):
        x, y = np.array([1.0, 2.0]), np.array([3.0, 1.0])
        assert abs(greens.laplace_gs(x, y, CFG) - spectral_laplace(x, y, 10_000)) < 1e-12

    def test_coincident_rejected(self):
        x = np.array([1.0, 2.0])
        with pytest.raises(ValueError, match="coincident"):
            greens.laplace_gs(x, x, CFG)

    def test_grad_parity(self):
        # lateral derivative flips sign under z_l -> -z_l at equal heights
        y = np.array([0.0, 1.0])
        gp = greens.laplace_gs_grad(np.array([2.0, 1.3]), y, CFG)
        gm = greens.laplace_gs_grad(np.array([-2.0, 1.3]), y, CFG)
        assert abs(gp[0] + gm[0]) == 0.0

    def test_grad_fd(self):
        x, y = np.array([1.0, 2.0]), np.array([3.0, 1.0])
        h = 1e-6
        g = greens.laplace_gs_grad(x, y, CFG)
        for axis in range(2):
            e = np.eye(2)[axis]
            fd = (greens.laplace_gs(x + h * e, y, CFG) - greens.laplace_gs(x - h * e, y, CFG)) / (2 * h)
            assert abs(g[axis] - fd) < 1e-8

    def test_wall_flux_linear_scaling(self):
        # G_s(x, (y_l, eps)) / eps converges: the value scales linearly in eps
        x = np.array([1.0, 2.0])
        vals = [greens.laplace_gs(x, np.array([3.0, eps]), CFG) for eps in (1e-2, 1e-3, 1e-4)]
        ratios = [vals[0] / vals[1], vals[1] / vals[2]]
        assert np.allclose(ratios, 10.0, rtol=5e-3)


class TestHelmholtz:
    def test_wall_trace(self):
        wave = greens.WaveParams(k=KB)
        x = np.array([1.0, 2.0])
        assert abs(greens.helmholtz_gs(x, np.array([5.0, 0.0]), wave, CFG)) < 1e-13

    def test_symmetry(self):
        wave = greens.WaveParams(k=KB)
        x, y = np.array([1.0, 2.0]), np.array([3.0, 1.0])
        v1 = greens.helmholtz_gs(x, y, wave, CFG)
        v2 = greens.helmholtz_gs(y, x, wave, CFG)
        assert abs(v1 - v2) / abs(v1) < 1e-12

    def test_periodicity(self):
        wave = greens.WaveParams(k=KB)
        x, y = np.array([1.0, 2.0]), np.array([3.0, 1.0])
        v1 = greens.helmholtz_gs(x, y, wave, CFG)
        v2 = greens.helmholtz_gs(x + np.array([L, 0.0]), y, wave, CFG)
        assert abs(v1 - v2) < 1e-12

    def test_spectral_oracle_separated_heights(self):
        # exponential mode decay at |x_d - y_d| = 4 makes 200 modes exact
        wave = greens.WaveParams(k=0.1)
        x, y = np.array([1.0, 5.0]), np.array([3.0, 1.0])
        ref = spectral_helmholtz(x, y, 0.1, 200)
        assert abs(greens.helmholtz_gs(x, y, wave, CFG) - ref) < 1e-12

    def test_small_k_reduces_to_laplace_plus_propagating(self):
        k = 1e-6
        wave = greens.WaveParams(k=k)
        x, y = np.array([1.0, 2.0]), np.array([3.0, 1.0])
        helm = greens.helmholtz_gs(x, y, wave, CFG)
        lap = greens.laplace_gs(x, y, CFG)

        def prop(zd):
            return np.exp(1j * k * abs(zd)) / (2j * k * L) - abs(zd) / (2 * L)

        corr = prop(x[1] - y[1]) - prop(x[1] + y[1])
        assert abs(helm - lap - corr) < 1e-10

    def test_multiple_propagating_modes_rejected(self):
        with pytest.raises(ValueError, match="multiple propagating modes"):
            greens.helmholtz_gs(
                np.array([1.0, 2.0]),
                np.array([3.0, 1.0]),
                greens.WaveParams(k=0.4),
                CFG,
            )

    def test_truncation_doubling(self):
        wave = greens.WaveParams(k=KB)
        x, y = np.array([1.0, 1.4]), np.array([1.5, 1.2])
        v1 = greens.helmholtz_gs(x, y, wave, CFG, n_modes=24)
        v2 = greens.helmholtz_gs(x, y, wave, CFG, n_modes=48)
        assert abs(v1 - v2) <= CFG.tol

    def test_helmholtz_residual_stencil(self):
        # (Delta + k^2) G_s = 0 away from sources, 5-point stencil h = 1e-3
        wave = greens.WaveParams(k=KB)
        y = np.array([3.0, 1.0])
        h = 1e-3
        for x in (np.array([1.0, 2.0]), np.array([-2.0, 0.7])):
            def f(p):
                return greens.helmholtz_gs(p, y, wave, CFG)

            lap = (
                f(x + [h, 0]) + f(x - [h, 0]) + f(x + [0, h]) + f(x - [0, h]) - 4 * f(x)
            ) / h**2
            assert abs(lap + KB**2 * f(x)) < 1e-5


class TestHelmholtzGrad:
    def test_fd(self):
        wave = greens.WaveParams(k=KB)
        x, y = np.array([1.0, 2.0]), np.array([3.0, 1.0])
        h = 1e-6
        g = greens.helmholtz_gs_grad(x, y, wave, CFG)
        for axis in range(2):
            e = np.eye(2)[axis]
            fd = (
                greens.helmholtz_gs(x + h * e, y, wave, CFG)
                - greens.helmholtz_gs(x - h * e, y, wave, CFG)
            ) / (2 * h)
            assert abs(g[axis] - fd) < 1e-7

    def test_small_k_reduces_to_laplace_grad(self):
        k = 1e-6
        wave = greens.WaveParams(k=k)
        x, y = np.array([1.0, 2.0]), np.array([3.0, 1.0])
        g = greens.helmholtz_gs_grad(x, y, wave, CFG)
        gl = greens.laplace_gs_grad(x, y, CFG)

        def dprop(zd):
            return np.sign(zd) * (np.exp(1j * k * abs(zd)) - 1.0) / (2 * L)

        corr = dprop(x[1] - y[1]) - dprop(x[1] + y[1])
        assert abs(g[0] - gl[0]) < 1e-9
        assert abs(g[1] - gl[1] - corr) < 1e-9

    def test_periodicity(self):
        wave = greens.WaveParams(k=KB)
        x, y = np.array([1.0, 2.0]), np.array([3.0, 1.0])
        g1 = greens.helmholtz_gs_grad(x, y, wave, CFG)
        g2 = greens.helmholtz_gs_grad(x + np.array([L, 0.0]), y, wave, CFG)
        assert np.abs(g1 - g2).max() < 1e-12


class TestConfigObjects:
    def test_lattice_validation(self):
        with pytest.raises(ValueError):
            greens.LatticeConfig(L=-1.0)
        with pytest.raises(ValueError):
            greens.LatticeConfig(L=20.0, alpha=1.0)

    def test_oblique_unsupported(self):
        cfg = greens.LatticeConfig(L=20.0, alpha=0.1)
        with pytest.raises(ValueError, match="oblique"):
            greens.laplace_gs(np.array([1.0, 2.0]), np.array([3.0, 1.0]), cfg)

    def test_wave_branch_rule(self):
        with pytest.raises(ValueError):
            greens.WaveParams(k=-0.1)
        with pytest.raises(ValueError):
            greens.WaveParams(k=0.1 - 0.01j)
        w = greens.WaveParams.from_speed(0.1, 1.0 - 0.05j)
        assert w.k.imag > 0


class TestPolylog:
    def test_against_mpmath(self):
        mp = pytest.importorskip("mpmath")
        rng = np.random.default_rng(1)
        for p in range(1, 8):
            for _ in range(8):
                zl = rng.uniform(-9, 9)
                d = rng.uniform(0, 11)
                mu = 2 * np.pi * (d - 1j * zl) / L
                if abs(mu) >= 0.9 * 2 * np.pi:
                    continue
                mine = greens._polylog_exp(p, np.array([mu]))[0]
                ref = complex(mp.polylog(p, complex(np.exp(-mu))))
                assert abs(mine - ref) < 1e-12
