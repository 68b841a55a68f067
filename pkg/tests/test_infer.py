import numpy as np
import pytest

import bridgemark as bm
from bridgemark.errors import DomainError, EstimationError
from bridgemark.infer import (estimate_for_variance, export_mean_trajectory_csv,
                              export_methods_csv, export_sweep_csv)


def family_setup(displacement=(0.6, -0.2, 0.4, 0.5), kappa=0.8):
    shape = bm.LandmarkShape(np.array([[0.0, 0.0], [1.0, 0.3]]))
    family = bm.BrownianVarianceFamily(shape=shape, lengthscale=kappa)
    x0 = shape.flat
    x1 = x0 + np.asarray(displacement, dtype=float)
    return family, x0, x1


def profile_mle(family, x0, x1, duration=1.0):
    """Closed-form argmax of -(k/2) log v - (1/(2v)) z^T z."""
    unit = family.unit_sigma()
    z = np.linalg.lstsq(np.sqrt(duration) * unit, x1 - x0, rcond=None)[0]
    return float(z @ z) / x0.size


def small_config(seed=0, n=200, steps=100, mode="variance_profile"):
    return bm.EstimatorConfig(grid=bm.TimeGrid(0.0, 1.0, steps), n_samples=n,
                              mode=mode, seed=seed, proposal="reverse_analytic",
                              guard_steps=2)


class TestLoglikSweep:
    def test_argmax_matches_analytic_mle(self):
        family, x0, x1 = family_setup()
        v_star = profile_mle(family, x0, x1)
        grid_v = np.linspace(0.3 * v_star, 3 * v_star, 21)
        result = bm.loglik_sweep(x0, x1, family, grid_v, small_config(seed=3))
        unit = family.unit_sigma()
        z2 = float(np.linalg.lstsq(unit, x1 - x0, rcond=None)[0] @
                   np.linalg.lstsq(unit, x1 - x0, rcond=None)[0])
        analytic = -0.5 * x0.size * np.log(grid_v) - 0.5 * z2 / grid_v
        spacing = grid_v[1] - grid_v[0]
        assert abs(result.argmax_v - grid_v[np.argmax(analytic)]) <= spacing + 1e-12

    def test_single_point_grid(self):
        family, x0, x1 = family_setup()
        result = bm.loglik_sweep(x0, x1, family, [1.2], small_config(n=50, steps=30))
        assert result.argmax_v == 1.2

    def test_bit_identical_rerun(self):
        family, x0, x1 = family_setup()
        grid_v = np.linspace(0.5, 2.0, 5)
        a = bm.loglik_sweep(x0, x1, family, grid_v, small_config(seed=9, n=80, steps=40))
        b = bm.loglik_sweep(x0, x1, family, grid_v, small_config(seed=9, n=80, steps=40))
        assert a.logliks.tolist() == b.logliks.tolist()

    def test_intra_class_argmax_below_inter_class(self):
        # canid-analogue ordering on synthetic blobs: a bridge to a small
        # perturbation of the source prefers a smaller variance than a
        # bridge to a strongly perturbed target
        source = bm.synth_shape("blob", 20, {"amplitude": 0.10}, seed=1)
        rng = np.random.default_rng(2)
        intra = bm.LandmarkShape(source.points + 0.03 * rng.normal(size=source.points.shape))
        inter = bm.LandmarkShape(source.points + 0.35 * rng.normal(size=source.points.shape))
        family = bm.BrownianVarianceFamily(shape=source, lengthscale=0.5)
        grid_v = np.geomspace(1e-4, 1.0, 25)
        config = small_config(seed=5, n=120, steps=60)
        arg_intra = bm.loglik_sweep(source.flat, intra.flat, family, grid_v, config).argmax_v
        arg_inter = bm.loglik_sweep(source.flat, inter.flat, family, grid_v, config).argmax_v
        assert arg_intra < arg_inter

    def test_failure_reports_offending_v(self):
        family, x0, _ = family_setup()
        far = x0 + 1e200
        with pytest.raises(EstimationError, match="v=0.5"):
            bm.loglik_sweep(x0, far, family, [0.5],
                            small_config(n=4, steps=1, mode="full_gaussian"))

    def test_invalid_grid_rejected(self):
        family, x0, x1 = family_setup()
        with pytest.raises(DomainError):
            bm.loglik_sweep(x0, x1, family, [2.0, 1.0], small_config())

    def test_threads_do_not_change_results(self):
        family, x0, x1 = family_setup()
        grid_v = np.linspace(0.5, 2.0, 6)
        serial = bm.loglik_sweep(x0, x1, family, grid_v, small_config(seed=4, n=60, steps=30))
        threaded_cfg = bm.EstimatorConfig(grid=bm.TimeGrid(0.0, 1.0, 30), n_samples=60,
                                          mode="variance_profile", seed=4,
                                          proposal="reverse_analytic", threads=3)
        threaded = bm.loglik_sweep(x0, x1, family, grid_v, threaded_cfg)
        assert serial.logliks.tolist() == threaded.logliks.tolist()


class TestPathwiseGradient:
    def test_constant_objective(self):
        grad = bm.pathwise_gradient(lambda p: 3.5, np.array([1.0, -2.0]))
        np.testing.assert_array_equal(grad, np.zeros(2))

    def test_brownian_mean_gradient_analytic(self):
        # d/dmu log N(x1; mu, T v I) = (x1 - mu) / (T v), estimated
        # through the full sampler with common random numbers
        family, _, _ = family_setup()
        shape = bm.LandmarkShape(np.array([[0.1, -0.2]]))
        family = bm.BrownianVarianceFamily(shape=shape, lengthscale=1.0)
        x1 = shape.flat + np.array([0.8, -0.5])
        config = small_config(seed=11, n=400, steps=80, mode="full_gaussian")
        v = 1.0

        def objective(mu):
            return estimate_for_variance(family, v, mu, x1, config).value

        grad = bm.pathwise_gradient(objective, shape.flat)
        expected = (x1 - shape.flat) / (1.0 * v)
        assert np.abs(grad - expected).max() <= 1e-3 * np.abs(expected).max()

    def test_agrees_with_plain_central_differences(self):
        family, x0, x1 = family_setup()
        config = small_config(seed=12, n=100, steps=50)

        def objective(theta):
            return estimate_for_variance(family, float(np.exp(theta[0])),
                                         x0, x1, config).value

        rng = np.random.default_rng(13)
        for _ in range(5):
            theta = rng.uniform(np.log(0.3), np.log(3.0), size=1)
            ours = bm.pathwise_gradient(objective, theta)
            h = 1e-4
            fd = (objective(theta + h) - objective(theta - h)) / (2 * h)
            assert abs(ours[0] - fd) <= 1e-3 * max(abs(fd), 1e-8)

    def test_nonfinite_gradient_raises(self):
        with pytest.raises(EstimationError):
            bm.pathwise_gradient(lambda p: float(np.inf) if p[0] > 0 else 0.0,
                                 np.array([0.0]))


class TestInferVariance:
    def test_recovers_profile_mle_from_two_inits(self):
        family, x0, x1 = family_setup()
        v_star = profile_mle(family, x0, x1)
        config = small_config(seed=21, n=200, steps=100)
        fits = [bm.infer_variance(x0, x1, family, init, config)
                for init in (0.1 * v_star, 10 * v_star)]
        for fit in fits:
            assert abs(fit.v - v_star) <= 0.02 * v_star
        assert abs(fits[0].v - fits[1].v) <= 0.05 * v_star

    def test_init_at_mle_terminates_quickly(self):
        family, x0, x1 = family_setup()
        v_star = profile_mle(family, x0, x1)
        config = small_config(seed=22, n=200, steps=100)
        fit = bm.infer_variance(x0, x1, family, v_star, config)
        assert fit.converged
        assert fit.iterations <= 3
        assert abs(fit.v - v_star) <= 0.02 * v_star

    def test_history_monotone(self):
        family, x0, x1 = family_setup()
        config = small_config(seed=23, n=100, steps=50)
        fit = bm.infer_variance(x0, x1, family, 0.2, config)
        values = [ll for _, ll in fit.history]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    def test_rejects_bad_init(self):
        family, x0, x1 = family_setup()
        with pytest.raises(DomainError):
            bm.infer_variance(x0, x1, family, -1.0, small_config())


class TestDiffusionMean:
    def make_observations(self, n_obs=10, seed=40):
        rng = np.random.default_rng(seed)
        # unit-variance 2D Brownian motion from the origin at T = 1
        return [bm.LandmarkShape(rng.normal(0.0, 1.0, size=(1, 2)))
                for _ in range(n_obs)]

    def test_converges_to_arithmetic_mean(self):
        observations = self.make_observations()
        family = bm.BrownianVarianceFamily(
            shape=bm.LandmarkShape(np.zeros((1, 2))), lengthscale=1.0)
        config = small_config(seed=41, n=150, steps=50, mode="full_gaussian")
        init = bm.LandmarkShape(np.array([[1.5, -1.0]]))
        traj = bm.diffusion_mean(observations, family, init, config, v=1.0)
        target = np.mean([obs.flat for obs in observations], axis=0)
        assert np.linalg.norm(traj.final.flat - target) <= 0.05
        assert len(traj.iterates) == len(traj.logliks)

    def test_joint_loglik_nondecreasing(self):
        observations = self.make_observations(n_obs=4, seed=42)
        family = bm.BrownianVarianceFamily(
            shape=bm.LandmarkShape(np.zeros((1, 2))), lengthscale=1.0)
        config = small_config(seed=43, n=80, steps=30, mode="full_gaussian")
        init = bm.LandmarkShape(np.array([[1.0, 1.0]]))
        traj = bm.diffusion_mean(observations, family, init, config, v=1.0)
        lls = traj.logliks
        assert all(b >= a - 1e-12 for a, b in zip(lls, lls[1:]))

    def test_single_observation_converges_to_it(self):
        obs = [bm.LandmarkShape(np.array([[0.7, -0.4]]))]
        family = bm.BrownianVarianceFamily(
            shape=bm.LandmarkShape(np.zeros((1, 2))), lengthscale=1.0)
        config = small_config(seed=44, n=100, steps=40, mode="full_gaussian")
        init = bm.LandmarkShape(np.array([[-0.5, 0.8]]))
        traj = bm.diffusion_mean(obs, family, init, config, v=1.0)
        assert np.linalg.norm(traj.final.flat - obs[0].flat) <= 0.05

    def test_permutation_invariance(self):
        observations = self.make_observations(n_obs=5, seed=45)
        family = bm.BrownianVarianceFamily(
            shape=bm.LandmarkShape(np.zeros((1, 2))), lengthscale=1.0)
        config = small_config(seed=46, n=60, steps=25, mode="full_gaussian")
        init = bm.LandmarkShape(np.array([[0.9, 0.2]]))
        fwd = bm.diffusion_mean(observations, family, init, config, v=1.0)
        rev = bm.diffusion_mean(observations[::-1], family, init, config, v=1.0)
        np.testing.assert_array_equal(fwd.final.points, rev.final.points)

    def test_rejects_empty_observations(self):
        family = bm.BrownianVarianceFamily(
            shape=bm.LandmarkShape(np.zeros((1, 2))), lengthscale=1.0)
        with pytest.raises(DomainError):
            bm.diffusion_mean([], family, bm.LandmarkShape(np.zeros((1, 2))),
                              small_config())


class TestExports:
    def test_sweep_csv(self, tmp_path):
        family, x0, x1 = family_setup()
        result = bm.loglik_sweep(x0, x1, family, [0.5, 1.0],
                                 small_config(n=30, steps=20))
        out = tmp_path / "sweep.csv"
        export_sweep_csv(result, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "v,loglik,ess"
        assert len(lines) == 3

    def test_methods_csv(self, tmp_path):
        out = tmp_path / "methods.csv"
        export_methods_csv([0.5, 1.0], {"analytic": [1.0, 2.0],
                                        "is_profile": [0.9, 1.8]}, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "v,analytic,is_profile"

    def test_mean_trajectory_csv(self, tmp_path):
        traj = bm.MeanTrajectory(
            iterates=[bm.LandmarkShape(np.zeros((1, 2))),
                      bm.LandmarkShape(np.ones((1, 2)))],
            logliks=[-5.0, -4.0], step_sizes=[0.1])
        out = tmp_path / "mean.csv"
        export_mean_trajectory_csv(traj, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "iteration,loglik,x1,x2"
        assert lines[1].startswith("0,")
        assert len(lines) == 3
