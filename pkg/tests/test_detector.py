"""Tests for the Gaussian-mixture message-passing detector."""

import numpy as np
import pytest

import oracles
from gmrx.channel import ChannelParams, FadingTrace, PilotPattern, gen_gauss_markov, gen_symbols, simulate_frame
from gmrx.detector import (
    DetectorConfig,
    Hypothesis,
    backward_pass,
    detect_frame,
    forward_pass,
    hard_decisions,
    pilot_priors,
    predict_update,
    symbol_posteriors,
    _Model,
    _sweep,
    _sweep_py,
)
from gmrx.gaussian import (
    GaussianDensity,
    GaussianMixture,
    MixtureComponent,
    fuse_quotient,
    logsumexp,
)
from gmrx.streams import substream


def params(alpha=0.99, sigma_h2=1.0, sigma_hp2=0.5, sigma_n2=0.1, n_rx=2):
    return ChannelParams(alpha, sigma_h2, sigma_hp2, sigma_n2, n_rx)


def random_frame(seed, p, l, period=4):
    trace = gen_gauss_markov(substream(seed, "trace"), p, l)
    x, pilots = gen_symbols(substream(seed, "sym"), PilotPattern(period, 0), l)
    xp = substream(seed, "int").choice(np.array([-1, 1]), l).astype(np.int8)
    return simulate_frame(substream(seed, "noise"), p, trace, x, xp, pilots)


def random_component(rng, r, scale=1.0):
    a = rng.normal(size=(r, r)) + 1j * rng.normal(size=(r, r))
    cov = scale * (a @ a.conj().T / r + 0.2 * np.eye(r))
    mean = rng.normal(size=r) + 1j * rng.normal(size=r)
    return MixtureComponent(0.0, GaussianDensity(mean, cov))


class TestPredictUpdate:
    def test_uninformative_observation(self):
        """Huge noise variance: the Kalman gain vanishes and the step is a
        pure prediction; the likelihood no longer separates hypotheses."""
        p = params(sigma_n2=1e12)
        cfg = DetectorConfig(p)
        rng = np.random.default_rng(0)
        comp = random_component(rng, 4)
        y = rng.normal(size=2) + 1j * rng.normal(size=2)
        lls = []
        for x, xp in ((1, 1), (-1, 1), (1, -1)):
            ll, out = predict_update(comp, Hypothesis(x, xp), y, cfg)
            lls.append(ll)
            a2 = p.alpha**2
            q = p.stacked_prior_cov(1e-12 * p.sigma_h2)
            assert np.allclose(out.density.mean, p.alpha * comp.density.mean, atol=1e-9)
            assert np.allclose(
                out.density.cov, a2 * comp.density.cov + (1 - a2) * q, rtol=1e-9
            )
        assert np.ptp(lls) < 1e-9

    def test_scalar_kalman_oracle(self):
        """Single antenna, pilot symbol, negligible interferer: the desired
        entry follows the scalar Kalman update computed by hand."""
        p = params(alpha=1.0, sigma_h2=1.0, sigma_hp2=1e-9, sigma_n2=0.5, n_rx=1)
        cfg = DetectorConfig(p)
        sigma2 = 0.8
        comp = MixtureComponent(
            0.0,
            GaussianDensity(
                np.array([0.3 + 0.1j, 0.0]), np.diag([sigma2, 1e-9]).astype(complex)
            ),
        )
        y = np.array([1.0 - 0.5j])
        _, out = predict_update(comp, Hypothesis(1, 1), y, cfg)
        gain = sigma2 / (sigma2 + 1e-9 + p.sigma_n2)
        want_mean = 0.3 + 0.1j + gain * (y[0] - (0.3 + 0.1j))
        want_var = sigma2 - gain * sigma2
        assert np.isclose(out.density.mean[0], want_mean, rtol=1e-6)
        assert np.isclose(out.density.cov[0, 0].real, want_var, rtol=1e-5)

    def test_joint_conditioning_oracle(self):
        """Mean and covariance match direct conditioning of the stacked
        (previous state, next state, observation) Gaussian to 1e-10."""
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(200):
            n_rx = int(rng.integers(1, 4))
            p = params(
                alpha=float(rng.uniform(0.3, 0.999)),
                sigma_h2=float(rng.uniform(0.5, 2.0)),
                sigma_hp2=float(rng.uniform(0.05, 1.0)),
                sigma_n2=float(rng.uniform(0.01, 1.0)),
                n_rx=n_rx,
            )
            comp = random_component(rng, 2 * n_rx)
            x, xp = rng.choice([-1, 1]), rng.choice([-1, 1])
            y = rng.normal(size=n_rx) + 1j * rng.normal(size=n_rx)
            _, out = predict_update(comp, Hypothesis(int(x), int(xp)), y, DetectorConfig(p))

            m, k = comp.density.mean, comp.density.cov
            z = oracles.z_matrix(x, xp, n_rx)
            q = oracles.state_cov(p)
            s = z @ k @ z.conj().T + p.sigma_n2 * np.eye(n_rx)
            gain = p.alpha * k @ z.conj().T @ np.linalg.inv(s)
            want_mean = p.alpha * m + gain @ (y - z @ m)
            want_cov = (
                p.alpha**2 * k
                + (1 - p.alpha**2) * q
                - gain @ (p.alpha * z @ k)
            )
            denom = max(np.abs(want_mean).max(), np.abs(want_cov).max())
            worst = max(
                worst,
                np.abs(out.density.mean - want_mean).max() / denom,
                np.abs(out.density.cov - want_cov).max() / denom,
            )
        assert worst < 1e-10

    def test_log_weight_carries_likelihood(self):
        rng = np.random.default_rng(2)
        comp = random_component(rng, 4)
        comp.log_weight = -1.25
        y = rng.normal(size=2) + 1j * rng.normal(size=2)
        ll, out = predict_update(comp, Hypothesis(1, -1), y, DetectorConfig(params()))
        assert np.isclose(out.log_weight, -1.25 + ll, atol=1e-12)


class TestForwardPass:
    def test_single_symbol_is_prior(self):
        p = params()
        frame = random_frame(3, p, 1, period=1)
        msgs = forward_pass(frame.y, [1.0], DetectorConfig(p))
        assert len(msgs) == 1 and len(msgs[0]) == 1
        assert np.allclose(msgs[0].means, 0.0)
        q = p.stacked_prior_cov(1e-12 * p.sigma_h2)
        assert np.allclose(msgs[0].covs[0], q)

    def test_all_pilots_match_kalman_filter(self):
        """Pinning both users' symbols leaves a single component equal to
        the classical Kalman predictive density."""
        p = params(sigma_hp2=0.4, sigma_n2=0.2)
        l = 24
        trace = gen_gauss_markov(substream(4, "t"), p, l)
        x = np.ones(l, dtype=np.int8)
        xp = np.ones(l, dtype=np.int8)
        frame = simulate_frame(substream(4, "n"), p, trace, x, xp, np.ones(l, bool))
        msgs = forward_pass(
            frame.y, np.ones(l), DetectorConfig(p), priors_xp=np.ones(l)
        )
        means, covs = oracles.kalman_predictive(frame.y, x, xp, p)
        for i in range(l):
            assert len(msgs[i]) == 1
            assert np.allclose(msgs[i].means[0], means[i], atol=1e-9)
            assert np.allclose(msgs[i].covs[0], covs[i], atol=1e-9)

    def test_enumeration_oracle_l3(self):
        """Uncapped three-symbol message equals the exhaustive predictive
        mixture both componentwise and pointwise (grid TV below 1e-8)."""
        p = params(alpha=0.95, sigma_hp2=0.6, sigma_n2=0.3, n_rx=1)
        l = 3
        frame = random_frame(5, p, l, period=2)
        priors = pilot_priors(frame.pilots)
        msgs = forward_pass(frame.y, priors, DetectorConfig(p, cap=None))
        logw, means, covs = oracles.brute_predictive_mixture(frame.y, priors, p, 2)
        got = msgs[2]
        assert len(got) == len(logw)

        rng = np.random.default_rng(6)
        pts = rng.normal(size=(50, 2)) + 1j * rng.normal(size=(50, 2))
        ref_pdf = oracles.mixture_pdf(logw, means, covs, pts)
        got_pdf = oracles.mixture_pdf(got.log_weights, got.means, got.covs, pts)
        assert np.abs(ref_pdf - got_pdf).max() / ref_pdf.max() < 1e-8

        grid = np.linspace(-3, 3, 9)
        cell = (grid[1] - grid[0]) ** 4
        gr = np.stack(np.meshgrid(grid, grid, grid, grid), axis=-1).reshape(-1, 4)
        gpts = gr[:, :2] @ np.array([1, 1j]) , gr[:, 2:] @ np.array([1, 1j])
        gpts = np.stack(gpts, axis=1)
        tv = 0.5 * cell * np.abs(
            oracles.mixture_pdf(logw, means, covs, gpts)
            - oracles.mixture_pdf(got.log_weights, got.means, got.covs, gpts)
        ).sum()
        assert tv < 1e-8

    def test_component_budget_respected(self):
        p = params()
        frame = random_frame(7, p, 40)
        for cap in (1, 2, 8):
            msgs = forward_pass(frame.y, pilot_priors(frame.pilots), DetectorConfig(p, cap=cap))
            assert max(len(m) for m in msgs) <= cap
            for m in msgs:
                assert abs(logsumexp(m.log_weights)) < 1e-10


class TestBackwardPass:
    def test_single_symbol_is_prior(self):
        p = params()
        frame = random_frame(8, p, 1, period=1)
        msgs = backward_pass(frame.y, [1.0], DetectorConfig(p))
        assert np.allclose(msgs[0].means, 0.0)

    def test_reversal_symmetry(self):
        """Backward messages are the forward messages of the reversed frame."""
        p = params()
        frame = random_frame(9, p, 20)
        priors = pilot_priors(frame.pilots)
        cfg = DetectorConfig(p)
        bwd = backward_pass(frame.y, priors, cfg)
        fwd_rev = forward_pass(frame.y[::-1], priors[::-1], cfg)
        for i in range(20):
            assert np.allclose(bwd[i].means, fwd_rev[19 - i].means)
            assert np.allclose(bwd[i].log_weights, fwd_rev[19 - i].log_weights)

    def test_enumeration_oracle_l3(self):
        """Backward message = forward predictive mixture of the reversed
        sequence (chain reversibility)."""
        p = params(alpha=0.9, sigma_hp2=0.7, sigma_n2=0.4, n_rx=1)
        frame = random_frame(10, p, 3, period=2)
        priors = pilot_priors(frame.pilots)
        bwd = backward_pass(frame.y, priors, DetectorConfig(p, cap=None))
        logw, means, covs = oracles.brute_predictive_mixture(
            frame.y[::-1], priors[::-1], p, 2
        )
        rng = np.random.default_rng(11)
        pts = rng.normal(size=(40, 2)) + 1j * rng.normal(size=(40, 2))
        ref = oracles.mixture_pdf(logw, means, covs, pts)
        got = oracles.mixture_pdf(bwd[0].log_weights, bwd[0].means, bwd[0].covs, pts)
        assert np.abs(ref - got).max() / ref.max() < 1e-8


class TestSymbolPosteriors:
    def test_pilot_positions_exact_one(self):
        p = params()
        frame = random_frame(12, p, 32)
        out = detect_frame(frame.y, pilot_priors(frame.pilots), DetectorConfig(p))
        assert np.all(out.post_x[frame.pilots] == 1.0)

    def test_single_data_symbol_is_ambiguous(self):
        """One observation, no pilot, negligible interference and noise:
        sign ambiguity forces probability exactly 1/2."""
        p = params(sigma_hp2=1e-9, sigma_n2=1e-9, n_rx=1)
        rng = substream(13, "t")
        trace = gen_gauss_markov(rng, p, 1)
        frame = simulate_frame(
            substream(13, "n"), p, trace,
            np.array([-1], np.int8), np.array([1], np.int8),
        )
        out = detect_frame(frame.y, np.array([0.5]), DetectorConfig(p))
        assert np.isclose(out.post_x[0], 0.5, atol=1e-9)

    def test_enumeration_oracle_l4(self):
        """Uncapped posteriors equal brute-force sequence enumeration."""
        rng = np.random.default_rng(14)
        worst = 0.0
        for trial in range(6):
            p = params(
                alpha=float(rng.uniform(0.85, 0.999)),
                sigma_hp2=float(rng.uniform(0.2, 1.0)),
                sigma_n2=float(10 ** rng.uniform(-2.5, 0.0)),
                n_rx=1,
            )
            frame = random_frame(100 + trial, p, 4, period=3)
            priors = pilot_priors(frame.pilots)
            out = detect_frame(frame.y, priors, DetectorConfig(p, cap=None))
            ref = oracles.brute_posteriors(frame.y, priors, p)
            worst = max(worst, np.abs(out.post_x - ref).max())
        assert worst < 1e-8

    def test_channel_posterior_moments_match_enumeration(self):
        """g_mmse equals the brute-force posterior mean of the state."""
        p = params(alpha=0.9, sigma_hp2=0.5, sigma_n2=0.2, n_rx=1)
        frame = random_frame(15, p, 3, period=2)
        priors = pilot_priors(frame.pilots)
        out = detect_frame(frame.y, priors, DetectorConfig(p, cap=None))
        # index 1: E[g_1 | y] by enumerating all symbol sequences
        q = oracles.state_cov(p)
        num = np.zeros(2, complex)
        den = []
        means_acc = []
        for xs, xps, lp in oracles.enumerate_sequences(priors):
            ll = oracles.sequence_loglike(frame.y, xs, xps, p)
            joint = np.zeros((5, 5), complex)  # 3 obs + the dim-2 state g_1
            joint[:3, :3] = oracles.stacked_obs_cov(p, xs, xps)
            for j in range(3):
                zj = oracles.z_matrix(xs[j], xps[j], 1)
                cross = (p.alpha ** abs(1 - j) * zj @ q)[0]  # Cov(y_j, g_1)
                joint[j, 3:] = cross
                joint[3:, j] = cross.conj()
            joint[3:, 3:] = q
            mean, _ = oracles.condition_gaussian(
                np.zeros(5, complex), joint, np.arange(3), frame.y.reshape(-1)
            )
            den.append(lp + ll)
            means_acc.append(mean)
        den = np.array(den)
        w = np.exp(den - logsumexp(den))
        ref_mean = (w[:, None] * np.stack(means_acc)).sum(axis=0)
        assert np.abs(out.g_mmse[1] - ref_mean).max() < 1e-8

    def test_posterior_mixtures_normalized(self):
        p = params()
        frame = random_frame(16, p, 24)
        out = detect_frame(frame.y, pilot_priors(frame.pilots), DetectorConfig(p))
        for mix in out.g_post:
            assert abs(logsumexp(mix.log_weights)) < 1e-10

    def test_fallback_counter_on_synthetic_messages(self):
        """Diffuse synthetic messages make the quotient precision indefinite;
        the detector must fall back to the product and count it."""
        p = params(n_rx=1)
        cfg = DetectorConfig(p)
        mdl = _Model.from_config(cfg)
        diffuse = GaussianMixture(
            np.zeros(1),
            np.zeros((1, 2), complex),
            (1e6 * np.eye(2, dtype=complex))[None],
        )
        y = np.array([[0.1 + 0.2j]])
        out = symbol_posteriors(y, np.array([0.5]), [diffuse], [diffuse], cfg)
        assert out.fusion_fallbacks == 1
        assert np.isfinite(out.post_x).all()

    def test_pair_fusion_matches_scalar_fusion(self):
        """The batched pair fusion agrees with the standalone quotient op."""
        p = params(n_rx=1)
        cfg = DetectorConfig(p)
        mdl = _Model.from_config(cfg)
        rng = np.random.default_rng(17)
        # tight components guarantee a positive-definite quotient precision
        fwd = GaussianMixture.from_components(
            [random_component(rng, 2, scale=0.2), random_component(rng, 2, scale=0.2)]
        )
        bwd = GaussianMixture.from_components([random_component(rng, 2, scale=0.2)])
        prior = GaussianDensity(np.zeros(2, complex), mdl.q)
        from gmrx.detector import _fuse_pairs_reference

        scale, means, covs = _fuse_pairs_reference(fwd, bwd, prior)
        for j in range(2):
            ref_scale, ref = fuse_quotient(
                GaussianDensity(fwd.means[j], fwd.covs[j]),
                GaussianDensity(bwd.means[0], bwd.covs[0]),
                prior,
            )
            assert np.isclose(scale[j], ref_scale, rtol=1e-10)
            assert np.allclose(means[j], ref.mean, atol=1e-10)
            assert np.allclose(covs[j], ref.cov, atol=1e-10)


class TestDetectFrame:
    def test_noiseless_coherent_detection(self):
        """Block fading, no interferer, no noise: every frame decodes clean."""
        p = params(alpha=1.0, sigma_hp2=0.0, sigma_n2=0.0)
        cfg = DetectorConfig(p, cap=8)
        for seed in range(25):
            frame = random_frame(200 + seed, p, 24)
            out = detect_frame(frame.y, pilot_priors(frame.pilots), cfg,
                               channel_posterior=False)
            data = ~frame.pilots
            assert np.array_equal(hard_decisions(out.post_x)[data], frame.x[data])

    def test_determinism(self):
        p = params()
        frame = random_frame(18, p, 40)
        cfg = DetectorConfig(p)
        a = detect_frame(frame.y, pilot_priors(frame.pilots), cfg)
        b = detect_frame(frame.y, pilot_priors(frame.pilots), cfg)
        assert np.array_equal(a.post_x, b.post_x)
        assert np.array_equal(a.g_mmse, b.g_mmse)

    def test_sign_symmetry_without_pilots(self):
        """No pilots anywhere: the posterior cannot prefer either sign."""
        p = params()
        frame = random_frame(19, p, 30)
        priors = np.full(30, 0.5)
        out = detect_frame(frame.y, priors, DetectorConfig(p, cap=8),
                           channel_posterior=False)
        assert np.abs(out.post_x - 0.5).max() < 1e-9

    def test_pilot_adds_confidence(self):
        """Inserting one extra pilot raises the mean posterior confidence on
        the neighboring data symbols (paired across 600 trials, 5 sigma).

        Sparse pilots and a strong interferer make the extra pilot matter;
        with dense pilots the effect drowns in the pairing noise.
        """
        p = params(sigma_hp2=1.0, sigma_n2=0.1)
        l, extra = 49, 24  # off the period-16 grid
        cfg = DetectorConfig(p)
        diffs = []
        for seed in range(600):
            trace = gen_gauss_markov(substream(seed, "t"), p, l)
            x, pilots = gen_symbols(substream(seed, "s"), PilotPattern(16, 0), l)
            x[extra] = 1  # also a pilot in the richer configuration
            xp = substream(seed, "i").choice(np.array([-1, 1]), l).astype(np.int8)
            frame = simulate_frame(substream(seed, "n"), p, trace, x, xp, pilots)
            base = pilot_priors(pilots)
            rich = base.copy()
            rich[extra] = 1.0
            neighbors = [extra - 2, extra - 1, extra + 1, extra + 2]
            conf = lambda priors: np.abs(
                detect_frame(frame.y, priors, cfg, channel_posterior=False).post_x[neighbors] - 0.5
            ).mean()
            diffs.append(conf(rich) - conf(base))
        diffs = np.array(diffs)
        t_stat = diffs.mean() / (diffs.std(ddof=1) / np.sqrt(len(diffs)))
        assert t_stat > 5.0

    def test_channel_estimate_tracks_truth(self):
        """Pilot-dense, high SNR, weak interference: normalized squared error
        of the posterior-mean estimate stays below sigma_h2 / 10."""
        p = params(sigma_hp2=0.01, sigma_n2=1e-3)
        cfg = DetectorConfig(p)
        errs = []
        for seed in range(10):
            frame = random_frame(400 + seed, p, 40, period=2)
            out = detect_frame(frame.y, pilot_priors(frame.pilots), cfg,
                               channel_posterior=False)
            err = out.g_mmse[:, :2] - frame.trace.h
            errs.append(np.mean(np.sum(np.abs(err) ** 2, axis=1)) / 2)
        assert np.mean(errs) < p.sigma_h2 / 10

    def test_l4_oracle_through_detect_frame(self):
        p = params(alpha=0.93, sigma_hp2=0.8, sigma_n2=0.15, n_rx=1)
        frame = random_frame(20, p, 4, period=2)
        priors = pilot_priors(frame.pilots)
        out = detect_frame(frame.y, priors, DetectorConfig(p, cap=None))
        ref = oracles.brute_posteriors(frame.y, priors, p)
        assert np.abs(out.post_x - ref).max() < 1e-8


class TestSweepKernelEquivalence:
    def test_prune_mode_matches_numpy(self):
        """Compiled sweep reproduces the numpy reference trajectory."""
        p = params()
        frame = random_frame(21, p, 80)
        cfg = DetectorConfig(p, cap=8)
        mdl = _Model.from_config(cfg)
        priors = pilot_priors(frame.pilots)
        half = np.full(80, 0.5)
        fast = _sweep(frame.y, priors, half, cfg, mdl)
        ref = _sweep_py(frame.y, priors, half, cfg, mdl)
        for a, b in zip(fast, ref):
            assert len(a) == len(b)
            assert np.allclose(a.log_weights, b.log_weights, atol=1e-9)
            assert np.allclose(a.means, b.means, atol=1e-9)
            assert np.allclose(a.covs, b.covs, atol=1e-9)

    def test_collapse_mode_matches_numpy_short(self):
        """Moment-matched mode compared on a short frame (the recursion is
        chaotically sensitive, so long-horizon bitwise agreement is not a
        meaningful target)."""
        p = params()
        frame = random_frame(22, p, 10)
        cfg = DetectorConfig(p, cap=1, collapse=True)
        mdl = _Model.from_config(cfg)
        priors = pilot_priors(frame.pilots)
        half = np.full(10, 0.5)
        fast = _sweep(frame.y, priors, half, cfg, mdl)
        ref = _sweep_py(frame.y, priors, half, cfg, mdl)
        for a, b in zip(fast, ref):
            assert np.allclose(a.means, b.means, atol=1e-8)
            assert np.allclose(a.covs, b.covs, atol=1e-8)

    def test_messages_hermitian_psd(self):
        p = params(sigma_n2=1e-4)
        frame = random_frame(23, p, 60)
        cfg = DetectorConfig(p, cap=8)
        msgs = forward_pass(frame.y, pilot_priors(frame.pilots), cfg)
        for m in msgs:
            for k in m.covs:
                assert np.abs(k - k.conj().T).max() < 1e-10
                assert np.linalg.eigvalsh(k).min() >= -1e-9 * np.trace(k).real


class TestDegenerateRuns:
    def test_zero_noise_zero_interferer(self):
        """sigma_n2 = 0 with the variance floor must stay finite and exact."""
        p = params(alpha=1.0, sigma_hp2=0.0, sigma_n2=0.0)
        frame = random_frame(24, p, 16)
        out = detect_frame(frame.y, pilot_priors(frame.pilots), DetectorConfig(p),
                           channel_posterior=False)
        data = ~frame.pilots
        assert np.array_equal(hard_decisions(out.post_x)[data], frame.x[data])

    def test_validation_errors(self):
        p = params()
        with pytest.raises(ValueError):
            DetectorConfig(p, cap=0)
        with pytest.raises(ValueError):
            Hypothesis(2, 1)
        with pytest.raises(ValueError):
            detect_frame(np.zeros((4, 3), complex), np.full(4, 0.5), DetectorConfig(p))
