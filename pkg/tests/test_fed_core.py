import numpy as np
import pytest

from fedvar import dp, fed_core, var
from fedvar.fed_core import (
    FedConfig,
    FistaConfig,
    default_eta,
    default_rounds,
    fit_federated,
    initial_shared_estimate,
    local_gradient,
    momentum_sequence,
    refine_fista,
    sample_size_weights,
    stage1_round,
    stage1_run,
)

from oracles import fista_q_sequence, numerical_gradient


def make_world(seed=0, d=5, p=1, r=2, k=3, t_len=200, ratio=None):
    rng = np.random.default_rng(seed)
    a0, deltas = var.assemble_dgp(d, p, r, k, rng, ratio=ratio)
    panels = [
        var.simulate(a0 + dk, p, t_len, rng, burn_in=100) for dk in deltas
    ]
    designs = [var.lag_design(pn) for pn in panels]
    return a0, deltas, panels, designs


class TestGradientAndSteps:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        design = var.LagDesign(
            x=rng.standard_normal((40, 6)), y=rng.standard_normal((40, 3))
        )
        a0 = rng.standard_normal((3, 6))

        def loss(a):
            resid = design.y - design.x @ a.T
            return float(np.sum(resid * resid)) / design.t_len

        got = local_gradient(design, a0)
        want = numerical_gradient(loss, a0)
        np.testing.assert_allclose(got, want, atol=1e-5)

    def test_gradient_zero_at_least_squares(self):
        rng = np.random.default_rng(2)
        design = var.LagDesign(
            x=rng.standard_normal((50, 4)), y=rng.standard_normal((50, 2))
        )
        ls, *_ = np.linalg.lstsq(design.x, design.y, rcond=None)
        np.testing.assert_allclose(
            local_gradient(design, ls.T), np.zeros((2, 4)), atol=1e-10
        )

    def test_default_eta_identity_design(self):
        # X'X = T I  =>  eta = 1/2
        design = var.LagDesign(x=np.eye(4) * 2.0, y=np.ones((4, 2)))
        assert default_eta(design) == pytest.approx(0.5)

    def test_default_rounds(self):
        # ceil(10 ln 2000) = ceil(76.009) = 77
        assert default_rounds(2000) == 77
        assert default_rounds(400) == 60
        with pytest.raises(ValueError):
            default_rounds(1)

    def test_momentum_sequence_frozen(self):
        got = momentum_sequence(3)
        assert got[0] == 1.0
        assert got[1] == pytest.approx(1.618033988749895, abs=1e-12)
        assert got[2] == pytest.approx(2.193527085331054, abs=1e-12)
        assert got[3] == pytest.approx(2.749791340120445, abs=1e-12)
        np.testing.assert_allclose(got, fista_q_sequence(3), atol=1e-15)


class TestRefineFista:
    def test_zero_penalty_converges_to_least_squares(self):
        rng = np.random.default_rng(3)
        design = var.LagDesign(
            x=rng.standard_normal((120, 6)), y=rng.standard_normal((120, 3))
        )
        a0 = np.zeros((3, 6))
        delta, _ = refine_fista(design, a0, FistaConfig(varpi=0.0, iters=2000))
        ls, *_ = np.linalg.lstsq(design.x, design.y, rcond=None)
        assert np.linalg.norm(delta - ls.T) < 1e-8

    def test_objective_trace(self):
        _, _, _, designs = make_world(seed=4, ratio=5.0)
        design = designs[0]
        a0 = np.zeros((design.d, design.pd))
        delta, trace = refine_fista(
            design, a0, FistaConfig(varpi=0.05, iters=20)
        )
        assert len(trace) == 21
        assert trace[-1] <= trace[0] + 1e-10

    def test_zero_iters_returns_zero(self):
        _, _, _, designs = make_world(seed=5)
        design = designs[0]
        a0 = np.zeros((design.d, design.pd))
        delta, trace = refine_fista(design, a0, FistaConfig(varpi=0.1, iters=0))
        np.testing.assert_array_equal(delta, np.zeros_like(delta))
        assert len(trace) == 1

    def test_huge_penalty_keeps_zero(self):
        _, _, _, designs = make_world(seed=6)
        design = designs[0]
        a0 = np.zeros((design.d, design.pd))
        delta, _ = refine_fista(design, a0, FistaConfig(varpi=1e6, iters=20))
        np.testing.assert_array_equal(delta, np.zeros_like(delta))

    def test_shape_mismatch(self):
        _, _, _, designs = make_world(seed=7)
        with pytest.raises(ValueError):
            refine_fista(designs[0], np.zeros((2, 2)), FistaConfig(varpi=0.1))


class TestStageOne:
    def test_zero_step_is_identity_on_truncation(self):
        a0, _, _, designs = make_world(seed=8, ratio=None)
        cfg = FedConfig(rank=2, rounds=5, step_rho=0.0, init_a0=a0)
        out, traces = stage1_run(designs, cfg, np.random.default_rng(0))
        trunc, _ = fed_core.svd_truncate(a0, 2)
        np.testing.assert_allclose(out, trunc, atol=1e-12)
        assert len(traces) == 5

    def test_noiseless_rounds_reduce_error(self):
        a0, _, _, designs = make_world(seed=9, d=6, k=4, t_len=400, ratio=None)
        rng = np.random.default_rng(1)
        init = a0 + 0.5 * rng.standard_normal(a0.shape)
        eta = min(default_eta(d) for d in designs)
        cfg = FedConfig(rank=2, rounds=40, step_rho=eta, init_a0=init)
        out, traces = stage1_run(
            designs, cfg, np.random.default_rng(2), truth_a0=a0
        )
        errs = [t.a0_error for t in traces]
        init_err = np.linalg.norm(
            fed_core.svd_truncate(init, 2)[0] - a0
        )
        assert errs[-1] < 0.5 * init_err
        assert np.linalg.svd(out, compute_uv=False)[2] < 1e-10

    def test_single_round_matches_run(self):
        a0, _, _, designs = make_world(seed=10, ratio=None)
        cfg = FedConfig(rank=2, rounds=1, step_rho=0.05, init_a0=a0)
        out_run, _ = stage1_run(designs, cfg, np.random.default_rng(3))
        out_round, trace = stage1_round(
            a0, designs, cfg, np.random.default_rng(3)
        )
        np.testing.assert_allclose(out_run, out_round, atol=1e-12)
        assert len(trace.grad_norms) == len(designs)
        assert trace.sigma == 0.0

    def test_noise_recorded_and_seed_sensitive(self):
        a0, _, _, designs = make_world(seed=11, ratio=None)
        cfg = FedConfig(
            rank=2,
            rounds=3,
            step_rho=0.05,
            init_a0=a0,
            noise=dp.NoisePolicy.fixed(),
            budget=dp.PrivacyBudget(epsilon=2.0, delta=0.1, rounds=3),
        )
        out1, traces = stage1_run(designs, cfg, np.random.default_rng(4))
        out2, _ = stage1_run(designs, cfg, np.random.default_rng(4))
        out3, _ = stage1_run(designs, cfg, np.random.default_rng(5))
        assert np.array_equal(out1, out2)
        assert not np.array_equal(out1, out3)
        assert traces[0].sigma == pytest.approx(1.1237723622487465)

    def test_weights(self):
        _, _, _, designs = make_world(seed=12, k=3, t_len=100)
        w = sample_size_weights(designs)
        assert w == (pytest.approx(1 / 3),) * 3
        cfg = FedConfig(
            rank=1, rounds=1, step_rho=0.1, init_a0=np.zeros((5, 5)),
            weights=(0.5, 0.5),
        )
        with pytest.raises(ValueError, match="weights"):
            stage1_run(designs, cfg, np.random.default_rng(0))
        cfg2 = FedConfig(
            rank=1, rounds=1, step_rho=0.1, init_a0=np.zeros((5, 5)),
            weights=(0.5, 0.4, 0.2),
        )
        with pytest.raises(ValueError, match="sum to one"):
            stage1_run(designs, cfg2, np.random.default_rng(0))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FedConfig(rank=0, rounds=1, step_rho=0.1)
        with pytest.raises(ValueError):
            FedConfig(rank=1, rounds=-1, step_rho=0.1)
        with pytest.raises(ValueError):
            FedConfig(rank=1, rounds=1, step_rho=-0.1)

    def test_mismatched_clients_rejected(self):
        _, _, _, designs = make_world(seed=13, d=5)
        _, _, _, other = make_world(seed=14, d=4)
        cfg = FedConfig(rank=1, rounds=1, step_rho=0.1, init_a0=np.zeros((5, 5)))
        with pytest.raises(ValueError, match="shape"):
            stage1_run(designs + [other[0]], cfg, np.random.default_rng(0))


class TestInitialEstimate:
    def test_picks_largest_client(self):
        rng = np.random.default_rng(15)
        a = var.enforce_stationarity(var.gen_low_rank(4, 1, 1, rng), 1, 0.8)
        big = var.lag_design(var.simulate(a, 1, 600, rng, burn_in=100))
        big = var.LagDesign(x=big.x, y=big.x @ a.T)  # exact targets
        small = var.LagDesign(x=big.x[:80], y=-(big.x[:80] @ a.T))
        init = initial_shared_estimate([small, big], rank=1)
        assert np.sum(init * a) > 0  # follows the large client's sign

    def test_tie_resolves_to_first(self):
        rng = np.random.default_rng(16)
        a = var.enforce_stationarity(var.gen_low_rank(4, 1, 1, rng), 1, 0.8)
        base = var.lag_design(var.simulate(a, 1, 300, rng, burn_in=100))
        plus = var.LagDesign(x=base.x, y=base.x @ a.T)
        minus = var.LagDesign(x=base.x, y=-(base.x @ a.T))
        init = initial_shared_estimate([plus, minus], rank=1)
        assert np.sum(init * a) > 0


class TestFitFederated:
    def test_end_to_end_improves_on_init(self):
        a0, deltas, panels, designs = make_world(
            seed=17, d=6, k=4, t_len=300, ratio=8.0
        )
        init = initial_shared_estimate(designs, rank=2)
        eta = min(default_eta(d) for d in designs)
        cfg = FedConfig(rank=2, rounds=40, step_rho=eta, init_a0=init)
        fcfg = FistaConfig(varpi=0.05, iters=20)
        decomps, report = fit_federated(
            panels, cfg, fcfg, np.random.default_rng(6), truth_a0=a0
        )
        assert len(decomps) == 4
        for dec in decomps:
            assert dec.a0.shape == (6, 6)
            assert np.array_equal(dec.a0, report.a0_hat)
        assert len(report.stage1_trace) == 40
        assert len(report.fista_traces) == 4
        err_init = np.linalg.norm(init - a0)
        err_final = report.stage1_trace[-1].a0_error
        assert err_final < err_init

    def test_per_client_configs_and_validation(self):
        _, _, panels, designs = make_world(seed=18, k=2)
        cfg = FedConfig(
            rank=1, rounds=2, step_rho=0.05,
            init_a0=np.zeros((5, 5)) + np.eye(5)[:5],
        )
        fcfgs = [FistaConfig(varpi=0.1), FistaConfig(varpi=0.2)]
        decomps, _ = fit_federated(panels, cfg, fcfgs, np.random.default_rng(7))
        assert len(decomps) == 2
        with pytest.raises(ValueError, match="refinement configs"):
            fit_federated(
                panels, cfg, [FistaConfig(varpi=0.1)], np.random.default_rng(8)
            )
