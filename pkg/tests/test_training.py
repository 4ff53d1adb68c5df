import warnings

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from poisson_bnn import network as net
from poisson_bnn import training
from poisson_bnn.errors import InvalidInputError, OptimizationError
from poisson_bnn.objective import NetworkProblem, PriorSpec, Problem, QuadraticProblem
from poisson_bnn.training import (CommitteeModel, CvPlan, Member, TrainSettings, cross_validate,
                                  fold_assignment, minimize, train_committee)


class OutputBiasOnly(Problem):
    """A d=1, M=1 network where only the output bias is free."""

    def __init__(self, x, t):
        self.cfg = net.NetworkConfig(1, 1)
        self.X = np.array([[x]])
        self.t = np.array([t])
        self.n_weights = 1

    def _full(self, w):
        return np.array([0.3, -0.1, 0.0, w[0]])

    def data_error(self, w):
        return net.data_error(self.cfg, self._full(w), self.X, self.t)

    def data_grad(self, w):
        return net.grad_data_error(self.cfg, self._full(w), self.X, self.t)[-1:]


def sim1(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, (n, 1))
    return X, rng.poisson(np.exp(X[:, 0]))


class TestMinimize:
    def test_stationary_start(self):
        prob = QuadraticProblem(np.diag([3.0, 1.0]), m=np.array([1.0, -2.0]))
        prior = PriorSpec("single", [0.0], [0, 0])
        res = minimize(prob, prior, TrainSettings(), w0=[1.0, -2.0])
        assert res.n_iter == 0 and res.converged and res.reason == "gtol"

    @pytest.mark.parametrize("t,alpha", [(0, 0.5), (3, 0.075), (12, 2.0)])
    def test_one_parameter_net_matches_golden_section(self, t, alpha):
        prob = OutputBiasOnly(0.4, t)
        prior = PriorSpec("single", [alpha], [0])
        res = minimize(prob, prior, TrainSettings(gtol=1e-10), w0=[0.0])
        oracle = minimize_scalar(lambda b: prob.objective(np.array([b]), prior).total,
                                 bracket=(-5.0, 0.0, 5.0), method="golden",
                                 options={"xtol": 1e-10})
        assert res.w[0] == pytest.approx(oracle.x, abs=1e-4)

    def test_constant_input_recovers_sample_mean(self):
        cfg = net.NetworkConfig(1, 3)
        t = np.random.default_rng(4).poisson(6.0, 40)
        X = np.zeros((40, 1))
        prob = NetworkProblem(cfg, X, t)
        w0 = net.init_weights(cfg, np.random.default_rng(1))
        res = minimize(prob, PriorSpec.single(cfg, 0.0), TrainSettings(gtol=1e-9, max_iter=2000),
                       w0)
        assert net.forward_batch(cfg, res.w, X)[0] == pytest.approx(t.mean(), abs=1e-6)

    def test_trace_non_increasing(self):
        X, t = sim1(100, 0)
        cfg = net.NetworkConfig(1, 4)
        res = minimize(NetworkProblem(cfg, X, t), PriorSpec.single(cfg, 0.075),
                       TrainSettings(max_iter=300), net.init_weights(cfg, np.random.default_rng(0)))
        assert np.all(np.diff(res.trace) <= 0)
        assert len(res.trace) == res.n_iter + 1

    def test_iteration_cap_reported(self):
        X, t = sim1(100, 1)
        cfg = net.NetworkConfig(1, 4)
        res = minimize(NetworkProblem(cfg, X, t), PriorSpec.single(cfg, 0.075),
                       TrainSettings(max_iter=3), net.init_weights(cfg, np.random.default_rng(0)))
        assert res.n_iter == 3 and not res.converged and res.reason == "max_iter"

    def test_non_finite_start(self):
        cfg = net.NetworkConfig(1, 1)
        prob = NetworkProblem(cfg, [[1.0]], [2])
        with pytest.raises(OptimizationError) as exc:
            minimize(prob, PriorSpec.single(cfg, 1.0), TrainSettings(),
                     w0=np.array([0.0, 0.0, 0.0, 800.0]))
        assert exc.value.last_w is not None

    def test_weight_norm_shrinks_with_alpha(self):
        X, t = sim1(60, 2)
        cfg = net.NetworkConfig(1, 3)
        prob = NetworkProblem(cfg, X, t)
        w0 = net.init_weights(cfg, np.random.default_rng(3))
        norms = [np.linalg.norm(minimize(prob, PriorSpec.single(cfg, a),
                                         TrainSettings(max_iter=2000), w0).w)
                 for a in (0.1, 1.0, 10.0, 100.0)]
        assert all(b < a for a, b in zip(norms, norms[1:]))

    def test_settings_validation(self):
        with pytest.raises(InvalidInputError):
            TrainSettings(gtol=0)
        with pytest.raises(InvalidInputError):
            TrainSettings(restarts=0)


class TestCrossValidation:
    def test_fold_assignment_deterministic(self):
        a = fold_assignment(23, 5, seed=9)
        assert np.array_equal(a, fold_assignment(23, 5, seed=9))
        assert sorted(np.bincount(a)) == [4, 4, 5, 5, 5]

    def test_single_cell(self):
        X, t = sim1(40, 0)
        plan = CvPlan(folds=2, alpha_grid=(0.05,), hidden_grid=(3,))
        res = cross_validate(X, t, plan, TrainSettings(max_iter=50))
        assert (res.best_hidden, res.best_alpha) == (3, 0.05)
        assert len(res.table) == 1

    def test_huge_penalty_loses(self):
        X, t = sim1(30, 5)
        X, t = np.vstack([X, X]), np.concatenate([t, t])
        plan = CvPlan(folds=3, alpha_grid=(1e6, 0.05), hidden_grid=(2,))
        res = cross_validate(X, t, plan, TrainSettings(max_iter=200))
        assert res.best_alpha == 0.05

    def test_tie_break_is_smaller_m_then_alpha(self, monkeypatch):
        # every cell scores the same, so only the tie rule decides
        monkeypatch.setattr(training, "poisson_nll", lambda rates, t: 1.0)
        X, t = sim1(20, 0)
        plan = CvPlan(folds=2, alpha_grid=(0.1, 0.05), hidden_grid=(4, 3))
        res = cross_validate(X, t, plan, TrainSettings(max_iter=1))
        assert (res.best_hidden, res.best_alpha) == (3, 0.05)

    def test_table_reproducible(self):
        X, t = sim1(30, 3)
        plan = CvPlan(folds=3, alpha_grid=(0.05, 0.1), hidden_grid=(2, 3), seed=4)
        a = cross_validate(X, t, plan, TrainSettings(max_iter=40))
        b = cross_validate(X, t, plan, TrainSettings(max_iter=40))
        assert a.table == b.table

    def test_zero_variance_fold_warns(self):
        X = np.column_stack([np.linspace(0, 1, 10), np.ones(10)])
        t = np.arange(10) % 3
        plan = CvPlan(folds=2, alpha_grid=(0.1,), hidden_grid=(1,))
        with pytest.warns(RuntimeWarning, match="zero variance"):
            cross_validate(X, t, plan, TrainSettings(max_iter=5))

    def test_too_few_rows(self):
        with pytest.raises(InvalidInputError):
            cross_validate(np.zeros((3, 1)), [0, 1, 2], CvPlan(folds=5))


class TestCommittee:
    def test_single_restart_equals_member(self):
        X, t = sim1(50, 0)
        cfg = net.NetworkConfig(1, 2)
        model = train_committee(cfg, X, t, PriorSpec.single(cfg, 0.075),
                                TrainSettings(restarts=1, max_iter=100))
        assert np.array_equal(model.predict(X), net.forward_batch(cfg, model.members[0].w, X))

    def test_mean_of_member_rates(self):
        cfg = net.NetworkConfig(1, 1)
        members = [Member(k, np.array([0.0, 0.0, 0.0, np.log(r)]), True, "gtol", 0.0)
                   for k, r in enumerate((1.0, 2.0, 3.0))]
        model = CommitteeModel(cfg, PriorSpec.single(cfg, 1.0), members)
        assert model.predict(np.array([[0.5]]))[0] == pytest.approx(2.0, abs=1e-15)

    def test_identical_members(self):
        cfg = net.NetworkConfig(1, 2)
        w = np.arange(7) / 10
        model = CommitteeModel(cfg, PriorSpec.single(cfg, 1.0),
                               [Member(k, w, True, "gtol", 0.0) for k in range(4)])
        X = np.linspace(0, 1, 5)[:, None]
        np.testing.assert_allclose(model.predict(X), net.forward_batch(cfg, w, X), rtol=1e-15)

    def test_committee_is_rowwise_mean(self):
        X, t = sim1(50, 1)
        cfg = net.NetworkConfig(1, 3)
        model = train_committee(cfg, X, t, PriorSpec.single(cfg, 0.075),
                                TrainSettings(restarts=4, max_iter=60, seed=2))
        assert len(model.members) == 4
        assert len({m.seed for m in model.members}) == 4
        assert np.array_equal(model.predict(X), model.member_rates(X).mean(axis=0))

    def test_non_converged_members_are_flagged(self):
        X, t = sim1(50, 1)
        cfg = net.NetworkConfig(1, 3)
        model = train_committee(cfg, X, t, PriorSpec.single(cfg, 0.075),
                                TrainSettings(restarts=2, max_iter=2))
        assert [m.converged for m in model.members] == [False, False]
        assert {m.reason for m in model.members} == {"max_iter"}

    def test_all_failures_raise(self, monkeypatch):
        calls = []

        def boom(*args, **kwargs):
            calls.append(1)
            if len(calls) == 1:
                raise OptimizationError("diverged")
            raise OptimizationError("diverged again")

        monkeypatch.setattr(training, "minimize", boom)
        cfg = net.NetworkConfig(1, 1)
        with pytest.raises(OptimizationError) as exc:
            train_committee(cfg, [[0.0], [1.0]], [0, 1], PriorSpec.single(cfg, 1.0),
                            TrainSettings(restarts=2))
        assert len(exc.value.partial.failures) == 2

    def test_partial_failure_keeps_survivors(self, monkeypatch):
        real = training.minimize
        calls = []

        def flaky(*args, **kwargs):
            calls.append(1)
            if len(calls) == 2:
                raise OptimizationError("diverged")
            return real(*args, **kwargs)

        monkeypatch.setattr(training, "minimize", flaky)
        X, t = sim1(30, 0)
        cfg = net.NetworkConfig(1, 2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = train_committee(cfg, X, t, PriorSpec.single(cfg, 1.0),
                                    TrainSettings(restarts=3, max_iter=20))
        assert len(model.members) == 2 and len(model.failures) == 1
