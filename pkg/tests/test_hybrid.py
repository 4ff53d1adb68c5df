import numpy as np
import pytest

from poisson_bnn import network as net
from poisson_bnn.data import simulate
from poisson_bnn.errors import InvalidInputError, NotApplicableError
from poisson_bnn.evidence import EvidenceSettings
from poisson_bnn.hmc import HmcSettings
from poisson_bnn.hybrid import JITTER_SD, ard_report, fit_hmc, fit_hybrid
from poisson_bnn.objective import PriorSpec
from poisson_bnn.training import TrainSettings

EV = EvidenceSettings(max_outer=5, train=TrainSettings(max_iter=200, restarts=1))
SHORT = HmcSettings(step_size=0.01, n_leapfrog=10, burn_in=20, n_samples=20)


@pytest.fixture(scope="module")
def sim2():
    ds = simulate(2, 120, 3)
    return ds.X, ds.t


@pytest.fixture(scope="module")
def hybrid_model(sim2):
    X, t = sim2
    cfg = net.NetworkConfig(1, 3)
    return fit_hybrid(cfg, X, t, PriorSpec.ard(cfg, 0.075), EV, SHORT, n_chains=3, seed=4)


def test_zero_step_reduces_to_plug_in(sim2):
    X, t = sim2
    cfg = net.NetworkConfig(1, 3)
    hmc = HmcSettings(step_size=0.0, n_leapfrog=5, burn_in=0, n_samples=1,
                      target_accept=(0.0, 1.0))
    model = fit_hybrid(cfg, X, t, PriorSpec.single(cfg, 0.075), EV, hmc, seed=1)
    w_map = model.evidence.w_map
    np.testing.assert_array_equal(model.chains[0].samples[0], w_map)
    np.testing.assert_allclose(model.predict(X), net.forward_batch(cfg, w_map, X), rtol=1e-15)


def test_deterministic(sim2, hybrid_model):
    X, t = sim2
    cfg = hybrid_model.cfg
    again = fit_hybrid(cfg, X, t, PriorSpec.ard(cfg, 0.075), EV, SHORT, n_chains=3, seed=4)
    for a, b in zip(hybrid_model.chains, again.chains):
        np.testing.assert_array_equal(a.samples, b.samples)


def test_chains_share_evidence_alphas_and_data(hybrid_model):
    alphas = hybrid_model.evidence.prior.per_weight
    hashes = {c.data_hash for c in hybrid_model.chains}
    assert len(hashes) == 1
    for c in hybrid_model.chains:
        np.testing.assert_array_equal(c.alpha, alphas)


def test_chain_starts(hybrid_model):
    w_map = hybrid_model.evidence.w_map
    starts = hybrid_model.init_points
    np.testing.assert_array_equal(starts[0], w_map)
    for s in starts[1:]:
        dev = s - w_map
        assert 0 < np.std(dev) < 5 * JITTER_SD
    assert not np.array_equal(starts[1], starts[2])


def test_summary_shapes(sim2, hybrid_model):
    X, _ = sim2
    s = hybrid_model.summary(X[:7])
    assert s.mean.shape == s.sd.shape == (7,)
    assert np.all(s.mean > 0) and np.all(s.sd >= 0)


def test_plain_hmc_uses_fixed_alpha(sim2):
    X, t = sim2
    cfg = net.NetworkConfig(1, 2)
    prior = PriorSpec.single(cfg, 0.5)
    model = fit_hmc(cfg, X, t, prior, SHORT, n_chains=2, seed=0)
    assert model.kind == "hmc" and model.evidence is None
    for c in model.chains:
        np.testing.assert_array_equal(c.alpha, prior.per_weight)
    assert not np.array_equal(model.init_points[0], model.init_points[1])


@pytest.mark.parametrize("fit", [fit_hybrid, fit_hmc])
def test_zero_chains_rejected(sim2, fit):
    X, t = sim2
    cfg = net.NetworkConfig(1, 2)
    args = (EV, SHORT) if fit is fit_hybrid else (SHORT,)
    with pytest.raises(InvalidInputError):
        fit(cfg, X, t, PriorSpec.single(cfg, 0.1), *args, n_chains=0)


class TestArdReport:
    def test_single_covariate(self):
        cfg = net.NetworkConfig(1, 2)
        rows = ard_report(PriorSpec.ard(cfg, 0.3))
        assert [(r.covariate, r.rank) for r in rows] == [("x1", 1)]

    def test_order_and_ties(self):
        cfg = net.NetworkConfig(4, 2)
        prior = PriorSpec.ard(cfg, [2.0, 0.5, 2.0, 9.0, 1.0, 1.0, 1.0], ["a", "b", "c", "d"])
        rows = ard_report(prior)
        assert [(r.covariate, r.rank) for r in rows] == [("b", 1), ("a", 2), ("c", 2), ("d", 4)]

    def test_relabel_invariance(self):
        cfg = net.NetworkConfig(3, 2)
        alphas = [0.1, 5.0, 0.7, 1.0, 1.0, 1.0]
        perm = [2, 0, 1]
        a = ard_report(PriorSpec.ard(cfg, alphas, ["p", "q", "r"]))
        b = ard_report(PriorSpec.ard(cfg, [alphas[i] for i in perm] + alphas[3:],
                                     [["p", "q", "r"][i] for i in perm]))
        assert [(r.covariate, r.alpha, r.rank) for r in a] == [(r.covariate, r.alpha, r.rank)
                                                                 for r in b]

    def test_single_prior_not_applicable(self):
        with pytest.raises(NotApplicableError):
            ard_report(PriorSpec.single(net.NetworkConfig(2, 2), 0.1))

    def test_model_report_uses_evidence_alphas(self, hybrid_model):
        rows = ard_report(hybrid_model)
        assert rows[0].alpha == hybrid_model.prior.group_alphas[0]
