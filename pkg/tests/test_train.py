import numpy as np
import pytest
from scipy.special import log_softmax

from hecka import kernels as K
from hecka import tensor as T
from hecka.data import quadrants
from hecka.kernels import DegenerateGramError, RepulsionConfig
from hecka.models import EnsembleState, MlpSpec, ensemble_forward, init_ensemble, init_params
from hecka.optim import OptimizerConfig, make_optimizer
from hecka.tensor import Tensor
from hecka.train import (
    Dataset,
    NonFiniteLossError,
    TrainConfig,
    assemble_loss,
    entropy_term,
    pairwise_cka_diagnostic,
    rbf_weight_kernel,
    svgd_step,
    task_loss,
    train,
)

SPEC = MlpSpec([2, 8, 8, 4], "gelu")
RNG = np.random.default_rng(0)
X = RNG.normal(size=(12, 2)) * 2.0
Y = RNG.integers(0, 4, size=12)
X_OOD = RNG.uniform(-6, 6, size=(10, 2))


def _cfg(method, **rep):
    return TrainConfig(method=method, members=3, repulsion=RepulsionConfig(**rep))


def _nll(state, X, y):
    logits = np.stack([ensemble_forward(state, X)[0].data[m] for m in range(state.n_members)])
    logp = log_softmax(logits, axis=-1)
    return -np.mean(logp[:, np.arange(len(y)), y])


class TestTaskLoss:
    def test_cross_entropy(self):
        logits = RNG.normal(size=(3, 5, 4))
        y = np.array([0, 1, 2, 3, 0])
        ref = -np.mean([log_softmax(logits[m], axis=-1)[np.arange(5), y] for m in range(3)])
        assert task_loss(Tensor(logits), y, "classification").item() == pytest.approx(ref, rel=1e-13)

    def test_mse(self):
        pred = RNG.normal(size=(2, 6, 1))
        y = RNG.normal(size=(6, 1))
        assert task_loss(Tensor(pred), y, "regression").item() == pytest.approx(np.mean((pred - y) ** 2), rel=1e-13)


class TestEntropyTerm:
    def test_uniform(self):
        assert entropy_term(np.zeros((2, 3, 4))).item() == pytest.approx(np.log(4), abs=1e-12)

    def test_saturated(self):
        assert entropy_term(np.array([[[100.0, 0.0, 0.0]]])).item() == pytest.approx(0.0, abs=1e-12)

    def test_three_to_one(self):
        expected = -(0.75 * np.log(0.75) + 0.25 * np.log(0.25))
        value = entropy_term(np.array([[[np.log(3.0), 0.0]]])).item()
        assert value == pytest.approx(expected, abs=1e-12)
        assert value == pytest.approx(0.5623, abs=1e-4)

    def test_regression_rejected(self):
        with pytest.raises(ValueError, match="classification"):
            entropy_term(np.zeros((1, 2, 1)), task="regression")


class TestAssembleLoss:
    state = init_ensemble(SPEC, 3, 0)

    def test_zero_weights_equal_cross_entropy(self):
        parts = assemble_loss(self.state, (X, Y), X_OOD, _cfg("ensemble_ood_he"))
        assert parts.total.item() == pytest.approx(_nll(self.state, X, Y), rel=1e-13)

    def test_plain_ensemble_ignores_gammas(self):
        parts = assemble_loss(self.state, (X, Y), None, _cfg("ensemble", gamma_id=5.0))
        assert parts.total.item() == pytest.approx(_nll(self.state, X, Y), rel=1e-13)

    def test_two_member_recompute(self):
        state = init_ensemble(SPEC, 2, 11)
        rep = dict(gamma_id=0.7, eps_arc=0.01, layer_weights=[0.2, 0.5, 0.3])
        parts = assemble_loss(state, (X, Y), None, _cfg("ensemble_he", **rep))
        _, feats = ensemble_forward(state, X)
        grams = [K.gram_linear(f.data) for f in feats]
        expected = _nll(state, X, Y) + 0.7 * K.he_smooth(grams, RepulsionConfig(**rep))
        assert abs(parts.total.item() - expected) < 1e-10

    def test_decomposition(self):
        cfg = _cfg("ensemble_ood_he", gamma_id=0.6, gamma_ood=0.9, beta=0.4, eps_arc=0.01)
        parts = assemble_loss(self.state, (X, Y), X_OOD, cfg)
        assert set(parts.weighted) == {"repulsion_id", "repulsion_ood", "ood_entropy"}
        assert abs(parts.task + sum(parts.weighted.values()) - parts.total.item()) < 1e-10

    def test_energy_reading(self):
        """Total is the negative log-likelihood plus the prior energy, recomputed from scratch."""
        cfg = _cfg("ensemble_ood_he", gamma_id=0.6, gamma_ood=0.9, beta=0.4, eps_arc=0.01)
        parts = assemble_loss(self.state, (X, Y), X_OOD, cfg)
        _, feats = ensemble_forward(self.state, np.concatenate([X, X_OOD]))
        g_id = [K.gram_linear(f.data[:, :12]) for f in feats]
        g_ood = [K.gram_linear(f.data[:, 12:]) for f in feats]
        logits_ood, _ = ensemble_forward(self.state, X_OOD)
        p = np.exp(log_softmax(logits_ood.data, axis=-1))
        ent = -np.mean((p * np.log(p)).sum(-1))
        energy = 0.6 * K.he_smooth(g_id, cfg.repulsion) + 0.9 * K.he_smooth(g_ood, cfg.repulsion) - 0.4 * ent
        assert abs(parts.total.item() - (_nll(self.state, X, Y) + energy)) < 1e-10

    def test_pairwise_cka_family(self):
        cfg = _cfg("ensemble_he", gamma_id=1.0, family="pairwise_cka")
        parts = assemble_loss(self.state, (X, Y), None, cfg)
        _, feats = ensemble_forward(self.state, X)
        expected = K.cka_pairwise([K.gram_linear(f.data) for f in feats])
        assert parts.repulsion_id == pytest.approx(expected, abs=1e-12)

    def test_ood_batch_required(self):
        with pytest.raises(ValueError, match="OOD"):
            assemble_loss(self.state, (X, Y), None, _cfg("ensemble_ood_he"))

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            assemble_loss(self.state, (X[:0], Y[:0]), None, _cfg("ensemble"))

    def test_single_member_repulsion(self):
        with pytest.raises(ValueError):
            TrainConfig(method="ensemble_he", members=1)
        with pytest.raises(ValueError, match="2 members"):
            assemble_loss(init_ensemble(SPEC, 1, 0), (X, Y), None, _cfg("ensemble_he", gamma_id=1.0))

    def test_degenerate_gram_names_layer(self):
        params = init_params(SPEC, 0)
        params[0] = (Tensor(np.zeros_like(params[0][0].data)), Tensor(np.ones_like(params[0][1].data)))
        state = EnsembleState.from_members(SPEC, [params, init_params(SPEC, 1)])
        with pytest.raises(DegenerateGramError, match="layer 1"):
            assemble_loss(state, (X, Y), None, _cfg("ensemble_he", gamma_id=1.0))


class TestRepulsionProbe:
    def test_one_step_lowers_every_layer(self):
        """Near-coincident pair: a small step on the energy alone separates every weighted layer."""
        base = init_params(SPEC, 4)
        rng = np.random.default_rng(1)
        twin = [(Tensor(W.data + 1e-3 * rng.normal(size=W.shape)), Tensor(b.data.copy())) for W, b in base]
        state = EnsembleState.from_members(SPEC, [base, twin])
        cfg = RepulsionConfig(eps_arc=0.01, layer_weights=[0.3, 0.3, 0.4])

        def layer_cka(st):
            _, feats = ensemble_forward(st, X)
            return [K.cka(K.gram_linear(f.data[0]), K.gram_linear(f.data[1])) for f in feats]

        before = layer_cka(state)
        _, feats = ensemble_forward(state, X)
        T.backward(K.he_smooth([K.gram_linear(f) for f in feats], cfg))
        make_optimizer(state.tensors(), OptimizerConfig("sgd", lr=1e-4)).step()
        after = layer_cka(state)
        assert all(a < b for a, b in zip(after, before)), (before, after)

    def test_coincident_pair_has_zero_gradient(self):
        one = init_params(SPEC, 4)
        state = EnsembleState.from_members(SPEC, [one, one])
        _, feats = ensemble_forward(state, X)
        T.backward(K.he_smooth([K.gram_linear(f) for f in feats], RepulsionConfig(eps_arc=0.01)))
        for p in state.tensors():
            assert np.all(np.isfinite(p.grad))
            np.testing.assert_allclose(p.grad, 0.0, atol=1e-9)


class TestRbfWeightKernel:
    def test_self_is_one(self):
        theta = RNG.normal(size=(3, 5))
        np.testing.assert_allclose(np.diag(rbf_weight_kernel(theta).data), 1.0, rtol=1e-12)

    def test_decreasing_in_distance(self):
        base = np.zeros(4)
        others = np.stack([base + r for r in (0.0, 0.5, 1.0, 2.0)])
        row = rbf_weight_kernel(base[None, :], others, bandwidth=1.0).data[0]
        assert np.all(np.diff(row) < 0)

    def test_median_bandwidth_oracle(self):
        theta = RNG.normal(size=(3, 4))
        d = sorted(np.sum((theta[i] - theta[j]) ** 2) for i in range(3) for j in range(i + 1, 3))
        h = d[1] / np.log(3)
        expected = np.exp(-np.sum((theta[0] - theta[2]) ** 2) / h)
        assert rbf_weight_kernel(theta).data[0, 2] == pytest.approx(expected, rel=1e-12)


class TestSvgdStep:
    def _setup(self, method="svgd_he", **rep):
        state = init_ensemble(SPEC, 3, 2)
        cfg = TrainConfig(method=method, members=3, repulsion=RepulsionConfig(**rep))
        return state, cfg

    def test_identity_kernel_is_plain_descent(self):
        state, cfg = self._setup()
        ref = EnsembleState.from_flat(state.spec, state.flat_data())
        svgd_step(state, (X, Y), cfg, make_optimizer(state.tensors(), OptimizerConfig("sgd", lr=0.1)),
                  kernel_override="identity")
        T.backward(task_loss(ensemble_forward(ref, X)[0], Y, "classification"))
        make_optimizer(ref.tensors(), OptimizerConfig("sgd", lr=0.1)).step()
        assert state.flat_data().tobytes() == ref.flat_data().tobytes()

    def test_constant_kernel_gives_mean_gradient(self):
        state, cfg = self._setup()
        ref = EnsembleState.from_flat(state.spec, state.flat_data())
        out = svgd_step(state, (X, Y), cfg, make_optimizer(state.tensors(), OptimizerConfig("sgd", lr=0.1)),
                        kernel_override="ones")
        T.backward(task_loss(ensemble_forward(ref, X)[0], Y, "classification"))
        flat = np.concatenate([p.grad.reshape(3, -1) for p in ref.tensors()], axis=1)
        mean = np.broadcast_to(flat.sum(0), flat.shape)
        np.testing.assert_allclose(-out["phi"], mean, rtol=1e-12)

    def test_zero_likelihood_gradient_is_pure_repulsion(self):
        """Output layer pinned to the targets: only the energy gradient moves the members."""
        spec = MlpSpec([2, 8, 8, 1], "gelu")
        members = []
        for seed in range(3):
            params = init_params(spec, seed)
            params[-1] = (Tensor(np.zeros((8, 1))), Tensor(np.full((1, 1), 0.5)))
            members.append(params)
        state = EnsembleState.from_members(spec, members)
        rep = RepulsionConfig(gamma_id=0.8, eps_arc=0.01, layer_weights=[0.5, 0.5, 0.0])
        cfg = TrainConfig(method="svgd_he", members=3, repulsion=rep)
        ref = EnsembleState.from_flat(state.spec, state.flat_data())
        out = svgd_step(state, (X, np.full((12, 1), 0.5)), cfg,
                        make_optimizer(state.tensors(), OptimizerConfig("sgd", lr=0.1)), task="regression")
        _, feats = ensemble_forward(ref, X)
        T.backward(K.he_smooth([K.gram_linear(f) for f in feats], rep))
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in ref.tensors()]
        flat = np.concatenate([g.reshape(3, -1) for g in grads], axis=1)
        # d/dtheta_i of sum_j k(theta_i, sg theta_j) is half the full symmetric gradient
        expected = -0.8 / 3 * flat * (3 * 2) / 2
        np.testing.assert_allclose(out["phi"], expected, rtol=1e-9, atol=1e-14)

    def test_near_coincident_pair_separates(self):
        base = init_params(SPEC, 4)
        rng = np.random.default_rng(3)
        twin = [(Tensor(W.data + 1e-3 * rng.normal(size=W.shape)), Tensor(b.data.copy())) for W, b in base]
        state = EnsembleState.from_members(SPEC, [base, twin])
        cfg = TrainConfig(method="svgd_he", members=2, repulsion=RepulsionConfig(gamma_id=1.0, eps_arc=0.01))
        before = pairwise_cka_diagnostic(ensemble_forward(state, X)[1])
        out = svgd_step(state, (X, Y), cfg, make_optimizer(state.tensors(), OptimizerConfig("sgd", lr=1e-3)))
        assert np.all(np.isfinite(out["phi"]))
        assert pairwise_cka_diagnostic(ensemble_forward(state, X)[1]) < before

    def test_rbf_kernel_diagonal(self):
        state, cfg = self._setup("svgd_rbf")
        out = svgd_step(state, (X, Y), cfg, make_optimizer(state.tensors(), OptimizerConfig("sgd", lr=0.1)))
        np.testing.assert_array_equal(np.diag(out["kernel"]), 1.0)
        assert np.all(out["kernel"] <= 1.0)

    def test_needs_two_members(self):
        state = init_ensemble(SPEC, 1, 0)
        with pytest.raises(ValueError):
            svgd_step(state, (X, Y), TrainConfig(method="ensemble", members=1), None)


class TestTrain:
    data = quadrants(50, 0)

    def _run(self, method, steps=60, **kw):
        rep = RepulsionConfig(gamma_id=1.0, eps_arc=0.01)
        cfg = TrainConfig(method=method, members=4, steps=steps, seed=5, repulsion=rep, **kw)
        return train(cfg, SPEC, self.data, ood_source=X_OOD)

    def test_deterministic(self):
        _, a = self._run("ensemble_he")
        _, b = self._run("ensemble_he")
        assert a.task_loss == b.task_loss
        assert a.pairwise_cka == b.pairwise_cka

    @pytest.mark.parametrize("method", ["ensemble", "ensemble_ood_he", "svgd_rbf", "svgd_cka", "hypernet"])
    def test_methods_run(self, method):
        _, hist = self._run(method, steps=5)
        assert len(hist) == 5
        assert np.all(np.isfinite(hist.task_loss))

    def test_ensemble_fits_quadrants(self):
        model, hist = self._run("ensemble", steps=400)
        logits, _ = ensemble_forward(model, self.data.X)
        acc = np.mean(logits.data.mean(0).argmax(-1) == self.data.y)
        assert acc > 0.99

    def test_repulsion_lowers_similarity(self):
        _, plain = self._run("ensemble", steps=300)
        _, he = self._run("ensemble_he", steps=300)
        assert he.pairwise_cka[-1] < plain.pairwise_cka[-1]

    def test_ood_source_required(self):
        with pytest.raises(ValueError, match="OOD"):
            train(TrainConfig(method="ensemble_ood_he", members=2, steps=1), SPEC, self.data)

    def test_non_finite_loss(self):
        bad = Dataset(np.full((4, 2), np.nan), np.zeros(4, dtype=int))
        with pytest.raises(NonFiniteLossError) as err:
            with np.errstate(invalid="ignore"):
                train(TrainConfig(method="ensemble", members=2, steps=3), SPEC, bad)
        assert err.value.step == 0
        assert "task" in err.value.parts

    def test_history_csv(self, tmp_path):
        _, hist = self._run("ensemble", steps=3)
        hist.to_csv(tmp_path / "h.csv")
        lines = (tmp_path / "h.csv").read_text().splitlines()
        assert lines[0] == "step,task_loss,repulsion,ood_entropy,pairwise_cka"
        assert len(lines) == 4


class TestOptimizers:
    def test_sgd_momentum(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = make_optimizer([p], OptimizerConfig("sgd", lr=0.1, momentum=0.5))
        opt.step([np.array([1.0])])
        opt.step([np.array([1.0])])
        np.testing.assert_allclose(p.data, [1.0 - 0.1 - 0.15])

    def test_adamw_first_step_is_lr(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        make_optimizer([p], OptimizerConfig("adamw", lr=0.01)).step([np.array([3.0, -0.5])])
        np.testing.assert_allclose(p.data, [0.99, -1.99], rtol=1e-6)

    def test_decoupled_weight_decay(self):
        p = Tensor(np.array([2.0]), requires_grad=True)
        make_optimizer([p], OptimizerConfig("adamw", lr=0.1, weight_decay=0.5)).step([np.array([0.0])])
        np.testing.assert_allclose(p.data, [2.0 * 0.95])

    def test_warmup(self):
        p = Tensor(np.array([0.0]), requires_grad=True)
        opt = make_optimizer([p], OptimizerConfig("sgd", lr=1.0, warmup_steps=4))
        opt.step([np.array([1.0])])
        np.testing.assert_allclose(p.data, [-0.25])

    def test_invalid(self):
        with pytest.raises(ValueError):
            OptimizerConfig("rmsprop")
        with pytest.raises(ValueError):
            OptimizerConfig(lr=0.0)
