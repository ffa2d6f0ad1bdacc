import numpy as np
import pytest

from foliage.assembly import CoefficientSet, DomainSpec, assemble
from foliage.dynamics import (
    DynamicsError,
    estimate_LF,
    eval_F,
    integrate,
    linear_nonlinearity,
    nodal_delta,
    table_nonlinearity,
    tanh_nonlinearity,
    zero_nonlinearity,
)
from foliage.noise import NoiseSpec, TimeGrid, sample_stationary
from foliage.spectral import alpha_norm, eigendecompose, semigroup_apply


@pytest.fixture(scope="module")
def model():
    forms = assemble(DomainSpec(0.0, 1.0, 31), CoefficientSet.constant())
    return eigendecompose(forms, 2)


def path_for(model, seed=0, t_plus=4.0, h=0.001):
    spec = NoiseSpec.uniform(4, model.dof, 1.0, seed)
    return sample_stationary(spec, model.lambdas, TimeGrid(0.0, t_plus, h))


def test_nonlinearity_derivatives_match_finite_differences():
    rng = np.random.default_rng(0)
    u = rng.uniform(-2.0, 2.0, size=200)
    step = 1e-6
    for nl in (tanh_nonlinearity(0.7, 0.3), linear_nonlinearity(0.4, 0.2)):
        for fn, dfn in ((nl.f, nl.df), (nl.g, nl.dg)):
            fd = (fn(u + step) - fn(u - step)) / (2.0 * step)
            assert np.max(np.abs(fd - dfn(u))) <= 1e-5 * max(1.0, np.max(np.abs(dfn(u))))


def test_lipschitz_constants_hold_on_random_pairs():
    rng = np.random.default_rng(1)
    a = rng.uniform(-3, 3, size=500)
    b = rng.uniform(-3, 3, size=500)
    for nl in (tanh_nonlinearity(0.7, 0.3), linear_nonlinearity(0.4, 0.2),
               table_nonlinearity([-1.0, 0.0, 2.0], [0.5, 0.0, -0.8])):
        assert np.all(np.abs(nl.f(a) - nl.f(b)) <= nl.lip_f * np.abs(a - b) + 1e-12)
        assert np.all(np.abs(nl.g(a) - nl.g(b)) <= nl.lip_g * np.abs(a - b) + 1e-12)


def test_table_nonlinearity_slopes():
    nl = table_nonlinearity([-1.0, 0.0, 1.0], [1.0, 0.0, 2.0])
    assert nl.lip_f == 2.0
    assert nl.f(0.5) == pytest.approx(1.0)
    assert nl.f(-2.0) == pytest.approx(2.0)  # edge-slope continuation
    assert nl.df(0.5) == 2.0 and nl.df(-0.5) == -1.0


def test_eval_F_identity_and_zero(model):
    rng = np.random.default_rng(2)
    c = rng.standard_normal(model.dof)
    ident = linear_nonlinearity(1.0)
    assert np.max(np.abs(eval_F(c, model, ident) - c)) < 1e-10
    assert np.max(np.abs(eval_F(c, model, zero_nonlinearity()))) == 0.0
    sin_nl = tanh_nonlinearity(1.0)
    assert np.max(np.abs(eval_F(np.zeros(model.dof), model, sin_nl))) == 0.0


def test_nodal_delta_small_increment_branch_accuracy():
    nl = tanh_nonlinearity(1.0)
    rng = np.random.default_rng(3)
    b = rng.uniform(-1, 1, size=(12, 5))
    import mpmath

    mpmath.mp.dps = 40
    hi_delta = np.vectorize(
        lambda bb, uu: float(mpmath.tanh(mpmath.mpf(bb) + mpmath.mpf(uu)) - mpmath.tanh(mpmath.mpf(bb)))
    )
    for mag in (1e-3, 1e-9, 1e-13):
        u = mag * rng.uniform(0.5, 1.0, size=b.shape)
        got = nodal_delta(nl, b, u)
        ref = hi_delta(b, u)
        rel = np.max(np.abs(got - ref) / np.abs(ref))
        assert rel < 1e-8, (mag, rel)


def test_estimate_LF_formula_and_sampled_inequality(model):
    nl = tanh_nonlinearity(0.5, 0.2)
    assert estimate_LF(nl, model, 0.0) == pytest.approx(0.5)
    # unit preset has lambda_1 = 1, so the relaxation factor is trivial
    assert estimate_LF(nl, model, 0.5) == pytest.approx(0.5, rel=1e-9)

    rng = np.random.default_rng(4)
    alpha = 0.25
    lf = estimate_LF(nl, model, alpha)
    decay = 1.0 / (1.0 + np.arange(model.dof))
    for _ in range(1000):
        x = rng.standard_normal(model.dof) * decay
        y = rng.standard_normal(model.dof) * decay
        lhs = np.linalg.norm(eval_F(x, model, nl) - eval_F(y, model, nl))
        assert lhs <= lf * alpha_norm(x - y, alpha, model) * (1.0 + 1e-12)


def test_integrate_pure_decay_matches_semigroup(model):
    X0 = np.zeros(model.dof)
    X0[3] = 1.0
    traj = integrate(X0, None, 0.0, 1.0, 0.001, model, zero_nonlinearity())
    exact = semigroup_apply("full", 1.0, X0, model)
    assert np.max(np.abs(traj.states[:, -1] - exact)) <= 1e-12 * np.max(np.abs(exact) + 1e-30)
    norms = [np.linalg.norm(traj.states[:, j]) for j in range(0, traj.n_steps + 1, 100)]
    assert all(n2 <= n1 + 1e-15 for n1, n2 in zip(norms, norms[1:]))


def test_integrate_linear_closed_form_first_order(model):
    c = 0.4
    nl = linear_nonlinearity(c)
    X0 = np.zeros(model.dof)
    X0[:3] = [1.0, -0.5, 0.25]
    T = 1.0
    errs = {}
    for h in (2e-3, 1e-3):
        traj = integrate(X0, None, 0.0, T, h, model, nl)
        exact = X0 * np.exp((-model.lambdas + c) * T)
        errs[h] = np.linalg.norm(traj.states[:, -1] - exact)
    ratio = errs[2e-3] / errs[1e-3]
    assert 1.7 <= ratio <= 2.3


def test_integrate_nonlinear_self_convergence_first_order(model):
    # Noise-free so the stepping error has a smooth expansion in h; the rough
    # noise path would add non-telescoping sampling terms of the same order.
    nl = tanh_nonlinearity(1.0)
    X0 = np.zeros(model.dof)
    X0[:4] = [0.8, -0.6, 0.4, -0.2]
    ends = {}
    for h in (0.002, 0.001, 0.0005):
        ends[h] = integrate(X0, None, 0.0, 1.0, h, model, nl).states[:, -1]
    d1 = np.linalg.norm(ends[0.002] - ends[0.001])
    d2 = np.linalg.norm(ends[0.001] - ends[0.0005])
    slope = np.log2(d1 / d2)
    assert 0.8 <= slope <= 1.2


def test_integrate_requires_path_when_noisy(model):
    with pytest.raises(DynamicsError):
        integrate(np.zeros(model.dof), None, 0.1, 1.0, 0.001, model, tanh_nonlinearity(0.5))


def test_integrate_determinism(model):
    nl = tanh_nonlinearity(0.5)
    path = path_for(model, seed=9, t_plus=0.5)
    X0 = np.zeros(model.dof)
    X0[:2] = [1.0, 0.3]
    t1 = integrate(X0, path, 0.2, 0.5, 0.001, model, nl)
    t2 = integrate(X0, path, 0.2, 0.5, 0.001, model, nl)
    assert np.array_equal(t1.states, t2.states)


@pytest.mark.filterwarnings("ignore:overflow", "ignore:invalid value")
def test_integrate_aborts_on_blowup(model):
    # An expansive linear forcing overpowers the decay and must trip the
    # finiteness guard with the step index in the message.
    nl = linear_nonlinearity(1e8)
    X0 = np.ones(model.dof)
    with pytest.raises(DynamicsError, match="step"):
        integrate(X0, None, 0.0, 1.0, 0.01, model, nl)
