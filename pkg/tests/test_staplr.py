import numpy as np
import pytest
from scipy.special import expit
from scipy.stats import rankdata

from metaimpute import glm, simgen, staplr
from metaimpute.errors import DimensionMismatch, NonFiniteInput, TooFewPerClass, ViewTooSparse
from metaimpute.glm import GlmModel, Penalty
from metaimpute.staplr import MultiViewDataset, StaplrConfig, ViewLayout

FAST = StaplrConfig(tuning_folds=5, meta_folds=5, n_lambda=20)


def auc(score, y):
    r = rankdata(score)
    n1 = y.sum()
    return (r[y == 1].sum() - n1 * (n1 + 1) / 2) / (n1 * (len(y) - n1))


def two_view(seed, n=200, sizes=(3, 4)):
    cfg = simgen.SimConfig(n_train=n, n_test=n, view_sizes=sizes, seed=seed, noise_view=1)
    return simgen.gen_dataset(cfg)


def test_layout():
    lay = ViewLayout((2, 3, 1))
    assert lay.n_views == 3 and lay.n_features == 6
    assert lay.columns(1) == slice(2, 5)
    np.testing.assert_array_equal(lay.view_of_column(), [0, 0, 1, 1, 1, 2])
    with pytest.raises(ValueError):
        ViewLayout((2, 0))


def test_dataset_validation():
    lay = ViewLayout((1, 1))
    with pytest.raises(DimensionMismatch):
        MultiViewDataset(np.ones((3, 3)), lay, np.ones(3))
    X = np.array([[1.0, np.nan], [1.0, 2.0]])
    with pytest.raises(NonFiniteInput):
        MultiViewDataset(X, lay, np.array([0.0, 1.0]))
    ok = MultiViewDataset(X, lay, np.array([0.0, 1.0]), [[False, True], [False, False]])
    np.testing.assert_array_equal(ok.complete_rows(), [1])


def test_make_folds_examples():
    y = np.array([0, 1] * 5)
    f = staplr.make_folds(10, 5, y, seed=1)
    for k in range(5):
        assert sorted(y[f.test_rows(k)]) == [0, 1]
    np.testing.assert_array_equal(f.assignment, staplr.make_folds(10, 5, y, seed=1).assignment)
    sizes = np.bincount(staplr.make_folds(7, 3, np.array([0, 0, 0, 1, 1, 1, 1]), 0).assignment)
    assert sorted(sizes) == [2, 2, 3]
    with pytest.raises(TooFewPerClass):
        staplr.make_folds(10, 5, np.array([0] * 8 + [1] * 2), 0)


@pytest.mark.parametrize("seed", range(5))
def test_make_folds_stratified(seed):
    rng = np.random.default_rng(seed)
    n, K = int(rng.integers(40, 120)), int(rng.integers(2, 11))
    y = (rng.random(n) < rng.uniform(0.2, 0.8)).astype(float)
    if min(y.sum(), n - y.sum()) < K:
        return
    f = staplr.make_folds(n, K, y, seed)
    sizes = np.bincount(f.assignment, minlength=K)
    assert sizes.max() - sizes.min() <= 1
    for k in range(K):
        rows = f.test_rows(k)
        assert abs(y[rows].sum() - y.mean() * rows.size) < 1 + 1e-9


def test_base_learners_ignore_missing_rows():
    train, _, _ = two_view(0)
    mask = np.zeros((train.n, 2), dtype=bool)
    mask[:60, 1] = True
    X1 = train.X.copy()
    X1[:60, 3:] = 0.0
    X2 = train.X.copy()
    X2[:60, 3:] = 99.0
    a = staplr.fit_base_learners(MultiViewDataset(X1, train.layout, train.y, mask), FAST, 3)
    b = staplr.fit_base_learners(MultiViewDataset(X2, train.layout, train.y, mask), FAST, 3)
    for ma, mb in zip(a, b):
        np.testing.assert_array_equal(ma.coef, mb.coef)
    assert a[1].n_features == 4


def test_base_learners_complete_data():
    train, _, _ = two_view(1)
    models = staplr.fit_base_learners(train, FAST, 5)
    direct = staplr._tuned_fit(train.view(0), train.y, Penalty.RIDGE, FAST,
                               staplr._view_seed(5, 0, 0)).model
    np.testing.assert_array_equal(models[0].coef, direct.coef)


def test_noise_view_gets_larger_lambda():
    wins = 0
    for seed in range(50):
        train, _, _ = two_view(seed, n=500, sizes=(5, 5))
        m = staplr.fit_base_learners(train, StaplrConfig(n_lambda=30), seed)
        wins += m[1].lam >= m[0].lam
    assert wins >= 30


def test_build_z_contract_and_purity():
    train, _, _ = two_view(2)
    train = simgen.inject_missingness(train, simgen.MissingnessPlan(1, 0.5, 4))
    folds = staplr.meta_folds_for(train, FAST, 1)
    seen = {}
    zm = staplr.build_z(train, folds, FAST, 1,
                        on_fit=lambda v, k, rows: seen.__setitem__((v, k), set(rows)))
    assert zm.z.shape == (train.n, 2)
    np.testing.assert_array_equal(zm.missing, train.view_missing)
    assert np.isnan(zm.z[zm.missing]).all()
    present = zm.z[~zm.missing]
    assert ((present > 0) & (present < 1)).all()
    for (v, k), rows in seen.items():
        assert not rows & set(folds.test_rows(k))
        assert not rows & set(np.flatnonzero(train.view_missing[:, v]))


def test_build_z_separable_view_auc():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        y = (rng.random(500) < 0.5).astype(float)
        X = np.column_stack([y + 0.01 * rng.standard_normal(500),
                             rng.standard_normal((500, 2))])
        data = MultiViewDataset(X, ViewLayout((1, 2)), y)
        zm = staplr.build_z(data, staplr.meta_folds_for(data, FAST, seed), FAST, seed)
        assert auc(zm.z[:, 0], y) > 0.95


def test_build_z_fold_model_ignores_order_inside_fold():
    train, _, _ = two_view(3, n=120)
    folds = staplr.meta_folds_for(train, FAST, 2)
    rows = folds.test_rows(0)
    perm = np.arange(train.n)
    perm[rows] = rows[::-1]
    shuffled = train.subset(perm)
    a = staplr.build_z(train, folds, FAST, 2).z
    b = staplr.build_z(shuffled, glm.Folds(folds.assignment[perm], folds.n_folds), FAST, 2).z
    np.testing.assert_allclose(b[rows], a[perm][rows], rtol=0, atol=1e-12)


def test_all_missing_view_rejected():
    train, _, _ = two_view(4, n=60)
    mask = np.zeros((60, 2), dtype=bool)
    mask[:, 1] = True
    data = MultiViewDataset(train.X, train.layout, train.y, mask)
    with pytest.raises(ViewTooSparse):
        staplr.build_z(data, staplr.meta_folds_for(data, FAST), FAST)
    with pytest.raises(ViewTooSparse):
        staplr.fit_base_learners(data, FAST)


def test_meta_selects_signal_column():
    signal, zero = 0, np.zeros(3)
    for seed in range(50):
        rng = np.random.default_rng(seed)
        p = expit(1.5 * rng.standard_normal(1000))
        y = (rng.random(1000) < p).astype(float)
        Z = np.column_stack([p, rng.random((1000, 3))])
        m = staplr.fit_meta(Z, y, StaplrConfig(n_lambda=50), seed)
        assert (m.coef >= 0).all()
        signal += m.coef[0] > 0
        zero += m.coef[1:] == 0
    # the cv-minimizing lambda lets a pure-noise column in roughly one run in four
    assert signal == 50
    assert (zero / 50 >= 0.65).all()


def test_meta_identical_columns():
    rng = np.random.default_rng(5)
    p = expit(rng.standard_normal(300))
    y = (rng.random(300) < p).astype(float)
    Z = np.column_stack([p, p, p])
    m = staplr.fit_meta(Z, y, FAST, 1)
    assert m.coef.sum() > 0
    single = glm.fit_penalized_logistic(Z[:, :1], y, Penalty.NONNEG_LASSO, m.lam)
    np.testing.assert_allclose(m.predict_proba(Z), single.predict_proba(Z[:, :1]), atol=1e-6)


def test_stacked_composition_and_determinism():
    train, test, _ = two_view(6)
    a = staplr.fit_stacked(train, FAST, 7)
    b = staplr.fit_stacked(train, FAST, 7)
    base = np.column_stack([m.predict_proba(test.view(v)) for v, m in enumerate(a.base_models)])
    np.testing.assert_allclose(staplr.predict_stacked(a, test.X),
                               a.meta_model.predict_proba(base), rtol=0, atol=1e-12)
    np.testing.assert_array_equal(a.predict_proba(test.X), b.predict_proba(test.X))
    np.testing.assert_array_equal(staplr.selected_views(a), a.meta_model.coef > 0)
    with pytest.raises(DimensionMismatch):
        a.predict_proba(test.X[:, :3])


def test_selected_views_definition():
    meta = GlmModel(0.0, np.array([0.2, 0.0, 0.0, 0.1]), Penalty.NONNEG_LASSO, 0.1,
                    np.zeros(4), np.ones(4))
    model = staplr.StackedModel((), meta, ViewLayout((1, 1, 1, 1)))
    np.testing.assert_array_equal(model.selected_views(), [True, False, False, True])
