import numpy as np
import pytest

from imgk.errors import ValidationError, ZeroVarianceError
from imgk.pca import fit_pca, transform, variance_report
from imgk.validate import pca_eig_oracle

RNG = np.random.default_rng(1234)


def test_rank2_data_explains_everything_in_two_components():
    # points lying in a 2-D affine subspace of 10-D
    basis = RNG.standard_normal((2, 10))
    coords = RNG.standard_normal((50, 2))
    points = coords @ basis + RNG.standard_normal(10)
    model = fit_pca(points, 100)
    assert model.l_eff == min(100, 49, 10)
    assert abs(model.explained_variance_ratio[:2].sum() - 1.0) <= 1e-10
    curve = variance_report(model)
    assert abs(curve[1] - 1.0) <= 1e-10
    assert np.all(np.diff(curve) >= -1e-15) and curve[-1] <= 1.0


def test_identical_points_raise_zero_variance():
    points = np.tile(RNG.standard_normal(8), (20, 1))
    with pytest.raises(ZeroVarianceError):
        fit_pca(points, 5)


def test_too_few_rows_and_nonfinite_rejected():
    with pytest.raises(ValidationError):
        fit_pca(RNG.standard_normal((1, 4)), 2)
    bad = RNG.standard_normal((5, 4))
    bad[2, 1] = np.inf
    with pytest.raises(ValidationError):
        fit_pca(bad, 2)


def test_ratios_match_eig_oracle_on_big_matrix():
    points = np.random.default_rng(7).standard_normal((980, 1024))
    model = fit_pca(points, 100)
    oracle_ratios, _ = pca_eig_oracle(points)
    assert np.max(np.abs(model.explained_variance_ratio - oracle_ratios[:100])) <= 1e-8


def test_transformed_column_variances_equal_eigenvalues():
    points = RNG.standard_normal((120, 30))
    model = fit_pca(points, 10)
    projected = transform(model, points)
    column_var = projected.var(axis=0, ddof=1)
    centered = points - points.mean(axis=0)
    total_var = (centered ** 2).sum() / (points.shape[0] - 1)
    eigenvalues = model.explained_variance_ratio * total_var
    assert np.max(np.abs(column_var - eigenvalues)) <= 1e-8


def test_mean_vector_transforms_to_zero_row():
    points = RNG.standard_normal((40, 6)) + 3.0
    model = fit_pca(points, 4)
    row = transform(model, model.mean[None, :])
    assert np.max(np.abs(row)) <= 1e-12


def test_empty_input_transforms_to_empty_output():
    model = fit_pca(RNG.standard_normal((10, 5)), 3)
    out = transform(model, np.empty((0, 5)))
    assert out.shape == (0, model.l_eff)


def test_dimension_mismatch_rejected():
    model = fit_pca(RNG.standard_normal((10, 5)), 3)
    with pytest.raises(ValidationError):
        transform(model, RNG.standard_normal((4, 6)))


def test_components_orthonormal_and_ratios_sorted():
    points = RNG.standard_normal((60, 20))
    model = fit_pca(points, 12)
    gram = model.components @ model.components.T
    assert np.max(np.abs(gram - np.eye(model.l_eff))) <= 1e-8
    ratios = model.explained_variance_ratio
    assert np.all(np.diff(ratios) <= 1e-15)
    assert ratios.sum() <= 1 + 1e-10


def test_full_rank_reconstruction():
    points = RNG.standard_normal((25, 8))
    model = fit_pca(points, min(24, 8))
    recon = model.mean + transform(model, points) @ model.components
    rel = np.linalg.norm(recon - points) / np.linalg.norm(points)
    assert rel <= 1e-6


def test_shift_equivariance():
    points = RNG.standard_normal((50, 12))
    shift = RNG.standard_normal(12) * 10
    a = fit_pca(points, 6)
    b = fit_pca(points + shift, 6)
    assert np.max(np.abs(a.components - b.components)) <= 1e-8
    assert np.max(np.abs(a.explained_variance_ratio - b.explained_variance_ratio)) <= 1e-8


def test_variance_report_arithmetic():
    points = RNG.standard_normal((30, 5))
    model = fit_pca(points, 3)
    curve = variance_report(model)
    assert np.allclose(curve, np.cumsum(model.explained_variance_ratio), atol=1e-15)


def test_variance_report_hand_ratios():
    from imgk.pca import PcaModel

    model = PcaModel(
        mean=np.zeros(3),
        components=np.eye(3),
        explained_variance_ratio=np.array([0.5, 0.3, 0.2]),
        n_fit=10,
    )
    assert np.allclose(variance_report(model), [0.5, 0.8, 1.0], atol=1e-12)


def test_model_json_round_trip():
    from imgk.pca import PcaModel

    model = fit_pca(RNG.standard_normal((15, 4)), 2)
    back = PcaModel.from_json(model.to_json())
    assert np.array_equal(back.components, model.components)
    assert np.array_equal(back.mean, model.mean)
