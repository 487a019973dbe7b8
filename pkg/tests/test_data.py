import numpy as np
import pytest

from scorefit import (
    DataError,
    Dataset,
    ModelStructure,
    ScoreElement,
    ScoreSpec,
    SpecificationError,
    compute_score,
    expand_score_columns,
    load_dataset,
)
from scorefit.data import intercept_matrix, validate_for_model


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_clean_csv(tmp_path):
    path = write(tmp_path, "y,x\n1,4\n2,5\n3,6\n")
    data = load_dataset(path, outcome="y")
    assert data.n_rows == 3
    assert data.n_dropped == 0
    np.testing.assert_array_equal(data.column("x"), [4, 5, 6])


def test_load_drops_rows_with_missing_outcome(tmp_path):
    path = write(tmp_path, "y,x\n1,4\n,5\n3,6\n")
    data = load_dataset(path, outcome="y")
    assert data.n_rows == 2
    assert data.n_dropped == 1


def test_load_missing_outcome_column_errors(tmp_path):
    path = write(tmp_path, "a,b\n1,2\n")
    with pytest.raises(DataError, match="missing column"):
        load_dataset(path, outcome="y")


def test_load_non_numeric_cell_errors(tmp_path):
    path = write(tmp_path, "y,x\n1,apple\n")
    with pytest.raises(DataError, match="non-numeric"):
        load_dataset(path, outcome="y")


def test_load_restricts_drop_to_used_columns(tmp_path):
    # the hole is in an unused column: nothing is dropped
    path = write(tmp_path, "y,x,junk\n1,4,\n2,5,9\n")
    data = load_dataset(path, outcome="y", columns=["x"])
    assert data.n_rows == 2 and data.n_dropped == 0


def test_load_tab_delimited(tmp_path):
    path = write(tmp_path, "y\tx\n1\t4\n2\t5\n", name="data.tsv")
    data = load_dataset(path, outcome="y", delimiter="\t")
    assert data.n_rows == 2


def test_expand_passthrough_product_zero():
    data = Dataset(
        {
            "g1": np.array([0.0, 1, 1]),
            "g2": np.array([0.0, 0, 0]),
            "g3": np.array([1.0, 0, 1]),
            "y": np.zeros(3),
        },
        "y",
    )
    score = ScoreSpec("G", ("g1", "g1*g3", "g2*g3"), np.array([0.5, 0.25, 0.25]))
    cols = expand_score_columns(score, data)
    np.testing.assert_array_equal(cols[:, 0], [0, 1, 1])  # passthrough
    np.testing.assert_array_equal(cols[:, 1], [0, 0, 1])  # elementwise product
    np.testing.assert_array_equal(cols[:, 2], [0, 0, 0])  # zero factor


def test_compute_score_published_weight_vector():
    # weights .2 g1 + .15 g2 - .3 g3 + .1 g4 + .05 g1g3 + .2 g2g3
    weights = np.array([0.2, 0.15, -0.3, 0.1, 0.05, 0.2])
    elements = ("g1", "g2", "g3", "g4", "g1*g3", "g2*g3")
    score = ScoreSpec("G", elements, weights)
    data = Dataset(
        {
            "g1": np.array([1.0, 0.0]),
            "g2": np.array([0.0, 1.0]),
            "g3": np.array([0.0, 1.0]),
            "g4": np.array([0.0, 0.0]),
            "y": np.zeros(2),
        },
        "y",
    )
    values = compute_score(score, data)
    assert values[0] == pytest.approx(0.2)  # only g1 active, no products
    assert values[1] == pytest.approx(0.15 - 0.3 + 0.2)  # g2, g3, g2g3


def test_compute_score_zero_genotype():
    score = ScoreSpec.equal_weights("G", ("g1", "g2", "g3", "g4"))
    data = Dataset({f"g{j}": np.zeros(2) for j in range(1, 5)} | {"y": np.zeros(2)}, "y")
    np.testing.assert_array_equal(compute_score(score, data), [0, 0])


def test_compute_score_linear_in_weights(rng):
    # pre-normalization arithmetic: score(a*w1 + (1-a)*w2) = a*s1 + (1-a)*s2
    data = Dataset(
        {"g1": rng.normal(size=20), "g2": rng.normal(size=20), "y": np.zeros(20)}, "y"
    )
    cols = expand_score_columns(ScoreSpec.equal_weights("G", ("g1", "g2")), data)
    for _ in range(10):
        w1, w2 = rng.normal(size=2), rng.normal(size=2)
        a = rng.uniform()
        np.testing.assert_allclose(
            cols @ (a * w1 + (1 - a) * w2), a * (cols @ w1) + (1 - a) * (cols @ w2)
        )


def test_score_weights_renormalized_with_warning():
    with pytest.warns(UserWarning, match="renormalizing"):
        score = ScoreSpec("G", ("g1", "g2"), np.array([2.0, 2.0]))
    np.testing.assert_allclose(np.sum(np.abs(score.weights)), 1.0)


def test_single_element_score_weight_is_sign():
    assert ScoreSpec("Z", ("z",), np.array([1.0])).weights[0] == 1.0
    assert ScoreSpec("Z", ("z",), np.array([-1.0])).weights[0] == -1.0
    with pytest.warns(UserWarning):
        renorm = ScoreSpec("Z", ("z",), np.array([-3.0]))
    assert renorm.weights[0] == -1.0


def test_duplicate_elements_rejected():
    with pytest.raises(SpecificationError, match="duplicate element"):
        ScoreSpec.equal_weights("G", ("g1", "g1"))
    with pytest.raises(SpecificationError, match="duplicate element"):
        ScoreSpec.equal_weights("G", ("g1*g2", ["g1", "g2"]))


def test_repeated_factor_rejected():
    with pytest.raises(SpecificationError, match="repeated factor"):
        ScoreElement(("g1", "g1"))


def test_all_zero_weights_rejected():
    with pytest.raises(SpecificationError, match="all zero"):
        ScoreSpec("G", ("g1", "g2"), np.array([0.0, 0.0]))


def test_structure_env2_only_for_three_way():
    g = ScoreSpec.equal_weights("G", ("g1",))
    e = ScoreSpec.equal_weights("E", ("e1",))
    z = ScoreSpec.equal_weights("Z", ("z",))
    with pytest.raises(SpecificationError):
        ModelStructure("two_way", g, e, env2=z)
    with pytest.raises(SpecificationError):
        ModelStructure("three_way", g, e)
    assert ModelStructure("three_way", g, e, env2=z).scores()[-1].name == "Z"


def test_intercept_indicators_must_partition():
    data = Dataset(
        {
            "i1": np.array([1.0, 0, 1]),
            "i2": np.array([0.0, 1, 1]),  # row 2 has two active intercepts
            "y": np.zeros(3),
        },
        "y",
    )
    g = ScoreSpec.equal_weights("G", ("i1",))
    e = ScoreSpec.equal_weights("E", ("i2",))
    model = ModelStructure("two_way", g, e, intercepts=("i1", "i2"))
    with pytest.raises(SpecificationError, match="partition"):
        intercept_matrix(model, data)


def test_default_intercept_synthesized():
    data = Dataset({"y": np.zeros(4)}, "y")
    g = ScoreSpec.equal_weights("G", ("y",))
    e = ScoreSpec.equal_weights("E", ("y",))
    icpt = intercept_matrix(ModelStructure("two_way", g, e), data)
    np.testing.assert_array_equal(icpt, np.ones((4, 1)))


def test_binomial_outcome_must_be_binary():
    data = Dataset({"g1": np.ones(3), "e1": np.ones(3), "y": np.array([0.0, 1, 2])}, "y")
    model = ModelStructure(
        "two_way",
        ScoreSpec.equal_weights("G", ("g1",)),
        ScoreSpec.equal_weights("E", ("e1",)),
        family="binomial",
    )
    with pytest.raises(DataError, match="0/1"):
        validate_for_model(model, data)


def test_take_preserves_columns():
    data = Dataset({"y": np.arange(5.0), "x": np.arange(5.0) * 2}, "y", n_dropped=3)
    sub = data.take(np.array([0, 2]))
    np.testing.assert_array_equal(sub.y, [0, 2])
    assert sub.n_dropped == 3
