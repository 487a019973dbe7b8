import numpy as np
import pytest

from scorefit import Dataset, ModelStructure, ScoreSpec


@pytest.fixture
def rng():
    return np.random.default_rng(321)


def make_two_way_data(
    n=300,
    beta=(5.0, 3.0, 2.0, 4.0),
    p=(0.5, 0.3, -0.2),
    q=(0.6, -0.4),
    noise_sd=0.0,
    seed=11,
    binary_genes=True,
):
    """Small forward-simulated two-way instance with known truth."""
    rng = np.random.default_rng(seed)
    if binary_genes:
        g_cols = rng.binomial(1, 0.4, (n, len(p))).astype(float)
    else:
        g_cols = rng.normal(0.0, 1.0, (n, len(p)))
    e_cols = rng.normal(0.0, 1.0, (n, len(q)))
    g = g_cols @ np.asarray(p)
    e = e_cols @ np.asarray(q)
    b0, be, bg, beg = beta
    y = b0 + be * e + bg * g + beg * e * g + rng.normal(0.0, noise_sd, n)
    cols = {f"g{j+1}": g_cols[:, j] for j in range(len(p))}
    cols.update({f"e{l+1}": e_cols[:, l] for l in range(len(q))})
    cols["y"] = y
    data = Dataset(cols, "y")
    structure = ModelStructure(
        "two_way",
        ScoreSpec.equal_weights("G", [f"g{j+1}" for j in range(len(p))]),
        ScoreSpec.equal_weights("E", [f"e{l+1}" for l in range(len(q))]),
    )
    truth = {
        "coefficients": {"intercept": b0, "E": be, "G": bg, "E:G": beg},
        "weights": {"G": np.asarray(p, dtype=float), "E": np.asarray(q, dtype=float)},
    }
    return data, structure, truth


@pytest.fixture
def two_way_noiseless():
    return make_two_way_data()
