import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


def random_spd(rng, n, max_cond=10.0):
    """SPD matrix with eigenvalues in [1, max_cond] and a random eigenbasis."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = rng.uniform(1.0, max_cond, n)
    lam[0], lam[-1] = 1.0, max_cond * rng.uniform(0.5, 1.0)
    return (Q * lam) @ Q.T


def random_invertible(rng, n, max_cond=10.0):
    """Matrix with singular values in [1, max_cond]."""
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    s = rng.uniform(1.0, max_cond, n)
    s[0] = 1.0
    return (U * s) @ V.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


CONFIG_DIR = __import__("pathlib").Path(__file__).resolve().parent.parent / "configs"

# command -> (config file, expected exit status)
COMMAND_CONFIGS = {
    "axioms": ("axioms_randers.ini", 0),
    "bl-compute": ("bl_compute_euclidean.ini", 0),
    "bl-exact": ("bl_exact_square.ini", 0),
    "distance": ("distance_randers.ini", 0),
    "bilipschitz": ("bilipschitz_randers.ini", 1),
    "isometry-check": ("isometry_remark2.ini", 0),
    "blowup": ("blowup_remark2.ini", 0),
    "qc-distortion": ("qc_linear.ini", 0),
    "christoffel-residual": ("christoffel_remark2.ini", 0),
    "dilation-check": ("dilation_square.ini", 0),
    "holder-probe": ("holder_remark2.ini", 0),
}


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
