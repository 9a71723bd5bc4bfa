import numpy as np
import pytest
import scipy.linalg
from hypothesis import settings

settings.register_profile("default", max_examples=30, deadline=None)
settings.load_profile("default")


def random_state(rng, n, cols=None):
    shape = (1 << n,) if cols is None else (1 << n, cols)
    v = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return v / np.linalg.norm(v, axis=0)


def random_unitary(rng, n):
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def dense_pauli(label):
    """Kronecker oracle; ``label[i]`` acts on site i (little-endian)."""
    mats = {"I": np.eye(2), "X": np.array([[0, 1], [1, 0]]),
            "Y": np.array([[0, -1j], [1j, 0]]), "Z": np.diag([1.0, -1.0])}
    out = np.array([[1.0]])
    for ch in label:
        out = np.kron(mats[ch], out)
    return out


def dense_tfim(graph, J, h_l=0.0):
    """Hamiltonian from Kronecker products, independent of PauliSum."""
    n = graph.n_sites
    dim = 1 << n
    h = np.zeros((dim, dim), dtype=complex)
    for i in range(n):
        lab = ["I"] * n
        lab[i] = "Z"
        h -= dense_pauli(lab)
        if h_l:
            lab[i] = "X"
            h -= h_l * dense_pauli(lab)
    for i, j in graph.bonds:
        lab = ["I"] * n
        lab[i] = lab[j] = "X"
        h -= J * dense_pauli(lab)
    return h


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def expm_herm(gen):
    return scipy.linalg.expm(1j * gen)


# one summary line per acceptance criterion, printed at the end of the run
_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.fixture
def report(request):
    lines = request.config.stash[_CRITERIA]
    term = request.config.pluginmanager.get_plugin("terminalreporter")

    def add(criterion: int, ok: bool, detail: str, gating: bool = True):
        status = "PASS" if ok else ("FAIL" if gating else "FAIL (diagnostic, not gating)")
        line = f"criterion {criterion}: {status} | {detail}"
        lines[criterion] = line
        if term is not None:
            term.write_line("")
            term.write_line(line)
    return add


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
