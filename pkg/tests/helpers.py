import numpy as np


def random_density(rng, dim=4, rank=None):
    rank = dim if rank is None else rank
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = a @ a.conj().T
    return m / np.trace(m).real


def random_unitary(rng, dim=4):
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


# formula-level measure evaluators that accept matrices off unit trace, used
# as finite-difference oracles for the analytic gradients
def entropy_formula(m):
    p = np.linalg.eigvalsh(m)
    return float(-np.sum(p * np.log2(p)))


def linear_entropy_formula(m):
    return 4 / 3 * (1 - float(np.real(np.trace(m @ m))))


def concurrence_formula(m):
    flip = np.fliplr(np.diag([-1.0, 1, 1, -1]))
    r = np.sort(np.linalg.eigvals(m @ flip @ m.T @ flip).real)[::-1]
    q = np.sqrt(r)
    return float(q[0] - q[1:].sum())


def fd_through_linear(measure, rho, tset, step):
    """d measure / d s_nu by rebuilding rho = sum M s from perturbed s."""
    s = tset.project(rho)
    out = np.empty(16)
    for nu in range(16):
        e = np.zeros(16)
        e[nu] = step
        out[nu] = (measure(tset.combine(s + e)) - measure(tset.combine(s - e))) / (2 * step)
    return out


def bell_mixture(rng, weight=0.8):
    bell = np.zeros((4, 4), dtype=complex)
    bell[0, 0] = bell[0, 3] = bell[3, 0] = bell[3, 3] = 0.5
    return weight * bell + (1 - weight) * random_density(rng)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []
