import numpy as np
import pytest

from mzsde import (
    Langevin1D,
    OrnsteinUhlenbeck,
    build_langevin_workspace,
    build_mori_projection,
    build_ou_workspace,
    orthogonal_dynamics,
)


@pytest.fixture(scope="session")
def ou_model():
    return OrnsteinUhlenbeck(theta=1.0, sigma=np.sqrt(2.0))


@pytest.fixture(scope="session")
def ou_ws(ou_model):
    basis, quad, gen = build_ou_workspace(ou_model, 40)
    return {"model": ou_model, "basis": basis, "quad": quad, "gen": gen}


@pytest.fixture(scope="session")
def harmonic_model():
    return Langevin1D(mu=1.0, gamma=1.0, beta=1.0, potential=(0.0, 0.0, 0.5))


@pytest.fixture(scope="session")
def harmonic_ws(harmonic_model):
    return build_langevin_workspace(harmonic_model, 16, 16)


@pytest.fixture(scope="session")
def quartic_model():
    return Langevin1D(mu=1.0, gamma=1.0, beta=1.0, potential=(0.0, 0.0, 0.0, 0.0, 0.25))


@pytest.fixture(scope="session")
def quartic_ws(quartic_model):
    return build_langevin_workspace(quartic_model, 16, 16)


def momentum_observable(q, p):
    return p + 0.0 * q


def position_observable(q, p):
    return q + 0.0 * p


@pytest.fixture(scope="session")
def harmonic_p(harmonic_ws):
    """Mori projection on {p} with its orthogonal dynamics, harmonic model."""
    proj = build_mori_projection(
        [momentum_observable], harmonic_ws.basis, (harmonic_ws.quad_q, harmonic_ws.quad_p)
    )
    og = orthogonal_dynamics(harmonic_ws.generator, proj)
    return proj, og


@pytest.fixture(scope="session")
def harmonic_q(harmonic_ws):
    proj = build_mori_projection(
        [position_observable], harmonic_ws.basis, (harmonic_ws.quad_q, harmonic_ws.quad_p)
    )
    og = orthogonal_dynamics(harmonic_ws.generator, proj)
    return proj, og


@pytest.fixture(scope="session")
def quartic_p(quartic_ws):
    proj = build_mori_projection(
        [momentum_observable], quartic_ws.basis, (quartic_ws.quad_q, quartic_ws.quad_p)
    )
    og = orthogonal_dynamics(quartic_ws.generator, proj)
    return proj, og


def kramers_eigenvalues(gamma, count):
    """Analytic spectrum {n mu+ + k mu-} of the harmonic accretive generator
    (mu = beta = 1, V = q^2/2), sorted by (Re, Im)."""
    disc = np.sqrt(complex(gamma * gamma - 4.0))
    mu_p = (gamma + disc) / 2
    mu_m = (gamma - disc) / 2
    vals = [n * mu_p + k * mu_m for n in range(12) for k in range(12)]
    vals.sort(key=lambda z: (round(z.real, 10), round(z.imag, 10)))
    return np.array(vals[:count])


def match_eigenvalues(computed, expected):
    """Greedy nearest matching; returns max relative mismatch."""
    pool = list(computed)
    worst = 0.0
    for target in expected:
        dists = [abs(z - target) for z in pool]
        i = int(np.argmin(dists))
        denom = max(abs(target), 1.0)
        worst = max(worst, dists[i] / denom)
        pool.pop(i)
    return worst
