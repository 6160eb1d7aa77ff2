import numpy as np
import pytest

from cutwave import build_structured_mesh, build_system, domain_catalog


@pytest.fixture(scope="session")
def disc_domain():
    return domain_catalog("disc", bc="dirichlet")


@pytest.fixture(scope="session")
def disc_system(disc_domain):
    """Weakly Dirichlet disc on a coarse mesh, shared across test modules."""
    mesh = build_structured_mesh(disc_domain.bounding_box, 0.08)
    return build_system(mesh, disc_domain)


@pytest.fixture(scope="session")
def disc_system_neumann():
    domain = domain_catalog("disc", bc="neumann")
    mesh = build_structured_mesh(domain.bounding_box, 0.08)
    return build_system(mesh, domain)


@pytest.fixture(scope="session")
def uncut_system():
    """phi < 0 everywhere: reduces to a classical fitted discretization."""
    domain = domain_catalog("disc", bc="neumann", radius=10.0)
    mesh = build_structured_mesh((0.0, 1.0, 0.0, 1.0), 0.4)
    return build_system(mesh, domain)


def random_interior(system, seed=0, n=1):
    rng = np.random.default_rng(seed)
    if n == 1:
        return rng.standard_normal(system.n_interior)
    return rng.standard_normal((n, system.n_interior))
