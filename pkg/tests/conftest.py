import numpy as np
import pytest

from capgame import PayoffMode, random_instance, two_link_instance


@pytest.fixture
def example_net():
    """Two links (10, 100), three flows, log utilities, uniform payoffs."""
    return two_link_instance()


def fuzz_corpus(count, seed_base=1000, max_links=20, max_flows=40):
    """Deterministic random instances cycling gamma and payoff mode."""
    rng = np.random.default_rng(seed_base)
    instances = []
    for i in range(count):
        num_links = int(rng.integers(2, max_links + 1))
        num_flows = int(rng.integers(2, max_flows + 1))
        gamma = (0.5, 1.0)[i % 2]
        mode = (PayoffMode.UNIFORM, PayoffMode.PATH_LENGTH)[(i // 2) % 2]
        instances.append(
            random_instance(
                num_links,
                num_flows,
                p_route=0.5,
                cap_range=(10.0, 100.0),
                gamma=gamma,
                payoff_mode=mode,
                seed=seed_base + i,
            )
        )
    return instances
