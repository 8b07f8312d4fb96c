import numpy as np
import pytest

from coopsim.topology import Topology


def random_topology(rng, n_relays=None, snr_lo=0.05, snr_hi=5.0, label=None):
    """Random topology with iid mean link SNRs uniform in [snr_lo, snr_hi]."""
    n = int(n_relays) if n_relays is not None else int(rng.integers(1, 4))
    return Topology.from_snr(
        snr_sd=float(rng.uniform(snr_lo, snr_hi)),
        snr_sr=[float(rng.uniform(snr_lo, snr_hi)) for _ in range(n)],
        snr_rd=[float(rng.uniform(snr_lo, snr_hi)) for _ in range(n)],
        label=label or f"rand{n}",
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
