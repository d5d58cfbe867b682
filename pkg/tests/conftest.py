import numpy as np
import pytest

from inverter_afd.model import InverterParams, NoiseSpec, build_multimodel
from inverter_afd.sim import Experiment


@pytest.fixture(scope="session")
def params():
    return InverterParams()


@pytest.fixture(scope="session")
def mm(params):
    return build_multimodel(params, 1e-3, NoiseSpec())


@pytest.fixture(scope="session")
def exp8(params):
    return Experiment(params, N=8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_mode(rng, n=4, m=4, p=2, mode=None, scale=0.9):
    """Random stable discrete mode with perturbation columns (1, 3)."""
    from inverter_afd.model import DiscreteMode, Mode
    A = rng.standard_normal((n, n))
    A *= scale / max(np.abs(np.linalg.eigvals(A)).max(), 1e-9)
    return DiscreteMode(Ad=A, Bd=rng.standard_normal((n, m)), C=rng.standard_normal((p, n)),
                        dt=1e-3, mode=mode or Mode.FAULT_FREE,
                        baseline_input=rng.standard_normal(m))


def random_multimodel(rng, nh=4, nf=3, noise=None):
    from inverter_afd.model import Mode, NoiseSpec, assemble_multimodel
    h = random_mode(rng, nh, mode=Mode.FAULT_FREE)
    f = random_mode(rng, nf, mode=Mode.FAULTY)
    return assemble_multimodel(h, f, noise or NoiseSpec(sigma_w=0.01, sigma_v=0.02,
                                                        sigma_0=0.05))


def random_stats(rng, n_inputs=8, n_out=6, d0_scale=None):
    """Random horizon statistics with SPD covariances (optimizer instances)."""
    from inverter_afd.horizon import HorizonStats

    def spd():
        X = rng.standard_normal((n_out, n_out))
        return X @ X.T / n_out + 0.1 * np.eye(n_out)

    scale = rng.choice([0.0, 0.3, 3.0]) if d0_scale is None else d0_scale
    return HorizonStats(N=n_inputs // 2, ybar_h=np.zeros(n_out), ybar_f=np.zeros(n_out),
                        sigma_y_h=spd(), sigma_y_f=spd(),
                        d0=scale * rng.standard_normal(n_out),
                        M=rng.standard_normal((n_out, n_inputs)))
