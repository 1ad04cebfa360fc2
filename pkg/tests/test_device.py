import pytest

from cqedsim.device import (
    CavityParams,
    CouplingParams,
    DeviceModel,
    DissipationParams,
    FluxBias,
    TransmonParams,
)
from cqedsim.errors import ConfigError


def test_transmon_invariants():
    TransmonParams(ej_max=30.0, ec=0.2)
    with pytest.raises(ConfigError):
        TransmonParams(ej_max=-1.0, ec=0.2)
    with pytest.raises(ConfigError):
        TransmonParams(ej_max=30.0, ec=0.0)
    with pytest.raises(ConfigError):
        TransmonParams(ej_max=30.0, ec=0.2, asym=1.3)
    with pytest.raises(ConfigError):
        TransmonParams(ej_max=30.0, ec=0.2, n_cut=5)
    assert TransmonParams(ej_max=30.0, ec=0.2, n_cut=30).dim == 61


def test_flux_bias_folding():
    assert FluxBias(0.0).folded() == 0.0
    assert FluxBias(0.5).folded() == 0.5
    assert FluxBias(-0.3).folded() == pytest.approx(0.3, abs=1e-15)
    assert FluxBias(1.3).folded() == pytest.approx(0.3, abs=1e-15)
    with pytest.raises(ConfigError):
        FluxBias(float("nan"))


def test_coupling_allows_zero():
    CouplingParams(0.0)
    with pytest.raises(ConfigError):
        CouplingParams(-1.0)


def test_device_kappa_mirror(dev):
    with pytest.raises(ConfigError):
        DeviceModel(dev.transmon, dev.cavity, dev.coupling,
                    DissipationParams(t1_q=2.11, kappa=9.99))


def test_strong_coupling_warns(dev):
    with pytest.warns(UserWarning, match="weak-coupling"):
        DeviceModel(dev.transmon,
                    CavityParams(omega_bare=6.0, kappa=1.38),
                    CouplingParams(g=700.0),
                    DissipationParams(t1_q=2.11, kappa=1.38))


def test_content_hash_stable(dev):
    assert dev.content_hash() == dev.content_hash()
    other = DeviceModel(dev.transmon, dev.cavity, CouplingParams(86.0),
                        dev.dissipation)
    assert other.content_hash() != dev.content_hash()
