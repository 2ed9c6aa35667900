"""Benchmark scenarios and their registry."""
from ..errors import ConfigError
from .base import TruthRun, initial_offsets
from .config import apply_config, export_config, load_config, parse_config, section_name
from .falling_body import FallingBodyParams, FallingBodyScenario, falling_body_model, falling_body_truth
from .imu_cam import ImuCamParams, ImuCamScenario, imu_cam_model, imu_cam_truth
from .tumbler import (
    TumblerParams,
    TumblerScenario,
    coarse_rate_init,
    svd_rigid_align,
    tumbler_model,
    tumbler_reinit,
    tumbler_truth,
)

#: scenario name -> (scenario class, params class)
SCENARIOS = {
    "falling-body": (FallingBodyScenario, FallingBodyParams),
    "imu-cam": (ImuCamScenario, ImuCamParams),
    "tumbler": (TumblerScenario, TumblerParams),
}


def scenario_params(name, config=None):
    """Default parameters for ``name`` with an optional parsed config applied."""
    try:
        _, params_cls = SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    params = params_cls()
    section = section_name(name)
    if config:
        unknown = set(config) - {section_name(s) for s in SCENARIOS}
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        params = apply_config(params, section, config.get(section, {}))
    return params


def make_scenario(name, params=None, config=None):
    """Instantiate a scenario by name."""
    cls, _ = SCENARIOS.get(name, (None, None))
    if params is None:
        params = scenario_params(name, config)
    return cls(params)
