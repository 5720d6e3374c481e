"""Study configuration files.

Line-oriented ``key = value`` text grouped under ``[section]`` headers
(INI grammar, parsed with the standard library).  Every key is also a
CLI flag; flags override file values.

::

    [model]
    c = 0.5
    eta = 0.1

    [proposal]
    kind = gamma
    alpha = 1.5
    beta = 0.5

    [study]
    observations = fixtures/cox_obs_t12.csv
    particle_counts = 128, 512, 2048, 8192
    replicates = 200
    test_functions = exp_neg
    moments = 2, 4
    resampler = multinomial
    master_seed = 7

    [oracle]
    dx = 0.005
    x_max = 15.0

    [output]
    csv = out/report.csv
    json = out/report.json
    svg = out/report.svg
"""

from __future__ import annotations

import configparser
from dataclasses import replace

from .convergence import ExperimentConfig
from .errors import DomainError


def _split(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise DomainError(f"config file not found: {path}")
    kwargs: dict = {}

    def take(section, key, field, convert):
        if parser.has_option(section, key):
            kwargs[field] = convert(parser.get(section, key))

    take("model", "c", "c", float)
    take("model", "eta", "eta", float)
    take("proposal", "kind", "proposal", str)
    take("proposal", "alpha", "alpha", float)
    take("proposal", "beta", "beta", float)
    take("study", "observations", "observations", str)
    take("study", "particle_counts", "particle_counts",
         lambda s: tuple(int(v) for v in _split(s)))
    take("study", "replicates", "replicates", int)
    take("study", "test_functions", "test_functions", _split)
    take("study", "moments", "moments", lambda s: tuple(int(v) for v in _split(s)))
    take("study", "resampler", "resampler", str)
    take("study", "master_seed", "master_seed", int)
    take("oracle", "dx", "grid_dx", float)
    take("oracle", "x_max", "grid_x_max", float)
    take("output", "csv", "out_csv", str)
    take("output", "json", "out_json", str)
    take("output", "svg", "out_svg", str)

    if "observations" not in kwargs:
        raise DomainError("config must set study.observations")
    return ExperimentConfig(**kwargs)


def apply_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Replace config fields with any non-None override values."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    return replace(config, **changes) if changes else config
