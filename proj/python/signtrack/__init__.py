"""Sign-error adaptive filtering of Markov-modulated parameters."""

import json

from ._signtrack import (
    Error,
    burn_in_default,
    effective_matrix,
    effective_matrix_monte_carlo,
    lms_step,
    lyapunov_solve,
    matrix_sqrt_psd,
    mean_parameter,
    mse_bound,
    mse_curve,
    preset_config,
    preset_names,
    run_command,
    se_step,
    sign,
    sr_step,
    stationary_distribution,
    track,
    transition_matrix,
)


def preset(name):
    """Preset configuration as a dict."""
    return json.loads(preset_config(name))


def dumps(config):
    """Serialize a config dict for the functions that accept a preset name or JSON."""
    return json.dumps(config)
