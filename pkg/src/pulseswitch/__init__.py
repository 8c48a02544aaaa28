"""Pulse-based switching of bistable systems through the dominant Koopman eigenfunction."""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .models import (ModelSpec, Pulse, ZERO_PULSE, MODELS, SETTINGS, get_model, override_params,
                     repressilator, repressilator_setting, fitzhugh_nagumo, linear_test, eval_field,
                     to_cone_coords, from_cone_coords, precedes)
from .ode import IntegratorConfig, Trajectory, integrate, flow_at, integrate_signal
from .koopman import (Spectrum, EstimatorConfig, EigenfunctionValue, jacobian, find_equilibrium,
                      spectrum, target_spectrum, s1, s1_many, isostable_time)
from .pulse_control import (RGrid, LevelSet, OptimizeResult, r, r_values, r_grid, level_set,
                            optimize, brute_force_optimize, min_time_to_isostable, t_conv)
from .controllers import (ClosedLoopConfig, SwitchOutcome, EnsembleState, SyncResult, RTable,
                          open_loop_switch, closed_loop_switch, build_r_table, sync_select,
                          synchronize, periodic_baseline, max_delay)
from .dmd import SnapshotSet, DMDResult, dmd, dominant_mode, pulse_snapshots, r_from_data
