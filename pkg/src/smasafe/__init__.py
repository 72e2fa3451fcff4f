"""Temperature-supervised pose control for SMA-actuated soft legged robots."""
from .pose import (PiawGains, PiawPoseController, PiawState, PoseState, pair_map,
                   piaw_step, pose_controller_step, pose_error)
from .safety import (InvarianceCertificate, SafetyConfig, TemperatureSupervisor,
                     UnsafeModelError, adjusted_setpoint, check_invariance, compose,
                     safety_error, supervise_step, u_max, u_star)
from .scenario import ScenarioConfig, ScenarioError, parse_model, parse_scenario
from .sim import (DisturbanceProfile, LimbGeometry, PlantState, PoseModelParams, TraceLog,
                  foot_height, plant_step, pose_step, run_scenario)
from .thermal import (AugmentedState, BlockLinearSystem, CalibrationError,
                      LumpedThermalParams, LumpedThermalRegressor, PhysicalThermalParams,
                      build_block_system, fit_lumped, lump, step_block, step_temperature)

__version__ = "0.1.0"
