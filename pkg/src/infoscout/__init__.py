"""Information-driven robot exploration on confidence-rich occupancy maps with surrogate-accelerated action scoring."""

from .world import GroundTruthMap, GridGeometry, MapParseError, Pose, generate_structured, generate_unstructured, load_map, save_map
from .sensor import SensorConfig, raycast, simulate_scan, virtual_scan
from .crm import BeliefMap, CRMConfig, coverage, map_entropy
from .infogain import CRMIEvaluator, InfoEvalConfig, evaluate_crmi
from .surrogate import BKIConfig, KernelConfig, SampleSet, bki_posterior, gp_posterior, matern52
from .optimize import OptimizationResult, OptimizeConfig, UCBConfig, bo_loop, naive_greedy, ucb
from .plan import PlanConfig, PlanningError, astar, gen_actions, split_actions
from .explore import ExplorationConfig, StepRecord, run_exploration
from .bench import RunConfig, WorldConfig, ablate_epochs, emit_plot_data, load_config, run_benchmark

__version__ = "0.1.0"
