"""
The fetchworld character-control sandbox.

For more details about this package, please refer to the documentation at
https://github.com/fetchworld/fetchworld
"""

# Base component constants
NAME = "fetchworld"
DOMAIN = "fetchworld"
VERSION = "0.1.0"
ISSUE_URL = "https://github.com/fetchworld/fetchworld/issues"

STARTUP_MESSAGE = f"""
-------------------------------------------------------------------
{NAME}
Version: {VERSION}
Headless character-control sandbox with PPO training.
If you have ANY issues with this you need to open an issue here:
{ISSUE_URL}
-------------------------------------------------------------------
"""

# Geometry
DEFAULT_ARENA_HALF_EXTENT = 55.0
DEFAULT_BORDER_WIDTH = 1.0
AGENT_SPAWN_MARGIN = 0.9
OBJECT_SPAWN_MARGIN = 0.95
MIN_SPAWN_DISTANCE = 3.0
COLLECTION_RADIUS = 1.5
HOME_RADIUS = 1.5
MAX_SPAWN_ATTEMPTS = 10000
CUBE_EDGE = 1.0
COIN_DIAMETER = 1.5
COIN_THICKNESS = 0.2
GRAVITY = 9.81

# Timing
DEFAULT_PHYSICS_DT = 0.02
DEFAULT_DECISION_INTERVAL = 5
DEFAULT_MAX_EPISODE_STEPS = 5000

# Tolerances
NORMALIZE_TOLERANCE = 1e-9
MOVING_SPEED_THRESHOLD = 0.1

# Enumerations
TASK_COLLECT = "collect"
TASK_FETCH = "fetch"
TASKS = (TASK_COLLECT, TASK_FETCH)

KIND_CUBE = "cube"
KIND_COIN = "coin"
COLLECTIBLE_KINDS = (KIND_CUBE, KIND_COIN)

OBS_VECTOR = "vector"
OBS_VISUAL = "visual"
OBS_KINDS = (OBS_VECTOR, OBS_VISUAL)

ACTION_CONTINUOUS = "continuous"
ACTION_DISCRETE = "discrete"
ACTION_KINDS = (ACTION_CONTINUOUS, ACTION_DISCRETE)

REWARD_PER_ACTION = "per_action"
REWARD_SPARSE = "sparse"
REWARD_KINDS = (REWARD_PER_ACTION, REWARD_SPARSE)

PHASE_SEEK = "seek_object"
PHASE_RETURN = "return_home"

DONE_NONE = "none"
DONE_OUT_OF_BOUNDS = "out_of_bounds"
DONE_TIMEOUT = "timeout"
DONE_TASK_COMPLETE = "task_complete"

BRANCH_MOVE = "move"
BRANCH_STEER = "steer"
BRANCH_JUMP = "jump"
BRANCH_CROUCH = "crouch"
ACTION_BRANCHES = (BRANCH_MOVE, BRANCH_STEER, BRANCH_JUMP, BRANCH_CROUCH)
BRANCH_SIZES = (5, 3, 2, 2)
CONTINUOUS_ACTION_SIZE = 4

# Observations
VECTOR_OBS_SIZE = 20
IMAGE_SIZE = 84
IMAGE_CHANNELS = 3
RENDER_SIZE = 168
POSITION_INPUT_SCALE = 1.0 / 55.0

# Checkpoints
CHECKPOINT_VERSION = "fw-ckpt-1"
CHECKPOINT_SUFFIX = ".fw"

# Output files
TRAIN_LOG = "train_log.csv"
REWARD_LOG = "rewards.csv"
RESOLVED_CONFIG = "resolved_config.json"
EVAL_REPORT = "eval_report.json"
CURVES_CSV = "curves.csv"
CURVES_SVG = "curves.svg"
ORDERING_CSV = "ordering.csv"
CRASH_SNAPSHOT = "crash_snapshot.json"
NONFINITE_DUMP = "nonfinite_batch.npz"
WORLD_DUMP = "world_snapshot.json"

TRAIN_LOG_COLUMNS = (
    "step",
    "mean_reward",
    "mean_ep_len",
    "policy_loss",
    "value_loss",
    "entropy",
    "clip_frac",
    "lr",
)

# Environment variables
ENV_THREADS = "FW_THREADS"

# Defaults
DEFAULT_SEED = 0
DEFAULT_PARALLEL_ENVS = 8
