from .network import PolicyParams, init_params, policy_forward, ppo_loss_and_grad, zero_params
from .normalize import ObsNormalizer, RewardScaler, RunningMeanVar
from .ppo import (
    EvalResult,
    FixedPolicy,
    Learner,
    LearnerConfig,
    TrainingDiverged,
    TrainResult,
    TrajectoryBatch,
    Transition,
    compute_gae,
    evaluate,
    ppo_update,
    train,
)
