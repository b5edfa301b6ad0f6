import os
import logging

from dotenv import load_dotenv

load_dotenv()


class Config:
    """Centralized configuration"""

    # Paths
    DATA_DIR = os.getenv("RSSIFORGE_DATA_DIR", "./data/")
    RAW_DIR = os.path.join(DATA_DIR, "raw")
    PROCESSED_DIR = os.path.join(DATA_DIR, "processed")
    CHECKPOINT_DIR = os.path.join(DATA_DIR, "checkpoints")
    RESULTS_DIR = os.path.join(DATA_DIR, "results")
    REPORT_DIR = os.path.join(DATA_DIR, "reports")

    # Reproducibility
    DEFAULT_SEED = 7
    N_JOBS = int(os.getenv("RSSIFORGE_N_JOBS", "1"))
    LOG_LEVEL = os.getenv("RSSIFORGE_LOG_LEVEL", "INFO")
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    LOG_EVERY = 50  # batches between training progress lines

    # Recording protocol
    SAMPLE_RATE_HZ = 5.0
    WINDOW_S = 4.0
    WINDOW_OVERLAP = 0.5
    N_TIMESTAMPS = 20  # 4 s at 5 Hz
    MAX_GAP_S = 1.0
    SENTINEL_DBM = -120.0
    MIN_OBSERVED_DBM = -119.0

    # Augmentation
    TARGET_PER_CLASS = 1000
    SMOTE_K_NEIGHBORS = 5
    EXPERT_NOISE_SIGMA = 0.05
    EXPERT_DROP_FRACTION = 2 / 11
    EXPERT_DROP_PERIOD = 4

    # Experiments
    N_REPEATS = 10
    CV_FOLDS = 3
    RF_PARAM_GRID = {
        "n_estimators": [100, 300, 500],
        "max_depth": [None, 10, 20],
        "min_samples_leaf": [1, 5],
    }

    # Experiment arms, in the order the results table lists them
    ARMS = [
        "baseline", "weighted", "oversample", "smote", "expert",
        "congan", "t_congan", "t_congan_sphere",
    ]
    GAN_ARMS = ["congan", "t_congan", "t_congan_sphere"]

    # Builtin simulated houses
    TARGET_HOUSES = ["target_b", "target_c", "target_d"]
    SOURCE_HOUSES = ["source_1", "source_2", "source_3"]

    @classmethod
    def seed(cls, configured=None):
        """RSSIFORGE_SEED wins over any configured seed"""
        env_seed = os.getenv("RSSIFORGE_SEED")
        if env_seed not in (None, ""):
            return int(env_seed)
        return cls.DEFAULT_SEED if configured is None else int(configured)


def setup_logging(level=None):
    """Install the log format once; called from the CLI entry point only"""
    logging.basicConfig(
        format=Config.LOG_FORMAT,
        level=getattr(logging, (level or Config.LOG_LEVEL).upper(), logging.INFO),
    )
