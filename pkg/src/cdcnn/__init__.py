"""Circular dilated 1D CNN for smart-insole activity recognition, in numpy."""
from .dataset import (CHANNEL_NAMES, LABEL_NAMES, Dataset, Normalizer, SensorWindow, SplitSpec,
                      apply_normalizer, fit_normalizer, generate_synthetic, load_dataset,
                      default_split, prepare_splits, split_by_subject, subject_class_table,
                      subject_count_fixture, write_dataset)
from .evaluation import (ConfusionMatrix, ImportanceReport, confusion_matrix, permute_channel,
                         permutation_importance)
from .model import (CDCNN, BaselineConfig, Checkpoint, LinearBaseline, ModelConfig,
                    load_checkpoint, save_checkpoint)
from .numeric import Adam, Rng
from .training import TrainConfig, TrainReport, evaluate_split, train

__version__ = "0.1.0"
