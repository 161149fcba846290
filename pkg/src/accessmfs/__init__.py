"""Semi-supervised multi-label feature selection with learned instance and label graphs."""

from .core import (ConfigurationError, Dataset, Hyperparameters, ModelState,
                   RowRegularizer, centering_matrix, l21_norm, laplacian)
from .data import (DataFormatError, Split, SplitSpec, apply_split, load_dataset,
                   make_split, standardize, write_dataset, write_report)
from .evaluation import (EvaluationReport, average_precision, evaluate, macro_f1,
                         mlknn_predict, mlknn_train, one_error, ranking_loss)
from .experiment import BASELINE, run_cell
from .graphs import sparse_simplex_row, update_P, update_S
from .labels import solve_F
from .projection import procrustes, update_W
from .solver import (ConvergenceTrace, FeatureRanking, FitResult, Variant, fit,
                     objective, select_features)
from .synth import make_planted

__version__ = "0.1.0"
