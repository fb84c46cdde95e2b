"""Multi-task neural networks over high-dimensional sparse inputs."""

from .losses import RegrLabels, TaskWeights, batch_loss, bce_with_logits, censored_se, censored_se_grad
from .metrics import MetricReport, Undefined, auc_pr, auc_roc, cohen_kappa_at_half, f1_at_half, pearson, r_squared, rmse
from .model_io import ModelConfig, load_model, save_model
from .nn import NetworkArchitecture, ParameterSet, backward, forward, init_parameters
from .optim import OptimizerConfig, OptimizerState, step
from .pipeline import BatchPlan, SyntheticSpec, fit_standardization, generate_synthetic, make_batches, split_by_fold
from .sparse import CsrMatrix, csr_from_triplets, read_matrix, read_matrix_market, spmm_dense, spmm_transpose_dense, write_matrix_market
from .training import Dataset, fit, predict

__version__ = "0.1.0"
