"""Cohort explanations for black-box models."""

__version__ = "0.1.0"

from .algorithm import CohexConfig, CohortSolution, run_cohex, run_single_pass
from .baselines import run_repid, run_vine
from .clustering import ObjectiveParams, assign, generalizability_loss, objective, sridhcr
from .dataset import Dataset, FeatureMeta, PatientGenConfig, generate_patients, load_csv, standardized_distance
from .explainers import (CounterfactualExplainer, ExplainerConfig, LinearSurrogateExplainer, ShapleyExplainer,
                         gale_reweight, make_explainer)
from .methods import MethodSpec
from .metrics import (adjusted_rand_index, eval_cohort_stability, eval_generalizability, eval_importance_stability,
                      eval_locality, verify_disjoint)
from .models import FunctionModel, TreeEnsemble, make_randomized, train_cart, train_forest
