"""qprobe: question complexity metrics, rule-based typing, and probing."""

from .corpus import DepSentence, DepTree, Token, build_tree, load_labeled_corpus, parse_conllu
from .metrics import (
    ComplexityProfile,
    NormalizationStats,
    compute_profile,
    fit_normalization,
    normalize_profile,
)
from .annotator import Annotation, Rule, RulePack, annotate_corpus, classify_question, load_rulepack
from .features import SparseVector, SubwordSequence, SubwordTfidf
from .baselines import (
    DummyPredictor,
    GradientBoostedTrees,
    LogisticRegressionGD,
    RidgeRegressor,
)
from .probes import EmbeddingStore, MLPProbe, ProbeConfig, layer_sweep, mean_pool, train_probe
from .selectivity import (
    LabelVariant,
    make_controls,
    mean_selectivity,
    selectivity_cls,
    selectivity_reg,
)
from .runner import ExperimentConfig, ExperimentResult, make_splits, run_experiment
from .evaluation import evaluate
from .report import best_layer, corpus_stats, emit_tables, layer_profile

__version__ = "0.1.0"
