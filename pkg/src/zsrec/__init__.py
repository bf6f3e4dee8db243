"""Zero-shot LLM recommendation benchmark: datasets, classical baselines, LLM
prompting and title matching, ranking/bias metrics, experiments and reports."""
from .dataset import (DatasetError, Interaction, InteractionSet, ItemCatalog, PopularityStats,
                      Split, apply_history_cap, cold_start_user_filter, load_catalog,
                      load_interactions, popularity_stats, split_holdout)
from .errors import ConfigError, EndpointError
from .experiments import (EvalReport, LlmModel, evaluate_run, run_cold_start, run_free_top50,
                          run_rerank)
from .recommenders import MODELS, RecommendationList, make_recommender
from .runs import RecommendationRun

__version__ = "0.1.0"
