"""Learn next-action Bayesian networks from interaction logs and rank help topics."""

from .ausm import (
    AdaptiveSupportModule,
    HelpTopicMap,
    InteractionState,
    PredictionResult,
    load_topic_map,
    query_help,
    record_action,
)
from .event_log import (
    ActionEvent,
    SessionLog,
    TransitionRecord,
    build_transitions,
    parse_log,
    parse_log_line,
    parse_timestamp,
    read_transition_db,
    write_transition_db,
)
from .evaluation import CvReport, ReplayReport, cross_validate, kfold_split, render_report, replay_evaluate
from .inference import Posterior, joint_probability, posterior_exact, posterior_lw, predict_next
from .network import (
    CountTable,
    Dag,
    Dataset,
    Network,
    PriorConfig,
    Variable,
    estimate_cpts,
    export_network,
    import_network,
    parent_config_index,
    records_to_instances,
    tally_counts,
)
from .scoring import ScoredModel, enumerate_dags, log_marginal_likelihood, model_log_ratio, select_best_structure

__version__ = "0.1.0"
