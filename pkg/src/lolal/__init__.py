"""Active-learning detection of living-off-the-land command lines.

The package turns parent/child command-line pairs into fixed-length
feature vectors (tokenization, contextual token embeddings, per-token
maliciousness scores, pooling), trains multi-class classifiers on them,
and drives an analyst-in-the-loop labeling loop that queues uncertain and
anomalous samples for review.
"""

__version__ = "0.1.0"

from .tokenizer import (  # noqa: F401
    CLASSES,
    LOLBINS,
    NUMBER,
    RARE,
    SEP,
    RawSample,
    TokenSequence,
    Vocabulary,
    build_vocabulary,
    normalize,
    read_corpus,
    tokenize,
    tokenize_text,
    write_corpus,
)
from .embeddings import (  # noqa: F401
    EmbeddingConfig,
    EmbeddingModel,
    train_embeddings,
)
from .token_scores import (  # noqa: F401
    TokenScoreTable,
    build_score_table,
    fit_token_forest,
    score_token,
    token_features,
)
from .featurize import (  # noqa: F401
    FEATURE_SETS,
    FeatureMatrixBuilder,
    FeatureVector,
    ablation_feature_sets,
    featurize,
)
from .classifiers import (  # noqa: F401
    BoostedHyper,
    LogisticHyper,
    Metrics,
    evaluate,
    fit_boosted,
    fit_forest_classifier,
    fit_logistic,
    predict,
    stratified_kfold,
)
from .anomaly import NaiveBayesModel, anomaly_score, fit_nb  # noqa: F401
from .active_learning import (  # noqa: F401
    STRATEGIES,
    ActiveLearningLoop,
    IterationState,
    oracle_labeler,
    rank_round_robin,
    select_batch,
    uncertainty_score,
)
from .synth import (  # noqa: F401
    CorpusSpec,
    generate_corpus,
    run_al_experiment,
    run_feature_eval,
)
