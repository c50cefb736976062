"""Monotone real-time classification of program execution logs."""
from .logmodel import (BENIGN, MALWARE, EventAlphabet, EventLine, EncodedLine, Log,
                       LogFormatError, TokenizerConfig, Vocabulary, build_vocabulary,
                       parse_log, split_tokens, tokenize_argument, write_log)
from .graph import BehaviorGraph, GraphDelta, add_line, graph_from_log, to_dot
from .patterns import Pattern, PatternSet, extract_patterns, oracle_extract, update_patterns
from .features import (Featurizer, GroupConfig, PreparedLog, counter_features, default_groups,
                       embed, pool, vectorize_pattern)
from .classifiers import (Model, ModelConfig, ModelFormatError, LARGE_SCALE, load_model,
                          save_model)
from .training import (TrainConfig, auc_loss_fast, auc_loss_naive, auc_roc, backward,
                       fit, grad_check, train)
from .scoring import evaluate, explain, featurize, stream_rows

__version__ = "0.1.0"
