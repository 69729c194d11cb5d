"""Synthetic click-feedback laboratory for dense retrieval.

Simulates position-biased click logs over an exact inner-product index and
refines query vectors from them, with and without inverse-propensity
de-biasing, plus the evaluation machinery to compare the two.
"""

from .clicks import (ClickLog, ClickLogMeta, Qrels, SessionRecord, UserModel,
                     build_click_log, click_prob, load_click_log, load_qrels,
                     propensity, save_click_log, save_qrels, simulate_session)
from .errors import (ClickDRError, ConfigError, DimensionError, DomainError,
                     EmptyStoreError, IngestError, MissingEmbeddingError,
                     NoFeedbackError, StatError)
from .metrics import (MetricReport, average_precision, binary_relabel,
                      evaluate_rankings, load_run, ndcg_at_k, paired_t_test,
                      recall_at_k, save_run)
from .refine import (ClickFeedbackRefiner, FeedbackConfig, corocchio,
                     feedback_ann, optimal_qstar, rocchio)
from .store import (EmbeddingStore, Ranking, inner_product, knn_queries,
                    load_embeddings, save_embeddings, top_k)
from .synth import (SynthConfig, gen_corpus, gen_unseen_queries,
                    derive_unseen_qrels, split_queries)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
