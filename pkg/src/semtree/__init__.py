"""semtree: sentiment classification over latent semantic trees.

A sentence is classified by summing, with the inside algorithm, over
every derivation of a sentiment composition grammar; the same chart
decodes the single best tree as the explanation of the prediction.
"""

from .grammar import (Grammar, Rule, SemanticLabel, GrammarError,
                      builtin_scg, builtin_glue, get_grammar,
                      parse_grammar, serialize_grammar, validate)
from .lexicon import (Lexicon, Annotation, builtin_functional,
                      load_lexicon_file, load_stopwords, annotate)
from .scorer import (ScorerParams, ScoreTables, GradTables, ParamGrads,
                     PhraseView, build_vocab, init_params, score_sentence,
                     phrase_view, lexicon_scorer, accumulate_gradients,
                     save_model, load_model, load_word_vectors)
from .chart import (InsideChart, OutsideChart, SemanticTree, SkeletonChart,
                    Underivable, SentenceTooLong, inside, outside, classify,
                    rule_marginals, anchored_binary_marginals, cky_decode,
                    viterbi_score, skeleton_inside, enumerate_skeletons,
                    enumerate_trees, check_tree, MAX_SENTENCE_LEN)
from .data import (Example, Skeleton, ParseNode, load_dataset, save_dataset,
                   read_bracketed, parse_bracketed, to_left_branching_cnf,
                   split_document, generate_synthetic, tokenize)
from .training import (TrainConfig, TrainReport, EpochRecord, train,
                       classification_loss, preterminal_loss, skeleton_loss,
                       cosine_lr, aggregate_document, document_logits)
from .metrics import (EvalReport, accuracy, unlabeled_tree_f1,
                      corpus_tree_f1, evaluate)

__version__ = "0.1.0"
