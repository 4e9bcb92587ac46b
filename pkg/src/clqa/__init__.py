"""Cross-lingual open-retrieval QA toolkit.

Lexical (BM25) and dense retrieval with rank ensembling, contrastive loss
kernels for dense retrievers, QA-pair augmentation, answer-generation
baselines, and token-F1 evaluation.
"""

__version__ = "0.1.0"
