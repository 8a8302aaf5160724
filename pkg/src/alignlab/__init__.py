"""Multilingual alignment workbench.

Trains small decoder-only language models in a synthetic two-language
environment (a base language and its marker-suffixed clone), injects
cross-lingual alignment before pretraining with a contrastive objective,
maintains it during pretraining with input-only codeswitching, and
measures the result: perplexity, cross-lingual knowledge and task
transfer, embedding alignment, and generation leakage.
"""

__version__ = "0.1.0"
