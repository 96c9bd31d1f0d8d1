"""Transformer bridge for the docsim engine.

Exports per-sentence embeddings into the engine's binary store format and
optionally continues pre-training a masked-LM backbone with the dual
MLM + contrastive objective. The engine is consumed only through its file
interfaces (corpus JSONL in, embedding store out).
"""

__version__ = "0.1.0"

from .export import ExportJob, export_embeddings
from .finetune import FinetuneJob, finetune

__all__ = ["ExportJob", "export_embeddings", "FinetuneJob", "finetune"]
