"""qexport: produce subword sequence files and QEMB embedding files."""

from .corpus_io import read_corpus
from .embeddings import export_embeddings
from .manifest import ExportManifest
from .subwords import export_subwords

__version__ = "0.1.0"
