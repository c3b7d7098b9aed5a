"""Label-free log anomaly detection: cluster, vote, propagate, train, explain."""

from .corpus import ANOMALOUS, NORMAL, Corpus, LogRecord, load_corpus
from .errors import LogActiveError
from .ledger import CostLedger

__version__ = "0.1.0"

__all__ = ["ANOMALOUS", "NORMAL", "Corpus", "LogRecord", "load_corpus", "LogActiveError", "CostLedger",
           "__version__"]
