"""HTTP oracle bridge: expose image classifiers to the attack client.

Implements the black-box oracle protocol around real models (TorchScript)
or a deterministic hash-based stub that needs no ML runtime, plus an
offline logit exporter producing the client's JSONL format.
"""

from .config import BridgeConfig, BridgeConfigError, PreprocessSpec, load_config
from .export import ExportError, export_logits
from .models import StubModel, build_model
from .server import BridgeServer, serve_bridge

__version__ = "0.1.0"
