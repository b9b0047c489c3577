"""covidscreen: CT/CXR COVID-19 screening toolkit.

Library layers: dataset manifests and splits, the deterministic preprocessing
pipeline, attention-based screening networks, training, evaluation metrics,
CAM explanations, and an HTTP inference service with a triage case store.
"""

__version__ = "0.1.0"
