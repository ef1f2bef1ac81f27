"""Federated-learning simulation and benchmark harness for audio classification.

The package simulates cross-device federated training on audio data at desk
scale: synthetic corpora, Mel-spectrogram features, non-IID client
partitioning, signal/label corruption models, FedAvg/FedOPT server loops and
round-to-accuracy reporting.
"""

__version__ = "0.1.0"
