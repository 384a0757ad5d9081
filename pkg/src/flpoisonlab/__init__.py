"""Federated-learning poisoning lab: FedAvg with linear SVM clients, a
graph-autoencoder model-poisoning attacker, baseline attacks and Krum
instrumentation."""

__version__ = "0.1.0"
