"""Two-stage pose-sequence anomaly detector: a graph-convolutional autoencoder
tokenizes pose windows, a transformer reconstructs the tokens, and the
reconstruction error is the anomaly score."""

__version__ = "0.1.0"
