"""Facial beauty prediction from transferred CNN features.

The pipeline: decode and square face images, run them through a VGG16-shaped
conv stack loaded from a binary weight file, fuse intermediate activations
into flat feature vectors, fit a Bayesian ridge regressor by evidence
maximization, and evaluate with a multi-round PC/MAE/RMSE protocol.
"""

__version__ = "0.1.0"
