"""Engagement-from-pose pipeline: multi-view fusion, robot-relative
features, a from-scratch FC+LSTM classifier and leave-one-out evaluation,
plus a synthetic session generator for end-to-end testing."""

__version__ = "0.1.0"
