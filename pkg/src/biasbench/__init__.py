"""Cross-dataset generalization and bias-audit harness for binary text classifiers."""

__version__ = "0.1.0"
