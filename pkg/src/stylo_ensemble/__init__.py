"""Small-sample authorship attribution toolkit: stylometric features,
tree-ensemble classifiers, and soft-voting fusion with exhaustive
ensemble enumeration and statistically validated evaluation."""

__version__ = "0.1.0"
