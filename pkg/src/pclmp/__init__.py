"""Progressive contrastive learning with centroid, hard and dynamic prototypes
for unsupervised two-modality representation learning."""

__version__ = "0.1.0"
