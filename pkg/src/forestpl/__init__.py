"""Path loss models, drive-test ingestion and least-squares fitting for forest radio links."""

__version__ = "0.1.0"
