"""DPO fine-tuning launcher consuming longmab preference-pair files."""

__version__ = "0.1.0"
