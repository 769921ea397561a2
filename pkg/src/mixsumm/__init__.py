"""Low-resource summarization with LLM mixup augmentation and prompt-based pseudo-labeling."""

__version__ = "0.1.0"
