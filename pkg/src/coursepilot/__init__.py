"""coursepilot: course-material QA engine with header-indexed retrieval."""

__version__ = "0.1.0"
