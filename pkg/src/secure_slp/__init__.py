"""Symbol-level precoding with constructive and destructive interference
regions for a multi-user MISO wiretap channel."""

__version__ = "0.1.0"
