"""dytag: prediction engine and evaluation harness for dynamic
text-attributed graphs driven by chat-completion agents."""

__version__ = "0.1.0"
