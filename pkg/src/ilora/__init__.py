"""ILoRa: HTTP resources proxied over a constrained LoRa-like datagram link."""

__version__ = "0.1.0"
