"""Multi-scale magnified spatial-temporal maps and a compact vision transformer
for face-forgery detection from facial colour variation."""

__version__ = "0.1.0"
