"""StrokeGAN: unpaired glyph translation with a stroke-code reconstruction loss."""

__version__ = "0.1.0"
