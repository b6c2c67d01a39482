"""Convert pretrained VGG16 conv weights into the BWF1 binary format."""

__version__ = "0.1.0"
