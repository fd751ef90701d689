"""Attention-tensor exporter for pretrained transformer encoders."""

from .attn_writer import write_attn, write_meta
from .export import ExportError, ExportJob, ExportResult, export_attention

__version__ = "0.1.0"
