from .exporter import ExportManifest, UnsupportedLayer, export_model

__all__ = ["ExportManifest", "UnsupportedLayer", "export_model"]
