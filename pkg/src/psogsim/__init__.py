"""Photosensor-oculography simulation and shift-robust gaze-mapping workbench."""

__version__ = "0.1.0"
