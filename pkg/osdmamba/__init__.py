"""State space segmentation networks for oil spill detection in SAR imagery."""

from .__main__ import run_application

__all__ = ["run_application"]
