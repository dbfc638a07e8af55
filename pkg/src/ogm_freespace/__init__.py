"""Rolling occupancy grid mapping and free-space polygon extraction from 2D laser scans."""
from __future__ import annotations

from .grid_map import IsmConfig, OccupancyGrid, UpdateStats, normalize, rasterize_scan_conventional, rasterize_scan_enhanced
from .pipeline import FrameResult, PipelineConfig, PipelineState, load_config, run, run_frame
from .scan_model import FullScan, Kind, Pose2D, ScanPoint, parse_scan_log
from .simplify import FreeSpacePolygon, douglas_peucker_capped

__version__ = "0.1.0"

__all__ = [
    "FrameResult", "FreeSpacePolygon", "FullScan", "IsmConfig", "Kind", "OccupancyGrid", "PipelineConfig",
    "PipelineState", "Pose2D", "ScanPoint", "UpdateStats", "douglas_peucker_capped", "load_config", "normalize",
    "parse_scan_log", "rasterize_scan_conventional", "rasterize_scan_enhanced", "run", "run_frame",
]
