"""Metrics, synthetic data, visualization and ablation sweeps."""

from .metrics import RDCurve, RDPoint, bd_rate, psnr
from .synthetic import Region, SyntheticSpec, gen_synthetic, random_motion, synthetic_pairs, synthetic_sequence
from .visualize import dump_flow_visualization, flow_to_rgb, read_ppm, write_ppm

__all__ = ["RDCurve", "RDPoint", "Region", "SyntheticSpec", "bd_rate", "gen_synthetic", "psnr", "random_motion",
           "synthetic_pairs", "synthetic_sequence", "dump_flow_visualization", "flow_to_rgb", "read_ppm", "write_ppm"]
