"""Range coding, codable CDF tables and the FRDC container."""

from .cdf import build_cdfs, gaussian_pmf, normal_cdf, quantize_pmf, uniform_table
from .container import INTER, INTRA, Container, ContainerError, FrameRecord, read_container, write_container
from .frames import decode_inter_frame, decode_intra_frame, encode_inter_frame, intra_payload
from .rangecoder import PRECISION, CdfTable, TruncatedStreamError, range_decode, range_encode

__all__ = [
    "INTER", "INTRA", "PRECISION", "CdfTable", "Container", "ContainerError", "FrameRecord", "TruncatedStreamError",
    "build_cdfs", "decode_inter_frame", "decode_intra_frame", "encode_inter_frame", "gaussian_pmf",
    "intra_payload", "normal_cdf", "quantize_pmf", "range_decode", "range_encode", "read_container",
    "uniform_table", "write_container",
]
