"""Visuo-tactile capture: wire codecs, session simulation, stream sync and fusion kernels."""

from .align import AlignmentReport, SyncedPair, align_streams
from .clock import ClockModel, apply_clock_model, fit_clock_model, refine_clock_model
from .fiducial import (
    FiducialCode,
    FiducialMatrix,
    VideoFrameRecord,
    decode_fiducial,
    encode_fiducial,
    extract_code_samples,
)
from .sim import ClockSpec, ContactEvent, SessionSpec, simulate_session
from .wire import Pad, TaxelFrame, decode_frame, decode_stream, encode_frame

__version__ = "0.1.0"

__all__ = [
    "AlignmentReport",
    "ClockModel",
    "ClockSpec",
    "ContactEvent",
    "FiducialCode",
    "FiducialMatrix",
    "Pad",
    "SessionSpec",
    "SyncedPair",
    "TaxelFrame",
    "VideoFrameRecord",
    "align_streams",
    "apply_clock_model",
    "decode_fiducial",
    "decode_frame",
    "decode_stream",
    "encode_fiducial",
    "encode_frame",
    "extract_code_samples",
    "fit_clock_model",
    "refine_clock_model",
    "simulate_session",
]
