"""Compressed-domain extraction: motion search, side data, backends, container."""
from .backends import (
    BACKENDS, NATIVE, RGB_PROXY, SIDECAR, BackendChoice, ExtractParams, LatencyReport,
    TriStreamInterval, aggregate_fields, bench_backend, downscale, extract_tristream,
    route_backend,
)
from .container import TrsHeader, dumps_trs, loads_trs, read_trs, write_trs
from .motion import MotionField, ResidualMap, compute_residual, estimate_motion, warp
from .sidecar import (
    HEADER as SIDECAR_HEADER, SidecarRecord, field_to_sidecar, parse_sidecar,
    serialize_sidecar, sidecar_to_field,
)
