"""Cross-layer root-cause analysis for video calls over 5G radio networks.

The library ingests time-aligned radio, packet, and application telemetry,
detects per-window events, matches them against a causal chain graph,
aggregates statistics, compiles user-written chain definitions, and
synthesizes ground-truthed traces for testing.
"""

from .trace import (AppRecord, AppStream, Direction, GccState, PacketKind,
                    PacketRecord, PacketStream, RanRecord, RanStream, Side,
                    Trace, TraceMeta, Window, WindowView, advance, bucket_mean,
                    nearest_rank, slice)
from .ingest import (ClockOffsets, IngestError, IngestReport, assemble,
                     load_app, load_packets, load_ran, load_trace, write_app,
                     write_packets, write_ran, write_trace)
from .events import (CANONICAL_LAYOUT, DetectorConfig, EventId, FeatureLayout,
                     FeatureVector, detect, featurize, featurize_all)
from .graph import (CausalGraph, CausalNode, ChainMatch, ChainPath, GraphError,
                    UNKNOWN, attribute, default_graph, enumerate_chains, match)

__version__ = "0.1.0"
