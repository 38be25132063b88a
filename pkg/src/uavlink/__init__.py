"""uavlink: deterministic discrete-event emulator of a cellular-connected
UAV's downlink stick-command channel and uplink video stream."""

__version__ = "0.1.0"

from .simcore import CausalityError, EventQueue, NodeClock, SeededRng  # noqa: F401
from .wire import (  # noqa: F401
    CcFrame,
    CorruptFrameError,
    EncodeError,
    MalformedFrameError,
    TimestampBeacon,
    VideoSegmentHeader,
    WireError,
    decode_cc,
    encode_cc,
    normalize_stick,
)
from .netem import (  # noqa: F401
    EmulatedLink,
    GainCapacityModel,
    Geometry,
    JitterConfig,
    LinkConfig,
    Shaper,
    elevation_angle,
)
from .cclink import CcReceiver, CcSender, ControlAction, run_cc_session  # noqa: F401
from .video import EncoderModel, FpsController, Resolution, run_video_session  # noqa: F401
from .metrics import BeaconProbe, beacon_estimate, match_cc_logs, video_stats  # noqa: F401
from .config import ScenarioConfig, load_config  # noqa: F401
from .harness import run_scenario, sweep  # noqa: F401
