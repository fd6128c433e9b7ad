"""Classical and quantum billiards: event-driven trajectories, chaos diagnostics
and wave-packet propagation on square, Sinai and stadium tables."""

from .chaos import (
    DivergenceSeries,
    LyapunovEstimate,
    coverage_fraction,
    distinct_angle_count,
    incidence_angles,
    lyapunov_estimate,
    separation_series,
    transverse_offset,
)
from .dynamics import (
    BallState,
    CollisionEvent,
    CornerHit,
    LeakedBall,
    TangencyError,
    Trajectory,
    next_collision,
    reflect,
    resample_path,
    simulate,
)
from .geometry import (
    Arc,
    Hit,
    Segment,
    Table,
    Wall,
    contains,
    load_table,
    make_sinai,
    make_square,
    make_stadium,
    ray_wall_intersect,
)

__version__ = "0.1.0"
