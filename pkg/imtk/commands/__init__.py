from .analysis import analyze, robustness
from .checks import check_freq, gap, small_delay, synth_p, verify_h3
from .manifolds import build_manifold_cmd, tangents
from .pipeline import verify_all
from .runs import list_runs, record_run
from .tracking import leaf, reduce, track

__all__ = [
    "check_freq",
    "gap",
    "small_delay",
    "synth_p",
    "verify_h3",
    "build_manifold_cmd",
    "tangents",
    "track",
    "leaf",
    "reduce",
    "analyze",
    "robustness",
    "verify_all",
    "record_run",
    "list_runs",
]
