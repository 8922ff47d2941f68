from .lobster import LobsterFormatError, load_lobster, write_lobster
from .store import EpisodeIndex, MessageStore, build_episode_index, slice_for_step
from .synthetic import synth_generate

__all__ = [
    "EpisodeIndex", "LobsterFormatError", "MessageStore", "build_episode_index", "load_lobster",
    "slice_for_step", "synth_generate", "write_lobster",
]
