"""The bijection game and the Maltsev game with Duplicator's strategies."""

from .bijection import (
    BPMemory,
    BPStrategy,
    BPVerifier,
    check_invariant_bp,
    duplicator_move_bp,
    duplicator_update_bp,
    initial_memory_bp,
    reachable_states_bp,
    verify_one_round_bp,
)
from .core import BudgetExceeded, GameConfig, NoSafeEscape, Position, Report, bp_apply_round, spoiler_wins_now
from .maltsev import (
    MaltsevMemory,
    MaltsevStrategy,
    MaltsevVerifier,
    check_invariant_maltsev,
    duplicator_move_maltsev,
    explore_maltsev,
    initial_memory_maltsev,
    maltsev_validate_duplicator,
    reachable_states_maltsev,
    verify_one_round_maltsev,
)
from .play import Exhaustive, Interactive, Random, Scripted, Trace, game_instances, play_game, replay

__all__ = [
    "BPMemory",
    "BPStrategy",
    "BPVerifier",
    "BudgetExceeded",
    "Exhaustive",
    "GameConfig",
    "Interactive",
    "MaltsevMemory",
    "MaltsevStrategy",
    "MaltsevVerifier",
    "NoSafeEscape",
    "Position",
    "Random",
    "Report",
    "Scripted",
    "Trace",
    "bp_apply_round",
    "check_invariant_bp",
    "check_invariant_maltsev",
    "duplicator_move_bp",
    "duplicator_move_maltsev",
    "duplicator_update_bp",
    "explore_maltsev",
    "game_instances",
    "initial_memory_bp",
    "initial_memory_maltsev",
    "maltsev_validate_duplicator",
    "play_game",
    "reachable_states_bp",
    "reachable_states_maltsev",
    "replay",
    "spoiler_wins_now",
    "verify_one_round_bp",
    "verify_one_round_maltsev",
]
