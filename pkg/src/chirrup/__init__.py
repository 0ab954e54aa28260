"""Binary-chirp codes and the CHIRRUP decoder for unsourced multiple access."""

__version__ = "0.1.0"

from .codebook import BitLayout, ChirpParams, Mode, bits_to_params, encode_chirp, params_to_bits, payload_capacity
from .wht import fwht
from .reconstruct import (
    DecodedComponent,
    DecoderParams,
    LsqState,
    chirp_reconstruct,
    dechirp,
    find_pb,
    find_pb_tree,
    lsq_add_column,
    shift_multiply,
)
from .scheme import CodeConfig, Energy, chirrup_decode, chirrup_encode, decode_subblock, tree_stitch
from .channel import (
    ExperimentResult,
    draw_messages,
    ebn0_db,
    estimate_error,
    find_min_ebn0,
    per_user_error,
    q_for_ebn0,
    transmit,
)
from .ost import Convention, OstAsymptotics, ost_decode, ost_phase_transition, ost_predict_k, ost_rates

__all__ = [
    "BitLayout", "ChirpParams", "Mode", "bits_to_params", "encode_chirp", "params_to_bits",
    "payload_capacity", "fwht", "DecodedComponent", "DecoderParams", "LsqState", "chirp_reconstruct",
    "dechirp", "find_pb", "find_pb_tree", "lsq_add_column", "shift_multiply", "CodeConfig", "Energy",
    "chirrup_decode", "chirrup_encode", "decode_subblock", "tree_stitch", "ExperimentResult",
    "draw_messages", "ebn0_db", "estimate_error", "find_min_ebn0", "per_user_error", "q_for_ebn0",
    "transmit", "Convention", "OstAsymptotics", "ost_decode", "ost_phase_transition", "ost_predict_k",
    "ost_rates",
]
