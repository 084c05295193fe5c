"""Link-level simulator and streaming decoder for a backscatter tag
that signals through the receiver's LTE downlink channel estimates."""

from .channel import ALTERNATING_PILOTS, UNIFORM_PILOTS, ChannelParams, \
    EstimateSeries, PilotPattern, calibrate_noise, magnitude_series, \
    synthesize_estimates
from .coding import CRC_CCITT, DEFAULT_CODE, CodeSpec, CrcSpec, \
    coding_gain_bound, conv_encode, crc16_bits, crc16_compute, crc16_verify, \
    free_distance, noiseless_soft, viterbi_decode
from .config import LinkConfig, load_config
from .estio import EstimateFormatError, IngestStats, build_datagram, \
    parse_datagram, read_estimates, udp_ingest, write_estimates
from .framing import BARKER7, CODED_SYMBOLS, FRAME_SYMBOLS, HEADER_SYMBOLS, \
    PAYLOAD_BITS, SyncHeader, assemble_frame, build_sync_header, \
    decode_frame_soft, extract_payload
from .harness import BerBin, TrialRecord, aggregate_bins, ber_sweep, \
    run_link_trial, theoretical_uncoded_ber, trial_seed, write_report
from .receiver import FrameScanner, PacketReport, SoftSymbols, SyncNotFound, \
    SyncResult, detect_header, estimate_snr, preprocess, receive_frame, \
    refine_timing, resample_uniform, scan_series, soft_demodulate, tone_energy
from .waveform import FskSpec, apply_clock_drift, chips_for_symbol, \
    modulate_frame
