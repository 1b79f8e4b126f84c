//! Simulation and waveform-design toolkit for automotive MIMO FMCW radar.
//!
//! Covers slow-time transmit coding (TDMA, DDMA, empty-spectrum DDMA,
//! TB-DDMA, Hadamard), synthesis of dechirped receive cubes, range-Doppler
//! processing with Doppler-ambiguity recovery, and fast-time transmit
//! beamspace design through a semidefinite relaxation.

pub mod error;
pub mod export;
pub mod modmat;
pub mod params;
pub mod rdproc;
pub mod reproduce;
pub mod scenario;
pub mod scene;
pub mod tbdesign;

pub use error::{Error, Result};
pub use modmat::{
    ddma_matrix, empty_spectrum_matrix, hadamard_matrix, phase_trajectory, tb_ddma_matrix,
    tdma_matrix, virtual_beam_directions, Coding, PhaseModulationMatrix, Scheme, VirtualBeamSet,
};
pub use params::{derive_metrics, steering_vector, Metrics, RadarParams, SteeringVector};
pub use rdproc::{
    binary_detection, demultiplex, detect_and_estimate, estimate_threshold, find_peaks,
    range_doppler_map, reassemble, recover_doppler, sequence_test, BinaryMatrix, DetectConfig,
    Detection, RangeDopplerMap, ThresholdRule, Window,
};
pub use scene::{simulate_rx, DataCube, Fading, NoiseConfig, Target};
pub use tbdesign::{
    beampattern, conjugate_counterpart, design_tb, slow_time_tb_pattern, taylor_window,
    Beampattern, TbDesignConfig, TbMatrix,
};

pub use num_complex::Complex64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
