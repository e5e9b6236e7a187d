//! Linear entropy production of quantized torus automorphisms under periodic
//! projective measurement, with brute-force oracles and free-independence
//! diagnostics.
//!
//! The pipeline is:
//!
//! * [`torus_maps`]: classical automorphisms, KS entropy, and the cat,
//!   elliptic, shift and Haar unitaries;
//! * [`measurement`]: diagonal-block projector families and `h(P)`;
//! * [`choi`]: evolution of the system+ancilla state and the series `I[n]`;
//! * [`gram`]: the Kraus-path Gram matrix, used as an independent oracle;
//! * [`freeness`]: centered alternating moments `C[n]`, sampling, decay fits.

pub mod choi;
pub mod error;
pub mod freeness;
pub mod gram;
pub mod linalg;
pub mod measurement;
pub mod torus_maps;

pub use num_complex::Complex64 as C64;

pub use choi::{
    apply_measurement_step, apply_unitary_step, entropy_series, entropy_series_with, init_choi,
    init_choi_rotated, linear_entropy, ChoiState, EntropyPoint, EntropySeries, EvolutionOptions,
};
pub use error::{Error, Result};
pub use freeness::{
    correlation_value, exhaustive_low_order_check, f_variable_stats, fit_decay,
    sample_correlations, CorrelationSample, DecaySummary, FVariableStats, FVariant, Factor,
    SamplingConfig,
};
pub use gram::{brute_force_state, check_max_enpr, gram_matrix, purity_from_gram, GramMatrix};
pub use measurement::{
    apply_projector, build_partition, measurement_entropy, verify_simplifying_conditions,
    Centering, Partition, PartitionSpec, Side,
};
pub use torus_maps::{
    build_unitary, classify_automorphism, Classification, MapKind, QuantizedMap,
    TorusAutomorphism,
};
