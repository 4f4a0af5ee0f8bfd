//! Simulator and library for gathering sparse sensor data over a
//! capacity-limited directed network.
//!
//! Each node holds one real-valued message; the messages are sparse in a
//! known orthonormal basis. Instead of forwarding raw packets, nodes form
//! linear combinations of their incoming edge contents and their own
//! message, quantize the result to fit the outgoing edge's bit budget, and
//! retransmit. The gateway stacks the contents of its incoming edges over
//! time and recovers all messages with a constrained l1-minimization
//! decoder, typically from fewer measurements than there are nodes.
//!
//! Modules:
//! - [`graph`]: directed network model, random deployments, hop-count routing
//! - [`signal`]: sparse message ensembles `x = phi * s`
//! - [`quantizer`]: midtread uniform quantizer sized to an edge's bit budget
//! - [`coding`]: the quantized network coding engine and its matrix bookkeeping
//! - [`decode`]: l1-minimization recovery, RIP constants, error bounds
//! - [`forward`]: store-and-forward shortest-path baseline
//! - [`experiment`]: seeded SNR-versus-delay sweeps and CSV output
//! - [`transcript`]: plain-text run dumps for offline decoding and checking

pub mod coding;
pub mod decode;
pub mod experiment;
pub mod forward;
pub mod graph;
pub mod quantizer;
pub mod seeds;
pub mod signal;
pub mod transcript;

pub use coding::{
    assemble_measurements, build_transfer_matrices, compute_epsilon_sq,
    compute_epsilon_sq_literal, compute_psi, gateway_selector, generate_coefficients, run_qnc,
    step_network, step_network_unquantized, CodingError, CoefficientSchedule, EdgeState,
    MeasurementRecord, QncRun, TransferMatrices,
};
pub use decode::{
    decode_transcript, error_bound, exhaustive_sparse_oracle, l1_min_decode, l1_min_decode_with,
    recovery_constant, rip_constant, rip_constant_sampled, DecodeError, DecodeProblem,
    DecodeReport, Decoded, OracleSolution, RipEstimate, SolverOptions,
};
pub use experiment::{
    compute_snr, csv_string, emit_csv, optimize_block_length, parse_csv, run_experiment,
    DecodeFailure, ExperimentConfig, ExperimentError, ExperimentResult, ResultRow, Scheme,
};
pub use forward::{simulate_forwarding, ForwardError, ForwardingRun};
pub use graph::{
    generate_random_network, shortest_paths_to_gateway, Edge, EdgeId, GraphError, NetworkGraph,
    NodeId, RoutingTable,
};
pub use quantizer::{quantizer_for_edge, quantizers_for_graph, Quantizer, QuantizerError};
pub use signal::{
    generate_sparse_messages, generate_sparse_messages_with_basis, random_orthonormal_basis,
    MessageEnsemble, SignalError,
};
pub use transcript::{RunTranscript, TranscriptError, VerifyReport};
