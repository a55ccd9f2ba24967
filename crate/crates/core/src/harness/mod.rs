//! Experiment drivers behind the command-line tool: configuration, corpus
//! ingestion, Monte Carlo orchestration and CSV output.

pub mod compare;
pub mod config;
pub mod corpus;
pub mod output;
pub mod regime;
pub mod seeds;
pub mod snr;
pub mod synth;
pub mod theorem;

pub use compare::{compare_methods, CompareConfig, CompareInputs, Method, Split, TestImage};
pub use config::ConfigMap;
pub use corpus::{load_corpus, read_pgm, write_pgm, Corpus, GrayImage};
pub use seeds::{trial_rng, Workers};
pub use snr::{snr_db, Snr};
pub use theorem::{verify_theorem, TheoremConfig, TheoremReport};
