//! Refrigeration demand response: thermal trace simulation, safe-off
//! duration labelling and prediction, fleet selection and a file-backed
//! model registry.

mod examples;
mod fleet;
mod predictor;
mod registry;
mod sim;


pub use examples::{
    extract_examples, time_to_threshold, DefrostExample, ExtractionCounts, DEFAULT_WINDOW, WINDOW_FEATURES,
};
pub use fleet::{
    eligible, read_fleet_csv, read_fleet_file, select_fleet, FleetCandidate, FleetPlan, FleetSpecRow, SelectionMethod,
    DEFAULT_SAFETY_MARGIN, EXACT_LIMIT,
};
pub use predictor::{
    fleet_examples, simulate_fleet, split_fridges, train_defrost_predictor, DefrostConfig, DefrostPrediction,
    DefrostPredictor, DefrostReport, FleetSimConfig, FridgeSplit,
};
pub use registry::{best_entry, parse_index, Registry, RegistryEntry};
pub use sim::{simulate_trace, FridgeSpec, FridgeTrace, Schedule, EVENT_CAP_S, OVERSHOOT_C};
