//! Resource theory of contextuality.
//!
//! Scenarios and behaviors ([`scenario`], [`behavior`]), an exact linear
//! programming backend ([`lp`]), the contextuality quantifiers
//! ([`quantifiers`]) and non-contextual wirings with their test harnesses
//! ([`wirings`]). File formats live in [`io`].

pub mod behavior;
pub mod io;
pub mod lp;
pub mod quantifiers;
pub mod rational;
pub mod sampling;
pub mod scenario;
pub mod wirings;

pub use behavior::{
    assignment_to_behavior, controlled_choice, mix_behaviors, product_box, Behavior, BehaviorError,
    NumericMode,
};
pub use quantifiers::{quantify, Measure, QuantifierError, QuantifierOptions, QuantifierResult};
pub use rational::Rational;
pub use wirings::{apply_ncwiring, apply_postprocessing, apply_preprocessing, validate_wiring, NcWiring, PostProcessing, PreProcessing, WiringError};
pub use scenario::{
    enumerate_global_assignments, validate_scenario, Diagnostic, GlobalAssignment, Scenario,
    ScenarioError, ScenarioSpec, Severity,
};
