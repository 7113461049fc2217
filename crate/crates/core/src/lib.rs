//! Consent-gated sentence annotation for work chat rooms.
//!
//! A bot joins a room only after its members agree, splits recorded
//! messages into sentences, suggests a Problem/Cause/Solution/Other label
//! for each, and stores what members confirm or correct through reactions.
//! The stored data can be exported as an anonymized NDJSON dataset.

pub mod accounting;
pub mod api;
pub mod bot;
pub mod classifier;
pub mod config;
pub mod consent;
pub mod dataset;
pub mod model;
pub mod segment;
pub mod service;
pub mod simulate;
pub mod store;
pub mod transport;
