//! Trajectory analytics for agent exploration records.
//!
//! The crate ingests *trajectory bundles* — the full record of an agent
//! exploring a task (attempts, exploration memos, an optional distilled skill
//! document, and evaluation records) — and computes trajectory-level
//! statistics on top of them:
//!
//! - [`textstats`]: token distributions, KL / Jensen–Shannon divergence,
//!   Jaccard similarity, lexical entropy, and n-gram novelty.
//! - [`pdi`]: the Posterior Distillation Index — a composite of execution
//!   grounding, plan copying, and memo ossification — plus the smoothing and
//!   weight sensitivity sweeps.
//! - [`controller`]: the online proxy-PDI monitor that emits soft/strong
//!   intervention directives during exploration.
//! - [`features`]: the 23 named trajectory-level features.
//! - [`stats`]: cohort statistics — skill gain, agreement rate, pass-gain
//!   rate, quadrant tables, convergence classification, Spearman and
//!   Mann–Whitney tests.
//! - [`harness`]: a deterministic, pluggable exploration loop driven by
//!   scripted ports.

pub mod bundle;
pub mod controller;
pub mod features;
pub mod harness;
pub mod model;
pub mod parse;
pub mod pdi;
pub mod stats;
pub mod textstats;
pub mod tokenize;
