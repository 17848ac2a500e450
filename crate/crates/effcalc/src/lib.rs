//! An effect-handler calculus with unrestricted Hindley-Milner
//! type-and-effect inference, a dynamically scoped state calculus, the
//! macro translation between them, and a test harness that checks the
//! metatheory mechanically at desk scale.
//!
//! The crate is organized along the pipeline:
//!
//! - [`syntax`], [`parse`], [`pretty`], [`fixtures`]: terms, concrete
//!   syntax, and the worked example programs;
//! - [`eval`]: small-step semantics for the handler calculus;
//! - [`types`], [`infer`]: the type-and-effect system in its three
//!   annotation disciplines (local, coarse, none);
//! - [`dynstate`]: the dynamically scoped state calculus and its
//!   Felleisen-style semantics;
//! - [`translate`]: the macro translation from dynamic state into
//!   handlers, at term and type level;
//! - [`gen`], [`harness`]: type-directed program generation and the
//!   safety / simulation / type-preservation / divergence checks.

pub mod dynstate;
pub mod eval;
pub mod fixtures;
pub mod gen;
pub mod harness;
pub mod infer;
pub mod parse;
pub mod pretty;
pub mod syntax;
pub mod translate;
pub mod types;
