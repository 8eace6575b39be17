//! Bridge between Model Context Protocol clients and a scientific
//! visualization engine.
//!
//! The layers, bottom up: [`engine`] (the pipeline contract with mock and
//! ParaView backends), [`tools`] (the curated tool registry and session
//! manager), [`protocol`] (JSON-RPC/MCP framing and the stdio server),
//! [`goal`] (closed-loop controllers built on the tool surface) and
//! [`harness`] (trace record and replay). [`config`] assembles a session
//! from layered settings.

// `!(x > 0.0)` style checks are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod engine;
pub mod protocol;
pub mod tools;
pub mod goal;
pub mod harness;
pub mod config;
