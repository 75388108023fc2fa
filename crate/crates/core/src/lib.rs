//! Deterministic packet-level simulator for approximate datacenter transport.

pub mod atp;
pub mod baseline;
pub mod config;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod metrics;
pub mod network;
pub mod packet;
pub mod retx;
pub mod sim;
pub mod switch;
pub mod topology;
pub mod workload;
