pub mod analytics;
pub mod config;
pub mod corpus;
pub mod exec;
pub mod gateway;
pub mod history;
pub mod model;
pub mod orchestrator;
pub mod rundir;
pub mod seed;
pub mod strategy;
pub mod synthetic;
