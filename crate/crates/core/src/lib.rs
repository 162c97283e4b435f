pub mod clock;
pub mod condition;
pub mod diff;
pub mod driver;
pub mod error;
pub mod ids;
pub mod preview;
pub mod provider;
pub mod runner;
pub mod session;
pub mod suggestion;
pub mod text;
pub mod timing;
pub mod tasks;
pub mod telemetry;
