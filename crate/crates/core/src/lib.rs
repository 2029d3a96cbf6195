//! Backseat-driver stack for the Otter USV.
//!
//! * [`nmea`]: `POT` sentence framing and field codec.
//! * [`transport`]: paced UDP broadcast, listeners and fault injection.
//! * [`sim`]: simulated OBC with 3-DOF dynamics and built-in modes.
//! * [`client`]: topic gateway and message synchronizer.
//! * [`nmpc`]: path-following NMPC and the LOS baseline.
//! * [`logbag`]: JSON-lines recording, replay and CSV export.
//! * [`metrics`]: cross-track and completion metrics from log records.
//! * [`config`]: TOML run configuration.
//! * [`mission`]: in-process and socket mission runners used by the CLI.

pub mod client;
pub mod config;
pub mod logbag;
pub mod metrics;
pub mod mission;
pub mod nmea;
pub mod nmpc;
pub mod sim;
pub mod transport;
