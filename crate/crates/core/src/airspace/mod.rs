//! UAV mobility, air-to-ground path loss, link rates and slot-exact
//! transmission durations.

mod channel;
mod path_loss;
mod rate;
mod trajectory;
mod transmit;

pub use channel::{read_trajectory_csv, write_trajectory_csv, Channel, ConstantChannel, MobileChannel, RecordedChannel};
pub use path_loss::{gain_from_path_loss, path_loss_db, path_loss_from_gain};
pub use rate::{downlink_rate_fraction, downlink_rate_full, shannon_rate, uplink_rate};
pub use trajectory::{generate_trajectory, Trajectory, WaypointWalker};
pub use transmit::{transmit_duration, MAX_TRANSMIT_SLOTS};

/// Cartesian position in meters.
pub type Position = [f64; 3];

/// Euclidean distance between two positions.
pub fn distance(a: &Position, b: &Position) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}
