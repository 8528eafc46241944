use super::{distance, Position};
use crate::error::{Result, SimError};

/// RMa-AV LOS path loss in dB between a UAV at `pos` and a base station at
/// `bs_pos`, for carrier `carrier_hz`.
///
/// `PL = max(23.9 - 1.8 log10(h_UT), 20) log10(d_3D) + 20 log10(40 pi f_c / 3)`
/// with `h_UT` the UAV height in meters, `d_3D` in meters and `f_c` in GHz.
/// Only UAV heights in [10, 300] m are accepted.
pub fn path_loss_db(pos: &Position, bs_pos: &Position, carrier_hz: f64) -> Result<f64> {
    let h_ut = pos[2];
    if !(10.0..=300.0).contains(&h_ut) {
        return Err(SimError::HeightOutOfRange(h_ut));
    }
    let d3 = distance(pos, bs_pos);
    let slope = (23.9 - 1.8 * h_ut.log10()).max(20.0);
    let fc_ghz = carrier_hz / 1e9;
    Ok(slope * d3.log10() + 20.0 * (40.0 * std::f64::consts::PI * fc_ghz / 3.0).log10())
}

/// Linear power gain `10^(-PL/10)`.
pub fn gain_from_path_loss(pl_db: f64) -> f64 {
    10f64.powf(-pl_db / 10.0)
}

pub fn path_loss_from_gain(gain: f64) -> f64 {
    -10.0 * gain.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BS: Position = [0.0, 0.0, 30.0];

    #[test]
    fn reference_point_100m() {
        // d_3D = sqrt(100^2 + 10^2); slope 23.9 - 1.8 log10(20)
        let pl = path_loss_db(&[100.0, 0.0, 20.0], &BS, 2e9).unwrap();
        assert!((pl - 81.62).abs() < 0.01, "{pl}");
    }

    #[test]
    fn doubling_distance_adds_slope_log2() {
        let a = path_loss_db(&[0.0, 0.0, 20.0 + 100.0], &[0.0, 0.0, 100.0], 2e9);
        // height 120 m, d_3D 20 m vs 40 m
        let a = a.unwrap();
        let b = path_loss_db(&[0.0, 0.0, 120.0], &[0.0, 0.0, 80.0], 2e9).unwrap();
        let slope = (23.9 - 1.8 * 120f64.log10()).max(20.0);
        assert!((b - a - slope * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn gain_round_trip() {
        for pl in [60.0, 81.62, 97.3, 120.0] {
            let back = path_loss_from_gain(gain_from_path_loss(pl));
            assert!((back - pl).abs() / pl < 1e-12);
        }
    }

    #[test]
    fn rejects_heights_outside_model() {
        assert!(matches!(path_loss_db(&[10.0, 0.0, 5.0], &BS, 2e9), Err(SimError::HeightOutOfRange(_))));
        assert!(path_loss_db(&[10.0, 0.0, 301.0], &BS, 2e9).is_err());
    }
}
