/// `W log2(1 + P h / (W N0))`, bits/s.
pub fn shannon_rate(bandwidth_hz: f64, power_w: f64, gain: f64, noise_psd: f64) -> f64 {
    if bandwidth_hz <= 0.0 {
        return 0.0;
    }
    bandwidth_hz * (power_w * gain / (bandwidth_hz * noise_psd)).ln_1p() / std::f64::consts::LN_2
}

/// Uplink rate of a client holding `bandwidth_hz = beta_k W_U`.
pub fn uplink_rate(bandwidth_hz: f64, power_w: f64, gain: f64, noise_psd: f64) -> f64 {
    shannon_rate(bandwidth_hz, power_w, gain, noise_psd)
}

/// Downlink rate when the whole band and the full server power serve one client.
pub fn downlink_rate_full(downlink_bw: f64, server_power: f64, gain: f64, noise_psd: f64) -> f64 {
    shannon_rate(downlink_bw, server_power, gain, noise_psd)
}

/// Downlink rate of a dedicated slice: `beta` of the band and `rho` of the power.
pub fn downlink_rate_fraction(beta: f64, rho: f64, downlink_bw: f64, server_power: f64, gain: f64, noise_psd: f64) -> f64 {
    shannon_rate(beta * downlink_bw, rho * server_power, gain, noise_psd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_snr_gives_bandwidth() {
        let n0 = 4e-21;
        let w = 2e6;
        // p h / (W N0) = 1
        let h = w * n0 / 0.5;
        assert!((uplink_rate(w, 0.5, h, n0) - w).abs() < 1e-6);
        assert!((uplink_rate(w, 1.5, h, n0) - 2.0 * w).abs() < 1e-6);
        assert!((downlink_rate_full(w, 0.5, h, n0) - w).abs() < 1e-6);
    }

    #[test]
    fn reference_rate_matches_high_precision() {
        // evaluated with 50-digit arithmetic:
        // 2e6 * log2(1 + 10^-8.162 / (2e6 * 3.981e-21))
        let r = uplink_rate(2e6, 1.0, 10f64.powf(-8.162), 3.981e-21);
        let oracle = 39_444_430.218_824_23;
        assert!((r - oracle).abs() / oracle < 1e-12, "{r}");
    }

    #[test]
    fn full_allocation_matches_full_downlink() {
        let (bw, p, h, n0) = (20e6, 40.0, 3e-10, 3.981e-21);
        assert_eq!(downlink_rate_fraction(1.0, 1.0, bw, p, h, n0), downlink_rate_full(bw, p, h, n0));
        // inner term 1 with beta = 0.5, rho = 0.25
        let h1 = 0.5 * bw * n0 / (0.25 * p);
        assert!((downlink_rate_fraction(0.5, 0.25, bw, p, h1, n0) - 0.5 * bw).abs() < 1e-6);
    }

    #[test]
    fn equal_split_is_exactly_k_times_slower() {
        // beta = rho = 1/K keeps the SNR unchanged, so the rate is exactly 1/K.
        let (bw, p, h, n0) = (20e6, 40.0, 3e-10, 3.981e-21);
        for k in 1..=12 {
            let f = 1.0 / k as f64;
            let frac = downlink_rate_fraction(f, f, bw, p, h, n0);
            let full = downlink_rate_full(bw, p, h, n0);
            assert!((k as f64 * frac - full).abs() / full < 1e-12);
        }
    }
}
