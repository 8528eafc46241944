use crate::error::{Result, SimError};

/// Hard cap on slots a single transmission may span.
pub const MAX_TRANSMIT_SLOTS: u64 = 10_000_000;

/// Time needed to push `data_bits` through a link whose rate is piecewise
/// constant per slot, starting at `t_start`.
///
/// Bits accrue linearly at `rate_of_slot(s)` inside slot `s`; the walk stops
/// in the slot where the cumulative total reaches `data_bits`. The result `d`
/// is the unique solution of `d * mean_rate(t_start, t_start + d) = data_bits`
/// for the slot-averaged rate. `rate_of_slot` returns `None` past the channel
/// horizon.
pub fn transmit_duration<F>(data_bits: f64, mut rate_of_slot: F, t_start: f64, slot_s: f64) -> Result<f64>
where
    F: FnMut(u64) -> Option<f64>,
{
    if data_bits <= 0.0 {
        return Ok(0.0);
    }
    let mut slot = (t_start / slot_s).floor().max(0.0) as u64;
    let mut t = t_start;
    let mut remaining = data_bits;
    for _ in 0..MAX_TRANSMIT_SLOTS {
        let rate = rate_of_slot(slot).ok_or(SimError::NonTerminating {
            bits: data_bits,
            t_start,
            slots: slot,
        })?;
        let slot_end = (slot + 1) as f64 * slot_s;
        let span = (slot_end - t).max(0.0);
        let capacity = rate * span;
        if rate > 0.0 && capacity >= remaining {
            return Ok(t + remaining / rate - t_start);
        }
        remaining -= capacity;
        t = slot_end;
        slot += 1;
    }
    Err(SimError::NonTerminating {
        bits: data_bits,
        t_start,
        slots: MAX_TRANSMIT_SLOTS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_rate() {
        let d = transmit_duration(1e6, |_| Some(2e6), 0.0, 0.1).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_slot_walk() {
        // 1e5 bits fit in slot 0, the remaining 1.5e5 take 0.075 s at 2e6
        let d = transmit_duration(2.5e5, |s| Some(if s == 0 { 1e6 } else { 2e6 }), 0.0, 0.1).unwrap();
        assert!((d - 0.175).abs() < 1e-12, "{d}");
    }

    #[test]
    fn vanishing_payload() {
        assert_eq!(transmit_duration(0.0, |_| Some(1.0), 3.0, 0.1).unwrap(), 0.0);
        let d = transmit_duration(1e-9, |_| Some(1e6), 0.05, 0.1).unwrap();
        assert!(d < 1e-14);
    }

    #[test]
    fn horizon_exhaustion_is_an_error() {
        let r = transmit_duration(1e6, |s| if s < 3 { Some(1e3) } else { None }, 0.0, 0.1);
        assert!(matches!(r, Err(SimError::NonTerminating { .. })));
    }

    #[test]
    fn skips_zero_rate_slots() {
        let d = transmit_duration(1e5, |s| Some(if s < 2 { 0.0 } else { 1e6 }), 0.05, 0.1).unwrap();
        assert!((d - (0.15 + 0.1)).abs() < 1e-12);
    }

    fn slot_rates() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1e3f64..1e7, 1..40)
    }

    /// Slot-averaged rate over `[tb, te]`, evaluated independently.
    fn mean_rate(rates: &[f64], tb: f64, te: f64, slot_s: f64) -> f64 {
        let rate = |s: u64| rates[(s as usize) % rates.len()];
        let sb = (tb / slot_s).floor() as u64;
        let se = (te / slot_s).floor() as u64;
        if sb == se {
            return rate(sb);
        }
        let mut bits = rate(sb) * ((sb + 1) as f64 * slot_s - tb);
        for j in sb + 1..se {
            bits += rate(j) * slot_s;
        }
        bits += rate(se) * (te - se as f64 * slot_s);
        bits / (te - tb)
    }

    proptest! {
        #[test]
        fn satisfies_averaged_rate_equation(rates in slot_rates(), bits in 1e3f64..1e8, t0 in 0.0f64..5.0) {
            let r = |s: u64| Some(rates[(s as usize) % rates.len()]);
            let d = transmit_duration(bits, r, t0, 0.1).unwrap();
            let lhs = d * mean_rate(&rates, t0, t0 + d, 0.1);
            prop_assert!((lhs - bits).abs() / bits < 1e-9, "{} vs {}", lhs, bits);
        }

        #[test]
        fn monotone_and_scale_invariant(rates in slot_rates(), bits in 1e3f64..1e8, extra in 1.0f64..1e6, c in 0.1f64..10.0) {
            let r = |s: u64| Some(rates[(s as usize) % rates.len()]);
            let d1 = transmit_duration(bits, r, 0.37, 0.1).unwrap();
            let d2 = transmit_duration(bits + extra, r, 0.37, 0.1).unwrap();
            prop_assert!(d2 > d1);
            let scaled = |s: u64| Some(c * rates[(s as usize) % rates.len()]);
            let d3 = transmit_duration(c * bits, scaled, 0.37, 0.1).unwrap();
            prop_assert!((d3 - d1).abs() <= 1e-9 * d1.max(1e-3));
        }
    }
}
