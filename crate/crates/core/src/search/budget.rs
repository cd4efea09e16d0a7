//! Difficulty-aware sampling budget.

/// `N_min + ceil((N - N_min) * (1 - S / S_max)^gamma)`.
///
/// Scores at or above `s_max` always give `n_min` (including `gamma = 0`);
/// below it `gamma = 0` gives `n`.
pub fn adapt_budget(score: f64, n: u32, n_min: u32, gamma: f64, s_max: f64) -> u32 {
    if n_min >= n {
        return n;
    }
    let ratio = (1.0 - score / s_max).clamp(0.0, 1.0);
    let factor = if ratio == 0.0 { 0.0 } else { ratio.powf(gamma) };
    let extra = (f64::from(n - n_min) * factor).ceil();
    n_min + (extra as u32).min(n - n_min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_value() {
        // 0.5^0.15 = exp(-0.15 ln 2) = 0.901250463..., times 31 = 27.938...
        let factor = (-0.15 * std::f64::consts::LN_2).exp();
        assert!((31.0 * factor - 27.938_764).abs() < 1e-5);
        assert_eq!(adapt_budget(5.0, 32, 1, 0.15, 10.0), 29);
    }

    #[test]
    fn endpoints() {
        assert_eq!(adapt_budget(10.0, 32, 1, 0.15, 10.0), 1);
        assert_eq!(adapt_budget(0.0, 32, 1, 0.15, 10.0), 32);
        assert_eq!(adapt_budget(10.0, 32, 1, 0.0, 10.0), 1);
        assert_eq!(adapt_budget(9.99, 32, 1, 0.0, 10.0), 32);
    }

    proptest! {
        #[test]
        fn law_holds(
            s1 in 0.0f64..=10.0, s2 in 0.0f64..=10.0, gamma in 0.0f64..=2.0,
            n in 2u32..=64, n_min_raw in 1u32..=64,
        ) {
            let n_min = 1 + (n_min_raw - 1) % n;
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            let a = adapt_budget(lo, n, n_min, gamma, 10.0);
            let b = adapt_budget(hi, n, n_min, gamma, 10.0);
            prop_assert!(b <= a);
            prop_assert!(n_min <= b && a <= n);
            prop_assert_eq!(adapt_budget(10.0, n, n_min, gamma, 10.0), n_min);
            prop_assert_eq!(adapt_budget(0.0, n, n_min, gamma, 10.0), n);
        }
    }
}
