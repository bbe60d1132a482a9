//! Small numeric helpers shared by the solvers.

/// `log Σ exp(v)` with the maximum subtracted first.
///
/// Returns `-inf` for an empty slice or when every entry is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Same as [`log_sum_exp`] over an iterator, without collecting first.
pub fn log_sum_exp_iter<I>(values: I) -> f64
where
    I: IntoIterator<Item = f64> + Clone,
{
    let max = values
        .clone()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.into_iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Turns a table of log-weights into normalized log-probabilities in place.
/// Returns the log normalizer.
pub fn log_normalize(values: &mut [f64]) -> f64 {
    let z = log_sum_exp(values);
    for v in values.iter_mut() {
        *v -= z;
    }
    z
}

/// Normalized probabilities from log-weights.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(values);
    values.iter().map(|&v| (v - z).exp()).collect()
}

/// `-p ln p`, with `0 ln 0 = 0`.
#[inline]
pub fn neg_p_log_p(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.ln()
    } else {
        0.0
    }
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    probs.iter().copied().map(neg_p_log_p).sum()
}

/// Formats a float with 17 significant digits, which round-trips every
/// finite `f64` exactly. Plain notation is used for moderate exponents and
/// trailing zeros are trimmed.
pub fn fmt17(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_naive_and_survives_large_inputs() {
        let v = [0.1, -2.0, 3.5];
        let naive = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - naive).abs() < 1e-14);
        let big = [1000.0, 1000.0];
        assert!((log_sum_exp(&big) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((log_sum_exp_iter(v.iter().copied()) - log_sum_exp(&v)).abs() < 1e-15);
    }

    #[test]
    fn entropy_uses_zero_log_zero() {
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
        assert!((entropy(&[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn fmt17_round_trips() {
        assert_eq!(fmt17(4f64.ln()), "1.3862943611198906");
        assert_eq!(fmt17(0.5), "0.5");
        assert_eq!(fmt17(-3.0), "-3");
        for &x in &[
            1.0 / 3.0,
            2.0 / 3.0,
            1e-300,
            -7.25e22,
            123456.789,
            0.1 + 0.2,
            f64::MIN_POSITIVE,
            f64::MAX,
        ] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }
}
