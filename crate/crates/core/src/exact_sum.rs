//! Correctly rounded floating-point summation (Shewchuk's partials, as in
//! Python's `math.fsum`).
//!
//! Rounding is monotone, so if the exact sum of one set of terms is no larger
//! than another's, the rounded results compare the same way. The optimizer's
//! cost trace relies on this to be non-increasing with zero tolerance.

pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut kept = 0;
        for k in 0..partials.len() {
            let mut y = partials[k];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    round_partials(&partials)
}

fn round_partials(partials: &[f64]) -> f64 {
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        let y = partials[n - 1];
        n -= 1;
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    // half-way case: make the rounding of hi + lo agree with the remaining partials
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cancellation() {
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum([0.1; 10]), 1.0);
        assert_eq!(exact_sum(std::iter::empty()), 0.0);
    }

    proptest! {
        // multiples of 2^-30 below 2^30 sum exactly in i128 fixed point
        #[test]
        fn matches_fixed_point(ints in proptest::collection::vec(-(1i64 << 60)..(1i64 << 60), 0..200)) {
            let scale = (1u64 << 30) as f64;
            let values: Vec<f64> = ints.iter().map(|&k| k as f64 / scale).collect();
            let exact: i128 = values.iter().map(|v| (v * scale) as i128).sum();
            let want = exact as f64 / scale;
            prop_assert_eq!(exact_sum(values.iter().copied()), want);
        }

        #[test]
        fn dropping_a_positive_term_never_increases(values in proptest::collection::vec(-1e3f64..1e3, 1..100), drop in 0usize..100) {
            let drop = drop % values.len();
            let all = exact_sum(values.iter().copied());
            let rest = exact_sum(values.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, v)| *v));
            if values[drop] >= 0.0 {
                prop_assert!(rest <= all);
            } else {
                prop_assert!(rest >= all);
            }
        }
    }
}
