use num_traits::{One, Zero};

use super::QuantifierError;
use crate::rational::{ratio, Rational};

/// Largest input width accepted by [`nu_linear_distance`].
pub const MAX_NU_BITS: u32 = 20;

/// Distance from a Boolean function to the nearest `Z₂`-linear function
/// `g(x) = a·x`, as a fraction of the `2^m` inputs.
///
/// `truth_table[x]` is `f(x)`; bit `j` of `x` is input `j`. Uses the
/// Walsh-Hadamard transform: `|{x : f(x) ≠ a·x}| = (2^m − W(a)) / 2`.
pub fn nu_linear_distance(truth_table: &[bool]) -> Result<Rational, QuantifierError> {
    let n = truth_table.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(QuantifierError::OutOfRange(format!("truth table length {n} is not a power of two")));
    }
    let bits = n.trailing_zeros();
    if bits > MAX_NU_BITS {
        return Err(QuantifierError::OutOfRange(format!("{bits} input bits exceeds the limit of {MAX_NU_BITS}")));
    }
    let mut w: Vec<i64> = truth_table.iter().map(|&f| if f { -1 } else { 1 }).collect();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (x, y) = (w[j], w[j + h]);
                w[j] = x + y;
                w[j + h] = x - y;
            }
        }
        h *= 2;
    }
    let best = w.iter().max().copied().unwrap_or(0);
    Ok(ratio((n as i64 - best) / 2, n as i64))
}

/// Lower bound `(1 − CF)·ν` on the failure probability of computing `f`.
pub fn mbqc_failure_bound(cf: &Rational, nu: &Rational) -> Result<Rational, QuantifierError> {
    if cf < &Rational::zero() || cf > &Rational::one() {
        return Err(QuantifierError::OutOfRange(format!("cf = {cf} outside [0,1]")));
    }
    if nu < &Rational::zero() || nu > &ratio(1, 2) {
        return Err(QuantifierError::OutOfRange(format!("nu = {nu} outside [0,1/2]")));
    }
    Ok((Rational::one() - cf) * nu)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(m: u32, f: impl Fn(usize) -> bool) -> Vec<bool> {
        (0..1usize << m).map(f).collect()
    }

    fn brute(t: &[bool]) -> Rational {
        let n = t.len();
        let best = (0..n)
            .map(|a| (0..n).filter(|&x| t[x] != ((a & x).count_ones() % 2 == 1)).count())
            .min()
            .unwrap();
        ratio(best as i64, n as i64)
    }

    #[test]
    fn linear_function_is_zero() {
        let t = table(3, |x| (x & 0b101).count_ones() % 2 == 1);
        assert_eq!(nu_linear_distance(&t).unwrap(), Rational::zero());
    }

    #[test]
    fn and_and_constant() {
        let and2 = table(2, |x| x == 3);
        assert_eq!(brute(&and2), ratio(1, 4));
        assert_eq!(nu_linear_distance(&and2).unwrap(), ratio(1, 4));
        let one = table(2, |_| true);
        assert_eq!(nu_linear_distance(&one).unwrap(), brute(&one));
        assert_eq!(brute(&one), ratio(1, 2));
    }

    #[test]
    fn matches_brute_force_on_all_three_bit_functions() {
        for code in 0u32..256 {
            let t = table(3, |x| code >> x & 1 == 1);
            assert_eq!(nu_linear_distance(&t).unwrap(), brute(&t), "function {code:#010b}");
        }
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(nu_linear_distance(&[]).is_err());
        assert!(nu_linear_distance(&[true, false, true]).is_err());
        assert!(nu_linear_distance(&vec![false; 1 << 21]).is_err());
    }

    #[test]
    fn bound_values() {
        let quarter = ratio(1, 4);
        assert_eq!(mbqc_failure_bound(&Rational::one(), &quarter).unwrap(), Rational::zero());
        assert_eq!(mbqc_failure_bound(&Rational::zero(), &quarter).unwrap(), quarter);
        assert_eq!(mbqc_failure_bound(&ratio(1, 2), &quarter).unwrap(), ratio(1, 8));
        assert!(mbqc_failure_bound(&ratio(3, 2), &quarter).is_err());
        assert!(mbqc_failure_bound(&Rational::zero(), &ratio(3, 4)).is_err());
    }
}
