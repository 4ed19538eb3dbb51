use num_bigint::BigInt;
use num_rational::BigRational;

use super::BinCounts;

/// AP fraction of a ranking in exact rational arithmetic.
pub fn exact_ap(ranked: &[BinCounts], pos: u64) -> BigRational {
    let mut sum = BigRational::from_integer(BigInt::from(0));
    if pos == 0 {
        return sum;
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    for c in ranked {
        tp += c.t;
        fp += c.f;
        if c.t > 0 {
            sum += BigRational::new(BigInt::from(c.t) * BigInt::from(tp), BigInt::from(tp + fp));
        }
    }
    sum / BigRational::from_integer(BigInt::from(pos))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_exact_value() {
        // (1/2)(1 + 2/3) = 5/6
        let r = exact_ap(&[BinCounts::new(1, 0), BinCounts::new(1, 1)], 2);
        assert_eq!(r, BigRational::new(BigInt::from(5), BigInt::from(6)));
    }
}
