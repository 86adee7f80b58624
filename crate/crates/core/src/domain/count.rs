use crate::error::{AfapeError, Result};

/// Number of distinct ordered acquisition sequences over `m` available
/// superfeatures: `sum_{i=0..m} m!/(m-i)!`.
///
/// Evaluated through `f(m) = 1 + m * f(m-1)` with checked arithmetic.
pub fn count_trajectories(m: u64) -> Result<u128> {
    let mut acc: u128 = 1;
    for k in 1..=m {
        acc = acc
            .checked_mul(k as u128)
            .and_then(|v| v.checked_add(1))
            .ok_or(AfapeError::Overflow(m))?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct sum of falling factorials.
    fn by_permutations(m: u64) -> u128 {
        (0..=m)
            .map(|i| ((m - i + 1)..=m).map(|k| k as u128).product::<u128>())
            .sum()
    }

    #[test]
    fn known_values() {
        assert_eq!(count_trajectories(0).unwrap(), 1);
        assert_eq!(count_trajectories(1).unwrap(), 2);
        assert_eq!(count_trajectories(2).unwrap(), 5);
        assert_eq!(count_trajectories(10).unwrap(), 9_864_101);
    }

    #[test]
    fn overflow_is_an_error() {
        assert!(count_trajectories(30).is_ok());
        assert!(matches!(count_trajectories(40), Err(AfapeError::Overflow(40))));
    }

    proptest! {
        #[test]
        fn recurrence_and_direct_sum_agree(m in 1u64..25) {
            let f = count_trajectories(m).unwrap();
            prop_assert_eq!(f, 1 + m as u128 * count_trajectories(m - 1).unwrap());
            prop_assert_eq!(f, by_permutations(m));
        }
    }
}
