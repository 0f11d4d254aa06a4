use serde::Serialize;

use crate::error::{Error, Result};

/// Global step `i = (t−1)·E·M + (e−1)·M + m` for round `t`, epoch `e`,
/// batch `m`, all counted from 1.
pub fn step_index(t: usize, e: usize, m: usize, epochs: usize, batches: usize) -> Result<usize> {
    if t == 0 || e == 0 || m == 0 || e > epochs || m > batches {
        return Err(Error::Invalid(format!(
            "(t, e, m) = ({t}, {e}, {m}) outside 1.., 1..={epochs}, 1..={batches}"
        )));
    }
    Ok((t - 1) * epochs * batches + (e - 1) * batches + m)
}

/// Inverse of [`step_index`] for `i ≥ 1`. Step 0 maps to `(0, 0, 0)`.
pub fn step_coords(i: usize, epochs: usize, batches: usize) -> (usize, usize, usize) {
    if i == 0 {
        return (0, 0, 0);
    }
    let k = i - 1;
    let per_round = epochs * batches;
    (
        k / per_round + 1,
        (k % per_round) / batches + 1,
        k % batches + 1,
    )
}

/// Steps after which client-side models are aggregated: `{t·E·M : t = 1..=T}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SyncSchedule {
    period: usize,
    rounds: usize,
}

impl SyncSchedule {
    pub fn contains(&self, i: usize) -> bool {
        i > 0 && i.is_multiple_of(self.period) && i / self.period <= self.rounds
    }

    pub fn points(&self) -> Vec<usize> {
        (1..=self.rounds).map(|t| t * self.period).collect()
    }

    pub fn len(&self) -> usize {
        self.rounds
    }

    pub fn is_empty(&self) -> bool {
        self.rounds == 0
    }

    pub fn total_steps(&self) -> usize {
        self.rounds * self.period
    }
}

pub fn sync_points(rounds: usize, epochs: usize, batches: usize) -> Result<SyncSchedule> {
    if rounds == 0 || epochs == 0 || batches == 0 {
        return Err(Error::Invalid("T, E and M must all be at least 1".into()));
    }
    Ok(SyncSchedule {
        period: epochs * batches,
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_examples() {
        assert_eq!(step_index(1, 1, 1, 3, 4).unwrap(), 1);
        assert_eq!(step_index(2, 1, 1, 5, 10).unwrap(), 51);
        assert_eq!(step_index(7, 5, 10, 5, 10).unwrap(), 350);
        assert!(step_index(1, 6, 1, 5, 10).is_err());
        assert!(step_index(0, 1, 1, 5, 10).is_err());
    }

    #[test]
    fn coords_invert_index() {
        for i in 1..=60 {
            let (t, e, m) = step_coords(i, 3, 4);
            assert_eq!(step_index(t, e, m, 3, 4).unwrap(), i);
        }
    }

    #[test]
    fn sync_examples() {
        assert_eq!(sync_points(3, 5, 10).unwrap().points(), vec![50, 100, 150]);
        assert_eq!(sync_points(1, 2, 3).unwrap().points(), vec![6]);
        assert_eq!(sync_points(4, 1, 1).unwrap().points(), vec![1, 2, 3, 4]);
        let s = sync_points(2, 2, 2).unwrap();
        assert!(s.contains(4) && s.contains(8));
        assert!(!s.contains(0) && !s.contains(6) && !s.contains(12));
    }
}
