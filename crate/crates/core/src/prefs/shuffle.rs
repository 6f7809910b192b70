use rand::Rng;
use rustc_hash::FxHashMap;

/// A Fisher-Yates shuffle of `0..len` materialized one position at a time.
///
/// Slots that still hold their own index are not stored, so memory is
/// proportional to the number of draws rather than to `len`.
#[derive(Clone, Debug, Default)]
pub(crate) struct LazyShuffle {
    len: u32,
    drawn: u32,
    displaced: FxHashMap<u32, u32>,
}

impl LazyShuffle {
    pub(crate) fn new(len: u32) -> Self {
        LazyShuffle {
            len,
            drawn: 0,
            displaced: FxHashMap::default(),
        }
    }

    pub(crate) fn drawn(&self) -> u32 {
        self.drawn
    }

    /// Value at position `i` of the virtual array.
    pub(crate) fn slot(&self, i: u32) -> u32 {
        self.displaced.get(&i).copied().unwrap_or(i)
    }

    fn store(&mut self, i: u32, value: u32) {
        if value == i {
            self.displaced.remove(&i);
        } else {
            self.displaced.insert(i, value);
        }
    }

    /// Moves the value at position `j` (undrawn region) to the front of the
    /// undrawn region and returns it.
    pub(crate) fn take_at(&mut self, j: u32) -> u32 {
        debug_assert!(j >= self.drawn && j < self.len);
        let front = self.drawn;
        let value = self.slot(j);
        if j != front {
            let displaced = self.slot(front);
            self.store(j, displaced);
            self.store(front, value);
        }
        self.drawn += 1;
        value
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<u32> {
        if self.drawn == self.len {
            return None;
        }
        let j = rng.random_range(self.drawn..self.len);
        Some(self.take_at(j))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_draw_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = LazyShuffle::new(50);
        let mut seen: Vec<u32> = std::iter::from_fn(|| s.draw(&mut rng)).collect();
        assert_eq!(seen.len(), 50);
        // prefix slots replay the draw order
        for (i, v) in seen.iter().enumerate() {
            assert_eq!(s.slot(i as u32), *v);
        }
        seen.sort_unstable();
        assert_eq!(seen, (0..50).collect::<Vec<_>>());
        assert_eq!(s.draw(&mut rng), None);
    }

    #[test]
    fn storage_tracks_draws_not_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = LazyShuffle::new(1_000_000);
        for _ in 0..10 {
            s.draw(&mut rng);
        }
        assert!(s.displaced.len() <= 20);
    }
}
