//! Fixtures shared by the VM and ERM benchmarks in `benches/`.

use opte_core::constructions::{zoo_make, ZooProblem};
use opte_core::term::Term;
use opte_core::vm::{program_at, Program};
use opte_core::{IndexK, RngStream, Word};

/// `n` programs drawn uniformly from the first `2^(bits+1) − 1` of the
/// canonical order.
pub fn random_programs(n: usize, bits: u32, seed: u64) -> Vec<Program> {
    let mut rng = RngStream::new(seed, IndexK::new(0, 0), "bench-programs", 0);
    let count = (1u64 << (bits + 1)) - 1;
    (0..n).map(|_| program_at(rng.draw_below(count))).collect()
}

/// `n` input words of `len` uniform bits.
pub fn random_words(n: usize, len: usize, seed: u64) -> Vec<Word> {
    let mut rng = RngStream::new(seed, IndexK::new(0, 0), "bench-words", 0);
    (0..n).map(|_| rng.draw_bits(len)).collect()
}

pub fn zoo(spec: &str) -> ZooProblem {
    zoo_make(&Term::parse(spec).expect("term")).expect("zoo problem")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_seeded() {
        assert_eq!(random_programs(5, 8, 1), random_programs(5, 8, 1));
        assert!(random_programs(20, 8, 1).iter().all(|p| p.len_bits() <= 8));
        assert_eq!(random_words(3, 7, 2)[2].len(), 7);
        assert_eq!(zoo("first_bit").problem.name, "first_bit");
    }
}
