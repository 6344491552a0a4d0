mod common;

use common::*;

#[test]
fn error_ratios_become_superlinear() {
    for seed in 0..5 {
        let ratios = newton_error_ratios(seed);
        assert!(ratios.len() >= 2, "seed {seed}: too few iterates {ratios:?}");
        let tail = &ratios[ratios.len().saturating_sub(3)..];
        assert!(tail.iter().any(|&r| r < 0.1), "seed {seed}: ratios {ratios:?}");
        assert!(ratios.last().unwrap() < &0.5, "seed {seed}: ratios {ratios:?}");
    }
}
