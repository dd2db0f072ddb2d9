//! Low-discrepancy candidate grids over the unit hypercube.
//!
//! Points come from a Sobol sequence (direction numbers for up to ten
//! dimensions) with a per-dimension random digital shift: each 32-bit
//! integer coordinate is XORed with a seeded mask before division by 2^32,
//! which decorrelates runs while preserving the equidistribution of the
//! sequence.

use rand::Rng;

use super::SmboError;

/// Largest supported candidate dimensionality.
pub const MAX_DIM: usize = 10;

const BITS: u32 = 32;

/// Primitive polynomial degree, interior coefficient bits, and initial
/// direction values for dimensions 2..=10. Dimension 1 uses the plain
/// radical-inverse directions and needs no table entry.
const TABLE: [(u32, u32, &[u32]); 9] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
];

/// 32 direction integers for one dimension (0-based index).
fn direction_numbers(dim_index: usize) -> Vec<u32> {
    let mut v = vec![0u32; BITS as usize];
    if dim_index == 0 {
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = 1 << (BITS - 1 - k as u32);
        }
        return v;
    }
    let (s, a, m) = TABLE[dim_index - 1];
    let s = s as usize;
    for k in 0..s {
        v[k] = m[k] << (BITS - 1 - k as u32);
    }
    for k in s..BITS as usize {
        let mut next = v[k - s] ^ (v[k - s] >> s as u32);
        for i in 1..s {
            if (a >> (s - 1 - i)) & 1 == 1 {
                next ^= v[k - i];
            }
        }
        v[k] = next;
    }
    v
}

/// Gray-code Sobol points with explicit per-dimension digital shifts.
/// Coordinates lie in [0, 1).
fn generate(dim: usize, count: usize, shifts: &[u32]) -> Vec<Vec<f64>> {
    assert_eq!(shifts.len(), dim);
    let directions: Vec<Vec<u32>> = (0..dim).map(direction_numbers).collect();
    let scale = 1.0 / (1u64 << BITS) as f64;
    let mut state = vec![0u32; dim];
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        if i > 0 {
            let bit = (i as u32).trailing_zeros() as usize;
            for (j, s) in state.iter_mut().enumerate() {
                *s ^= directions[j][bit];
            }
        }
        out.push(
            state
                .iter()
                .zip(shifts)
                .map(|(&x, &shift)| (x ^ shift) as f64 * scale)
                .collect(),
        );
    }
    out
}

/// Draws per-dimension shift masks from `rng` and returns `count` shifted
/// Sobol points in [0, 1)^dim. Dimensions above [`MAX_DIM`] are rejected.
pub fn sobol_candidates(
    dim: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>, SmboError> {
    if dim == 0 || dim > MAX_DIM {
        return Err(SmboError::UnsupportedDimension { dim });
    }
    let shifts: Vec<u32> = (0..dim).map(|_| rng.random()).collect();
    Ok(generate(dim, count, &shifts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::rng_from;

    #[test]
    fn unshifted_two_dimensional_prefix_matches_reference_values() {
        let points = generate(2, 8, &[0, 0]);
        let expected = [
            [0.0, 0.0],
            [0.5, 0.5],
            [0.75, 0.25],
            [0.25, 0.75],
            [0.375, 0.375],
            [0.875, 0.875],
            [0.625, 0.125],
            [0.125, 0.625],
        ];
        for (p, e) in points.iter().zip(&expected) {
            assert_eq!(p.as_slice(), e.as_slice());
        }
    }

    #[test]
    fn shifted_one_dimensional_block_is_stratified() {
        // 512 points from the first dimension fill each of the 512 equal
        // bins exactly once, shift or no shift.
        let mut rng = rng_from(99, "candidates");
        let points = sobol_candidates(1, 512, &mut rng).unwrap();
        let mut bins = vec![0usize; 512];
        for p in &points {
            bins[(p[0] * 512.0) as usize] += 1;
        }
        assert!(bins.iter().all(|&b| b == 1));
        let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in xs.windows(2) {
            let gap = w[1] - w[0];
            assert!((gap - 1.0 / 512.0).abs() < 1e-12, "gap {gap}");
        }
    }

    #[test]
    fn points_stay_inside_the_unit_cube_and_are_distinct() {
        let mut rng = rng_from(7, "candidates");
        let points = sobol_candidates(10, 256, &mut rng).unwrap();
        for p in &points {
            assert_eq!(p.len(), 10);
            assert!(p.iter().all(|&c| (0.0..1.0).contains(&c)));
        }
        let mut keys: Vec<Vec<u64>> = points
            .iter()
            .map(|p| p.iter().map(|c| c.to_bits()).collect())
            .collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 256);
    }

    #[test]
    fn same_stream_reproduces_and_other_streams_differ() {
        let a = sobol_candidates(3, 64, &mut rng_from(42, "candidates")).unwrap();
        let b = sobol_candidates(3, 64, &mut rng_from(42, "candidates")).unwrap();
        assert_eq!(a, b);
        let c = sobol_candidates(3, 64, &mut rng_from(43, "candidates")).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_unsupported_dimensions() {
        let mut rng = rng_from(1, "candidates");
        assert!(sobol_candidates(0, 8, &mut rng).is_err());
        assert!(sobol_candidates(11, 8, &mut rng).is_err());
        assert!(sobol_candidates(10, 8, &mut rng).is_ok());
    }

    #[test]
    fn every_supported_dimension_is_equidistributed_in_two_bins() {
        // first 128 points: each coordinate splits evenly across [0,.5) and
        // [.5,1) — a basic property of the direction numbers
        for dim in 1..=MAX_DIM {
            let points = generate(dim, 128, &vec![0u32; dim]);
            for j in 0..dim {
                let low = points.iter().filter(|p| p[j] < 0.5).count();
                assert_eq!(low, 64, "dimension {dim}, coordinate {j}");
            }
        }
    }
}
