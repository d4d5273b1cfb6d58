//! Evaluation grids on configuration boxes and seeded random sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NhError, Result};
use crate::report::GridSpec;

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

#[derive(Clone, Debug)]
pub struct Grid {
    pub points: Vec<Vec<f64>>,
    pub spec: GridSpec,
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn check_box(lo: &[f64], hi: &[f64]) -> Result<()> {
    if lo.len() != hi.len() {
        return Err(NhError::Dimension { expected: lo.len(), got: hi.len() });
    }
    if lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
        return Err(NhError::Config("grid box needs lo <= hi in every coordinate".into()));
    }
    Ok(())
}

impl Grid {
    /// Halton points in the box, shifted by a seeded random offset (mod 1).
    pub fn halton(lo: &[f64], hi: &[f64], count: usize, seed: u64) -> Result<Grid> {
        check_box(lo, hi)?;
        if lo.len() > PRIMES.len() {
            return Err(NhError::Config(format!("at most {} grid dimensions", PRIMES.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: Vec<f64> = lo.iter().map(|_| rng.gen::<f64>()).collect();
        let points = (1..=count as u64)
            .map(|i| {
                (0..lo.len())
                    .map(|d| {
                        let u = (radical_inverse(i, PRIMES[d]) + shift[d]).fract();
                        lo[d] + u * (hi[d] - lo[d])
                    })
                    .collect()
            })
            .collect();
        Ok(Grid {
            points,
            spec: GridSpec { kind: "halton".into(), lo: lo.to_vec(), hi: hi.to_vec(), count, seed: Some(seed) },
        })
    }

    /// Tensor lattice including both box ends on every axis with more than one point.
    pub fn lattice(lo: &[f64], hi: &[f64], per_axis: &[usize]) -> Result<Grid> {
        check_box(lo, hi)?;
        if per_axis.len() != lo.len() {
            return Err(NhError::Dimension { expected: lo.len(), got: per_axis.len() });
        }
        let mut points: Vec<Vec<f64>> = vec![Vec::new()];
        for d in 0..lo.len() {
            let k = per_axis[d];
            let axis: Vec<f64> =
                (0..k)
                    .map(|i| {
                        if k == 1 {
                            0.5 * (lo[d] + hi[d])
                        } else {
                            lo[d] + (hi[d] - lo[d]) * i as f64 / (k - 1) as f64
                        }
                    })
                    .collect();
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&x| {
                        let mut p = p.clone();
                        p.push(x);
                        p
                    })
                })
                .collect();
        }
        let count = points.len();
        Ok(Grid {
            points,
            spec: GridSpec { kind: "lattice".into(), lo: lo.to_vec(), hi: hi.to_vec(), count, seed: None },
        })
    }

    pub fn explicit(points: Vec<Vec<f64>>) -> Grid {
        let dim = points.first().map_or(0, |p| p.len());
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in &points {
            for d in 0..dim {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let count = points.len();
        Grid { points, spec: GridSpec { kind: "explicit".into(), lo, hi, count, seed: None } }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_is_deterministic_and_in_box() {
        let a = Grid::halton(&[-3.0, 0.0], &[3.0, 1.0], 100, 7).unwrap();
        let b = Grid::halton(&[-3.0, 0.0], &[3.0, 1.0], 100, 7).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.len(), 100);
        assert!(a.points.iter().all(|p| (-3.0..=3.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1])));
    }

    #[test]
    fn lattice_counts() {
        let g = Grid::lattice(&[-2.0, -2.0], &[2.0, 2.0], &[20, 20]).unwrap();
        assert_eq!(g.len(), 400);
        assert_eq!(g.points[0], vec![-2.0, -2.0]);
        assert_eq!(g.points[399], vec![2.0, 2.0]);
    }

    #[test]
    fn inverted_box_is_rejected() {
        assert!(Grid::halton(&[1.0], &[0.0], 5, 0).is_err());
    }
}
