use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::train::LabeledDomain;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Geometry of one two-moons domain: the centred moons are rotated, then
/// shifted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoonsDomain {
    pub name: String,
    pub rotation_deg: f64,
    pub shift: [f64; 2],
    pub noise: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftedMoons {
    pub sources: Vec<MoonsDomain>,
    pub target: MoonsDomain,
}

impl Default for ShiftedMoons {
    /// Two sources rotated 30 degrees either way and one shifted sideways;
    /// the target is the unrotated, unshifted moons.
    fn default() -> Self {
        let domain = |name: &str, rotation_deg: f64, shift: [f64; 2]| MoonsDomain {
            name: name.into(),
            rotation_deg,
            shift,
            noise: 0.1,
            samples: 300,
        };
        Self {
            sources: vec![
                domain("source0", -30.0, [0.0, 0.0]),
                domain("source1", 30.0, [0.0, 0.0]),
                domain("source2", 0.0, [1.0, 0.0]),
            ],
            target: domain("target", 0.0, [0.0, 0.0]),
        }
    }
}

/// Samples `n` two-moons points (class 0 upper moon, class 1 lower moon),
/// centred at the origin, with isotropic Gaussian noise.
pub fn two_moons<R: Rng + ?Sized>(n: usize, noise: f64, rng: &mut R) -> Result<(Matrix, Vec<usize>)> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid("noise must be finite and nonnegative"));
    }
    let jitter = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let t = rng.random_range(0.0..PI);
        let (x, y) = if label == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        let (nx, ny) = if noise > 0.0 {
            (jitter.sample(rng), jitter.sample(rng))
        } else {
            (0.0, 0.0)
        };
        data.push(x - 0.5 + nx);
        data.push(y - 0.25 + ny);
        labels.push(label);
    }
    Ok((Matrix::from_vec(n, 2, data)?, labels))
}

fn sample_domain(spec: &MoonsDomain, rng: &mut ChaCha8Rng) -> Result<LabeledDomain> {
    let (mut x, y) = two_moons(spec.samples, spec.noise, rng)?;
    let (s, c) = spec.rotation_deg.to_radians().sin_cos();
    for r in 0..x.rows() {
        let row = x.row_mut(r);
        let (a, b) = (row[0], row[1]);
        row[0] = c * a - s * b + spec.shift[0];
        row[1] = s * a + c * b + spec.shift[1];
    }
    LabeledDomain::new(spec.name.clone(), x, y)
}

/// Source domains and a target domain drawn with one seed.
pub fn shifted_two_moons(spec: &ShiftedMoons, seed: u64) -> Result<(Vec<LabeledDomain>, LabeledDomain)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources = spec
        .sources
        .iter()
        .map(|d| sample_domain(d, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let target = sample_domain(&spec.target, &mut rng)?;
    Ok((sources, target))
}
