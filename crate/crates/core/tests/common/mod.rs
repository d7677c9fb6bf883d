//! Synthetic tuning problems with a known optimum.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tunefit::data::{McRunGrid, Observable, ParameterSpace, ReferenceSet};
use tunefit::surrogate::{fit, ModelKind};
use tunefit::SurrogateSet;

pub const REF_ERROR: f64 = 0.1;

/// Quadratic bin response in two parameters.
#[derive(Clone)]
pub struct Response(pub [f64; 6]);

impl Response {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut c = [0.0; 6];
        for v in &mut c {
            *v = rng.random_range(-2.0..2.0);
        }
        Self(c)
    }

    pub fn at(&self, p: &[f64]) -> f64 {
        let [a, b, c, d, e, f] = self.0;
        let (x, y) = (p[0], p[1]);
        a + b * x + c * y + d * x * x + e * x * y + f * y * y
    }
}

pub struct Synthetic {
    pub space: ParameterSpace,
    pub responses: Vec<Vec<Response>>,
    pub p_true: Vec<f64>,
    pub reference: ReferenceSet,
    pub grid: McRunGrid,
    pub surrogate: SurrogateSet,
}

/// Observables with `sizes[o]` bins whose reference values are the exact
/// responses at `p_true`. Observables listed in `corrupt` are instead
/// generated at `p_bad`.
pub fn synthetic(sizes: &[usize], p_true: &[f64], corrupt: &[(usize, Vec<f64>)], seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let responses = sizes
        .iter()
        .map(|&n| (0..n).map(|_| Response::random(&mut rng)).collect())
        .collect();
    from_responses(responses, p_true, corrupt, seed)
}

/// As [`synthetic`], with explicit bin responses.
pub fn from_responses(
    responses: Vec<Vec<Response>>,
    p_true: &[f64],
    corrupt: &[(usize, Vec<f64>)],
    seed: u64,
) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let space = ParameterSpace::new(
        vec!["a".into(), "b".into()],
        vec![0.0, 0.0],
        vec![1.0, 1.0],
    )
    .unwrap();
    let observables = responses
        .iter()
        .enumerate()
        .map(|(o, rs)| {
            let at = corrupt
                .iter()
                .find(|(c, _)| *c == o)
                .map_or(p_true, |(_, p)| p.as_slice());
            Observable::new(
                format!("/obs/{o}"),
                rs.iter().map(|r| r.at(at)).collect(),
                vec![REF_ERROR; rs.len()],
            )
            .unwrap()
        })
        .collect();
    let reference = ReferenceSet::new(observables).unwrap();
    let points: Vec<Vec<f64>> = (0..40)
        .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let values: Vec<Vec<f64>> = points
        .iter()
        .map(|p| responses.iter().flatten().map(|r| r.at(p)).collect())
        .collect();
    let uncertainties = vec![vec![0.0; reference.total_bins()]; points.len()];
    let grid = McRunGrid::new(space.clone(), &reference, points, values, uncertainties).unwrap();
    let (surrogate, _) = fit(&grid, ModelKind::Polynomial { degree: 2 }).unwrap();
    Synthetic {
        space,
        responses,
        p_true: p_true.to_vec(),
        reference,
        grid,
        surrogate,
    }
}

/// L2 distance in range-normalized coordinates.
pub fn normalized_error(space: &ParameterSpace, a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (space.relative_position(a), space.relative_position(b));
    ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
