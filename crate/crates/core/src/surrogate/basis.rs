//! Monomial basis of total degree ≤ n in d variables.

/// Exponent tuples in graded order: degree 0, then all degree-1 monomials,
/// and so on; within a degree, lexicographically descending exponents.
/// For d = 1 this is `1, z, z², …`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    dim: usize,
    degree: usize,
    exponents: Vec<Vec<u32>>,
}

/// Binomial coefficient C(n, k) computed without overflow for the sizes used
/// here.
pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

impl MonomialBasis {
    pub fn new(dim: usize, degree: usize) -> Self {
        let mut exponents = Vec::with_capacity(binomial(dim + degree, degree));
        for total in 0..=degree {
            let mut current = vec![0u32; dim];
            push_compositions(&mut exponents, &mut current, 0, total as u32);
        }
        Self {
            dim,
            degree,
            exponents,
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    fn powers(&self, z: &[f64]) -> Vec<f64> {
        // powers[j * (degree + 1) + k] = z_j^k
        let stride = self.degree + 1;
        let mut pw = vec![1.0; self.dim * stride];
        for (j, &zj) in z.iter().enumerate() {
            for k in 1..stride {
                pw[j * stride + k] = pw[j * stride + k - 1] * zj;
            }
        }
        pw
    }

    /// Values of every monomial at `z`.
    pub fn values(&self, z: &[f64]) -> Vec<f64> {
        let stride = self.degree + 1;
        let pw = self.powers(z);
        self.exponents
            .iter()
            .map(|e| {
                e.iter()
                    .enumerate()
                    .map(|(j, &k)| pw[j * stride + k as usize])
                    .product()
            })
            .collect()
    }

    /// Values and the gradient of every monomial with respect to `z`.
    /// Gradients are row-major: `grads[m * dim + j] = ∂ z^e_m / ∂ z_j`.
    pub fn values_and_gradients(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let stride = self.degree + 1;
        let pw = self.powers(z);
        let mut vals = Vec::with_capacity(self.len());
        let mut grads = vec![0.0; self.len() * self.dim];
        for (m, e) in self.exponents.iter().enumerate() {
            let mut v = 1.0;
            for (j, &k) in e.iter().enumerate() {
                v *= pw[j * stride + k as usize];
            }
            vals.push(v);
            for (j, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let mut g = k as f64 * pw[j * stride + k as usize - 1];
                for (i, &ki) in e.iter().enumerate() {
                    if i != j {
                        g *= pw[i * stride + ki as usize];
                    }
                }
                grads[m * self.dim + j] = g;
            }
        }
        (vals, grads)
    }
}

fn push_compositions(out: &mut Vec<Vec<u32>>, current: &mut [u32], pos: usize, remaining: u32) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.to_vec());
        current[pos] = 0;
        return;
    }
    if current.is_empty() {
        return;
    }
    for k in (0..=remaining).rev() {
        current[pos] = k;
        push_compositions(out, current, pos + 1, remaining - k);
    }
    current[pos] = 0;
}
