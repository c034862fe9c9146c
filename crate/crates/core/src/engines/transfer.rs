//! Two-state transfer matrices and stationary Markov chains for `d = 1`.
//!
//! States are indexed `0 = −`, `1 = +` throughout.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{bit_of, Interaction, Spin};

pub type Mat2 = [[f64; 2]; 2];

const SPINS: [f64; 2] = [-1.0, 1.0];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// `a^k` by repeated squaring.
pub fn mat_pow(a: &Mat2, mut k: u64) -> Mat2 {
    let mut out = [[1.0, 0.0], [0.0, 1.0]];
    let mut base = *a;
    while k > 0 {
        if k & 1 == 1 {
            out = mat_mul(&out, &base);
        }
        base = mat_mul(&base, &base);
        k >>= 1;
    }
    out
}

/// Eigenvalues of a 2×2 matrix with real spectrum, largest first.
pub fn eigenvalues(a: &Mat2) -> [f64; 2] {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    [(tr + disc) / 2.0, (tr - disc) / 2.0]
}

/// Positive right eigenvector for the largest eigenvalue of a positive matrix.
pub fn perron_vector(a: &Mat2) -> (f64, [f64; 2]) {
    let lam = eigenvalues(a)[0];
    // (a00 − λ) v0 + a01 v1 = 0
    let v = if a[0][1].abs() > 0.0 {
        [a[0][1], lam - a[0][0]]
    } else if a[1][0].abs() > 0.0 {
        [lam - a[1][1], a[1][0]]
    } else if a[0][0] >= a[1][1] {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let s = v[0] + v[1];
    (lam, [v[0] / s, v[1] / s])
}

/// Symmetric Ising transfer matrix `exp(K a b + hb (a + b) / 2)`.
pub fn ising_transfer(phi: &Interaction) -> Mat2 {
    let mut t = [[0.0; 2]; 2];
    for (i, &a) in SPINS.iter().enumerate() {
        for (j, &b) in SPINS.iter().enumerate() {
            t[i][j] = (phi.k() * a * b + phi.hb() * (a + b) / 2.0).exp();
        }
    }
    t
}

/// A stationary two-state Markov chain on `Z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovChain {
    pi: [f64; 2],
    p: Mat2,
}

impl MarkovChain {
    /// Chain with `P(+|−) = a`, `P(−|+) = b`.
    pub fn from_flip_probs(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0) {
            return invalid("transition probabilities must lie in (0,1)");
        }
        let p = [[1.0 - a, a], [b, 1.0 - b]];
        Ok(Self { pi: [b / (a + b), a / (a + b)], p })
    }

    /// Independent spins with `P(+) = q`.
    pub fn iid(q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return invalid("probability outside [0,1]");
        }
        Ok(Self { pi: [1.0 - q, q], p: [[1.0 - q, q], [1.0 - q, q]] })
    }

    /// The infinite-volume Gibbs measure of a nearest-neighbor chain.
    pub fn gibbs(phi: &Interaction) -> Self {
        Self::from_positive_matrix(&ising_transfer(phi))
    }

    /// Doob transform of a positive matrix: `P(a,b) = m(a,b) r_b / (λ r_a)`.
    pub fn from_positive_matrix(m: &Mat2) -> Self {
        let (lam, r) = perron_vector(m);
        let mt = [[m[0][0], m[1][0]], [m[0][1], m[1][1]]];
        let (_, l) = perron_vector(&mt);
        let mut p = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                p[a][b] = m[a][b] * r[b] / (lam * r[a]);
            }
            let s = p[a][0] + p[a][1];
            p[a][0] /= s;
            p[a][1] /= s;
        }
        let z = l[0] * r[0] + l[1] * r[1];
        Self { pi: [l[0] * r[0] / z, l[1] * r[1] / z], p }
    }

    pub fn pi(&self) -> [f64; 2] {
        self.pi
    }

    pub fn transition(&self) -> Mat2 {
        self.p
    }

    pub fn step(&self, k: u64) -> Mat2 {
        mat_pow(&self.p, k)
    }

    /// The chain observed every `b` sites.
    pub fn decimated(&self, b: u64) -> Self {
        Self { pi: self.pi, p: self.step(b) }
    }

    pub fn magnetization(&self) -> f64 {
        self.pi[1] - self.pi[0]
    }

    /// Probability that the (sorted, distinct) sites carry the given spins.
    pub fn cylinder_prob(&self, xs: &[i64], spins: &[Spin]) -> f64 {
        if xs.is_empty() {
            return 1.0;
        }
        let mut p = self.pi[bit_of(spins[0]) as usize];
        for w in 1..xs.len() {
            let m = self.step((xs[w] - xs[w - 1]) as u64);
            p *= m[bit_of(spins[w - 1]) as usize][bit_of(spins[w]) as usize];
        }
        p
    }

    /// `Σ_a π(a) KL(P(a,·) ‖ Q(a,·))`, the relative entropy rate against `other`.
    pub fn relative_entropy_rate(&self, other: &MarkovChain) -> f64 {
        let mut h = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let p = self.p[a][b];
                if p > 0.0 {
                    if other.p[a][b] == 0.0 {
                        return f64::INFINITY;
                    }
                    h += self.pi[a] * p * (p / other.p[a][b]).ln();
                }
            }
        }
        h
    }

    /// `E[s_0 s_1]`.
    pub fn nn_correlation(&self) -> f64 {
        let mut c = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                c += self.pi[a] * self.p[a][b] * SPINS[a] * SPINS[b];
            }
        }
        c
    }
}

/// Boundary condition of a finite chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainBoundary {
    Periodic,
    Plus,
    Minus,
    Free,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainSolution {
    /// `P(s_i = +)` for each site.
    pub marginals: Vec<f64>,
    /// `E[s_i s_{i+1}]`, with the closing pair last for periodic chains.
    pub pair_correlations: Vec<f64>,
    pub log_partition: f64,
    pub log_partition_per_site: f64,
}

/// Exact solution of an `n`-site Ising chain by 2×2 transfer products.
pub fn transfer_matrix_1d(phi: &Interaction, n: usize, boundary: ChainBoundary) -> Result<ChainSolution> {
    if n == 0 {
        return invalid("chain needs at least one site");
    }
    let k = phi.k();
    let h = phi.hb();
    let bond = |a: usize, b: usize| (k * SPINS[a] * SPINS[b]).exp();
    if boundary == ChainBoundary::Periodic {
        return periodic(phi, n);
    }
    let edge = match boundary {
        ChainBoundary::Plus => k,
        ChainBoundary::Minus => -k,
        _ => 0.0,
    };
    let unary = |i: usize, a: usize| {
        let mut e = h * SPINS[a];
        if i == 0 {
            e += edge * SPINS[a];
        }
        if i == n - 1 {
            e += edge * SPINS[a];
        }
        e.exp()
    };
    // scaled forward / backward messages
    let mut fwd = vec![[0.0; 2]; n];
    let mut log_scale = 0.0;
    let mut cur = [unary(0, 0), unary(0, 1)];
    for i in 0..n {
        if i > 0 {
            let prev = cur;
            for b in 0..2 {
                cur[b] = (prev[0] * bond(0, b) + prev[1] * bond(1, b)) * unary(i, b);
            }
        }
        let s = cur[0] + cur[1];
        log_scale += s.ln();
        cur = [cur[0] / s, cur[1] / s];
        fwd[i] = cur;
    }
    let mut bwd = vec![[1.0, 1.0]; n];
    for i in (0..n - 1).rev() {
        let mut v = [0.0; 2];
        for a in 0..2 {
            v[a] = bond(a, 0) * unary(i + 1, 0) * bwd[i + 1][0] + bond(a, 1) * unary(i + 1, 1) * bwd[i + 1][1];
        }
        let s = v[0] + v[1];
        bwd[i] = [v[0] / s, v[1] / s];
    }
    let marginals = (0..n)
        .map(|i| {
            let w0 = fwd[i][0] * bwd[i][0];
            let w1 = fwd[i][1] * bwd[i][1];
            w1 / (w0 + w1)
        })
        .collect();
    let pair_correlations = (0..n.saturating_sub(1))
        .map(|i| {
            let mut num = 0.0;
            let mut den = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    let w = fwd[i][a] * bond(a, b) * unary(i + 1, b) * bwd[i + 1][b];
                    num += w * SPINS[a] * SPINS[b];
                    den += w;
                }
            }
            num / den
        })
        .collect();
    Ok(ChainSolution {
        marginals,
        pair_correlations,
        log_partition: log_scale,
        log_partition_per_site: log_scale / n as f64,
    })
}

fn periodic(phi: &Interaction, n: usize) -> Result<ChainSolution> {
    let t = ising_transfer(phi);
    // normalize by the top eigenvalue so powers stay O(1)
    let lam = eigenvalues(&t)[0];
    let tn = t.map(|r| r.map(|v| v / lam));
    let pw = mat_pow(&tn, n as u64);
    let tr = pw[0][0] + pw[1][1];
    let log_z = n as f64 * lam.ln() + tr.ln();
    let m_plus = pw[1][1] / tr;
    let rest = mat_pow(&tn, n as u64 - 1);
    let mut corr = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            corr += SPINS[a] * SPINS[b] * tn[a][b] * rest[b][a];
        }
    }
    corr /= tr;
    Ok(ChainSolution {
        marginals: vec![m_plus; n],
        pair_correlations: vec![corr; n],
        log_partition: log_z,
        log_partition_per_site: log_z / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gibbs_chain_is_stationary_and_reversible() {
        let phi = Interaction::new(1.0, 0.3, 0.7).unwrap();
        let c = MarkovChain::gibbs(&phi);
        let pi = c.pi();
        let p = c.transition();
        for b in 0..2 {
            let s: f64 = (0..2).map(|a| pi[a] * p[a][b]).sum();
            assert!((s - pi[b]).abs() < 1e-14);
        }
        assert!((pi[0] * p[0][1] - pi[1] * p[1][0]).abs() < 1e-14);
    }

    #[test]
    fn free_chain_two_sites() {
        let sol = transfer_matrix_1d(&Interaction::ising(1.0), 2, ChainBoundary::Free).unwrap();
        let z = 2.0 * 1f64.exp() + 2.0 * (-1f64).exp();
        assert!((sol.log_partition - z.ln()).abs() < 1e-14);
        assert!((sol.pair_correlations[0] - 1f64.tanh()).abs() < 1e-14);
    }
}
